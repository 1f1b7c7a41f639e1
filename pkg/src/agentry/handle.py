"""Client-side references to agents.

All handles in a process share one :class:`MailboxRouter`, which owns the
process's only mailbox listener and completes the future for each response
by its request id.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
import time
import uuid
from concurrent.futures import Future
from typing import Any, Callable

from agentry import context
from agentry.dataplane import DEFAULT_THRESHOLD, ValueCodec, materialize
from agentry.errors import (
    AgentryError,
    AgentryTimeoutError,
    ErrorInfo,
    ErrorKind,
    MailboxClosedError,
)
from agentry.exchange.base import ExchangeClient
from agentry.ids import EntityId
from agentry.messages import (
    ActionRequest,
    ActionResponse,
    Body,
    Envelope,
    Inline,
    Payload,
    Ping,
    PingResponse,
    Shutdown,
)

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
LISTENER_THREAD_PREFIX = "agentry-listener"


class ActionFuture(Future):
    """Future for one request; completes exactly once."""

    def __init__(
        self,
        request_id: uuid.UUID,
        decode: Callable[[Payload], Any] | None = None,
        dest: EntityId | None = None,
    ) -> None:
        super().__init__()
        self.request_id = request_id
        self.dest = dest
        self._decode = decode

    def _complete(self, body: Body) -> None:
        if self.done():
            return
        try:
            if isinstance(body, ActionResponse):
                if body.error is not None:
                    self.set_exception(body.error.to_exception())
                    return
                assert body.result is not None
                self.set_result(self._decode(body.result) if self._decode else body.result)
            else:
                self.set_result(body)
        except AgentryError as exc:
            self.set_exception(exc)
        except Exception as exc:  # undecodable result
            self.set_exception(exc)

    def _fail(self, exc: BaseException) -> None:
        if not self.done():
            try:
                self.set_exception(exc)
            except Exception:
                pass


class MailboxRouter:
    """Matches responses to pending requests for every handle in a process.

    With ``listen=True`` the router runs its own listener on the client's
    mailbox; an agent runtime instead passes ``listen=False`` and forwards
    responses from its own listener through :meth:`deliver`.
    """

    def __init__(
        self,
        client: ExchangeClient,
        *,
        listen: bool = True,
        threshold: int | None = DEFAULT_THRESHOLD,
        default_timeout: float = DEFAULT_TIMEOUT,
    ) -> None:
        self.client = client
        self.self_id = client.entity_id
        self.codec = ValueCodec(client.depot, threshold)
        self.default_timeout = default_timeout
        self._pending: dict[uuid.UUID, ActionFuture] = {}
        self._deadlines: list[tuple[float, int, uuid.UUID]] = []
        self._seq = itertools.count()
        self._lock = threading.Lock()
        self._wake = threading.Condition(self._lock)
        self._stopped = False
        self.dropped_responses = 0
        self._listener: threading.Thread | None = None
        if listen:
            self._listener = threading.Thread(
                target=self._listen, name=f"{LISTENER_THREAD_PREFIX}-{self.self_id}", daemon=True
            )
            self._listener.start()
        self._reaper = threading.Thread(target=self._reap, name="agentry-timeouts", daemon=True)
        self._reaper.start()

    @property
    def pending_count(self) -> int:
        with self._lock:
            return len(self._pending)

    def handle(self, target: EntityId, default_timeout: float | None = None) -> Handle:
        return Handle(target, self, default_timeout=default_timeout or self.default_timeout)

    # -- requests -------------------------------------------------------------

    def request(
        self,
        dest: EntityId,
        body: Body,
        *,
        timeout: float | None = None,
        decode: Callable[[Payload], Any] | None = None,
        track: bool = True,
    ) -> ActionFuture:
        env = Envelope(src=self.self_id, dest=dest, body=body)
        fut = ActionFuture(env.message_id, decode, dest)
        if track:
            deadline = time.monotonic() + (timeout if timeout is not None else self.default_timeout)
            with self._lock:
                if self._stopped:
                    fut._fail(MailboxClosedError(f"router for {self.self_id} is closed"))
                    return fut
                self._pending[env.message_id] = fut
                heapq.heappush(self._deadlines, (deadline, next(self._seq), env.message_id))
                if self._deadlines[0][2] == env.message_id:
                    self._wake.notify()
        try:
            self.client.send(env)
        except AgentryError as exc:
            with self._lock:
                self._pending.pop(env.message_id, None)
            fut._fail(exc)
        except OSError as exc:
            with self._lock:
                self._pending.pop(env.message_id, None)
            fut._fail(exc)
        if not track and not fut.done():
            fut.set_result(None)
        return fut

    def deliver(self, env: Envelope) -> bool:
        """Complete the future matching a response; False if none matched."""
        body = env.body
        if not isinstance(body, (ActionResponse, PingResponse)):
            return False
        with self._lock:
            fut = self._pending.pop(body.request_id, None)
        if fut is None:
            self.dropped_responses += 1
            logger.debug("dropping response for unknown request %s", body.request_id)
            return False
        fut._complete(body)
        return True

    def _reap(self) -> None:
        with self._lock:
            while not self._stopped:
                if not self._deadlines:
                    self._wake.wait()
                    continue
                deadline, _, rid = self._deadlines[0]
                now = time.monotonic()
                if deadline > now:
                    self._wake.wait(deadline - now)
                    continue
                heapq.heappop(self._deadlines)
                fut = self._pending.pop(rid, None)
                if fut is not None:
                    fut._fail(AgentryTimeoutError(f"no response to request {rid}"))

    # -- listener -------------------------------------------------------------

    def _listen(self) -> None:
        context.bind(self, self.client.depot)
        while not self._stopped:
            try:
                env = self.client.recv(timeout=0.5)
            except AgentryTimeoutError:
                continue
            except MailboxClosedError:
                self._fail_all(MailboxClosedError(f"mailbox {self.self_id} is closed"))
                return
            except Exception:
                if self._stopped:
                    return
                logger.exception("listener for %s failed to receive", self.self_id)
                time.sleep(0.05)
                continue
            self.dispatch(env)

    def dispatch(self, env: Envelope) -> None:
        body = env.body
        if isinstance(body, (ActionResponse, PingResponse)):
            self.deliver(env)
        elif isinstance(body, Ping):
            self._reply(env, PingResponse(env.message_id))
        elif isinstance(body, ActionRequest):
            self._reply(
                env,
                ActionResponse(
                    env.message_id,
                    error=ErrorInfo(ErrorKind.UNKNOWN_ACTION, "clients do not serve actions"),
                ),
            )
        else:
            logger.debug("client %s ignoring %s", self.self_id, type(body).__name__)

    def _reply(self, env: Envelope, body: Body) -> None:
        try:
            self.client.send(env.reply(body))
        except AgentryError:
            pass

    def _fail_all(self, exc: BaseException) -> None:
        with self._lock:
            pending = list(self._pending.values())
            self._pending.clear()
        for fut in pending:
            fut._fail(exc)

    def fail_requests_to(self, dest: EntityId, exc: BaseException) -> int:
        """Fail every pending request addressed to ``dest``."""
        with self._lock:
            matched = [rid for rid, fut in self._pending.items() if fut.dest == dest]
            futs = [self._pending.pop(rid) for rid in matched]
        for fut in futs:
            fut._fail(exc)
        return len(futs)

    def close(self) -> None:
        with self._lock:
            if self._stopped:
                return
            self._stopped = True
            self._wake.notify_all()
        if self._listener is not None and self._listener is not threading.current_thread():
            self._listener.join(timeout=2)
        self._fail_all(MailboxClosedError(f"router for {self.self_id} is closed"))


def listener_threads() -> list[threading.Thread]:
    return [t for t in threading.enumerate() if t.name.startswith(LISTENER_THREAD_PREFIX)]


class Handle:
    """Reference to a remote agent.

    Attribute access returns a callable that invokes the action of that name
    and returns an :class:`ActionFuture`::

        future = handle.square(2)
        assert future.result() == 4

    Handles pickle as their target id; an unpickled handle attaches to the
    router of whichever agent or client uses it.
    """

    __slots__ = ("target", "_router", "default_timeout")

    def __init__(
        self,
        target: EntityId,
        router: MailboxRouter | None = None,
        *,
        default_timeout: float = DEFAULT_TIMEOUT,
    ) -> None:
        self.target = target
        self._router = router
        self.default_timeout = default_timeout

    @property
    def agent_id(self) -> EntityId:
        return self.target

    @property
    def router(self) -> MailboxRouter:
        router = self._router or context.current_router()
        if router is None:
            raise RuntimeError("handle is not bound to a mailbox router")
        return router

    def bind(self, router: MailboxRouter) -> Handle:
        return Handle(self.target, router, default_timeout=self.default_timeout)

    def invoke(self, action: str, payload: Payload | bytes, *, timeout: float | None = None) -> ActionFuture:
        """Invoke with raw argument bytes; the future yields raw result bytes.

        A received Reference payload passed here is forwarded as-is.
        """
        router = self.router
        if isinstance(payload, (bytes, bytearray)):
            payload = Inline(bytes(payload))
        return router.request(
            self.target,
            ActionRequest(action, payload),
            timeout=timeout or self.default_timeout,
            decode=lambda p: materialize(router.client.depot, p),
        )

    def action(self, name: str, *args: Any, _timeout: float | None = None, **kwargs: Any) -> ActionFuture:
        router = self.router
        payload = router.codec.to_payload((args, kwargs))
        return router.request(
            self.target,
            ActionRequest(name, payload),
            timeout=_timeout or self.default_timeout,
            decode=router.codec.from_payload,
        )

    def __getattr__(self, name: str) -> Callable[..., ActionFuture]:
        if name.startswith("_"):
            raise AttributeError(name)

        def call(*args: Any, **kwargs: Any) -> ActionFuture:
            return self.action(name, *args, **kwargs)

        call.__name__ = name
        return call

    def ping(self, *, timeout: float | None = None) -> float:
        """Round-trip time in seconds."""
        start = time.perf_counter()
        self.router.request(self.target, Ping(), timeout=timeout or self.default_timeout).result()
        return time.perf_counter() - start

    def shutdown(self, *, terminal: bool = True, blocking: bool = False, timeout: float | None = None) -> None:
        """Ask the agent to stop; with ``blocking`` wait for its acknowledgment.

        Shutting down an already closed agent is a no-op.
        """
        fut = self.router.request(
            self.target,
            Shutdown(terminal=terminal),
            timeout=timeout or self.default_timeout,
            track=blocking,
        )
        try:
            fut.result()
        except MailboxClosedError:
            return

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Handle) and other.target == self.target

    def __hash__(self) -> int:
        return hash(self.target)

    def __repr__(self) -> str:
        return f"Handle({self.target})"

    def __reduce__(self) -> Any:
        return (Handle, (self.target,))
