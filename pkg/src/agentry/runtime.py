"""Runs a behavior as a live agent."""

from __future__ import annotations

import enum
import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Any, Callable, Union

from agentry import context, tracing
from agentry.behavior import Behavior, EventLoop, LoopKind, PlainLoop, TimerLoop
from agentry.dataplane import DEFAULT_THRESHOLD, auto_payload, materialize
from agentry.errors import (
    AgentryError,
    AgentryTimeoutError,
    ErrorInfo,
    ErrorKind,
    MailboxClosedError,
)
from agentry.exchange.base import ExchangeClient
from agentry.handle import Handle, MailboxRouter
from agentry.ids import EntityId
from agentry.messages import (
    ActionRequest,
    ActionResponse,
    Envelope,
    Ping,
    PingResponse,
    Shutdown,
)

logger = logging.getLogger(__name__)

DEFAULT_POOL_SIZE = 4
DEFAULT_JOIN_TIMEOUT = 5.0
_RECV_TICK = 0.05


class LoopErrorPolicy(enum.Enum):
    SHUTDOWN_ON_ERROR = "shutdown"
    SUPPRESS_AND_CONTINUE = "suppress"


@dataclass(frozen=True)
class CleanShutdown:
    pass


@dataclass(frozen=True)
class LoopFailure:
    loop: str
    error: ErrorInfo


RunStatus = Union[CleanShutdown, LoopFailure]


class AgentSetupError(RuntimeError):
    """on_setup raised; the agent never started and its mailbox is closed."""


def _describe(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


class _EventChannel:
    def __init__(self) -> None:
        self.cond = threading.Condition()
        self.pending = 0
        self.closed = False

    def fire(self) -> None:
        with self.cond:
            if not self.closed:
                self.pending += 1
                self.cond.notify()

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()

    def take(self) -> bool:
        """Block until a firing is pending (True) or the channel closes (False)."""
        with self.cond:
            while self.pending == 0 and not self.closed:
                self.cond.wait()
            if self.closed:
                return False
            self.pending -= 1
            return True


class Agent:
    """Executes a :class:`~agentry.behavior.Behavior` against a mailbox.

    :meth:`run` calls ``on_setup``, starts every control loop in its own
    thread, starts the mailbox listener, and blocks until shutdown. Actions
    run in a bounded pool so the listener never waits on them.
    """

    def __init__(
        self,
        behavior: Behavior,
        client: ExchangeClient,
        *,
        loop_error_policy: LoopErrorPolicy = LoopErrorPolicy.SHUTDOWN_ON_ERROR,
        action_pool_size: int | None = None,
        join_timeout: float = DEFAULT_JOIN_TIMEOUT,
        threshold: int | None = DEFAULT_THRESHOLD,
        close_on_failure: bool = True,
    ) -> None:
        self.behavior = behavior
        self.client = client
        self.id: EntityId = client.entity_id
        behavior.agent_id = self.id
        self.spec = behavior.spec
        self.loop_error_policy = loop_error_policy
        self.action_pool_size = action_pool_size or self.spec.max_action_concurrency or DEFAULT_POOL_SIZE
        self.join_timeout = join_timeout
        self.threshold = threshold
        self.close_on_failure = close_on_failure
        self.shutdown_event = threading.Event()
        self.router = MailboxRouter(client, listen=False, threshold=threshold)
        self.codec = self.router.codec
        self.action_table: dict[str, Callable[[bytes], bytes]] = {
            name: self._wrap(fn) for name, fn in behavior.actions().items()
        }
        self._loops = behavior.loops()
        self._events: dict[str, list[_EventChannel]] = {}
        for name, (_, kind) in self._loops.items():
            if isinstance(kind, EventLoop):
                self._events.setdefault(kind.event, [])
        self._channels: dict[str, _EventChannel] = {}
        self._terminal = False
        self._acks: list[Envelope] = []
        self._state_lock = threading.Lock()
        self._failure: LoopFailure | None = None
        self._inflight: set[Future[Any]] = set()
        self._pool: ThreadPoolExecutor | None = None
        self._threads: dict[str, threading.Thread] = {}
        self.started = threading.Event()
        self.status: RunStatus | None = None

    def __repr__(self) -> str:
        return f"Agent({self.id}, {self.spec.name})"

    def handle(self, target: EntityId) -> Handle:
        """Handle to another agent, sharing this agent's mailbox."""
        return self.router.handle(target)

    # -- action dispatch ------------------------------------------------------

    def _guard(self) -> Any:
        if self.behavior.internally_synchronized:
            return _NullGuard
        return self.behavior.state_lock

    def _wrap(self, method: Callable[..., Any]) -> Callable[[bytes], bytes]:
        def call(raw: bytes) -> bytes:
            args, kwargs = self.codec.loads(raw)
            with self._guard():
                result = method(*args, **kwargs)
            return self.codec.dumps(result)

        return call

    def _execute(self, env: Envelope) -> None:
        body = env.body
        assert isinstance(body, ActionRequest)
        fn = self.action_table.get(body.action)
        if fn is None:
            self._send(env.reply(ActionResponse(env.message_id, error=ErrorInfo(ErrorKind.UNKNOWN_ACTION, body.action))))
            return
        tracing.emit("action-start", self.id, logging.DEBUG, action=body.action, request=env.message_id.hex)
        try:
            raw = fn(materialize(self.client.depot, body.payload))
            response = ActionResponse(
                env.message_id, result=auto_payload(self.client.depot, raw, self.threshold)
            )
        except Exception as exc:
            response = ActionResponse(
                env.message_id, error=ErrorInfo(ErrorKind.ACTION_RAISED, _describe(exc))
            )
        tracing.emit(
            "action-finish",
            self.id,
            logging.DEBUG,
            action=body.action,
            request=env.message_id.hex,
            ok=response.error is None,
        )
        self._send(env.reply(response))

    def _send(self, env: Envelope) -> None:
        try:
            self.client.send(env)
        except MailboxClosedError:
            logger.debug("%s: reply to closed mailbox %s dropped", self.id, env.dest)
        except AgentryError as exc:
            logger.warning("%s: failed to send reply to %s: %s", self.id, env.dest, exc)

    def handle_message(self, env: Envelope) -> Envelope | None:
        """Process one envelope addressed to this agent.

        Returns the response sent immediately, if any. Action requests are
        queued to the pool and answered when they finish.
        """
        body = env.body
        if isinstance(body, Ping):
            reply = env.reply(PingResponse(env.message_id))
            self._send(reply)
            return reply
        if isinstance(body, Shutdown):
            with self._state_lock:
                self._terminal = self._terminal or body.terminal
                self._acks.append(env.reply(PingResponse(env.message_id)))
            self.self_shutdown()
            return None
        if isinstance(body, ActionRequest):
            pool = self._ensure_pool()
            fut = pool.submit(self._execute, env)
            with self._state_lock:
                self._inflight.add(fut)
            fut.add_done_callback(self._action_done)
            return None
        if isinstance(body, (ActionResponse, PingResponse)):
            self.router.deliver(env)
            return None
        logger.warning("%s: dropping unexpected %s", self.id, type(body).__name__)
        return None

    def _action_done(self, fut: Future[Any]) -> None:
        with self._state_lock:
            self._inflight.discard(fut)
        if fut.exception() is not None:
            logger.error("%s: action dispatch failed: %s", self.id, fut.exception())

    def _ensure_pool(self) -> ThreadPoolExecutor:
        if self._pool is None:
            self._pool = ThreadPoolExecutor(
                max_workers=self.action_pool_size,
                thread_name_prefix=f"action-{self.spec.name}",
                initializer=context.bind,
                initargs=(self.router, self.client.depot),
            )
        return self._pool

    # -- control surfaces -----------------------------------------------------

    def self_shutdown(self) -> None:
        """Latch the shutdown signal; safe to call repeatedly from any thread."""
        self.shutdown_event.set()
        for ch in list(self._channels.values()):
            ch.close()

    def fire_event(self, name: str) -> None:
        if name not in self._events:
            raise KeyError(f"no event loop listens for {name!r}")
        if self.shutdown_event.is_set():
            return
        for ch in self._events[name]:
            ch.fire()

    # -- loops ----------------------------------------------------------------

    def _loop_failed(self, name: str, exc: BaseException) -> bool:
        """Record a loop error; returns True if the loop should stop."""
        logger.error("%s: loop %s raised %s", self.id, name, _describe(exc))
        if self.loop_error_policy is LoopErrorPolicy.SUPPRESS_AND_CONTINUE:
            return False
        with self._state_lock:
            if self._failure is None:
                self._failure = LoopFailure(name, ErrorInfo(ErrorKind.ACTION_RAISED, f"loop {name}: {_describe(exc)}"))
        self.self_shutdown()
        return True

    def _run_loop(self, name: str, fn: Callable[..., Any], kind: LoopKind) -> None:
        context.bind(self.router, self.client.depot)
        tracing.emit("loop-start", self.id, loop=name)
        try:
            if isinstance(kind, PlainLoop):
                try:
                    fn(self.shutdown_event)
                except Exception as exc:
                    self._loop_failed(name, exc)
            elif isinstance(kind, TimerLoop):
                next_at = time.monotonic() + kind.interval
                while not self.shutdown_event.wait(max(0.0, next_at - time.monotonic())):
                    next_at += kind.interval
                    try:
                        with self._guard():
                            fn()
                    except Exception as exc:
                        if self._loop_failed(name, exc):
                            return
            else:
                ch = self._channels[name]
                while ch.take():
                    if self.shutdown_event.is_set():
                        return
                    try:
                        with self._guard():
                            fn()
                    except Exception as exc:
                        if self._loop_failed(name, exc):
                            return
        finally:
            tracing.emit("loop-exit", self.id, loop=name)

    def _listen(self) -> None:
        context.bind(self.router, self.client.depot)
        while not self.shutdown_event.is_set():
            try:
                env = self.client.recv(timeout=_RECV_TICK)
            except AgentryTimeoutError:
                continue
            except MailboxClosedError:
                logger.info("%s: mailbox closed externally", self.id)
                with self._state_lock:
                    self._terminal = True
                self.self_shutdown()
                return
            except Exception:
                logger.exception("%s: receive failed", self.id)
                time.sleep(_RECV_TICK)
                continue
            self.handle_message(env)

    # -- lifecycle ------------------------------------------------------------

    def run(self) -> RunStatus:
        context.bind(self.router, self.client.depot)
        try:
            self.behavior.on_setup()
        except Exception as exc:
            logger.error("%s: on_setup failed: %s", self.id, _describe(exc))
            try:
                self.client.close()
            finally:
                self.router.close()
            raise AgentSetupError(_describe(exc)) from exc
        tracing.emit("setup", self.id, behavior=self.spec.name)

        if not self.shutdown_event.is_set():
            for name, (fn, kind) in self._loops.items():
                if isinstance(kind, EventLoop):
                    ch = _EventChannel()
                    self._channels[name] = ch
                    self._events[kind.event].append(ch)
                t = threading.Thread(
                    target=self._run_loop, args=(name, fn, kind), name=f"loop-{name}", daemon=True
                )
                self._threads[name] = t
            if self.shutdown_event.is_set():
                for ch in self._channels.values():
                    ch.close()
            for t in self._threads.values():
                t.start()
            listener = threading.Thread(target=self._listen, name=f"agent-listener-{self.id}", daemon=True)
            self._threads["<listener>"] = listener
            listener.start()
        self.started.set()

        self.shutdown_event.wait()
        return self._teardown()

    __call__ = run

    def _teardown(self) -> RunStatus:
        deadline = time.monotonic() + self.join_timeout
        for name, t in self._threads.items():
            t.join(max(0.0, deadline - time.monotonic()))
            if t.is_alive():
                logger.warning("%s: loop %s ignored shutdown; abandoning it", self.id, name)
        with self._state_lock:
            inflight = list(self._inflight)
        if inflight:
            _, not_done = wait(inflight, timeout=max(0.0, deadline - time.monotonic()))
            if not_done:
                logger.warning("%s: %d actions still running at shutdown", self.id, len(not_done))
        if self._pool is not None:
            self._pool.shutdown(wait=False)
        try:
            with self._guard():
                self.behavior.on_shutdown()
        except Exception as exc:
            logger.error("%s: on_shutdown failed: %s", self.id, _describe(exc))

        with self._state_lock:
            failure = self._failure
            terminal = self._terminal or (failure is not None and self.close_on_failure)
            acks = list(self._acks)
        if terminal:
            try:
                self.client.close()
            except AgentryError as exc:
                logger.warning("%s: closing mailbox failed: %s", self.id, exc)
        for ack in acks:
            self._send(ack)
        self.router.close()
        self.client.disconnect()
        tracing.emit("shutdown", self.id, terminal=terminal, failed=failure is not None)
        self.status = failure if failure is not None else CleanShutdown()
        return self.status


class _NullGuardType:
    def __enter__(self) -> None:
        return None

    def __exit__(self, *exc: object) -> None:
        return None


_NullGuard = _NullGuardType()
