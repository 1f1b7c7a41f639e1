import threading
import time

import pytest

from agentry.behavior import Behavior, action, event, loop, timer
from agentry.errors import ActionRaisedError, MailboxClosedError, UnknownActionError
from agentry.exchange.local import LocalExchange
from agentry.handle import MailboxRouter
from agentry.runtime import Agent, AgentSetupError, CleanShutdown, LoopErrorPolicy, LoopFailure

from helpers import Running, start_agent


class Journal(Behavior):
    def __init__(self) -> None:
        self.events: list[str] = []
        self.ticks = 0
        self.fired = 0

    def on_setup(self) -> None:
        self.events.append("setup")

    def on_shutdown(self) -> None:
        self.events.append("shutdown")

    @action
    def square(self, x: float) -> float:
        return x * x

    @action(name="fail")
    def explode(self) -> None:
        raise ValueError("boom")

    @action
    def log(self) -> list[str]:
        return list(self.events)

    @loop
    def runner(self, shutdown: threading.Event) -> None:
        self.events.append("loop-start")
        shutdown.wait()
        self.events.append("loop-end")

    @timer(0.02)
    def tick(self) -> None:
        self.ticks += 1

    @event("poke")
    def on_poke(self) -> None:
        self.fired += 1


@pytest.fixture
def router_for(any_exchange):
    made = []

    def make():
        r = MailboxRouter(any_exchange.create_client())
        made.append(r)
        return r

    yield make
    for r in made:
        r.close()


def test_actions_errors_and_lifecycle(any_exchange, router_for) -> None:
    behavior = Journal()
    running = start_agent(any_exchange, behavior)
    h = router_for().handle(running.agent.id)
    assert h.square(7).result(5) == 49
    with pytest.raises(ActionRaisedError, match="boom"):
        h.fail().result(5)
    with pytest.raises(UnknownActionError):
        h.action("nope").result(5)
    assert h.square(3).result(5) == 9  # still alive after an action raised
    assert h.ping(timeout=5) < 5
    h.shutdown(blocking=True, timeout=10)
    assert running.join() == CleanShutdown()
    assert behavior.events == ["setup", "loop-start", "loop-end", "shutdown"]
    with pytest.raises(MailboxClosedError):
        h.square(1).result(5)


def test_timer_and_event_loops() -> None:
    ex = LocalExchange()
    behavior = Journal()
    running = start_agent(ex, behavior)
    time.sleep(0.3)
    assert behavior.ticks >= 5
    for _ in range(3):
        running.agent.fire_event("poke")
    deadline = time.monotonic() + 5
    while behavior.fired < 3 and time.monotonic() < deadline:
        time.sleep(0.01)
    assert behavior.fired == 3
    with pytest.raises(KeyError):
        running.agent.fire_event("unknown")
    running.agent.self_shutdown()
    running.agent.self_shutdown()  # idempotent
    assert running.join() == CleanShutdown()
    running.agent.fire_event("poke")  # ignored after shutdown
    assert behavior.fired == 3


class Crashy(Behavior):
    def __init__(self) -> None:
        self.iterations = 0

    @timer(0.01)
    def crash(self) -> None:
        self.iterations += 1
        raise RuntimeError("loop broke")

    @action
    def ok(self) -> bool:
        return True


def test_loop_error_shuts_down_agent() -> None:
    ex = LocalExchange()
    behavior = Crashy()
    running = start_agent(ex, behavior)
    status = running.join()
    assert isinstance(status, LoopFailure)
    assert status.loop == "crash"
    assert "loop broke" in status.error.detail
    assert behavior.iterations == 1
    client = ex.create_client()
    router = MailboxRouter(client)
    with pytest.raises(MailboxClosedError):
        router.handle(running.agent.id).ok().result(5)
    router.close()


def test_loop_error_suppressed() -> None:
    ex = LocalExchange()
    behavior = Crashy()
    running = start_agent(ex, behavior, loop_error_policy=LoopErrorPolicy.SUPPRESS_AND_CONTINUE)
    time.sleep(0.2)
    assert behavior.iterations >= 5
    router = MailboxRouter(ex.create_client())
    assert router.handle(running.agent.id).ok().result(5) is True
    router.handle(running.agent.id).shutdown(blocking=True, timeout=5)
    assert running.join() == CleanShutdown()
    router.close()


class BadSetup(Behavior):
    def on_setup(self) -> None:
        raise OSError("no disk")


def test_setup_failure_closes_mailbox() -> None:
    ex = LocalExchange()
    running = start_agent(ex, BadSetup())
    with pytest.raises(AgentSetupError, match="no disk"):
        running.join()
    router = MailboxRouter(ex.create_client())
    with pytest.raises(MailboxClosedError):
        router.handle(running.agent.id).ping(timeout=5)
    router.close()


class Slow(Behavior):
    max_action_concurrency = 4

    def __init__(self) -> None:
        self.active = 0
        self.peak = 0
        self.lock = threading.Lock()

    internally_synchronized = True

    @action
    def work(self, seconds: float) -> int:
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        time.sleep(seconds)
        with self.lock:
            self.active -= 1
        return 1


def test_action_concurrency_is_bounded() -> None:
    ex = LocalExchange()
    behavior = Slow()
    running = start_agent(ex, behavior)
    router = MailboxRouter(ex.create_client())
    h = router.handle(running.agent.id)
    start = time.monotonic()
    futures = [h.work(0.2) for _ in range(8)]
    assert sum(f.result(10) for f in futures) == 8
    elapsed = time.monotonic() - start
    assert behavior.peak == 4
    assert 0.4 <= elapsed < 1.5
    h.shutdown(blocking=True, timeout=5)
    running.join()
    router.close()


def test_inflight_actions_finish_before_shutdown_ack() -> None:
    ex = LocalExchange()
    running = start_agent(ex, Slow())
    router = MailboxRouter(ex.create_client())
    h = router.handle(running.agent.id)
    pending = h.work(0.3)
    time.sleep(0.05)
    h.shutdown(blocking=True, timeout=5)
    assert pending.done() and pending.result() == 1
    running.join()
    router.close()


def test_non_terminal_shutdown_keeps_mailbox(dist_factory) -> None:
    ex = dist_factory()
    running = start_agent(ex, Journal())
    agent_id = running.agent.id
    router = MailboxRouter(ex.create_client())
    router.handle(agent_id).shutdown(terminal=False, blocking=True, timeout=10)
    running.join()
    # a message sent while nobody listens waits in the relay queue
    fut = router.handle(agent_id).square(5)
    again = Running(Agent(Journal(), ex.connect(agent_id)))
    assert fut.result(10) == 25
    router.handle(agent_id).shutdown(blocking=True, timeout=10)
    again.join()
    router.close()


class Caller(Behavior):
    @action
    def relay_square(self, target, x):  # type: ignore[no-untyped-def]
        return target.square(x).result(5) + 1


def test_agents_call_each_other_with_passed_handles(any_exchange, router_for) -> None:
    callee = start_agent(any_exchange, Journal())
    caller = start_agent(any_exchange, Caller())
    router = router_for()
    target = router.handle(callee.agent.id)
    assert router.handle(caller.agent.id).relay_square(target, 6).result(10) == 37
    for r in (callee, caller):
        router.handle(r.agent.id).shutdown(blocking=True, timeout=10)
        r.join()
