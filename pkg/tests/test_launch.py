import os
import threading
import time
from pathlib import Path

import pytest

from agentry.bench.behaviors import Counter, Example, Failing, NoOp
from agentry.behavior import Behavior, action
from agentry.errors import MailboxClosedError, UnknownEntityError
from agentry.exchange.local import LocalExchange
from agentry.handle import listener_threads
from agentry.ids import EntityId, Role
from agentry.launch import (
    AgentStatus,
    Manager,
    RestartPolicy,
    StateStore,
    SubprocessLauncher,
    ThreadLauncher,
    register_behavior,
    resolve_behavior,
)
from agentry.launch.registry import behavior_path
from agentry.runtime import LoopFailure


def wait_for(predicate, timeout: float = 20.0) -> None:  # type: ignore[no-untyped-def]
    deadline = time.monotonic() + timeout
    while not predicate():
        assert time.monotonic() < deadline, "condition not reached in time"
        time.sleep(0.05)


# -- registry and state -------------------------------------------------------


def test_registry_resolves_names_and_paths() -> None:
    assert resolve_behavior("Example") is Example
    assert behavior_path(Example) == "agentry.bench.behaviors:Example"
    assert resolve_behavior("agentry.bench.behaviors:NoOp") is NoOp
    with pytest.raises((KeyError, ValueError, ImportError)):
        resolve_behavior("no.such.module:Thing")
    with pytest.raises(TypeError):
        resolve_behavior("agentry.handle:Handle")

    class Local(Behavior):
        pass

    with pytest.raises(TypeError):
        behavior_path(Local)
    assert register_behavior(Local, name="LocalForTest") is Local
    assert resolve_behavior("LocalForTest") is Local


def test_state_store_is_durable_mapping(tmp_path: Path) -> None:
    agent = EntityId.new(Role.AGENT)
    store = StateStore(tmp_path, agent)
    store["a/b"] = b"1"
    store.set("c", b"2")
    assert dict(store) == {"a/b": b"1", "c": b"2"}
    reopened = StateStore(tmp_path, agent)
    assert reopened["a/b"] == b"1" and len(reopened) == 2
    del reopened["c"]
    with pytest.raises(KeyError):
        reopened.delete("c")
    with pytest.raises(KeyError):
        reopened["c"]
    assert not any(".tmp-" in p.name for p in tmp_path.rglob("*"))
    assert StateStore(tmp_path, EntityId.new(Role.AGENT)).keys() == set()


def test_restart_policy_backoff() -> None:
    policy = RestartPolicy(max_restarts=10)
    assert [policy.delay(i) for i in range(1, 8)] == [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 10.0]


# -- manager with threads -----------------------------------------------------


def test_manager_square_example() -> None:
    with Manager(LocalExchange()) as manager:
        h = manager.launch(Example)
        assert h.square(2).result(5) == 4
        assert manager.status(h.agent_id) is AgentStatus.RUNNING


def test_manager_sixty_four_agents_and_clean_teardown() -> None:
    before = {t.ident for t in threading.enumerate()}
    manager = Manager(LocalExchange())
    handles = [manager.launch(NoOp) for _ in range(64)]
    assert all(h.ping(timeout=10) < 10 for h in handles)
    assert len(listener_threads()) >= 1
    manager.close()
    for h in handles:
        assert manager.status(h.agent_id) is AgentStatus.STOPPED
    wait_for(lambda: {t.ident for t in threading.enumerate()} <= before, 10)


def test_manager_errors() -> None:
    with Manager(LocalExchange()) as manager:
        with pytest.raises(KeyError):
            manager.launch(Example, launcher="gpu")
        with pytest.raises(UnknownEntityError):
            manager.shutdown(EntityId.new(Role.AGENT))
        h = manager.launch(Example)
        with pytest.raises(RuntimeError):
            manager.launch(Example, agent_id=h.agent_id)
        with pytest.raises(ValueError):
            manager.launch(NoOp, agent_id=h.agent_id)
        manager.shutdown(h, blocking=True, timeout=5)
        assert manager.status(h.agent_id) is AgentStatus.STOPPED
        with pytest.raises(MailboxClosedError):
            h.square(1).result(5)
        manager.shutdown(h)  # already stopped: no-op
    with pytest.raises(RuntimeError):
        manager.launch(Example)


def test_thread_launcher_reports_loop_failure() -> None:
    with Manager(LocalExchange()) as manager:
        h = manager.launch(Failing, kwargs={"delay": 0.01})
        assert manager.wait(h.agent_id, 10)
        running = manager.running_agent(h.agent_id)
        assert running.status is AgentStatus.STOPPED
        assert isinstance(running.result, LoopFailure)


class BrokenSetup(Behavior):
    def on_setup(self) -> None:
        raise RuntimeError("cannot start")


def test_thread_launcher_setup_failure() -> None:
    with Manager(LocalExchange()) as manager:
        h = manager.launch(BrokenSetup)
        assert manager.wait(h.agent_id, 10)
        assert manager.status(h.agent_id) is AgentStatus.FAILED


def test_relaunch_after_non_terminal_shutdown(dist_factory) -> None:  # type: ignore[no-untyped-def]
    with Manager(dist_factory()) as manager:
        h = manager.launch(Example)
        manager.shutdown(h, terminal=False, blocking=True, timeout=10)
        queued = h.square(9)  # waits in the relay queue
        manager.launch(Example, agent_id=h.agent_id)
        assert queued.result(10) == 81


def test_launch_behavior_instance_with_state() -> None:
    class Holder(Behavior):
        def __init__(self, value: int) -> None:
            self.value = value

        @action
        def get(self) -> int:
            return self.value

    with Manager(LocalExchange(), ThreadLauncher()) as manager:
        assert manager.launch(Holder(11)).get().result(5) == 11
        assert manager.launch(Holder, args=(12,)).get().result(5) == 12


# -- subprocess launcher ------------------------------------------------------


@pytest.fixture
def sub_manager(dist_factory):  # type: ignore[no-untyped-def]
    def make(policy: RestartPolicy = RestartPolicy()) -> Manager:
        return Manager(
            dist_factory(),
            {"process": SubprocessLauncher(policy, stop_timeout=10), "thread": ThreadLauncher()},
        )

    return make


def test_subprocess_agent_answers(sub_manager) -> None:  # type: ignore[no-untyped-def]
    with sub_manager() as manager:
        h = manager.launch(Example)
        assert h.square(12).result(30) == 144
        running = manager.running_agent(h.agent_id)
        assert running.pid != os.getpid()
        manager.shutdown(h, blocking=True, timeout=20)
        assert running.status is AgentStatus.STOPPED
        assert running.exit_codes == [0]
        assert running.restarts == 0


def test_subprocess_rejects_instances_and_local_exchange() -> None:
    launcher = SubprocessLauncher()
    with Manager(LocalExchange(), launcher) as manager:
        with pytest.raises(TypeError):
            manager.launch(Example)


def test_killed_agent_restarts_and_resumes_from_checkpoint(sub_manager, tmp_path: Path) -> None:  # type: ignore[no-untyped-def]
    with sub_manager(RestartPolicy(max_restarts=2, backoff=0.1)) as manager:
        h = manager.launch(Counter, args=(str(tmp_path),))
        for _ in range(5):
            h.increment().result(30)
        first_pid = h.pid().result(30)
        running = manager.running_agent(h.agent_id)
        running.kill()
        wait_for(lambda: running.exit_codes)
        # sent while the agent is down; delivered to the restarted instance
        assert h.increment().result(30) == 6
        assert h.pid().result(30) != first_pid
        assert running.restarts == 1
        assert running.exit_codes[0] < 0


def test_restarts_exhausted_closes_mailbox(sub_manager) -> None:  # type: ignore[no-untyped-def]
    with sub_manager(RestartPolicy(max_restarts=2, backoff=0.05)) as manager:
        h = manager.launch(Failing, kwargs={"delay": 0.2})
        assert manager.wait(h.agent_id, 60)
        running = manager.running_agent(h.agent_id)
        assert running.status is AgentStatus.FAILED
        assert running.restarts == 2
        assert running.exit_codes == [1, 1, 1]
        with pytest.raises(MailboxClosedError):
            h.noop().result(10)


def test_setup_failure_is_not_restarted(sub_manager) -> None:  # type: ignore[no-untyped-def]
    with sub_manager(RestartPolicy(max_restarts=5, backoff=0.05)) as manager:
        h = manager.launch(Counter, args=("/proc/definitely/not/writable",))
        # construction succeeds; on_setup fails to create the state directory
        assert manager.wait(h.agent_id, 60)
        running = manager.running_agent(h.agent_id)
        assert running.status is AgentStatus.FAILED
        assert running.exit_codes == [3]


def test_manager_close_stops_children(sub_manager) -> None:  # type: ignore[no-untyped-def]
    manager = sub_manager(RestartPolicy(max_restarts=3))
    handles = [manager.launch(NoOp) for _ in range(3)]
    for h in handles:
        h.ping(timeout=30)
    records = [manager.running_agent(h.agent_id) for h in handles]
    manager.close()
    for r in records:
        assert r.status is AgentStatus.STOPPED
        assert r.process is not None and r.process.poll() is not None
        assert r.restarts == 0


def test_mixed_launchers_talk(sub_manager) -> None:  # type: ignore[no-untyped-def]
    from agentry.bench.behaviors import Talker

    with sub_manager() as manager:
        a = manager.launch(Talker, launcher="thread")
        b = manager.launch(Talker, launcher="process")
        assert a.converse(b, b"hi", 3).result(30) == 6
