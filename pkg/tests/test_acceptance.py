"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line for its criterion and then
asserts, so a plain ``pytest -v`` log shows both the verdict and the
measured values.
"""

from __future__ import annotations

import random
import struct
import threading
import time
from typing import Callable

import pytest

from agentry import codec
from agentry.bench import scenarios
from agentry.bench.behaviors import Counter, Failing
from agentry.behavior import Behavior, action, loop, timer
from agentry.errors import ActionRaisedError, MailboxClosedError
from agentry.exchange.dist import DistExchange
from agentry.exchange.local import LocalExchange
from agentry.handle import MailboxRouter
from agentry.launch import AgentStatus, Manager, RestartPolicy, SubprocessLauncher
from agentry.runtime import CleanShutdown, LoopErrorPolicy, LoopFailure

from conformance import random_ops, run
from envelopes import random_envelope
from helpers import start_agent

pytestmark = pytest.mark.slow

Emit = Callable[[int, bool, str], None]


@pytest.fixture
def verdict(capsys: pytest.CaptureFixture[str]) -> Emit:
    def emit(criterion: int, passed: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")
        assert passed, detail

    return emit


def details(result: scenarios.ScenarioResult) -> str:
    return "; ".join(c.line() for c in result.checks)


# -- 1. warm start --------------------------------------------------------------


def test_criterion_1_warm_start(verdict: Emit) -> None:
    one = scenarios.startup(1, repetitions=20)
    many = scenarios.startup(64, repetitions=5)
    verdict(1, one.passed and many.passed, f"{details(one)}; {details(many)}")


# -- 2. weak scaling --------------------------------------------------------------


def test_criterion_2_weak_scaling(verdict: Emit) -> None:
    result = scenarios.weak_scaling((1, 8, 64), actions=30, sleep=1.0)
    verdict(2, result.passed, details(result))


# -- 3. action latency ------------------------------------------------------------


def test_criterion_3_latency(verdict: Emit) -> None:
    result = scenarios.latency([10_000], "dist-direct", trials=1000, processes=True)
    checks = {c.name: c for c in result.checks}
    ok = checks["latency-10KB-direct"].passed and checks["latency-direct-path"].passed
    verdict(3, ok, f"two processes, {details(result)}")


# -- 4. throughput and multiplexing -------------------------------------------------


def test_criterion_4_throughput_and_multiplexing(verdict: Emit) -> None:
    rate = scenarios.throughput(workers=8, tasks=5000, repetitions=5, mode="local")
    mux = scenarios.multiplex_ablation(handles=32, tasks=5000, repetitions=5, mode="local")
    verdict(4, rate.passed and mux.passed, f"{details(rate)}; {details(mux)}")


# -- 5. pass-by-reference -----------------------------------------------------------


def test_criterion_5_pass_by_reference(verdict: Emit) -> None:
    chain = scenarios.chain(n=4, payload=10_000_000, pass_by_ref=True, repetitions=3)
    reference = scenarios.reference(payload=10_000_000, inject_latency_ms=30, repetitions=7)
    verdict(5, chain.passed and reference.passed, f"{details(reference)}; {details(chain)}")


# -- 6. mailbox semantics ------------------------------------------------------------

OPS = 10_000


@pytest.mark.parametrize("kind", ["local", "dist-direct", "dist-relay"])
def test_criterion_6_mailbox_conformance(verdict: Emit, store_endpoint: str, kind: str) -> None:
    if kind == "local":
        exchange = LocalExchange()
    else:
        exchange = DistExchange(store_endpoint, force_relay=kind == "dist-relay")
    try:
        report = run(exchange, random_ops(random.Random(2024), OPS))
    finally:
        exchange.shutdown()
    covered = all(report.counts.get(op, 0) > 0 for op in ("send", "recv", "disconnect", "reconnect", "close"))
    ok = not report.violations and covered and report.delivered_after_offline > 0
    verdict(
        6,
        ok,
        f"{kind}: {report.ops} ops {report.counts}, {report.delivered} delivered "
        f"({report.delivered_after_offline} sent while offline), {len(report.violations)} violations "
        + "; ".join(report.violations[:3]),
    )


# -- 7. lifecycle and errors ------------------------------------------------------------


class Lifecycle(Behavior):
    def __init__(self) -> None:
        self.log: list[str] = []
        self.lock = threading.Lock()

    def note(self, what: str) -> None:
        with self.lock:
            self.log.append(what)

    def on_setup(self) -> None:
        time.sleep(0.05)  # anything racing setup would show up first
        self.note("setup")

    def on_shutdown(self) -> None:
        self.note("shutdown")

    @loop
    def worker(self, shutdown: threading.Event) -> None:
        self.note("loop")
        shutdown.wait()
        time.sleep(0.05)
        self.note("loop-exit")

    @action
    def work(self) -> str:
        self.note("action")
        return "done"

    @action
    def broken(self) -> None:
        raise KeyError("missing part")


class FailingTimer(Behavior):
    def __init__(self) -> None:
        self.runs = 0

    @timer(0.01)
    def tick(self) -> None:
        self.runs += 1
        raise RuntimeError("tick failed")

    @action
    def runs_so_far(self) -> int:
        return self.runs


def test_criterion_7_lifecycle_and_errors(verdict: Emit) -> None:
    problems: list[str] = []
    ex = LocalExchange()
    router = MailboxRouter(ex.create_client())

    behavior = Lifecycle()
    running = start_agent(ex, behavior)
    h = router.handle(running.agent.id)
    if h.work().result(5) != "done":
        problems.append("action result")
    try:
        h.broken().result(5)
        problems.append("action error not raised")
    except ActionRaisedError as exc:
        if "missing part" not in str(exc):
            problems.append(f"error text lost: {exc}")
    if h.work().result(5) != "done":
        problems.append("agent died after action error")
    h.shutdown(blocking=True, timeout=10)
    if running.join() != CleanShutdown():
        problems.append("unclean shutdown")
    log = behavior.log
    if log[0] != "setup" or log[-1] != "shutdown" or log.index("loop-exit") > log.index("shutdown"):
        problems.append(f"lifecycle order {log}")

    failing = FailingTimer()
    status = start_agent(ex, failing).join()
    if not isinstance(status, LoopFailure) or failing.runs != 1:
        problems.append(f"default policy did not stop the agent: {status}, runs={failing.runs}")

    tolerant = FailingTimer()
    survivor = start_agent(ex, tolerant, loop_error_policy=LoopErrorPolicy.SUPPRESS_AND_CONTINUE)
    time.sleep(0.2)
    sh = router.handle(survivor.agent.id)
    if sh.runs_so_far().result(5) < 3:
        problems.append("suppressed loop did not keep running")
    sh.shutdown(blocking=True, timeout=10)
    survivor.join()
    router.close()
    verdict(
        7,
        not problems,
        "setup precedes loops and actions, shutdown follows the last loop, action errors return "
        "ActionRaised and the agent stays up, loop errors stop the agent unless suppressed"
        if not problems
        else "; ".join(problems),
    )


# -- 8. discovery --------------------------------------------------------------------------


class ProteinFolder(Behavior):
    @action
    def fold(self, sequence: str) -> str:
        return sequence[::-1]


class OpenProteinFolder(ProteinFolder):
    pass


@pytest.mark.parametrize("kind", ["local", "dist"])
def test_criterion_8_discovery(verdict: Emit, store_endpoint: str, kind: str) -> None:
    exchange = LocalExchange() if kind == "local" else DistExchange(store_endpoint)
    with Manager(exchange, owns_exchange=True) as manager:
        generic = manager.launch(ProteinFolder)
        openfold = manager.launch(OpenProteinFolder)
        ancestors = exchange.discover("ProteinFolder")
        leaves = exchange.discover("OpenProteinFolder")
        ok = sorted(ancestors) == sorted([generic.agent_id, openfold.agent_id]) and leaves == [openfold.agent_id]
        verdict(
            8,
            ok,
            f"{kind}: ProteinFolder -> {len(ancestors)} agents, OpenProteinFolder -> {len(leaves)} agent",
        )


# -- 9. supervision ---------------------------------------------------------------------------


def test_criterion_9_supervision(verdict: Emit, store_endpoint: str, tmp_path) -> None:  # type: ignore[no-untyped-def]
    policy = RestartPolicy(max_restarts=2, backoff=0.25)
    notes = []
    ok = True
    exchange = DistExchange(store_endpoint)
    with Manager(exchange, SubprocessLauncher(policy)) as manager:
        counter = manager.launch(Counter, args=(str(tmp_path),))
        futures = [counter.increment() for _ in range(20)]
        [f.result(30) for f in futures]
        record = manager.running_agent(counter.agent_id)
        record.kill()
        while not record.exit_codes:
            time.sleep(0.005)
        pending = counter.increment()  # issued while the agent is down
        value = pending.result(60)
        gap = record.started_at[1] - record.exited_at[0]
        within = policy.delay(1) <= gap <= policy.delay(1) + 0.5
        ok &= value == 21 and within and record.restarts == 1
        notes.append(f"restart {gap * 1e3:.0f} ms after SIGKILL (backoff {policy.delay(1) * 1e3:.0f} ms)")
        notes.append(f"invoke sent while down resolved to {value} from the checkpoint")

        doomed = manager.launch(Failing, kwargs={"delay": 0.1})
        manager.wait(doomed.agent_id, 60)
        failed = manager.running_agent(doomed.agent_id)
        try:
            doomed.noop().result(10)
            closed = False
        except MailboxClosedError:
            closed = True
        try:
            exchange.store.put_msg(doomed.agent_id, b"x")
            store_closed = False
        except MailboxClosedError:
            store_closed = True
        ok &= failed.status is AgentStatus.FAILED and failed.restarts == 2 and closed and store_closed
        notes.append(
            f"after {failed.restarts} restarts status {failed.status.value}, mailbox closed={closed and store_closed}"
        )
    exchange.shutdown()

    pipe = scenarios.pipeline(items=60, size=100_000, kill=True)
    ok &= pipe.passed
    notes.append(details(pipe))
    verdict(9, ok, "; ".join(notes))


# -- 10. codec fuzz -------------------------------------------------------------------------------

FUZZ_FRAMES = 1_000_000
ROUND_TRIPS = 100_000


def _fuzz_frame(rng: random.Random, valid: list[bytes]) -> bytes:
    mode = rng.randrange(4)
    if mode == 0:
        return rng.randbytes(rng.randrange(0, 120))
    if mode == 1:
        # plausible header, random body
        body = bytes([1, rng.randrange(0, 8)]) + rng.randbytes(rng.randrange(0, 120))
        return struct.pack(">I", len(body)) + body
    frame = bytearray(rng.choice(valid))
    if mode == 2:
        for _ in range(rng.randrange(1, 5)):
            frame[rng.randrange(len(frame))] = rng.randrange(256)
        return bytes(frame)
    cut = rng.randrange(len(frame) + 8)
    return bytes(frame[:cut]) + rng.randbytes(rng.randrange(0, 4))


def test_criterion_10_codec_fuzz(verdict: Emit) -> None:
    rng = random.Random(10)
    valid = [codec.encode_envelope(random_envelope(rng)) for _ in range(500)]
    crashes, escapes, decoded = 0, 0, 0
    for _ in range(FUZZ_FRAMES):
        data = _fuzz_frame(rng, valid)
        try:
            env = codec.decode_envelope(data)
        except codec.DecodeError as exc:
            if not 0 <= exc.offset <= len(data):
                escapes += 1
            continue
        except Exception:
            crashes += 1
            continue
        decoded += 1
        # A successful decode must account for exactly the input bytes.
        if codec.encode_envelope(env) != data:
            escapes += 1
    mismatches = 0
    for _ in range(ROUND_TRIPS):
        env = random_envelope(rng)
        if codec.decode_envelope(codec.encode_envelope(env)) != env:
            mismatches += 1
    verdict(
        10,
        crashes == 0 and escapes == 0 and mismatches == 0,
        f"{FUZZ_FRAMES} fuzzed frames: {crashes} crashes, {escapes} out-of-frame reads, {decoded} decoded; "
        f"{ROUND_TRIPS} round trips: {mismatches} mismatches",
    )
