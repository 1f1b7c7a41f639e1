"""Benchmark scenarios.

Each scenario returns a :class:`ScenarioResult`: CSV records plus the
pass/fail checks embedded in that scenario. Timings use the monotonic
``perf_counter`` clock and are summarized as median and MAD.
"""

from __future__ import annotations

import hashlib
import os
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import psutil

from agentry import tracing
from agentry.bench import behaviors
from agentry.bench.config import ExchangeMode
from agentry.bench.harness import bench_env
from agentry.bench.records import BenchRecord, median, summarize
from agentry.dataplane import DEFAULT_THRESHOLD, ObjectDepot
from agentry.handle import Handle, MailboxRouter
from agentry.launch.launcher import RestartPolicy, ThreadAgent, ThreadLauncher
from agentry.launch.manager import Manager
from agentry.launch.subprocess import SubprocessLauncher
from agentry.messages import Ping

MB = 1_000_000


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class ScenarioResult:
    scenario: str
    records: list[BenchRecord] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    values: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def record(self, parameters: dict[str, Any], metric: str, value: float, unit: str) -> None:
        self.records.append(BenchRecord(self.scenario, parameters, metric, value, unit))

    def summary(self, parameters: dict[str, Any], metric: str, values: Sequence[float], unit: str) -> None:
        self.records.extend(summarize(self.scenario, parameters, metric, values, unit))

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append(Check(name, bool(passed), detail))


def _shutdown_all(manager: Manager, handles: Iterable[Handle], timeout: float = 10.0) -> None:
    handles = list(handles)
    for h in handles:
        manager.shutdown(h.agent_id, blocking=False)
    deadline = time.monotonic() + timeout
    for h in handles:
        manager.wait(h.agent_id, max(0.0, deadline - time.monotonic()))


def _ping_all(router: MailboxRouter, handles: Sequence[Handle], timeout: float = 30.0) -> None:
    futures = [router.request(h.agent_id, Ping(), timeout=timeout) for h in handles]
    for fut in futures:
        fut.result()


def _await_direct(manager: Manager, handles: Sequence[Handle], timeout: float = 30.0) -> None:
    """Ping until the manager's client holds a direct route to every handle."""
    routes = getattr(manager.client, "routes", None)
    if routes is None or getattr(manager.client, "force_relay", False):
        return
    deadline = time.monotonic() + timeout
    for h in handles:
        while True:
            h.ping(timeout=timeout)
            route = routes.get(h.agent_id)
            if route is not None and route.direct:
                break
            if time.monotonic() > deadline:
                raise RuntimeError(f"{h.agent_id} never became directly reachable")
            time.sleep(0.05)


def _launcher_for(mode: ExchangeMode, *, processes: bool, threshold: int | None, **kw: Any) -> Any:
    if processes and mode is not ExchangeMode.LOCAL:
        return SubprocessLauncher(threshold=threshold, **kw)
    return ThreadLauncher(threshold=threshold)


# -- startup ------------------------------------------------------------------


def startup(n: int = 1, repetitions: int = 10, warmup: int = 2) -> ScenarioResult:
    """Time from submitting the first agent to a ping reply from every agent."""
    if n < 1:
        raise ValueError("startup needs at least one agent")
    result = ScenarioResult("startup")
    params = {"agents": n, "launcher": "thread", "mode": "local"}
    times: list[float] = []
    with bench_env(ExchangeMode.LOCAL) as env, Manager(env.exchange) as manager:
        for rep in range(warmup + repetitions):
            start = time.perf_counter()
            handles = [manager.launch(behaviors.NoOp) for _ in range(n)]
            _ping_all(manager.router, handles)
            elapsed = time.perf_counter() - start
            if rep >= warmup:
                times.append(elapsed)
            _shutdown_all(manager, handles)
    result.summary(params, "warm_start", times, "s")
    result.values["median"] = median(times)
    if n == 1:
        result.check("startup-1", median(times) < 0.010, f"median {median(times) * 1e3:.2f} ms < 10 ms")
    elif n == 64:
        result.check("startup-64", median(times) < 2.0, f"median {median(times):.3f} s < 2 s")
    return result


# -- weak scaling ---------------------------------------------------------------


def weak_scaling(
    agent_counts: Sequence[int] = (1, 8, 64), actions: int = 30, sleep: float = 1.0
) -> ScenarioResult:
    """Each agent runs ``actions`` sleep actions one at a time."""
    result = ScenarioResult("weak-scaling")
    ideal = actions * sleep
    completion: dict[int, float] = {}
    for k in agent_counts:
        params = {"agents": k, "actions": actions, "sleep": sleep}
        with bench_env(ExchangeMode.LOCAL) as env, Manager(env.exchange) as manager:
            handles = [manager.launch(behaviors.Sleeper) for _ in range(k)]
            _ping_all(manager.router, handles)
            start = time.perf_counter()
            futures = [h.sleep(sleep, _timeout=ideal * 3 + 30) for h in handles for _ in range(actions)]
            for fut in futures:
                fut.result()
            completion[k] = time.perf_counter() - start
            _shutdown_all(manager, handles)
        result.record(params, "completion_time", completion[k], "s")
    result.values["completion"] = completion
    upper = ideal * 1.1
    for k, t in completion.items():
        result.check(f"weak-scaling-{k}", ideal <= t <= upper, f"{t:.2f} s within [{ideal:.1f}, {upper:.1f}] s")
    if len(completion) > 1:
        ratio = max(completion.values()) / min(completion.values())
        result.record({"agents": list(completion)}, "max_min_ratio", ratio, "ratio")
        result.check("weak-scaling-flat", ratio < 1.15, f"max/min {ratio:.3f} < 1.15")
    return result


# -- latency --------------------------------------------------------------------


def latency(
    sizes: Sequence[int] = (10, 1_000, 10_000, 100_000, 1_000_000),
    mode: ExchangeMode | str = ExchangeMode.DIST_DIRECT,
    trials: int = 1000,
    inject_latency_ms: float = 0.0,
    processes: bool = True,
    warmup: int = 20,
) -> ScenarioResult:
    """No-op round trip against payload size. Payloads travel inline."""
    mode = ExchangeMode(mode)
    if list(sizes) != sorted(sizes):
        raise ValueError("payload sizes must be sorted ascending")
    result = ScenarioResult("latency")
    medians: dict[int, float] = {}
    with bench_env(mode, inject_latency_ms=inject_latency_ms) as env:
        launcher = _launcher_for(mode, processes=processes, threshold=None)
        with Manager(env.exchange, launcher, threshold=None) as manager:
            h = manager.launch(behaviors.NoOp)
            h.ping(timeout=60)
            if mode is ExchangeMode.DIST_DIRECT:
                _await_direct(manager, [h])
            counters = getattr(manager.client, "counters", None)
            before = dict(counters) if counters is not None else None
            for size in sizes:
                data = os.urandom(size)
                samples = []
                for i in range(warmup + trials):
                    start = time.perf_counter()
                    h.noop(data).result()
                    if i >= warmup:
                        samples.append(time.perf_counter() - start)
                params = {
                    "mode": mode.value,
                    "payload": size,
                    "processes": processes,
                    "inject_latency_ms": inject_latency_ms,
                }
                result.summary(params, "rtt", samples, "s")
                medians[size] = median(samples)
            if counters is not None and before is not None:
                result.values["counters"] = {k: counters[k] - before[k] for k in counters}
    result.values["medians"] = medians
    if mode is ExchangeMode.DIST_DIRECT:
        sent = result.values["counters"]
        expected = len(sizes) * (warmup + trials)
        result.check(
            "latency-direct-path",
            sent["direct"] == expected and sent["relay"] == 0,
            f"{sent['direct']}/{expected} requests sent directly, {sent['relay']} relayed",
        )
    if mode is ExchangeMode.DIST_DIRECT and 10_000 in medians and inject_latency_ms == 0:
        m = medians[10_000]
        result.check("latency-10KB-direct", m < 0.002, f"median {m * 1e3:.3f} ms < 2 ms")
    ordered = [medians[s] for s in sizes]
    monotone = all(b >= a - max(0.25e-3, 0.15 * a) for a, b in zip(ordered, ordered[1:]))
    result.check("latency-monotone", monotone, "medians nondecreasing in payload (noise allowance 15%)")
    if mode is ExchangeMode.DIST_RELAY and inject_latency_ms > 0:
        small = medians[sizes[0]]
        floor = 2 * inject_latency_ms / 1e3
        ok = floor <= small <= floor + max(0.015, inject_latency_ms / 1e3)
        result.check("latency-relay-injected", ok, f"small-payload median {small * 1e3:.1f} ms near 2x{inject_latency_ms:g} ms")
    return result


# -- throughput -----------------------------------------------------------------


def _bag(handles: Sequence[Handle], tasks: int) -> float:
    start = time.perf_counter()
    futures = [handles[i % len(handles)].noop() for i in range(tasks)]
    for fut in futures:
        fut.result()
    return tasks / (time.perf_counter() - start)


def throughput(
    workers: int = 8,
    tasks: int = 5000,
    repetitions: int = 5,
    mode: ExchangeMode | str = ExchangeMode.LOCAL,
    multiplex: bool = True,
) -> ScenarioResult:
    """One submitter, a bag of no-op actions, round-robin over worker agents.

    With ``multiplex=False`` every handle gets its own client mailbox and
    listener thread instead of sharing the manager's.
    """
    mode = ExchangeMode(mode)
    if workers < 1:
        raise ValueError("throughput needs at least one worker")
    result = ScenarioResult("throughput")
    params = {"workers": workers, "tasks": tasks, "mode": mode.value, "multiplex": multiplex}
    rates = _throughput_rates(workers, tasks, repetitions, mode, multiplex)
    result.summary(params, "throughput", rates, "actions/s")
    result.values["median"] = median(rates)
    if workers == 8 and mode is ExchangeMode.LOCAL:
        result.check("throughput-8-local", median(rates) >= 1000, f"median {median(rates):.0f} actions/s >= 1000")
    return result


def _throughput_rates(
    workers: int, tasks: int, repetitions: int, mode: ExchangeMode, multiplex: bool
) -> list[float]:
    rates: list[float] = []
    with bench_env(mode) as env, Manager(env.exchange) as manager:
        agents = [manager.launch(behaviors.NoOp) for _ in range(workers)]
        _ping_all(manager.router, agents)
        routers: list[MailboxRouter] = []
        if multiplex:
            handles = agents
        else:
            routers = [MailboxRouter(env.exchange.create_client()) for _ in agents]
            handles = [r.handle(a.agent_id) for r, a in zip(routers, agents)]
            for h in handles:
                h.ping()
        _bag(handles, min(tasks, 500))  # warm-up
        for _ in range(repetitions):
            rates.append(_bag(handles, tasks))
        for r in routers:
            r.close()
            r.client.close()
        _shutdown_all(manager, agents)
    return rates


def multiplex_ablation(
    handles: int = 32,
    tasks: int = 5000,
    repetitions: int = 5,
    mode: ExchangeMode | str = ExchangeMode.LOCAL,
) -> ScenarioResult:
    """Throughput with one shared listener against one listener per handle.

    Both configurations drive the same agents, and their repetitions
    alternate in ABBA order so that drift in the host affects both alike.
    The per-handle routers exist only during their own repetitions.
    """
    mode = ExchangeMode(mode)
    result = ScenarioResult("multiplex")
    rates: dict[bool, list[float]] = {True: [], False: []}
    with bench_env(mode) as env, Manager(env.exchange) as manager:
        agents = [manager.launch(behaviors.NoOp) for _ in range(handles)]
        _ping_all(manager.router, agents)
        _bag(agents, min(tasks, 500))

        def run(multiplex: bool) -> float:
            if multiplex:
                return _bag(agents, tasks)
            routers = [MailboxRouter(env.exchange.create_client()) for _ in agents]
            try:
                own = [r.handle(a.agent_id) for r, a in zip(routers, agents)]
                for h in own:
                    h.ping()
                _bag(own, min(tasks, 500))
                return _bag(own, tasks)
            finally:
                for r in routers:
                    r.close()
                    r.client.close()

        order = [True, False, False, True]
        for i in range(2 * repetitions):
            multiplex = order[i % 4]
            rates[multiplex].append(run(multiplex))
        _shutdown_all(manager, agents)
    for multiplex in (True, False):
        params = {"workers": handles, "tasks": tasks, "mode": mode.value, "multiplex": multiplex}
        result.summary(params, "throughput", rates[multiplex], "actions/s")
    on, off = median(rates[True]), median(rates[False])
    gain = on / off - 1
    result.record({"workers": handles, "mode": mode.value}, "multiplex_gain", gain, "fraction")
    result.values.update(on=on, off=off, gain=gain, rates=rates)
    result.check("multiplex-gain", gain >= 0.10, f"{on:.0f} vs {off:.0f} actions/s, gain {gain * 100:.1f}% >= 10%")
    return result


# -- pass-by-reference ------------------------------------------------------------


def _depots(manager: Manager) -> list[ObjectDepot]:
    depots = [manager.client.depot]
    for managed in manager.registry.values():
        running = managed.running
        if isinstance(running, ThreadAgent):
            depots.append(running.agent.client.depot)
    return [d for d in depots if d is not None]


def _transfers(depots: Sequence[ObjectDepot]) -> int:
    return sum(d.stats.transfers for d in depots)


def chain(
    n: int = 4,
    payload: int = 10 * MB,
    pass_by_ref: bool = True,
    repetitions: int = 3,
    inject_latency_ms: float = 0.0,
) -> ScenarioResult:
    """Client passes data through ``n`` agents over the relay; the last reads it.

    Relay message bytes and object transfers are read from the store's and
    depots' counters around each repetition.
    """
    if n < 1:
        raise ValueError("a chain needs at least one agent")
    result = ScenarioResult("chain")
    threshold = DEFAULT_THRESHOLD if pass_by_ref else None
    params = {"agents": n, "payload": payload, "pass_by_ref": pass_by_ref, "inject_latency_ms": inject_latency_ms}
    times, hop_bytes, transfers, store_ratio = [], [], [], []
    with bench_env(ExchangeMode.DIST_RELAY, inject_latency_ms=inject_latency_ms) as env:
        launcher = ThreadLauncher(threshold=threshold)
        with Manager(env.exchange, launcher, threshold=threshold) as manager:
            links = [manager.launch(behaviors.ChainLink) for _ in range(n)]
            _ping_all(manager.router, links)
            depots = _depots(manager)
            for _ in range(repetitions):
                data = os.urandom(payload)
                before = env.store_stats()
                t_before = _transfers(depots)
                start = time.perf_counter()
                digest = links[0].forward(data, links[1:], _timeout=300).result()
                times.append(time.perf_counter() - start)
                after = env.store_stats()
                put = after["bytes_in"].get("PUT_MSG", 0) - before["bytes_in"].get("PUT_MSG", 0)
                polled = after["bytes_out"].get("POLL_MSGS", 0) - before["bytes_out"].get("POLL_MSGS", 0)
                hop_bytes.append(put / n)
                store_ratio.append((put + polled) / payload if payload else 0.0)
                transfers.append(_transfers(depots) - t_before)
                if digest != hashlib.sha256(data).hexdigest():
                    raise RuntimeError("chain returned the wrong digest")
            _shutdown_all(manager, links)
    result.summary(params, "rtt", times, "s")
    result.summary(params, "relay_bytes_per_hop", hop_bytes, "bytes")
    result.summary(params, "object_transfers", transfers, "count")
    result.summary(params, "store_bytes_over_payload", store_ratio, "ratio")
    result.values.update(hop_bytes=max(hop_bytes), transfers=transfers, store_ratio=median(store_ratio), rtt=median(times))
    if pass_by_ref:
        result.check("chain-hop-bytes", max(hop_bytes) < 1024, f"max {max(hop_bytes):.0f} B per hop < 1 KB")
        result.check("chain-one-transfer", all(t == 1 for t in transfers), f"object transfers per run {transfers}")
    else:
        expect = 2 * n
        ratio = median(store_ratio)
        result.check(
            "chain-baseline-bytes", 0.95 * expect <= ratio <= 1.1 * expect, f"store bytes {ratio:.2f} x payload, expected about {expect}"
        )
    return result


def reference(
    payload: int = 10 * MB,
    inject_latency_ms: float = 30.0,
    repetitions: int = 7,
    warmup: int = 2,
    store_process: bool = True,
) -> ScenarioResult:
    """No-op action with a large argument, by value against by reference.

    Both modes route envelopes through the relay store, which runs as its
    own process unless ``store_process`` is false.
    """
    result = ScenarioResult("reference")
    medians = {}
    data = os.urandom(payload)
    for pass_by_ref in (False, True):
        threshold = DEFAULT_THRESHOLD if pass_by_ref else None
        params = {"payload": payload, "pass_by_ref": pass_by_ref, "inject_latency_ms": inject_latency_ms}
        samples = []
        with bench_env(
            ExchangeMode.DIST_RELAY, inject_latency_ms=inject_latency_ms, store_process=store_process
        ) as env:
            with Manager(env.exchange, ThreadLauncher(threshold=threshold), threshold=threshold) as manager:
                h = manager.launch(behaviors.NoOp)
                h.ping()
                for i in range(warmup + repetitions):
                    start = time.perf_counter()
                    h.noop(data, _timeout=120).result()
                    if i >= warmup:
                        samples.append(time.perf_counter() - start)
                _shutdown_all(manager, [h])
        result.summary(params, "rtt", samples, "s")
        medians[pass_by_ref] = median(samples)
    reduction = 1 - medians[True] / medians[False]
    result.record({"payload": payload, "inject_latency_ms": inject_latency_ms}, "reduction", reduction, "fraction")
    result.values.update(baseline=medians[False], by_ref=medians[True], reduction=reduction)
    result.check(
        "reference-speedup",
        reduction >= 0.5,
        f"by-ref {medians[True] * 1e3:.1f} ms vs baseline {medians[False] * 1e3:.1f} ms, reduction {reduction * 100:.1f}% >= 50%",
    )
    return result


# -- conversation -----------------------------------------------------------------


def conversation(
    rounds: int = 10,
    size: int = 1_000,
    mode: ExchangeMode | str = ExchangeMode.DIST_DIRECT,
    repetitions: int = 5,
) -> ScenarioResult:
    """Two agents exchange ``2 * rounds`` messages; payloads travel inline."""
    if rounds < 1:
        raise ValueError("a conversation needs at least one round")
    mode = ExchangeMode(mode)
    result = ScenarioResult("conversation")
    params = {"rounds": rounds, "size": size, "mode": mode.value}
    times = []
    with bench_env(mode) as env:
        with Manager(env.exchange, ThreadLauncher(threshold=None), threshold=None) as manager:
            a = manager.launch(behaviors.Talker)
            b = manager.launch(behaviors.Talker)
            _ping_all(manager.router, [a, b])
            if mode is ExchangeMode.DIST_DIRECT:
                _await_direct(manager, [a, b])
            rtt = median([a.ping() for _ in range(20)])
            message = os.urandom(size)
            for _ in range(repetitions):
                start = time.perf_counter()
                exchanged = a.converse(b, message, rounds, _timeout=300).result()
                times.append(time.perf_counter() - start)
                if exchanged != 2 * rounds:
                    raise RuntimeError(f"expected {2 * rounds} messages, saw {exchanged}")
            _shutdown_all(manager, [a, b])
    result.summary(params, "conversation_time", times, "s")
    one_way = rtt / 2
    result.record(params, "one_way_estimate", one_way, "s")
    result.record(params, "time_over_one_way", median(times) / one_way, "ratio")
    result.values.update(median=median(times), one_way=one_way)
    result.check("conversation-complete", True, f"{2 * rounds} messages of {size} B exchanged")
    return result


# -- memory -----------------------------------------------------------------------


def _rss(include_children: bool) -> int:
    proc = psutil.Process()
    total = proc.memory_info().rss
    if include_children:
        for child in proc.children(recursive=True):
            try:
                total += child.memory_info().rss
            except psutil.Error:
                pass
    return total


def _peak_rss(include_children: bool, settle: float) -> int:
    peak = 0
    deadline = time.monotonic() + settle
    while True:
        peak = max(peak, _rss(include_children))
        if time.monotonic() >= deadline:
            return peak
        time.sleep(0.05)


def memory(
    counts: Sequence[int] = (0, 1, 2, 4, 8, 16),
    launchers: Sequence[str] = ("thread", "subprocess"),
    settle: float = 0.5,
) -> ScenarioResult:
    """Peak resident memory after a settle period against agent count."""
    result = ScenarioResult("memory")
    slopes: dict[str, float] = {}
    for kind in launchers:
        processes = kind == "subprocess"
        mode = ExchangeMode.DIST_DIRECT if processes else ExchangeMode.LOCAL
        with bench_env(mode) as env:
            launcher = SubprocessLauncher() if processes else ThreadLauncher()
            with Manager(env.exchange, launcher) as manager:
                handles: list[Handle] = []
                points = []
                for n in sorted(counts):
                    while len(handles) < n:
                        handles.append(manager.launch(behaviors.NoOp))
                    _ping_all(manager.router, handles, timeout=60)
                    rss = _peak_rss(processes, settle)
                    points.append((n, rss))
                    result.record({"launcher": kind, "agents": n}, "peak_rss", rss, "bytes")
                _shutdown_all(manager, handles, timeout=30)
        xs, ys = zip(*points)
        slope = statistics.linear_regression(xs, ys).slope if len(set(xs)) > 1 else 0.0
        slopes[kind] = slope
        result.record({"launcher": kind}, "rss_per_agent", slope, "bytes")
    result.values["slopes"] = slopes
    if "thread" in slopes and "subprocess" in slopes:
        result.check(
            "memory-slope",
            slopes["subprocess"] > slopes["thread"],
            f"subprocess {slopes['subprocess'] / MB:.2f} MB/agent > thread {slopes['thread'] / MB:.3f} MB/agent",
        )
    return result


# -- pipeline -----------------------------------------------------------------------


def pipeline(
    items: int = 100,
    size: int = 200_000,
    kill: bool = False,
    kill_after: int | None = None,
    trace_path: str | None = None,
) -> ScenarioResult:
    """Generator, assembler, validator and recorder agents in a line.

    The validator runs in its own process under a restart policy; with
    ``kill`` it is SIGKILLed once part of the items have been recorded.
    """
    result = ScenarioResult("pipeline")
    params = {"items": items, "size": size, "kill": kill}
    own_trace = trace_path is None
    if own_trace:
        fd, trace_path = tempfile.mkstemp(prefix="agentry-trace-", suffix=".jsonl")
        os.close(fd)
    assert trace_path is not None
    handler = tracing.enable_trace(trace_path)
    try:
        with bench_env(ExchangeMode.DIST_DIRECT) as env:
            launchers = {
                "thread": ThreadLauncher(),
                "process": SubprocessLauncher(RestartPolicy(max_restarts=3), trace_path=trace_path),
            }
            with Manager(env.exchange, launchers) as manager:
                recorder = manager.launch(behaviors.Recorder)
                validator = manager.launch(behaviors.Validator, launcher="process")
                assembler = manager.launch(behaviors.Assembler)
                generator = manager.launch(behaviors.Generator)
                stages = {
                    "generator": generator,
                    "assembler": assembler,
                    "validator": validator,
                    "recorder": recorder,
                }
                _ping_all(manager.router, list(stages.values()), timeout=60)
                start = time.perf_counter()
                run = generator.generate(items, size, [assembler, validator, recorder], _timeout=600)
                killed = False
                if kill:
                    threshold = kill_after if kill_after is not None else items // 3
                    while not run.done() and recorder.count().result() < threshold:
                        time.sleep(0.02)
                    if not run.done():
                        manager.running_agent(validator.agent_id).kill()
                        killed = True
                outcome = run.result()
                elapsed = time.perf_counter() - start
                summary = recorder.summary().result()
                restarts = manager.running_agent(validator.agent_id).restarts
                _shutdown_all(manager, list(stages.values()), timeout=30)
    finally:
        tracing.trace_logger.removeHandler(handler)
        handler.close()
    with open(trace_path) as fh:
        events = list(tracing.parse_trace(fh))
    if own_trace:
        os.unlink(trace_path)
    by_agent = {str(h.agent_id): name for name, h in stages.items()}
    per_stage = {name: 0 for name in stages}
    for ev in events:
        if ev.get("event") == "action-finish" and ev.get("agent") in by_agent:
            per_stage[by_agent[ev["agent"]]] += 1
    result.record(params, "elapsed", elapsed, "s")
    result.record(params, "retries", outcome["retries"], "count")
    result.record(params, "sink_duplicates", summary["duplicates"], "count")
    result.record(params, "validator_restarts", restarts, "count")
    for name, count in per_stage.items():
        result.record({**params, "stage": name}, "traced_actions", count, "count")
    result.values.update(summary=summary, outcome=outcome, restarts=restarts, per_stage=per_stage, killed=killed)
    result.check(
        "pipeline-exactly-once",
        summary["recorded"] == list(range(items)),
        f"{len(summary['recorded'])}/{items} items recorded once ({summary['duplicates']} duplicates suppressed)",
    )
    result.check(
        "pipeline-trace",
        all(per_stage[name] > 0 for name in ("assembler", "validator", "recorder")),
        f"traced actions per stage {per_stage}",
    )
    if kill:
        result.check("pipeline-restart", killed and restarts >= 1, f"validator killed={killed}, restarts={restarts}")
    return result


SCENARIOS = {
    "startup": startup,
    "weak-scaling": weak_scaling,
    "latency": latency,
    "throughput": throughput,
    "multiplex": multiplex_ablation,
    "chain": chain,
    "reference": reference,
    "conversation": conversation,
    "memory": memory,
    "pipeline": pipeline,
}
