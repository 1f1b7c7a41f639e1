import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from agentry.exchange.local import LocalExchange

from conformance import ConformanceRun, random_ops, run

idx = st.integers(0, 15)
ops = st.lists(
    st.one_of(
        st.tuples(st.just("send"), idx, idx),
        st.tuples(st.just("recv"), idx),
        st.tuples(st.sampled_from(["disconnect", "reconnect", "close"]), idx),
    ),
    max_size=60,
)


@settings(max_examples=150, deadline=None)
@given(ops)
def test_local_exchange_matches_model(sequence) -> None:  # type: ignore[no-untyped-def]
    report = run(LocalExchange(), sequence)
    assert report.violations == []


@settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(ops)
def test_relay_exchange_matches_model(dist_factory, sequence) -> None:  # type: ignore[no-untyped-def]
    report = run(dist_factory(force_relay=True), sequence)
    assert report.violations == []


@pytest.mark.parametrize("seed", [1, 2])
def test_random_walk_on_every_exchange(any_exchange, seed: int) -> None:  # type: ignore[no-untyped-def]
    report = run(any_exchange, random_ops(random.Random(seed), 400))
    assert report.violations == []
    assert report.delivered > 50


def test_offline_messages_delivered_after_reconnect(any_exchange) -> None:  # type: ignore[no-untyped-def]
    h = ConformanceRun(any_exchange)
    h.apply("disconnect", 0)
    for s in range(3):
        for _ in range(4):
            h.apply("send", s, 0)
    h.apply("reconnect", 0)
    for _ in range(12):
        h.apply("recv", 0)
    h.apply("close", 0)
    h.apply("send", 0, 0)
    h.apply("recv", 0)
    report = h.finish()
    assert report.violations == []
    assert report.delivered_after_offline == 12


def test_model_detects_a_broken_exchange() -> None:
    class Reordering(LocalExchange):
        def send(self, envelope):  # type: ignore[no-untyped-def]
            box = self._box(envelope.dest)
            with box.cond:
                box.queue.appendleft(envelope)
                box.cond.notify()

    h = ConformanceRun(Reordering())
    for _ in range(3):
        h.apply("send", 0, 0)
    h.apply("recv", 0)
    assert h.report.violations
