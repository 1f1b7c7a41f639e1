from __future__ import annotations

import logging
from typing import Callable, Iterator

import pytest

from agentry.exchange.dist import DistExchange
from agentry.exchange.local import LocalExchange
from agentry.relay.server import RelayServer


@pytest.fixture(autouse=True)
def _quiet_logs(caplog: pytest.LogCaptureFixture) -> None:
    caplog.set_level(logging.WARNING)


@pytest.fixture
def relay() -> Iterator[RelayServer]:
    with RelayServer() as server:
        yield server


@pytest.fixture
def store_endpoint(relay: RelayServer) -> str:
    return "%s:%d" % relay.address


@pytest.fixture
def local_exchange() -> LocalExchange:
    return LocalExchange()


@pytest.fixture
def dist_factory(store_endpoint: str) -> Iterator[Callable[..., DistExchange]]:
    made: list[DistExchange] = []

    def make(**kwargs: object) -> DistExchange:
        ex = DistExchange(store_endpoint, **kwargs)  # type: ignore[arg-type]
        made.append(ex)
        return ex

    yield make
    for ex in made:
        ex.shutdown()


@pytest.fixture(params=["local", "dist-direct", "dist-relay"])
def any_exchange(request: pytest.FixtureRequest, dist_factory: Callable[..., DistExchange]) -> object:
    if request.param == "local":
        return LocalExchange()
    return dist_factory(force_relay=request.param == "dist-relay")
