import uuid

import pytest
from hypothesis import given, strategies as st

from agentry.ids import EntityId, Role


@given(st.uuids(), st.sampled_from(list(Role)))
def test_text_round_trip(uid: uuid.UUID, role: Role) -> None:
    e = EntityId(uid, role)
    text = str(e)
    assert text == ("a:" if role is Role.AGENT else "c:") + uid.hex
    assert EntityId.parse(text) == e


@given(st.uuids(), st.sampled_from(list(Role)))
def test_bytes_round_trip(uid: uuid.UUID, role: Role) -> None:
    e = EntityId(uid, role)
    raw = e.to_bytes()
    assert raw == uid.bytes + bytes([int(role)])
    assert EntityId.from_bytes(raw) == e


@pytest.mark.parametrize("bad", ["", "x:" + "0" * 32, "a:" + "0" * 31, "a:" + "g" * 32, "a" + "0" * 32])
def test_parse_rejects(bad: str) -> None:
    with pytest.raises(ValueError):
        EntityId.parse(bad)


def test_new_ids_are_distinct_and_ordered() -> None:
    ids = {EntityId.new(Role.AGENT) for _ in range(1000)}
    assert len(ids) == 1000
    assert all(e.is_agent for e in ids)
    ordered = sorted(ids)
    assert [e.uid.hex for e in ordered] == sorted(e.uid.hex for e in ids)
    assert not EntityId.new(Role.CLIENT).is_agent
