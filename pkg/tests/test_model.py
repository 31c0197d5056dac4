import pytest
from hypothesis import given, strategies as st

from xri.model import (
    ClockStamp,
    ClockOverflowError,
    ModelError,
    ObjectSpecError,
    clock_compare,
    normalize_typed_value,
    stamp_next,
    validate_object,
    validate_topic,
)

actors = st.text(
    alphabet=st.characters(min_codepoint=33, max_codepoint=0x2FF),
    min_size=1, max_size=8)
stamps = st.builds(ClockStamp, lamport=st.integers(0, 2**63 - 1), actor=actors)


def test_clock_compare_lamport_dominates():
    assert clock_compare(ClockStamp(3, "A"), ClockStamp(5, "B")) == -1


def test_clock_compare_actor_tiebreak():
    assert clock_compare(ClockStamp(5, "dev1"), ClockStamp(5, "dev2")) == -1


def test_clock_compare_identity():
    assert clock_compare(ClockStamp(7, "x"), ClockStamp(7, "x")) == 0


def test_clock_compare_matches_byte_order():
    # actor order is bytewise over UTF-8, which equals code point order
    a, b = ClockStamp(1, "é"), ClockStamp(1, "z")
    expected = -1 if "é".encode() < "z".encode() else 1
    assert clock_compare(a, b) == expected


@given(stamps, stamps)
def test_clock_compare_antisymmetric(a, b):
    assert clock_compare(a, b) == -clock_compare(b, a)
    if clock_compare(a, b) == 0:
        assert a == b


@given(stamps, stamps, stamps)
def test_clock_compare_transitive(a, b, c):
    if clock_compare(a, b) <= 0 and clock_compare(b, c) <= 0:
        assert clock_compare(a, c) <= 0


@given(st.integers(0, 2**62), st.integers(0, 2**62), actors)
def test_stamp_next_strictly_greater(local, incoming, actor):
    out = stamp_next(local, incoming, actor)
    assert out.lamport == max(local, incoming) + 1
    assert clock_compare(out, ClockStamp(local, actor)) == 1
    assert clock_compare(out, ClockStamp(incoming, actor)) == 1


@pytest.mark.parametrize("local,incoming,actor,expected", [
    (7, 12, "broker", 13),
    (0, 0, "dev1", 1),
    (9, 3, "u1", 10),
])
def test_stamp_next_examples(local, incoming, actor, expected):
    assert stamp_next(local, incoming, actor) == ClockStamp(expected, actor)


def test_stamp_next_overflow_fatal():
    with pytest.raises(ClockOverflowError):
        stamp_next(2**63 - 1, 0, "x")


def test_clockstamp_rejects_bad_fields():
    with pytest.raises(ModelError):
        ClockStamp(-1, "a")
    with pytest.raises(ModelError):
        ClockStamp(0, "")
    with pytest.raises(ModelError):
        ClockStamp(0, "x" * 65)


def test_normalize_typed_value():
    assert normalize_typed_value(3) == 3.0
    assert isinstance(normalize_typed_value(3), float)
    assert normalize_typed_value(True) is True
    with pytest.raises(ModelError):
        normalize_typed_value(float("nan"))
    with pytest.raises(ModelError):
        normalize_typed_value(float("inf"))
    with pytest.raises(ModelError):
        normalize_typed_value("x" * 5000)


def test_validate_topic():
    validate_topic("home/plant1/moisture")
    for bad in ("", "home//x", "Home/x", "home/+/x", "a/#", "home/x ", "x" * 300):
        with pytest.raises(ModelError):
            validate_topic(bad)


def plant_spec(**overrides):
    spec = {
        "object_id": "plant1",
        "class": "hybrid",
        "sync_policy": "bidirectional-lww",
        "schema": {"moisture": "number"},
        "mirror_keys": ["moisture"],
        "initial": {"physical": {"moisture": 0.42}},
    }
    spec.update(overrides)
    return spec


def test_validate_object_hybrid_plant():
    obj = validate_object(plant_spec())
    assert obj.physical_facet["moisture"].value == 0.42
    assert obj.physical_facet["moisture"].clock == ClockStamp(0, "init")
    assert obj.virtual_facet == {}
    assert obj.mirror_keys == frozenset({"moisture"})


def test_validate_object_class_facet_violation():
    spec = {
        "object_id": "door1",
        "class": "physical-only",
        "sync_policy": "decoupled",
        "schema": {"open": "boolean"},
        "initial": {"virtual": {"open": True}},
    }
    with pytest.raises(ObjectSpecError) as exc:
        validate_object(spec)
    assert exc.value.code == "class-facet"
    assert exc.value.object_id == "door1"


def test_validate_object_mirror_not_in_schema():
    spec = {
        "object_id": "lamp1",
        "class": "hybrid",
        "sync_policy": "bidirectional-lww",
        "schema": {"on": "boolean"},
        "mirror_keys": ["brightness"],
    }
    with pytest.raises(ObjectSpecError) as exc:
        validate_object(spec)
    assert exc.value.code == "mirror-not-in-schema"
    assert exc.value.key == "brightness"


def test_validate_object_schema_mismatch_names_key():
    spec = plant_spec(initial={"physical": {"moisture": "wet"}})
    with pytest.raises(ObjectSpecError) as exc:
        validate_object(spec)
    assert exc.value.code == "schema-mismatch"
    assert exc.value.key == "moisture"


def test_validate_object_enum_tokens():
    spec = {
        "object_id": "hvac",
        "class": "hybrid",
        "sync_policy": "bidirectional-lww",
        "schema": {"mode": {"enum": ["heat", "cool", "off"]}},
        "mirror_keys": ["mode"],
        "initial": {"virtual": {"mode": "cool"}},
    }
    obj = validate_object(spec)
    assert obj.virtual_facet["mode"].value == "cool"
    with pytest.raises(ObjectSpecError):
        validate_object({**spec, "initial": {"virtual": {"mode": "defrost"}}})


def test_validate_object_idempotent_on_own_output():
    obj = validate_object(plant_spec())
    again = validate_object(obj)
    assert again is obj
    assert again.physical_facet == obj.physical_facet


def test_validate_object_rejects_mirror_on_non_hybrid():
    spec = {
        "object_id": "cam",
        "class": "virtual-only",
        "sync_policy": "decoupled",
        "schema": {"fps": "number"},
        "mirror_keys": ["fps"],
    }
    with pytest.raises(ObjectSpecError) as exc:
        validate_object(spec)
    assert exc.value.code == "class-facet"
