"""Shared vocabulary: clocks, values, twins, reality modes, context events.

Everything here is a plain value type with no I/O.  The broker, twin-sync
engine, bridge and simulator all speak in these terms.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

MAX_LAMPORT = 2**63 - 1
MAX_ACTOR_BYTES = 64
MAX_STRING_BYTES = 4096
MAX_TOPIC_BYTES = 256

TOPIC_LEVEL_RE = re.compile(r"[a-z0-9_-]+\Z")

ORIGINS = ("physical", "virtual")
CATEGORIES = ("temporal", "application", "device-state", "object-detection", "social")
OBJECT_CLASSES = ("physical-only", "virtual-only", "hybrid")
SYNC_POLICIES = (
    "physical-authoritative",
    "virtual-authoritative",
    "bidirectional-lww",
    "decoupled",
)

# Runtime representation of a typed value: bool, finite float, or str.
# Enum tokens are strings constrained by the owning object's schema.
TypedValue = bool | float | str


class ModelError(ValueError):
    """Invalid domain value (bad clock, value, topic, or object spec)."""


class ClockOverflowError(ModelError):
    """Lamport counter exceeded 2**63 - 1; fatal protocol error."""


class ObjectSpecError(ModelError):
    """Object description violates the twin schema rules."""

    def __init__(self, code: str, object_id: str, key: str | None, detail: str):
        super().__init__(f"{code}: object {object_id!r}"
                         + (f" key {key!r}" if key is not None else "")
                         + f": {detail}")
        self.code = code
        self.object_id = object_id
        self.key = key


class RealityMode(str, Enum):
    """Position on the reality-virtuality spectrum."""

    PHYSICAL = "physical"
    MIXED = "mixed"
    IMMERSIVE = "immersive"


@dataclass(frozen=True, order=False)
class ClockStamp:
    """Lamport counter plus actor id; totally ordered, ties broken by actor bytes."""

    lamport: int
    actor: str

    def __post_init__(self):
        if not (0 <= self.lamport <= MAX_LAMPORT):
            raise ModelError(f"lamport out of range: {self.lamport}")
        if not self.actor:
            raise ModelError("actor must be non-empty")
        if len(self.actor.encode("utf-8")) > MAX_ACTOR_BYTES:
            raise ModelError(f"actor exceeds {MAX_ACTOR_BYTES} bytes")

    def sort_key(self) -> tuple[int, bytes]:
        return (self.lamport, self.actor.encode("utf-8"))


def clock_compare(a: ClockStamp, b: ClockStamp) -> int:
    """Total order on stamps: -1 (less), 0 (equal), +1 (greater)."""
    ka, kb = a.sort_key(), b.sort_key()
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def stamp_next(local_lamport: int, incoming_lamport: int, actor: str) -> ClockStamp:
    """Advance a Lamport clock: max(local, incoming) + 1 under the given actor.

    The caller must persist the returned lamport as its new local counter.
    """
    nxt = max(local_lamport, incoming_lamport) + 1
    if nxt > MAX_LAMPORT:
        raise ClockOverflowError(f"lamport counter overflow: {nxt}")
    return ClockStamp(nxt, actor)


@dataclass(frozen=True)
class VersionedValue:
    """A typed value together with the clock stamp of the write that produced it."""

    value: TypedValue
    clock: ClockStamp


def check_typed_value(v: TypedValue) -> None:
    """Reject values outside the wire-safe domain (non-finite numbers, oversize strings)."""
    if isinstance(v, bool):
        return
    if isinstance(v, (int, float)):
        if not math.isfinite(v):
            raise ModelError(f"number must be finite: {v!r}")
        return
    if isinstance(v, str):
        if len(v.encode("utf-8")) > MAX_STRING_BYTES:
            raise ModelError(f"string exceeds {MAX_STRING_BYTES} bytes")
        return
    raise ModelError(f"unsupported value type: {type(v).__name__}")


def normalize_typed_value(v: TypedValue) -> TypedValue:
    """Canonical runtime form: numbers become 64-bit floats, bools and strs pass through."""
    check_typed_value(v)
    if isinstance(v, bool) or isinstance(v, str):
        return v
    return float(v)


@dataclass(frozen=True)
class ValueKind:
    """Schema slot: 'boolean', 'number', 'string', or an enum over declared tokens."""

    kind: str
    tokens: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.kind not in ("boolean", "number", "string", "enum"):
            raise ModelError(f"unknown value kind: {self.kind!r}")
        if self.kind == "enum" and not self.tokens:
            raise ModelError("enum kind needs at least one token")

    def admits(self, v: TypedValue) -> bool:
        if self.kind == "boolean":
            return isinstance(v, bool)
        if self.kind == "number":
            return isinstance(v, (int, float)) and not isinstance(v, bool)
        if self.kind == "string":
            return isinstance(v, str)
        return isinstance(v, str) and v in self.tokens


def validate_topic(topic: str) -> str:
    """Check a concrete topic: non-empty [a-z0-9_-] levels, no wildcards, <= 256 bytes."""
    if not isinstance(topic, str) or not topic:
        raise ModelError("topic must be a non-empty string")
    if len(topic.encode("utf-8")) > MAX_TOPIC_BYTES:
        raise ModelError(f"topic exceeds {MAX_TOPIC_BYTES} bytes")
    for level in topic.split("/"):
        if not TOPIC_LEVEL_RE.match(level):
            raise ModelError(f"bad topic level {level!r} in {topic!r}")
    return topic


@dataclass(frozen=True)
class ContextEvent:
    """A timestamped, prioritized signal of physical or virtual origin."""

    event_id: str
    origin: str
    category: str
    priority: int
    topic: str
    payload: dict[str, TypedValue]
    sim_time_ms: int
    ttl_ms: int

    def __post_init__(self):
        if not self.event_id:
            raise ModelError("event_id must be non-empty")
        if self.origin not in ORIGINS:
            raise ModelError(f"bad origin: {self.origin!r}")
        if self.category not in CATEGORIES:
            raise ModelError(f"bad category: {self.category!r}")
        if not (1 <= self.priority <= 5) or isinstance(self.priority, bool):
            raise ModelError(f"priority must be 1..5: {self.priority!r}")
        validate_topic(self.topic)
        for k, v in self.payload.items():
            if not isinstance(k, str) or not k:
                raise ModelError("payload keys must be non-empty strings")
            check_typed_value(v)
        if self.sim_time_ms < 0:
            raise ModelError("sim_time_ms must be non-negative")
        if self.ttl_ms <= 0:
            raise ModelError("ttl_ms must be positive")


@dataclass
class HybridObject:
    """A twin with a physical facet and a virtual facet of clocked key/value state.

    Facets are flat key -> VersionedValue maps; per-key clocks make
    last-writer-wins merging and mirror propagation conflict-free.
    ``last_coherent_ms`` records the latest sim time at which all mirror
    keys were observed in agreement (used for staleness reporting).
    """

    object_id: str
    obj_class: str
    sync_policy: str
    schema: dict[str, ValueKind]
    mirror_keys: frozenset[str]
    physical_facet: dict[str, VersionedValue] = field(default_factory=dict)
    virtual_facet: dict[str, VersionedValue] = field(default_factory=dict)
    last_coherent_ms: int = 0

    def facet(self, name: str) -> dict[str, VersionedValue]:
        if name == "physical":
            return self.physical_facet
        if name == "virtual":
            return self.virtual_facet
        raise ModelError(f"unknown facet: {name!r}")


INIT_CLOCK = ClockStamp(0, "init")


def _parse_kind(raw) -> ValueKind:
    if isinstance(raw, str):
        return ValueKind(raw)
    if isinstance(raw, dict) and set(raw) == {"enum"}:
        tokens = raw["enum"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise ModelError("enum tokens must be a list of strings")
        return ValueKind("enum", frozenset(tokens))
    raise ModelError(f"bad value kind spec: {raw!r}")


def validate_object(spec) -> HybridObject:
    """Build a HybridObject from a raw description, enforcing every invariant.

    Accepts either a parsed scenario dict or an existing HybridObject
    (re-validation of a valid object succeeds and changes nothing).
    Initial facet values are stamped with clock (0, "init").
    """
    if isinstance(spec, HybridObject):
        _check_object(spec)
        return spec
    if not isinstance(spec, dict):
        raise ModelError("object spec must be a mapping")

    object_id = spec.get("object_id")
    if not isinstance(object_id, str) or not object_id:
        raise ModelError("object_id must be a non-empty string")
    err = lambda code, key, detail: ObjectSpecError(code, object_id, key, detail)

    if not TOPIC_LEVEL_RE.match(object_id):
        raise err("bad-spec", None, "object_id must be a valid topic level")
    obj_class = spec.get("class")
    if obj_class not in OBJECT_CLASSES:
        raise err("bad-spec", None, f"unknown class {obj_class!r}")
    sync_policy = spec.get("sync_policy", "decoupled")
    if sync_policy not in SYNC_POLICIES:
        raise err("bad-spec", None, f"unknown sync_policy {sync_policy!r}")

    raw_schema = spec.get("schema", {})
    if not isinstance(raw_schema, dict):
        raise err("bad-spec", None, "schema must be a mapping")
    schema: dict[str, ValueKind] = {}
    for key, raw_kind in raw_schema.items():
        if not isinstance(key, str) or not key:
            raise err("bad-spec", None, "schema keys must be non-empty strings")
        try:
            schema[key] = _parse_kind(raw_kind)
        except ModelError as e:
            raise err("schema-mismatch", key, str(e)) from None

    mirror_keys = frozenset(spec.get("mirror_keys", []))
    for key in sorted(mirror_keys):
        if key not in schema:
            raise err("mirror-not-in-schema", key, "mirror key missing from schema")
    if mirror_keys and obj_class != "hybrid":
        raise err("class-facet", None, f"{obj_class} objects may not declare mirror keys")

    initial = spec.get("initial", {})
    if not isinstance(initial, dict) or not set(initial) <= {"physical", "virtual"}:
        raise err("bad-spec", None, "initial must map facet name -> values")
    facets: dict[str, dict[str, VersionedValue]] = {"physical": {}, "virtual": {}}
    for facet_name, values in initial.items():
        if not isinstance(values, dict):
            raise err("bad-spec", None, f"initial {facet_name} must be a mapping")
        if values and obj_class == "physical-only" and facet_name == "virtual":
            raise err("class-facet", next(iter(values)),
                      "physical-only object declares virtual state")
        if values and obj_class == "virtual-only" and facet_name == "physical":
            raise err("class-facet", next(iter(values)),
                      "virtual-only object declares physical state")
        for key, raw_value in values.items():
            if key not in schema:
                raise err("schema-mismatch", key, "key not in schema")
            value = normalize_typed_value(raw_value)
            if not schema[key].admits(value):
                raise err("schema-mismatch", key,
                          f"value {raw_value!r} does not match kind {schema[key].kind}")
            facets[facet_name][key] = VersionedValue(value, INIT_CLOCK)

    obj = HybridObject(
        object_id=object_id,
        obj_class=obj_class,
        sync_policy=sync_policy,
        schema=schema,
        mirror_keys=mirror_keys,
        physical_facet=facets["physical"],
        virtual_facet=facets["virtual"],
    )
    _check_object(obj)
    return obj


def _check_object(obj: HybridObject) -> None:
    err = lambda code, key, detail: ObjectSpecError(code, obj.object_id, key, detail)
    if obj.obj_class not in OBJECT_CLASSES:
        raise err("bad-spec", None, f"unknown class {obj.obj_class!r}")
    if obj.sync_policy not in SYNC_POLICIES:
        raise err("bad-spec", None, f"unknown sync_policy {obj.sync_policy!r}")
    if obj.obj_class == "physical-only" and obj.virtual_facet:
        raise err("class-facet", next(iter(obj.virtual_facet)),
                  "physical-only object holds virtual state")
    if obj.obj_class == "virtual-only" and obj.physical_facet:
        raise err("class-facet", next(iter(obj.physical_facet)),
                  "virtual-only object holds physical state")
    if obj.mirror_keys and obj.obj_class != "hybrid":
        raise err("class-facet", None, "only hybrid objects may have mirror keys")
    for key in sorted(obj.mirror_keys):
        if key not in obj.schema:
            raise err("mirror-not-in-schema", key, "mirror key missing from schema")
    for facet_name in ("physical", "virtual"):
        for key, vv in obj.facet(facet_name).items():
            if key not in obj.schema:
                raise err("schema-mismatch", key, f"{facet_name} key not in schema")
            if not obj.schema[key].admits(vv.value):
                raise err("schema-mismatch", key,
                          f"{facet_name} value {vv.value!r} does not match "
                          f"kind {obj.schema[key].kind}")


def object_spec(obj: HybridObject) -> dict:
    """Canonical dict form of an object's declaration plus current facet values.

    Inverse of validate_object up to the clocks on non-initial values; used
    to embed world declarations in event logs so replay is self-contained.
    """
    def kind_spec(vk: ValueKind):
        return vk.kind if vk.kind != "enum" else {"enum": sorted(vk.tokens)}

    def facet_spec(facet: dict[str, VersionedValue]):
        return {
            k: {"v": facet[k].value,
                "c": {"l": facet[k].clock.lamport, "a": facet[k].clock.actor}}
            for k in sorted(facet)
        }

    return {
        "object_id": obj.object_id,
        "class": obj.obj_class,
        "sync_policy": obj.sync_policy,
        "schema": {k: kind_spec(obj.schema[k]) for k in sorted(obj.schema)},
        "mirror_keys": sorted(obj.mirror_keys),
        "state": {
            "physical": facet_spec(obj.physical_facet),
            "virtual": facet_spec(obj.virtual_facet),
        },
    }


def object_from_spec(spec: dict) -> HybridObject:
    """Rebuild a HybridObject from object_spec() output, clocks included."""
    base = validate_object({
        "object_id": spec["object_id"],
        "class": spec["class"],
        "sync_policy": spec["sync_policy"],
        "schema": spec["schema"],
        "mirror_keys": spec["mirror_keys"],
    })
    for facet_name in ("physical", "virtual"):
        for key, entry in spec.get("state", {}).get(facet_name, {}).items():
            vv = VersionedValue(
                normalize_typed_value(entry["v"]),
                ClockStamp(entry["c"]["l"], entry["c"]["a"]),
            )
            if key not in base.schema or not base.schema[key].admits(vv.value):
                raise ObjectSpecError("schema-mismatch", base.object_id, key,
                                      "state value does not match schema")
            base.facet(facet_name)[key] = vv
    _check_object(base)
    return base
