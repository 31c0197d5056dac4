"""Declarative scripted worlds: scenario files, validation, built-in fixtures.

A scenario is plain JSON with top-level keys name, seed, duration_ms,
objects, actors, policy_overrides.  Actor steps carry an absolute at_ms
(their first occurrence) and may repeat with every_ms/until_ms; wait steps
push the schedule cursor forward for the steps after them.  Validation is
eager and names the offending entry by path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .bridge import NEVER, CuePolicy, Rule, default_policy
from .model import (
    CATEGORIES,
    ORIGINS,
    ModelError,
    RealityMode,
    TypedValue,
    normalize_typed_value,
    validate_object,
    validate_topic,
)
from .wire import FilterError, validate_filter

MAX_SEED = 2**64 - 1


class ScenarioError(ValueError):
    """Bad scenario file; message carries the path to the offending entry."""

    def __init__(self, path: str, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = path


@dataclass(frozen=True)
class RandomWalk:
    """Per-actor random walk spec for set steps: clamped additive steps."""

    start: float
    step: float
    lo: float
    hi: float


@dataclass(frozen=True)
class Step:
    """One scheduled actor action, expanded to concrete occurrence times."""

    op: str  # "subscribe" | "publish" | "set" | "transition"
    at_ms: int
    every_ms: int | None = None
    until_ms: int | None = None
    # subscribe
    filter: str | None = None
    # publish
    topic: str | None = None
    origin: str | None = None
    category: str | None = None
    priority: int | None = None
    ttl_ms: int | None = None
    payload: tuple[tuple[str, TypedValue], ...] = ()
    # set
    object_id: str | None = None
    facet: str | None = None
    key: str | None = None
    value: TypedValue | None = None
    walk: RandomWalk | None = None
    # transition
    target_mode: RealityMode | None = None

    def occurrences(self, duration_ms: int) -> list[int]:
        if self.every_ms is None:
            return [self.at_ms]
        stop = self.until_ms if self.until_ms is not None else duration_ms
        return list(range(self.at_ms, stop + 1, self.every_ms))


@dataclass(frozen=True)
class ActorScript:
    actor_id: str
    role: str  # "device" | "user"
    steps: tuple[Step, ...]


@dataclass(frozen=True)
class PolicyOverride:
    mode: str  # mode value or "*"
    origin: str
    category: str
    full_at: int
    summary_at: int


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_ms: int
    objects: tuple[dict, ...] = ()  # canonical raw specs; validated eagerly
    actors: tuple[ActorScript, ...] = ()
    policy_overrides: tuple[PolicyOverride, ...] = ()

    def policy(self) -> CuePolicy:
        return apply_overrides(default_policy(), self.policy_overrides)

    def count_steps(self, op: str) -> int:
        """Occurrence count of an op across all actors (post-expansion)."""
        return sum(len(step.occurrences(self.duration_ms))
                   for actor in self.actors for step in actor.steps
                   if step.op == op)


def apply_overrides(policy: CuePolicy,
                    overrides: tuple[PolicyOverride, ...]) -> CuePolicy:
    rules = dict(policy.rules)
    for ov in overrides:
        modes = [RealityMode(ov.mode)] if ov.mode != "*" else list(RealityMode)
        origins = [ov.origin] if ov.origin != "*" else list(ORIGINS)
        categories = [ov.category] if ov.category != "*" else list(CATEGORIES)
        for mode in modes:
            for origin in origins:
                for category in categories:
                    rules[(mode, origin, category)] = Rule(ov.full_at, ov.summary_at)
    return CuePolicy(rules)


# --- parsing ---------------------------------------------------------------

def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ScenarioError(path, f"missing key {key!r}")
    return obj[key]


def _int_at(obj, key, path, lo=0, hi=None) -> int:
    v = _need(obj, key, path)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"{path}.{key}", "expected an integer")
    if v < lo or (hi is not None and v > hi):
        raise ScenarioError(f"{path}.{key}", f"out of range [{lo}, {hi}]")
    return v


def _str_at(obj, key, path) -> str:
    v = _need(obj, key, path)
    if not isinstance(v, str) or not v:
        raise ScenarioError(f"{path}.{key}", "expected a non-empty string")
    return v


def _parse_walk(raw: dict, path: str) -> RandomWalk:
    extra = set(raw) - {"start", "step", "min", "max"}
    if extra:
        raise ScenarioError(path, f"unknown random_walk keys {sorted(extra)}")
    def num(key):
        v = _need(raw, key, path)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{path}.{key}", "expected a number")
        return float(v)
    walk = RandomWalk(num("start"), num("step"), num("min"), num("max"))
    if walk.lo > walk.hi:
        raise ScenarioError(path, "min must be <= max")
    if walk.step < 0:
        raise ScenarioError(path, "step must be non-negative")
    return walk


def _parse_payload(raw, path: str) -> tuple[tuple[str, TypedValue], ...]:
    if not isinstance(raw, dict):
        raise ScenarioError(path, "payload must be a mapping")
    out = []
    for k in sorted(raw):
        if not isinstance(k, str) or not k:
            raise ScenarioError(path, "payload keys must be non-empty strings")
        try:
            out.append((k, normalize_typed_value(raw[k])))
        except ModelError as e:
            raise ScenarioError(f"{path}.{k}", str(e)) from None
    return tuple(out)


_STEP_KEYS = {
    "subscribe": {"filter"},
    "publish": {"topic", "event"},
    "set": {"object_id", "facet", "key", "value"},
    "transition": {"target_mode"},
    "wait": {"ms"},
}
_COMMON_KEYS = {"op", "at_ms", "every_ms", "until_ms"}


def _parse_step(raw: dict, cursor: int, role: str, path: str) -> tuple[Step | None, int]:
    """Returns (step or None for waits, new schedule cursor)."""
    if not isinstance(raw, dict):
        raise ScenarioError(path, "step must be a mapping")
    op = _str_at(raw, "op", path)
    if op not in _STEP_KEYS:
        raise ScenarioError(f"{path}.op", f"unknown op {op!r}")
    extra = set(raw) - _COMMON_KEYS - _STEP_KEYS[op]
    if extra:
        raise ScenarioError(path, f"unknown keys {sorted(extra)} for op {op!r}")

    if op == "wait":
        if set(raw) & {"at_ms", "every_ms", "until_ms"}:
            raise ScenarioError(path, "wait takes only ms")
        ms = _int_at(raw, "ms", path, lo=0)
        return None, cursor + ms

    at_ms = _int_at(raw, "at_ms", path, lo=0) if "at_ms" in raw else cursor
    if at_ms < cursor:
        raise ScenarioError(f"{path}.at_ms",
                            f"step times must be non-decreasing "
                            f"({at_ms} < cursor {cursor})")
    every_ms = None
    until_ms = None
    if "every_ms" in raw:
        every_ms = _int_at(raw, "every_ms", path, lo=1)
        if "until_ms" in raw:
            until_ms = _int_at(raw, "until_ms", path, lo=at_ms)
    elif "until_ms" in raw:
        raise ScenarioError(path, "until_ms requires every_ms")

    kwargs = {"op": op, "at_ms": at_ms, "every_ms": every_ms, "until_ms": until_ms}
    if op == "subscribe":
        flt = _str_at(raw, "filter", path)
        try:
            validate_filter(flt)
        except FilterError as e:
            raise ScenarioError(f"{path}.filter", str(e)) from None
        kwargs["filter"] = flt
    elif op == "publish":
        topic = _str_at(raw, "topic", path)
        try:
            validate_topic(topic)
        except ModelError as e:
            raise ScenarioError(f"{path}.topic", str(e)) from None
        event = _need(raw, "event", path)
        if not isinstance(event, dict):
            raise ScenarioError(f"{path}.event", "expected a mapping")
        extra = set(event) - {"origin", "category", "priority", "ttl_ms", "payload"}
        if extra:
            raise ScenarioError(f"{path}.event", f"unknown keys {sorted(extra)}")
        origin = _str_at(event, "origin", f"{path}.event")
        if origin not in ORIGINS:
            raise ScenarioError(f"{path}.event.origin", f"expected one of {ORIGINS}")
        category = _str_at(event, "category", f"{path}.event")
        if category not in CATEGORIES:
            raise ScenarioError(f"{path}.event.category",
                                f"expected one of {CATEGORIES}")
        kwargs.update(
            topic=topic, origin=origin, category=category,
            priority=_int_at(event, "priority", f"{path}.event", lo=1, hi=5),
            ttl_ms=_int_at(event, "ttl_ms", f"{path}.event", lo=1),
            payload=_parse_payload(event.get("payload", {}), f"{path}.event.payload"),
        )
    elif op == "set":
        value = _need(raw, "value", path)
        if isinstance(value, dict):
            if set(value) != {"random_walk"}:
                raise ScenarioError(f"{path}.value",
                                    "expected a scalar or {'random_walk': ...}")
            kwargs["walk"] = _parse_walk(value["random_walk"],
                                         f"{path}.value.random_walk")
        else:
            try:
                kwargs["value"] = normalize_typed_value(value)
            except ModelError as e:
                raise ScenarioError(f"{path}.value", str(e)) from None
        kwargs.update(
            object_id=_str_at(raw, "object_id", path),
            facet=_str_at(raw, "facet", path),
            key=_str_at(raw, "key", path),
        )
        if kwargs["facet"] not in ("physical", "virtual"):
            raise ScenarioError(f"{path}.facet", "expected physical or virtual")
    elif op == "transition":
        if role == "device":
            raise ScenarioError(path, "devices cannot transition")
        mode = _str_at(raw, "target_mode", path)
        try:
            kwargs["target_mode"] = RealityMode(mode)
        except ValueError:
            raise ScenarioError(f"{path}.target_mode",
                                f"unknown mode {mode!r}") from None
    return Step(**kwargs), at_ms


def _parse_actor(raw: dict, path: str) -> ActorScript:
    if not isinstance(raw, dict):
        raise ScenarioError(path, "actor must be a mapping")
    extra = set(raw) - {"actor_id", "role", "steps"}
    if extra:
        raise ScenarioError(path, f"unknown keys {sorted(extra)}")
    actor_id = _str_at(raw, "actor_id", path)
    role = _str_at(raw, "role", path)
    if role not in ("device", "user"):
        raise ScenarioError(f"{path}.role", "expected device or user")
    raw_steps = _need(raw, "steps", path)
    if not isinstance(raw_steps, list):
        raise ScenarioError(f"{path}.steps", "expected a list")
    steps = []
    cursor = 0
    for i, raw_step in enumerate(raw_steps):
        step, cursor = _parse_step(raw_step, cursor, role, f"{path}.steps[{i}]")
        if step is not None:
            steps.append(step)
    return ActorScript(actor_id, role, tuple(steps))


def _parse_override(raw: dict, path: str) -> PolicyOverride:
    if not isinstance(raw, dict):
        raise ScenarioError(path, "override must be a mapping")
    extra = set(raw) - {"mode", "origin", "category", "full_at", "summary_at"}
    if extra:
        raise ScenarioError(path, f"unknown keys {sorted(extra)}")
    mode = _str_at(raw, "mode", path)
    if mode != "*" and mode not in [m.value for m in RealityMode]:
        raise ScenarioError(f"{path}.mode", f"unknown mode {mode!r}")
    origin = _str_at(raw, "origin", path)
    if origin != "*" and origin not in ORIGINS:
        raise ScenarioError(f"{path}.origin", f"unknown origin {origin!r}")
    category = _str_at(raw, "category", path)
    if category != "*" and category not in CATEGORIES:
        raise ScenarioError(f"{path}.category", f"unknown category {category!r}")
    full_at = _int_at(raw, "full_at", path, lo=1, hi=NEVER)
    summary_at = _int_at(raw, "summary_at", path, lo=1, hi=NEVER)
    if summary_at > full_at:
        raise ScenarioError(path, "summary_at must be <= full_at")
    return PolicyOverride(mode, origin, category, full_at, summary_at)


def scenario_from_dict(raw: dict, source: str = "scenario") -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError(source, "top level must be an object")
    extra = set(raw) - {"name", "seed", "duration_ms", "objects", "actors",
                        "policy_overrides"}
    if extra:
        raise ScenarioError(source, f"unknown keys {sorted(extra)}")
    name = _str_at(raw, "name", source)
    seed = _int_at(raw, "seed", source, lo=0, hi=MAX_SEED)
    duration = _int_at(raw, "duration_ms", source, lo=1)

    raw_objects = raw.get("objects", [])
    if not isinstance(raw_objects, list):
        raise ScenarioError(f"{source}.objects", "expected a list")
    object_ids = set()
    for i, spec in enumerate(raw_objects):
        try:
            obj = validate_object(spec)
        except ModelError as e:
            raise ScenarioError(f"{source}.objects[{i}]", str(e)) from None
        if obj.object_id in object_ids:
            raise ScenarioError(f"{source}.objects[{i}]",
                                f"duplicate object_id {obj.object_id!r}")
        object_ids.add(obj.object_id)

    raw_actors = raw.get("actors", [])
    if not isinstance(raw_actors, list):
        raise ScenarioError(f"{source}.actors", "expected a list")
    actors = []
    actor_ids = set()
    for i, raw_actor in enumerate(raw_actors):
        actor = _parse_actor(raw_actor, f"{source}.actors[{i}]")
        if actor.actor_id in actor_ids:
            raise ScenarioError(f"{source}.actors[{i}]",
                                f"duplicate actor_id {actor.actor_id!r}")
        actor_ids.add(actor.actor_id)
        for j, step in enumerate(actor.steps):
            if step.op == "set" and step.object_id not in object_ids:
                raise ScenarioError(
                    f"{source}.actors[{i}].steps[{j}]",
                    f"set references undeclared object {step.object_id!r}")
        actors.append(actor)

    raw_overrides = raw.get("policy_overrides", [])
    if not isinstance(raw_overrides, list):
        raise ScenarioError(f"{source}.policy_overrides", "expected a list")
    overrides = tuple(
        _parse_override(ov, f"{source}.policy_overrides[{i}]")
        for i, ov in enumerate(raw_overrides))

    return Scenario(
        name=name,
        seed=seed,
        duration_ms=duration,
        objects=tuple(raw_objects),
        actors=tuple(actors),
        policy_overrides=overrides,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(str(path), f"cannot read scenario: {e}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(str(path),
                            f"parse error at line {e.lineno}: {e.msg}") from None
    return scenario_from_dict(raw, source=str(path))


# --- built-in fixtures -----------------------------------------------------

def metaplant_dict() -> dict:
    """Plant twin with a moisture sensor, a clock feed, and an app feed.

    One user goes physical -> mixed (t=1s) -> immersive (t=10s) and stays,
    while the sensor random-walks soil moisture every 5 s with a scripted
    dry-out to 0.18 at t=60 s, the clock ticks every 30 s, and three
    foreground-app changes arrive at scripted times.
    """
    return {
        "name": "metaplant",
        "seed": 42,
        "duration_ms": 180_000,
        "objects": [
            {
                "object_id": "plant1",
                "class": "hybrid",
                "sync_policy": "bidirectional-lww",
                "schema": {"moisture": "number"},
                "mirror_keys": ["moisture"],
                "initial": {"physical": {"moisture": 0.42}},
            }
        ],
        "actors": [
            {
                "actor_id": "moisture-sensor",
                "role": "device",
                "steps": [
                    {"op": "set", "at_ms": 5000, "every_ms": 5000,
                     "until_ms": 55_000, "object_id": "plant1",
                     "facet": "physical", "key": "moisture",
                     "value": {"random_walk": {"start": 0.42, "step": 0.03,
                                               "min": 0.05, "max": 0.95}}},
                    {"op": "set", "at_ms": 60_000, "object_id": "plant1",
                     "facet": "physical", "key": "moisture", "value": 0.18},
                    {"op": "set", "at_ms": 65_000, "every_ms": 5000,
                     "until_ms": 180_000, "object_id": "plant1",
                     "facet": "physical", "key": "moisture",
                     "value": {"random_walk": {"start": 0.18, "step": 0.03,
                                               "min": 0.05, "max": 0.95}}},
                ],
            },
            {
                "actor_id": "clock",
                "role": "device",
                "steps": [
                    {"op": "publish", "at_ms": 30_000, "every_ms": 30_000,
                     "until_ms": 180_000, "topic": "env/clock",
                     "event": {"origin": "physical", "category": "temporal",
                               "priority": 2, "ttl_ms": 30_000, "payload": {}}},
                ],
            },
            {
                "actor_id": "apps",
                "role": "device",
                "steps": [
                    {"op": "publish", "at_ms": 20_000, "topic": "apps/foreground",
                     "event": {"origin": "physical", "category": "application",
                               "priority": 2, "ttl_ms": 60_000,
                               "payload": {"app": "studio"}}},
                    {"op": "publish", "at_ms": 90_000, "topic": "apps/foreground",
                     "event": {"origin": "physical", "category": "application",
                               "priority": 2, "ttl_ms": 60_000,
                               "payload": {"app": "mail"}}},
                    {"op": "publish", "at_ms": 150_000, "topic": "apps/foreground",
                     "event": {"origin": "physical", "category": "application",
                               "priority": 2, "ttl_ms": 60_000,
                               "payload": {"app": "editor"}}},
                ],
            },
            {
                "actor_id": "u1",
                "role": "user",
                "steps": [
                    {"op": "subscribe", "at_ms": 0, "filter": "#"},
                    {"op": "transition", "at_ms": 1000, "target_mode": "mixed"},
                    {"op": "transition", "at_ms": 10_000,
                     "target_mode": "immersive"},
                ],
            },
        ],
        "policy_overrides": [],
    }


def rv_traveller_dict() -> dict:
    """Traveller crossing the spectrum with a detector feed and a shared lamp.

    The detector publishes ambient low-priority sightings every 10 s plus a
    priority-5 person at t=45 s and a priority-4 obstacle at t=75 s.  The
    lamp is toggled from both facets at t=100 s to exercise last-writer-wins
    (the user's virtual write lands second and wins).  The user only follows
    the environment feed and twin state, so twin device chatter is the
    awareness gap they carry while immersed.
    """
    return {
        "name": "rv_traveller",
        "seed": 7,
        "duration_ms": 180_000,
        "objects": [
            {
                "object_id": "room-lamp",
                "class": "hybrid",
                "sync_policy": "bidirectional-lww",
                "schema": {"on": "boolean"},
                "mirror_keys": ["on"],
                "initial": {"physical": {"on": False}},
            }
        ],
        "actors": [
            {
                "actor_id": "detector",
                "role": "device",
                "steps": [
                    {"op": "publish", "at_ms": 10_000, "every_ms": 10_000,
                     "until_ms": 180_000, "topic": "env/detect/ambient",
                     "event": {"origin": "physical",
                               "category": "object-detection", "priority": 1,
                               "ttl_ms": 15_000,
                               "payload": {"label": "ambient"}}},
                    {"op": "publish", "at_ms": 45_000, "topic": "env/detect/person",
                     "event": {"origin": "physical",
                               "category": "object-detection", "priority": 5,
                               "ttl_ms": 60_000,
                               "payload": {"label": "person"}}},
                    {"op": "publish", "at_ms": 75_000,
                     "topic": "env/detect/obstacle",
                     "event": {"origin": "physical",
                               "category": "object-detection", "priority": 4,
                               "ttl_ms": 60_000,
                               "payload": {"label": "obstacle"}}},
                ],
            },
            {
                "actor_id": "deva",
                "role": "device",
                "steps": [
                    {"op": "set", "at_ms": 100_000, "object_id": "room-lamp",
                     "facet": "physical", "key": "on", "value": True},
                ],
            },
            {
                "actor_id": "u1",
                "role": "user",
                "steps": [
                    {"op": "subscribe", "at_ms": 0, "filter": "env/#"},
                    {"op": "subscribe", "at_ms": 0, "filter": "state/#"},
                    {"op": "transition", "at_ms": 5000, "target_mode": "mixed"},
                    {"op": "transition", "at_ms": 20_000,
                     "target_mode": "immersive"},
                    {"op": "set", "at_ms": 100_000, "object_id": "room-lamp",
                     "facet": "virtual", "key": "on", "value": False},
                    {"op": "transition", "at_ms": 120_000, "target_mode": "mixed"},
                ],
            },
        ],
        "policy_overrides": [],
    }


def builtin_metaplant() -> Scenario:
    return scenario_from_dict(metaplant_dict(), source="builtin:metaplant")


def builtin_rv_traveller() -> Scenario:
    return scenario_from_dict(rv_traveller_dict(), source="builtin:rv_traveller")
