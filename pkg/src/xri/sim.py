"""Deterministic discrete-event execution of scenarios, plus log replay.

Actors are driven from a priority queue keyed by (time, insertion order);
every actor message passes through the real wire codec and broker
in-process, so a run exercises exactly the code paths a live deployment
does, minus OS nondeterminism.  All randomness comes from one SplitMix64
stream seeded by the scenario, making logs bit-reproducible.

Metrics are a pure function of the log: run() computes them by reading
back its own log records, and replay() does the identical computation on
a log file, so the two agree field for field by construction.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .bridge import RealityMode, awareness_gap, mode_trace
from .broker import Broker, Connection
from .eventlog import EventLog, LogRecord, read_log
from .model import ContextEvent, object_from_spec, validate_object
from .scenario import ActorScript, Scenario, Step
from .twins import divergence, merge_lww, note_coherence
from .wire import (
    Cue,
    Err,
    Hello,
    Pub,
    Set,
    State,
    Sub,
    Transition,
    Welcome,
    decode,
    encode,
)

P_MIN = 2  # priority floor for the awareness-gap metric
MODE_ORDER = (RealityMode.PHYSICAL, RealityMode.MIXED, RealityMode.IMMERSIVE)

_M64 = (1 << 64) - 1


class SplitMix64:
    """Bit-exact SplitMix64; portable across platforms and languages."""

    def __init__(self, seed: int):
        self.state = seed & _M64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _M64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        # 53-bit mantissa draw in [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


class ScenarioRunError(RuntimeError):
    """An actor's scripted step drew a broker error; the run is aborted."""

    def __init__(self, actor_id: str, step: Step | None, err: Err):
        super().__init__(
            f"actor {actor_id!r} step {step} drew broker error "
            f"{err.code}: {err.detail}")
        self.actor_id = actor_id
        self.step = step
        self.err = err


@dataclass(frozen=True)
class MetricsReport:
    """Everything the log supports recomputing; compared field-for-field."""

    awareness_gap: dict[str, dict[str, float]]  # user -> mode -> G
    cue_latency_ms: dict[str, int]  # p50 / p95
    deliveries: dict[str, int]  # presentation -> count
    divergence: dict[str, dict]  # object -> {diverged_keys, staleness_ms}
    total_messages: int

    def to_json(self) -> str:
        doc = {
            "awareness_gap": {
                user: {m.value: self.awareness_gap[user][m.value]
                       for m in MODE_ORDER}
                for user in sorted(self.awareness_gap)
            },
            "cue_latency_ms": {"p50": self.cue_latency_ms["p50"],
                               "p95": self.cue_latency_ms["p95"]},
            "deliveries": {"full": self.deliveries["full"],
                           "summary": self.deliveries["summary"]},
            "divergence": {
                oid: {"diverged_keys": self.divergence[oid]["diverged_keys"],
                      "staleness_ms": self.divergence[oid]["staleness_ms"]}
                for oid in sorted(self.divergence)
            },
            "total_messages": self.total_messages,
        }
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


@dataclass
class RunResult:
    scenario: Scenario
    log: EventLog
    metrics: MetricsReport


class _SimClock:
    def __init__(self):
        self.now_ms = 0

    def now(self) -> int:
        return self.now_ms


class _SimActor:
    """Scripted client: encodes steps onto the wire, watches its inbox."""

    def __init__(self, script: ActorScript, broker: Broker, rng: SplitMix64,
                 clock: _SimClock):
        self.script = script
        self.broker = broker
        self.rng = rng
        self.clock = clock
        self.lamport = 0
        self.event_seq = 0
        self.walk_state: dict[tuple[str, str, str], float] = {}
        self.current_step: Step | None = None
        self.conn: Connection = broker.open_connection(self._receive)

    def connect(self) -> None:
        role = "user" if self.script.role == "user" else "device"
        self._send(Hello(self.script.actor_id, role, 1))

    def _send(self, msg) -> None:
        self.broker.handle_line(self.conn, encode(msg))

    def _receive(self, line: bytes) -> None:
        msg = decode(line)
        if isinstance(msg, Err):
            raise ScenarioRunError(self.script.actor_id, self.current_step, msg)
        if isinstance(msg, Welcome):
            self.lamport = max(self.lamport, msg.server_lamport)
        elif isinstance(msg, State):
            for vv in msg.entries.values():
                self.lamport = max(self.lamport, vv.clock.lamport)

    def execute(self, step: Step) -> None:
        self.current_step = step
        if step.op == "subscribe":
            self._send(Sub(step.filter))
        elif step.op == "publish":
            event = ContextEvent(
                event_id=f"{self.script.actor_id}.{self.event_seq}",
                origin=step.origin,
                category=step.category,
                priority=step.priority,
                topic=step.topic,
                payload=dict(step.payload),
                sim_time_ms=self.clock.now(),
                ttl_ms=step.ttl_ms,
            )
            self.event_seq += 1
            self._send(Pub(step.topic, event))
        elif step.op == "set":
            value = self._set_value(step)
            self._send(Set(step.object_id, step.facet, step.key, value,
                           self.lamport))
        elif step.op == "transition":
            self._send(Transition(self.script.actor_id, step.target_mode))
        else:  # pragma: no cover - parser admits no other ops
            raise ScenarioRunError(self.script.actor_id, step,
                                   Err("protocol", f"bad op {step.op}"))
        self.current_step = None

    def _set_value(self, step: Step):
        slot = (step.object_id, step.facet, step.key)
        if step.walk is None:
            if isinstance(step.value, float):
                self.walk_state[slot] = step.value
            return step.value
        walk = step.walk
        cur = self.walk_state.get(slot, walk.start)
        delta = (self.rng.next_float() * 2.0 - 1.0) * walk.step
        cur = min(max(cur + delta, walk.lo), walk.hi)
        self.walk_state[slot] = cur
        return cur


def run(scenario: Scenario, delivery_hook=None) -> RunResult:
    """Execute a scenario to completion; bit-identical for a fixed seed.

    delivery_hook, when given, observes every (session, message) delivery;
    it exists for tests and never affects the run.
    """
    clock = _SimClock()
    log = EventLog()
    broker = Broker(clock=clock.now, event_log=log, policy=scenario.policy(),
                    delivery_hook=delivery_hook)
    for spec in scenario.objects:
        broker.add_object(validate_object(spec))
    broker.announce_world(scenario.name, scenario.seed, scenario.duration_ms)

    rng = SplitMix64(scenario.seed)
    actors = [_SimActor(script, broker, rng, clock) for script in scenario.actors]
    for actor in actors:
        actor.connect()

    heap: list[tuple[int, int, _SimActor, Step]] = []
    insertion = 0
    for actor in actors:
        for step in actor.script.steps:
            for t in step.occurrences(scenario.duration_ms):
                heapq.heappush(heap, (t, insertion, actor, step))
                insertion += 1
    while heap:
        t, _, actor, step = heapq.heappop(heap)
        clock.now_ms = t
        actor.execute(step)
    clock.now_ms = scenario.duration_ms

    return RunResult(scenario, log, compute_metrics(log.records))


def _percentile(sorted_values: list[int], q: float) -> int:
    # nearest-rank: value at ceil(q * n), 1-indexed
    if not sorted_values:
        return 0
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def compute_metrics(records: list[LogRecord]) -> MetricsReport:
    """Pure function of a log: world rebuild + awareness, delivery, divergence."""
    objects = {}
    duration_ms = records[-1].ts_ms if records else 0
    latencies: list[int] = []
    deliveries = {"full": 0, "summary": 0}

    for rec in records:
        msg = rec.msg
        if isinstance(msg, Pub):
            if msg.topic == "meta/run":
                raw = msg.event.payload.get("duration_ms")
                if isinstance(raw, float):
                    duration_ms = int(raw)
            elif msg.topic.startswith("meta/object/"):
                spec = json.loads(msg.event.payload["spec"])
                obj = object_from_spec(spec)
                objects[obj.object_id] = obj
        elif isinstance(msg, State):
            obj = objects.get(msg.object_id)
            if obj is None:
                continue
            facet = obj.facet(msg.facet)
            changed_any = False
            for key in sorted(msg.entries):
                kept, changed = merge_lww(facet.get(key), msg.entries[key])
                if changed:
                    facet[key] = kept
                    changed_any = True
            if changed_any:
                note_coherence(obj, rec.ts_ms)
        elif isinstance(msg, Cue):
            deliveries[msg.presentation] += 1
            latencies.append(rec.ts_ms - msg.event.sim_time_ms)

    users = sorted(mode_trace(records))
    gaps = {
        user: {mode.value: awareness_gap(records, user, mode, P_MIN)
               for mode in MODE_ORDER}
        for user in users
    }
    latencies.sort()
    reports = {}
    for oid in sorted(objects):
        rep = divergence(objects[oid], duration_ms)
        reports[oid] = {"diverged_keys": sorted(rep.diverged_keys),
                        "staleness_ms": rep.staleness_ms}
    return MetricsReport(
        awareness_gap=gaps,
        cue_latency_ms={"p50": _percentile(latencies, 0.50),
                        "p95": _percentile(latencies, 0.95)},
        deliveries=deliveries,
        divergence=reports,
        total_messages=len(records),
    )


def replay(log_path: str | Path) -> MetricsReport:
    """Recompute the metrics report from a log file alone."""
    return compute_metrics(read_log(log_path))


def final_twin_states(records: list[LogRecord]) -> dict[str, dict]:
    """Final object facets reconstructed from a log (for inspection)."""
    out: dict[str, dict] = {}
    objects = {}
    for rec in records:
        msg = rec.msg
        if isinstance(msg, Pub) and msg.topic.startswith("meta/object/"):
            obj = object_from_spec(json.loads(msg.event.payload["spec"]))
            objects[obj.object_id] = obj
        elif isinstance(msg, State) and msg.object_id in objects:
            facet = objects[msg.object_id].facet(msg.facet)
            for key in sorted(msg.entries):
                kept, _ = merge_lww(facet.get(key), msg.entries[key])
                facet[key] = kept
    for oid in sorted(objects):
        obj = objects[oid]
        out[oid] = {
            facet_name: {
                k: {"value": vv.value,
                    "clock": {"l": vv.clock.lamport, "a": vv.clock.actor}}
                for k, vv in sorted(obj.facet(facet_name).items())
            }
            for facet_name in ("physical", "virtual")
        }
    return out
