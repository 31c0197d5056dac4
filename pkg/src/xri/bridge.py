"""Reality-spectrum bridge: per-user mode FSM, cue policy, awareness gap.

The bridge decides what crosses between the physical and virtual sides of
a user's attention.  Mode transitions walk the spectrum one step at a time
(mixed reality is the mandatory waypoint between fully physical and fully
immersive), and every event bound for a user is mediated into a full cue,
a one-line summary, or silence, by a threshold table over
(mode, origin, category).

The awareness gap G for a user and mode is the fraction of relevant
physical-origin events (priority >= p_min while the user was in that mode)
that never reached the user as a cue within the event's ttl.  G = 0 when
nothing was relevant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .eventlog import LogRecord
from .model import CATEGORIES, ORIGINS, ContextEvent, RealityMode
from .wire import Cue, Hello, Pub, TransitionOk, Welcome

NEVER = 6  # threshold value meaning "no priority reaches this presentation"
MAX_SUMMARY_BYTES = 140

PolicyKey = tuple[RealityMode, str, str]  # (mode, origin, category)


class TransitionError(ValueError):
    """Illegal edge on the reality-spectrum graph."""

    def __init__(self, current: RealityMode, target: RealityMode):
        super().__init__(f"illegal-edge: {current.value} -> {target.value} "
                         f"(must pass through mixed)")
        self.code = "illegal-edge"


class UnknownUserError(KeyError):
    def __init__(self, user_id: str):
        super().__init__(f"unknown user {user_id!r}")
        self.user_id = user_id


@dataclass(frozen=True)
class Rule:
    """Priority thresholds for one policy cell; 6 means never."""

    full_at: int
    summary_at: int

    def __post_init__(self):
        if not (1 <= self.summary_at <= NEVER and 1 <= self.full_at <= NEVER):
            raise ValueError(f"thresholds must be 1..{NEVER}: {self}")
        if self.summary_at > self.full_at:
            raise ValueError(f"summary_at must be <= full_at: {self}")


SUPPRESS = Rule(full_at=NEVER, summary_at=NEVER)


@dataclass(frozen=True)
class CuePolicy:
    """Total map (mode, origin, category) -> Rule; unmatched cells suppress."""

    rules: dict[PolicyKey, Rule]

    def rule(self, mode: RealityMode, origin: str, category: str) -> Rule:
        return self.rules.get((mode, origin, category), SUPPRESS)

    def with_rule(self, mode: RealityMode, origin: str, category: str,
                  rule: Rule) -> "CuePolicy":
        rules = dict(self.rules)
        rules[(mode, origin, category)] = rule
        return CuePolicy(rules)


def _fill(rules: dict, mode: RealityMode, origin: str, rule: Rule) -> None:
    for category in CATEGORIES:
        rules[(mode, origin, category)] = rule


def default_policy() -> CuePolicy:
    """The shipping defaults.

    Immersive users get physical-origin events as full cues from priority 4
    and summaries from 2; virtual-origin events are native to them.  Mixed
    users straddle both sides, so everything is full.  Physical users
    perceive the real world themselves: physical events are suppressed and
    only mid-priority virtual events surface as summaries.
    """
    rules: dict[PolicyKey, Rule] = {}
    _fill(rules, RealityMode.IMMERSIVE, "physical", Rule(full_at=4, summary_at=2))
    _fill(rules, RealityMode.IMMERSIVE, "virtual", Rule(full_at=1, summary_at=1))
    _fill(rules, RealityMode.MIXED, "physical", Rule(full_at=1, summary_at=1))
    _fill(rules, RealityMode.MIXED, "virtual", Rule(full_at=1, summary_at=1))
    _fill(rules, RealityMode.PHYSICAL, "virtual", Rule(full_at=NEVER, summary_at=3))
    _fill(rules, RealityMode.PHYSICAL, "physical", SUPPRESS)
    return CuePolicy(rules)


def all_suppress_policy() -> CuePolicy:
    """Bridge disabled: every cell suppresses (the disconnect baseline)."""
    rules: dict[PolicyKey, Rule] = {}
    for mode in RealityMode:
        for origin in ORIGINS:
            _fill(rules, mode, origin, SUPPRESS)
    return CuePolicy(rules)


@dataclass
class UserPresence:
    """A user's position on the spectrum plus their cue accounting."""

    user_id: str
    mode: RealityMode = RealityMode.PHYSICAL
    since_ms: int = 0
    policy: CuePolicy = field(default_factory=default_policy)
    delivered: dict[tuple[str, str], int] = field(default_factory=dict)

    def count_delivery(self, origin: str, presentation: str) -> None:
        key = (origin, presentation)
        self.delivered[key] = self.delivered.get(key, 0) + 1


@dataclass(frozen=True)
class CueDecision:
    kind: str  # "full" | "summary" | "suppressed"
    summary_text: str | None = None


_EDGES = {
    (RealityMode.PHYSICAL, RealityMode.MIXED),
    (RealityMode.MIXED, RealityMode.PHYSICAL),
    (RealityMode.MIXED, RealityMode.IMMERSIVE),
    (RealityMode.IMMERSIVE, RealityMode.MIXED),
}

TRANSITION_EVENT_PRIORITY = 2
TRANSITION_EVENT_TTL_MS = 30_000


def request_transition(p: UserPresence, target: RealityMode, now_ms: int,
                       event_id: str) -> ContextEvent | None:
    """Move a user along the spectrum; returns the announcement event.

    Self-transitions succeed as no-ops (no event).  Jumping directly
    between physical and immersive raises TransitionError.  Shared virtual
    state is never touched here: switching where you look must not move
    anything in the world.
    """
    if target == p.mode:
        return None
    if (p.mode, target) not in _EDGES:
        raise TransitionError(p.mode, target)
    previous = p.mode
    p.mode = target
    p.since_ms = now_ms
    return ContextEvent(
        event_id=event_id,
        origin="virtual",
        category="application",
        priority=TRANSITION_EVENT_PRIORITY,
        topic=f"bridge/{p.user_id}/transition",
        payload={"from": previous.value, "to": target.value},
        sim_time_ms=now_ms,
        ttl_ms=TRANSITION_EVENT_TTL_MS,
    )


def route_event(p: UserPresence, e: ContextEvent) -> CueDecision:
    """Decide full / summary / suppressed for one event and one user."""
    rule = p.policy.rule(p.mode, e.origin, e.category)
    if e.priority >= rule.full_at:
        return CueDecision("full")
    if e.priority >= rule.summary_at:
        return CueDecision("summary", summary_text=summarize(e))
    return CueDecision("suppressed")


def _scalar_text(v) -> str:
    if isinstance(v, str):
        return v
    return json.dumps(v)  # true/false, shortest float form


def summarize(e: ContextEvent) -> str:
    """Deterministic one-liner: `<category>:<topic>:<key>=<value>`, <= 140 bytes.

    The primary payload key is the lexicographically smallest; an empty
    payload yields `-` in its place.
    """
    if e.payload:
        key = min(e.payload)
        tail = f"{key}={_scalar_text(e.payload[key])}"
    else:
        tail = "-"
    text = f"{e.category}:{e.topic}:{tail}"
    raw = text.encode("utf-8")
    if len(raw) <= MAX_SUMMARY_BYTES:
        return text
    # cut at the byte budget; drop a trailing partial code point if any
    return raw[:MAX_SUMMARY_BYTES].decode("utf-8", "ignore")


def mode_trace(records: list[LogRecord]) -> dict[str, list[tuple[int, RealityMode]]]:
    """Per-user (record index, mode) change points recovered from a log."""
    trace: dict[str, list[tuple[int, RealityMode]]] = {}
    pending_user: str | None = None
    for i, rec in enumerate(records):
        msg = rec.msg
        if isinstance(msg, Hello):
            pending_user = msg.client_id if msg.role == "user" else None
        elif isinstance(msg, Welcome):
            if pending_user is not None and pending_user not in trace:
                trace[pending_user] = [(i, RealityMode.PHYSICAL)]
            pending_user = None
        elif isinstance(msg, TransitionOk):
            trace.setdefault(msg.user_id, []).append((i, msg.mode))
    return trace


def awareness_gap(records: list[LogRecord], user_id: str,
                  mode_filter: RealityMode, p_min: int) -> float:
    """Fraction of relevant physical-origin events never cued to the user in time.

    Relevance is judged at the event's position in the log, against the
    user's mode at that point; presence starts Physical at the user's first
    accepted Hello and follows TransitionOk records.
    """
    trace = mode_trace(records)
    if user_id not in trace:
        raise UnknownUserError(user_id)
    changes = trace[user_id]

    relevant = 0
    pending: dict[str, int] = {}  # event_id -> delivery deadline (ts)
    delivered = 0
    change_idx = 0
    mode: RealityMode | None = None
    for i, rec in enumerate(records):
        while change_idx < len(changes) and changes[change_idx][0] <= i:
            mode = changes[change_idx][1]
            change_idx += 1
        msg = rec.msg
        if isinstance(msg, Pub):
            e = msg.event
            if (mode == mode_filter and e.origin == "physical"
                    and e.priority >= p_min):
                relevant += 1
                pending[e.event_id] = e.sim_time_ms + e.ttl_ms
        elif isinstance(msg, Cue) and msg.user_id == user_id:
            deadline = pending.pop(msg.event.event_id, None)
            if deadline is not None and rec.ts_ms <= deadline:
                delivered += 1
    if relevant == 0:
        return 0.0
    return 1.0 - delivered / relevant
