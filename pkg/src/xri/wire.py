"""Line-delimited JSON wire protocol: message types, codec, topic filters.

One message per UTF-8 line, compact separators, fixed key order per type,
strict decoding (unknown tags and unknown fields are rejected).  The codec
is stateless and pure; both the in-process simulator and the live TCP /
WebSocket server speak exactly these lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .model import (
    MAX_LAMPORT,
    MAX_TOPIC_BYTES,
    ORIGINS,
    CATEGORIES,
    TOPIC_LEVEL_RE,
    ClockStamp,
    ContextEvent,
    ModelError,
    RealityMode,
    TypedValue,
    VersionedValue,
    normalize_typed_value,
    validate_topic,
)

MAX_LINE_BYTES = 64 * 1024
PROTO_VERSION = 1

ROLES = ("device", "user", "console")
FACETS = ("physical", "virtual")
PRESENTATIONS = ("full", "summary")


class DecodeError(ValueError):
    """Rejected wire input; ``code`` is one of malformed-syntax, unknown-type,
    field-missing, field-type-mismatch, oversize."""

    def __init__(self, code: str, detail: str, offset: int | None = None):
        at = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{code}{at}: {detail}")
        self.code = code
        self.detail = detail
        self.offset = offset


class FilterError(ValueError):
    """Malformed topic filter."""


# --- message types ---------------------------------------------------------

@dataclass(frozen=True)
class Hello:
    client_id: str
    role: str
    proto_version: int


@dataclass(frozen=True)
class Welcome:
    session_id: str
    server_lamport: int


@dataclass(frozen=True)
class Sub:
    filter: str


@dataclass(frozen=True)
class Pub:
    topic: str
    event: ContextEvent


@dataclass(frozen=True)
class Set:
    object_id: str
    facet: str
    key: str
    value: TypedValue
    client_lamport: int


@dataclass(frozen=True, eq=True)
class State:
    object_id: str
    facet: str
    entries: dict[str, VersionedValue]


@dataclass(frozen=True)
class Transition:
    user_id: str
    target_mode: RealityMode


@dataclass(frozen=True)
class TransitionOk:
    user_id: str
    mode: RealityMode


@dataclass(frozen=True)
class Cue:
    user_id: str
    presentation: str
    event: ContextEvent
    summary_text: str | None = None


@dataclass(frozen=True)
class Ack:
    ref_id: str


@dataclass(frozen=True)
class Err:
    code: str
    detail: str


@dataclass(frozen=True)
class Ping:
    nonce: int


@dataclass(frozen=True)
class Pong:
    nonce: int


Message = (Hello | Welcome | Sub | Pub | Set | State | Transition | TransitionOk
           | Cue | Ack | Err | Ping | Pong)


# --- topic filters ---------------------------------------------------------

def validate_filter(flt: str) -> str:
    """Check an MQTT-style filter: concrete levels, '+', or one trailing '#'."""
    if not isinstance(flt, str) or not flt:
        raise FilterError("filter must be a non-empty string")
    if len(flt.encode("utf-8")) > MAX_TOPIC_BYTES:
        raise FilterError(f"filter exceeds {MAX_TOPIC_BYTES} bytes")
    levels = flt.split("/")
    for i, level in enumerate(levels):
        if level == "#":
            if i != len(levels) - 1:
                raise FilterError(f"'#' must be the final level: {flt!r}")
        elif level != "+" and not TOPIC_LEVEL_RE.match(level):
            raise FilterError(f"bad filter level {level!r} in {flt!r}")
    return flt


def topic_matches(flt: str, topic: str) -> bool:
    """Level-wise match: '+' takes exactly one level, trailing '#' one or more."""
    fparts = flt.split("/")
    tparts = topic.split("/")
    for i, f in enumerate(fparts):
        if f == "#":
            return len(tparts) - i >= 1
        if i >= len(tparts):
            return False
        if f != "+" and f != tparts[i]:
            return False
    return len(fparts) == len(tparts)


# --- encoding --------------------------------------------------------------

def _clock_obj(c: ClockStamp) -> dict:
    return {"l": c.lamport, "a": c.actor}


def _event_obj(e: ContextEvent) -> dict:
    return {
        "id": e.event_id,
        "origin": e.origin,
        "cat": e.category,
        "prio": e.priority,
        "topic": e.topic,
        "payload": {k: e.payload[k] for k in sorted(e.payload)},
        "ts": e.sim_time_ms,
        "ttl": e.ttl_ms,
    }


def _entries_obj(entries: dict[str, VersionedValue]) -> dict:
    return {k: {"v": entries[k].value, "c": _clock_obj(entries[k].clock)}
            for k in sorted(entries)}


def encode(msg: Message) -> bytes:
    """One UTF-8 JSON line, fixed key order, terminated by a single 0x0A."""
    if isinstance(msg, Hello):
        obj = {"t": "hello", "client_id": msg.client_id, "role": msg.role,
               "proto_version": msg.proto_version}
    elif isinstance(msg, Welcome):
        obj = {"t": "welcome", "session_id": msg.session_id,
               "server_lamport": msg.server_lamport}
    elif isinstance(msg, Sub):
        obj = {"t": "sub", "filter": msg.filter}
    elif isinstance(msg, Pub):
        obj = {"t": "pub", "topic": msg.topic, "event": _event_obj(msg.event)}
    elif isinstance(msg, Set):
        obj = {"t": "set", "object_id": msg.object_id, "facet": msg.facet,
               "key": msg.key, "value": msg.value,
               "client_lamport": msg.client_lamport}
    elif isinstance(msg, State):
        obj = {"t": "state", "object_id": msg.object_id, "facet": msg.facet,
               "entries": _entries_obj(msg.entries)}
    elif isinstance(msg, Transition):
        obj = {"t": "transition", "user_id": msg.user_id,
               "target_mode": msg.target_mode.value}
    elif isinstance(msg, TransitionOk):
        obj = {"t": "transition_ok", "user_id": msg.user_id,
               "mode": msg.mode.value}
    elif isinstance(msg, Cue):
        obj = {"t": "cue", "user_id": msg.user_id,
               "presentation": msg.presentation, "event": _event_obj(msg.event)}
        if msg.summary_text is not None:
            obj["summary_text"] = msg.summary_text
    elif isinstance(msg, Ack):
        obj = {"t": "ack", "ref_id": msg.ref_id}
    elif isinstance(msg, Err):
        obj = {"t": "err", "code": msg.code, "detail": msg.detail}
    elif isinstance(msg, Ping):
        obj = {"t": "ping", "nonce": msg.nonce}
    elif isinstance(msg, Pong):
        obj = {"t": "pong", "nonce": msg.nonce}
    else:
        raise TypeError(f"not a protocol message: {type(msg).__name__}")
    line = json.dumps(obj, ensure_ascii=False, separators=(",", ":"),
                      allow_nan=False)
    return line.encode("utf-8") + b"\n"


# --- decoding --------------------------------------------------------------

def _reject_dup_pairs(pairs):
    d = {}
    for k, v in pairs:
        if k in d:
            raise ValueError(f"duplicate key {k!r}")
        d[k] = v
    return d


class _Fields:
    """Pops typed fields from a decoded object, rejecting extras at the end."""

    def __init__(self, obj: dict, tag: str):
        self.obj = dict(obj)
        self.tag = tag

    def _pop(self, name):
        if name not in self.obj:
            raise DecodeError("field-missing", f"{self.tag} needs field {name!r}")
        return self.obj.pop(name)

    def mismatch(self, name, why) -> DecodeError:
        return DecodeError("field-type-mismatch", f"{self.tag}.{name}: {why}")

    def str_(self, name, nonempty=True) -> str:
        v = self._pop(name)
        if not isinstance(v, str) or (nonempty and not v):
            raise self.mismatch(name, "expected non-empty string")
        return v

    def int_(self, name, lo=0, hi=MAX_LAMPORT) -> int:
        v = self._pop(name)
        if isinstance(v, bool) or not isinstance(v, int) or not (lo <= v <= hi):
            raise self.mismatch(name, f"expected integer in [{lo}, {hi}]")
        return v

    def enum(self, name, allowed) -> str:
        v = self.str_(name)
        if v not in allowed:
            raise self.mismatch(name, f"expected one of {sorted(allowed)}")
        return v

    def value(self, name) -> TypedValue:
        v = self._pop(name)
        try:
            if not isinstance(v, (bool, int, float, str)):
                raise ModelError(f"unsupported value type: {type(v).__name__}")
            return normalize_typed_value(v)
        except ModelError as e:
            raise self.mismatch(name, str(e)) from None

    def obj_(self, name) -> dict:
        v = self._pop(name)
        if not isinstance(v, dict):
            raise self.mismatch(name, "expected object")
        return v

    def opt_str(self, name) -> str | None:
        if name not in self.obj:
            return None
        return self.str_(name)

    def done(self) -> None:
        if self.obj:
            raise DecodeError("field-type-mismatch",
                              f"{self.tag}: unknown fields {sorted(self.obj)}")


def _decode_clock(raw, where: str) -> ClockStamp:
    f = _Fields(raw, where)
    lamport = f.int_("l")
    actor = f.str_("a")
    f.done()
    try:
        return ClockStamp(lamport, actor)
    except ModelError as e:
        raise DecodeError("field-type-mismatch", f"{where}: {e}") from None


def _decode_event(raw: dict, where: str) -> ContextEvent:
    f = _Fields(raw, where)
    event_id = f.str_("id")
    origin = f.enum("origin", ORIGINS)
    category = f.enum("cat", CATEGORIES)
    priority = f.int_("prio", 1, 5)
    topic = f.str_("topic")
    raw_payload = f.obj_("payload")
    ts = f.int_("ts")
    ttl = f.int_("ttl", 1)
    f.done()
    payload = {}
    for k, v in raw_payload.items():
        if not isinstance(v, (bool, int, float, str)):
            raise DecodeError("field-type-mismatch",
                              f"{where}.payload.{k}: expected scalar")
        try:
            payload[k] = normalize_typed_value(v)
        except ModelError as e:
            raise DecodeError("field-type-mismatch",
                              f"{where}.payload.{k}: {e}") from None
    try:
        return ContextEvent(event_id, origin, category, priority, topic,
                            payload, ts, ttl)
    except ModelError as e:
        raise DecodeError("field-type-mismatch", f"{where}: {e}") from None


def _decode_mode(f: _Fields, name: str) -> RealityMode:
    return RealityMode(f.enum(name, [m.value for m in RealityMode]))


def _decode_topic(f: _Fields, name: str) -> str:
    v = f.str_(name)
    try:
        return validate_topic(v)
    except ModelError as e:
        raise f.mismatch(name, str(e)) from None


def _decode_filter(f: _Fields, name: str) -> str:
    v = f.str_(name)
    try:
        return validate_filter(v)
    except FilterError as e:
        raise f.mismatch(name, str(e)) from None


def decode(line: bytes | str) -> Message:
    """Strict parse of one wire line back into a Message.

    Never lets a parsing failure escape as anything but DecodeError, for any
    input bytes (fuzz safety).
    """
    if isinstance(line, str):
        line = line.encode("utf-8")
    if line.endswith(b"\n"):
        line = line[:-1]
    if len(line) > MAX_LINE_BYTES:
        raise DecodeError("oversize",
                          f"line of {len(line)} bytes exceeds {MAX_LINE_BYTES}")
    try:
        text = line.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError("malformed-syntax", "invalid UTF-8",
                          offset=e.start) from None
    try:
        obj = json.loads(
            text,
            object_pairs_hook=_reject_dup_pairs,
            parse_constant=lambda c: (_ for _ in ()).throw(ValueError(c)),
        )
    except ValueError as e:
        offset = getattr(e, "pos", None)
        raise DecodeError("malformed-syntax", str(e), offset=offset) from None
    if not isinstance(obj, dict):
        raise DecodeError("malformed-syntax", "top level must be an object")
    tag = obj.pop("t", None)
    if tag is None:
        raise DecodeError("field-missing", "missing type tag 't'")
    if not isinstance(tag, str):
        raise DecodeError("field-type-mismatch", "'t' must be a string")

    f = _Fields(obj, tag)
    if tag == "hello":
        msg = Hello(f.str_("client_id"), f.enum("role", ROLES),
                    f.int_("proto_version"))
    elif tag == "welcome":
        msg = Welcome(f.str_("session_id"), f.int_("server_lamport"))
    elif tag == "sub":
        msg = Sub(_decode_filter(f, "filter"))
    elif tag == "pub":
        topic = _decode_topic(f, "topic")
        msg = Pub(topic, _decode_event(f.obj_("event"), "pub.event"))
    elif tag == "set":
        msg = Set(f.str_("object_id"), f.enum("facet", FACETS), f.str_("key"),
                  f.value("value"), f.int_("client_lamport"))
    elif tag == "state":
        object_id = f.str_("object_id")
        facet = f.enum("facet", FACETS)
        entries = {}
        for k, raw in f.obj_("entries").items():
            if not isinstance(raw, dict):
                raise f.mismatch(f"entries.{k}", "expected object")
            ef = _Fields(raw, f"state.entries.{k}")
            value = ef.value("v")
            clock = _decode_clock(ef.obj_("c"), f"state.entries.{k}.c")
            ef.done()
            entries[k] = VersionedValue(value, clock)
        msg = State(object_id, facet, entries)
    elif tag == "transition":
        msg = Transition(f.str_("user_id"), _decode_mode(f, "target_mode"))
    elif tag == "transition_ok":
        msg = TransitionOk(f.str_("user_id"), _decode_mode(f, "mode"))
    elif tag == "cue":
        msg = Cue(f.str_("user_id"), f.enum("presentation", PRESENTATIONS),
                  _decode_event(f.obj_("event"), "cue.event"), f.opt_str("summary_text"))
    elif tag == "ack":
        msg = Ack(f.str_("ref_id"))
    elif tag == "err":
        msg = Err(f.str_("code"), f.str_("detail", nonempty=False))
    elif tag == "ping":
        msg = Ping(f.int_("nonce"))
    elif tag == "pong":
        msg = Pong(f.int_("nonce"))
    else:
        raise DecodeError("unknown-type", f"unknown message tag {tag!r}")
    f.done()
    return msg
