"""The IoT broker: sessions, subscriptions, publish routing, twin state.

All mutation runs on one logical event loop: handle_line is called
serially (the simulator drives it single-threaded; the live server calls
it from a single asyncio loop), so observable behavior equals a serial
execution in log order.

Every message the broker accepts or emits is appended to the event log
exactly once, before any delivery; fan-out to multiple sessions reuses
the single logged message.  The log therefore fully determines the run:
replay reconstructs sessions, presences, twin states and metrics from it
alone.  To make that closed-book, the broker announces the world at
startup as `meta/run` and `meta/object/<id>` events carrying the scenario
constants; `state/` and `meta/` are reserved prefixes clients cannot
publish to.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

from . import bridge as bridge_mod
from . import twins
from .bridge import CuePolicy, UserPresence, default_policy
from .eventlog import EventLog
from .model import (
    TOPIC_LEVEL_RE,
    ContextEvent,
    HybridObject,
    ModelError,
    VersionedValue,
    normalize_typed_value,
    object_spec,
    stamp_next,
)
from .wire import (
    PROTO_VERSION,
    Ack,
    Cue,
    DecodeError,
    Err,
    Hello,
    Message,
    Ping,
    Pong,
    Pub,
    Welcome,
    Set,
    State,
    Sub,
    Transition,
    TransitionOk,
    decode,
    encode,
    topic_matches,
)

log = logging.getLogger("xri.broker")

RESERVED_PREFIXES = ("state/", "meta/")

DEVICE_STATE_PRIORITY = 3
DEVICE_STATE_TTL_MS = 30_000

META_EVENT_PRIORITY = 1
META_EVENT_TTL_MS = 1

SendFn = Callable[[bytes], None]


@dataclass
class Session:
    session_id: str
    client_id: str
    role: str
    send: SendFn
    connected_at: int
    subscriptions: set[str] = field(default_factory=set)

    def matches(self, topic: str) -> bool:
        return any(topic_matches(f, topic) for f in self.subscriptions)


@dataclass
class Connection:
    """One transport connection; gains a Session after a successful Hello."""

    send: SendFn
    session: Session | None = None
    closed: bool = False


class Broker:
    """Single-process pub/sub broker with twin sync and bridge mediation."""

    def __init__(self, clock: Callable[[], int], event_log: EventLog | None = None,
                 policy: CuePolicy | None = None,
                 delivery_hook: Callable[[Session, Message], None] | None = None):
        self.clock = clock
        self.event_log = event_log if event_log is not None else EventLog()
        self.policy = policy or default_policy()
        self.delivery_hook = delivery_hook
        self.sessions: dict[str, Session] = {}
        self.objects: dict[str, HybridObject] = {}
        self.presences: dict[str, UserPresence] = {}
        self.lamport = 0
        self._session_counter = 0
        self._event_counter = 0
        self._live_clients: dict[str, str] = {}  # client_id -> session_id

    # -- world setup --------------------------------------------------------

    def add_object(self, obj: HybridObject) -> None:
        if obj.object_id in self.objects:
            raise ModelError(f"duplicate object_id {obj.object_id!r}")
        self.objects[obj.object_id] = obj

    def ensure_presence(self, user_id: str) -> UserPresence:
        presence = self.presences.get(user_id)
        if presence is None:
            presence = UserPresence(user_id=user_id, since_ms=self.clock(),
                                    policy=self.policy)
            self.presences[user_id] = presence
        return presence

    def announce_world(self, name: str, seed: int, duration_ms: int) -> None:
        """Log the run header and one declaration event per object.

        These ride on the reserved `meta/` namespace so that replay can
        rebuild the world (schemas, mirror keys, policies, initial values)
        from the log alone.
        """
        now = self.clock()
        run_payload = {
            "name": name,
            "seed": str(seed),  # as string: 64-bit seeds overflow float payloads
            "duration_ms": float(duration_ms),
        }
        self._route_event(self._meta_event("meta/run", run_payload, now))
        for object_id in sorted(self.objects):
            spec = json.dumps(object_spec(self.objects[object_id]),
                              ensure_ascii=False, separators=(",", ":"),
                              sort_keys=True)
            if len(spec.encode("utf-8")) > 4096:
                raise ModelError(
                    f"object {object_id!r} spec too large to announce in log")
            self._route_event(
                self._meta_event(f"meta/object/{object_id}", {"spec": spec}, now))

    def _meta_event(self, topic: str, payload: dict, now: int) -> ContextEvent:
        return ContextEvent(
            event_id=self._next_event_id(),
            origin="virtual",
            category="application",
            priority=META_EVENT_PRIORITY,
            topic=topic,
            payload=payload,
            sim_time_ms=now,
            ttl_ms=META_EVENT_TTL_MS,
        )

    # -- connection plumbing -------------------------------------------------

    def open_connection(self, send: SendFn) -> Connection:
        return Connection(send=send)

    def handle_line(self, conn: Connection, line: bytes) -> None:
        try:
            msg = decode(line)
        except DecodeError as e:
            self._reply(conn, Err(e.code, str(e)))
            return
        self.handle_message(conn, msg)

    def handle_message(self, conn: Connection, msg: Message) -> None:
        if isinstance(msg, Hello):
            self._on_hello(conn, msg)
        elif isinstance(msg, (Welcome, State, TransitionOk, Cue, Ack, Err, Pong)):
            # server-only vocabulary; not logged, not routed
            self._reply(conn, Err("protocol",
                                  f"clients may not send {type(msg).__name__}"))
        elif conn.session is None:
            self._reply(conn, Err("no-session", "say hello first"))
        elif isinstance(msg, Ping):
            self._log(msg)
            self._emit(Pong(msg.nonce), [conn.session])
        elif isinstance(msg, Sub):
            self._on_sub(conn.session, msg)
        elif isinstance(msg, Pub):
            self._on_pub(conn.session, msg)
        elif isinstance(msg, Set):
            self._on_set(conn.session, msg)
        elif isinstance(msg, Transition):
            self._on_transition(conn.session, msg)
        else:  # pragma: no cover - union is exhaustive
            self._reply(conn, Err("protocol", "unhandled message"))

    def connection_closed(self, conn: Connection) -> None:
        self.close_session(conn)

    def close_session(self, conn: Connection) -> None:
        """Drop subscriptions and the live-client slot; presence is sticky."""
        if conn.closed or conn.session is None:
            log.warning("close of unknown or already-closed session")
            conn.closed = True
            return
        session = conn.session
        conn.closed = True
        conn.session = None
        self.sessions.pop(session.session_id, None)
        if self._live_clients.get(session.client_id) == session.session_id:
            del self._live_clients[session.client_id]
        payload = {"client_id": session.client_id, "event": "close"}
        self._route_event(self._meta_event(
            f"meta/session/{session.session_id}", payload, self.clock()))

    # -- message handlers ----------------------------------------------------

    def _on_hello(self, conn: Connection, msg: Hello) -> None:
        if conn.session is not None:
            self._reply(conn, Err("protocol", "session already open"))
            return
        self._log(msg)
        if msg.proto_version != PROTO_VERSION:
            self._reply(conn, Err("version-mismatch",
                                  f"want proto_version {PROTO_VERSION}"))
            return
        if not msg.client_id:
            self._reply(conn, Err("bad-client", "client_id must be non-empty"))
            return
        if msg.client_id in self._live_clients:
            self._reply(conn, Err("dup_client",
                                  f"client {msg.client_id!r} already connected"))
            return
        if msg.role == "user":
            if not TOPIC_LEVEL_RE.match(msg.client_id):
                self._reply(conn, Err("bad-client",
                                      "user ids must be valid topic levels"))
                return
        self._session_counter += 1
        session = Session(
            session_id=f"s{self._session_counter}",
            client_id=msg.client_id,
            role=msg.role,
            send=conn.send,
            connected_at=self.clock(),
        )
        conn.session = session
        self.sessions[session.session_id] = session
        self._live_clients[msg.client_id] = session.session_id
        if msg.role == "user":
            self.ensure_presence(msg.client_id)
        self._emit(Welcome(session.session_id, self.lamport), [session])

    def _on_sub(self, session: Session, msg: Sub) -> None:
        self._log(msg)
        session.subscriptions.add(msg.filter)
        self._emit(Ack(msg.filter), [session])
        for object_id in sorted(self.objects):
            obj = self.objects[object_id]
            for facet in ("physical", "virtual"):
                entries = obj.facet(facet)
                if not entries:
                    continue
                if topic_matches(msg.filter, f"state/{object_id}/{facet}"):
                    self._emit(State(object_id, facet, dict(entries)), [session])

    def _on_pub(self, session: Session, msg: Pub) -> int:
        self._log(msg)
        if any(msg.topic.startswith(p) or msg.topic == p.rstrip("/")
               for p in RESERVED_PREFIXES):
            self._emit(Err("reserved-topic",
                           f"clients may not publish on {msg.topic!r}"), [session])
            return 0
        if msg.event.topic != msg.topic:
            self._emit(Err("malformed", "pub topic and event topic differ"),
                       [session])
            return 0
        self.lamport = stamp_next(self.lamport, 0, "broker").lamport
        matched = self._deliver_event(msg)
        self._emit(Ack(msg.event.event_id), [session])
        return matched

    def _on_set(self, session: Session, msg: Set) -> None:
        self._log(msg)
        obj = self.objects.get(msg.object_id)
        if obj is None:
            self._emit(Err("unknown-object", f"no object {msg.object_id!r}"),
                       [session])
            return
        stamp = stamp_next(self.lamport, msg.client_lamport, session.client_id)
        self.lamport = stamp.lamport
        try:
            vv = VersionedValue(normalize_typed_value(msg.value), stamp)
        except ModelError as e:
            self._emit(Err("schema-mismatch", str(e)), [session])
            return
        outcome = twins.apply_write(obj, msg.facet, msg.key, vv)
        if outcome.status == "rejected":
            self._emit(Err(outcome.reason or "rejected", outcome.detail or ""),
                       [session])
            return
        if outcome.status == "superseded":
            self._emit(Ack("superseded"), [session])
            return
        now = self.clock()
        twins.note_coherence(obj, now)
        self._broadcast_state(State(msg.object_id, msg.facet, {msg.key: vv}))
        for facet2, key2, vv2 in outcome.propagated:
            self._broadcast_state(State(msg.object_id, facet2, {key2: vv2}))
        origin = "physical" if msg.facet == "physical" else "virtual"
        event = ContextEvent(
            event_id=self._next_event_id(),
            origin=origin,
            category="device-state",
            priority=DEVICE_STATE_PRIORITY,
            topic=f"obj/{msg.object_id}/{msg.facet}",
            payload={msg.key: vv.value},
            sim_time_ms=now,
            ttl_ms=DEVICE_STATE_TTL_MS,
        )
        self._route_event(event)
        self._emit(Ack("applied"), [session])

    def _on_transition(self, session: Session, msg: Transition) -> None:
        self._log(msg)
        presence = self.presences.get(msg.user_id)
        if presence is None:
            self._emit(Err("unknown-user", f"no presence for {msg.user_id!r}"),
                       [session])
            return
        try:
            event = bridge_mod.request_transition(
                presence, msg.target_mode, self.clock(), self._next_event_id())
        except bridge_mod.TransitionError as e:
            self._emit(Err(e.code, str(e)), [session])
            return
        targets = [session]
        user_session = self._session_of_user(msg.user_id)
        if user_session is not None and user_session is not session:
            targets.append(user_session)
        self._emit(TransitionOk(msg.user_id, presence.mode), targets)
        if event is not None:
            self._route_event(event)

    # -- routing -------------------------------------------------------------

    def _deliver_event(self, msg: Pub) -> int:
        """Fan a logged event out to matching sessions, bridge-mediating users."""
        matched = 0
        cues: list[tuple[Cue, list[Session]]] = []
        for session in self.sessions.values():
            if not session.matches(msg.topic):
                continue
            matched += 1
            if session.role != "user":
                self._send(session, msg)
        for user_id, presence in self.presences.items():
            user_session = self._session_of_user(user_id)
            if user_session is None or not user_session.matches(msg.topic):
                continue
            decision = bridge_mod.route_event(presence, msg.event)
            if decision.kind == "suppressed":
                continue
            cue = Cue(user_id, decision.kind, msg.event, decision.summary_text)
            receivers = [user_session]
            for session in self.sessions.values():
                if session.role == "console" and session.matches(msg.topic):
                    receivers.append(session)
            presence.count_delivery(msg.event.origin, decision.kind)
            cues.append((cue, receivers))
        for cue, receivers in cues:
            self._emit(cue, receivers)
        return matched

    def _route_event(self, event: ContextEvent) -> int:
        """Publish a broker-synthesized event (no publisher, no ack)."""
        msg = Pub(event.topic, event)
        self._log(msg)
        return self._deliver_event(msg)

    def _broadcast_state(self, state: State) -> None:
        topic = f"state/{state.object_id}/{state.facet}"
        receivers = [s for s in self.sessions.values() if s.matches(topic)]
        self._emit(state, receivers)

    def _session_of_user(self, user_id: str) -> Session | None:
        session_id = self._live_clients.get(user_id)
        if session_id is None:
            return None
        session = self.sessions.get(session_id)
        if session is not None and session.role == "user":
            return session
        return None

    # -- log + delivery ------------------------------------------------------

    def _next_event_id(self) -> str:
        eid = f"b{self._event_counter}"
        self._event_counter += 1
        return eid

    def _log(self, msg: Message) -> None:
        self.event_log.append(self.clock(), msg)

    def _send(self, session: Session, msg: Message) -> None:
        if self.delivery_hook is not None:
            self.delivery_hook(session, msg)
        session.send(encode(msg))

    def _emit(self, msg: Message, receivers: list[Session]) -> None:
        """Log a broker-emitted message once, then deliver to each receiver."""
        self._log(msg)
        for session in receivers:
            self._send(session, msg)

    def _reply(self, conn: Connection, msg: Message) -> None:
        """Err path for connections that may not have a session yet."""
        self._log(msg)
        if conn.session is not None and self.delivery_hook is not None:
            self.delivery_hook(conn.session, msg)
        conn.send(encode(msg))
