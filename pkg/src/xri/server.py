"""Live broker transport: raw TCP lines and WebSocket text frames, one port.

The first bytes of a connection decide the flavor: an HTTP `GET ` starts a
WebSocket upgrade on path /ws, anything else is treated as raw
line-delimited protocol.  Both carry identical wire lines.  All broker
mutation happens on the single asyncio loop, preserving the serial
execution contract.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import logging
import struct
import time

from .broker import Broker
from .eventlog import EventLog
from .model import validate_object
from .scenario import Scenario

log = logging.getLogger("xri.server")

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_READ_LIMIT = 256 * 1024


def build_broker(log_path: str | None, scenario: Scenario | None,
                 clock=None) -> Broker:
    """Broker on wall-clock ms, optionally preloaded with a scenario's world."""
    start = time.monotonic()
    if clock is None:
        clock = lambda: int((time.monotonic() - start) * 1000)
    event_log = EventLog(log_path)
    policy = scenario.policy() if scenario else None
    broker = Broker(clock=clock, event_log=event_log, policy=policy)
    if scenario is not None:
        for spec in scenario.objects:
            broker.add_object(validate_object(spec))
        for actor in scenario.actors:
            if actor.role == "user":
                broker.ensure_presence(actor.actor_id)
        broker.announce_world(scenario.name, scenario.seed,
                              scenario.duration_ms)
    return broker


async def _read_http_headers(reader: asyncio.StreamReader) -> dict[str, str]:
    headers: dict[str, str] = {}
    for _ in range(100):
        line = await reader.readline()
        if line in (b"\r\n", b"\n", b""):
            return headers
        if b":" in line:
            name, _, value = line.partition(b":")
            headers[name.strip().lower().decode("latin-1")] = (
                value.strip().decode("latin-1"))
    raise ValueError("too many request headers")


def _ws_accept(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_frame(payload: bytes, opcode: int = 0x1) -> bytes:
    """One unmasked server frame (FIN set)."""
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


async def _read_ws_frame(reader: asyncio.StreamReader) -> tuple[int, bool, bytes]:
    b1, b2 = await reader.readexactly(2)
    fin = bool(b1 & 0x80)
    opcode = b1 & 0x0F
    masked = bool(b2 & 0x80)
    n = b2 & 0x7F
    if n == 126:
        (n,) = struct.unpack(">H", await reader.readexactly(2))
    elif n == 127:
        (n,) = struct.unpack(">Q", await reader.readexactly(8))
    if n > _READ_LIMIT:
        raise ValueError(f"frame of {n} bytes exceeds limit")
    mask = await reader.readexactly(4) if masked else b""
    payload = await reader.readexactly(n)
    if masked:
        payload = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
    return opcode, fin, payload


class _WsTransport:
    def __init__(self, writer: asyncio.StreamWriter):
        self.writer = writer

    def send(self, line: bytes) -> None:
        self.writer.write(ws_frame(line))


async def _serve_websocket(broker: Broker, reader, writer, request: bytes) -> None:
    try:
        parts = request.decode("latin-1").split()
        path = parts[1] if len(parts) >= 2 else ""
        headers = await _read_http_headers(reader)
        key = headers.get("sec-websocket-key")
        if path != "/ws" or headers.get("upgrade", "").lower() != "websocket" \
                or key is None:
            writer.write(b"HTTP/1.1 404 Not Found\r\n"
                         b"Connection: close\r\n\r\n")
            await writer.drain()
            writer.close()
            return
        writer.write(
            b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\n"
            b"Connection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + _ws_accept(key).encode("ascii")
            + b"\r\n\r\n")
        await writer.drain()
    except (ValueError, asyncio.IncompleteReadError):
        return

    transport = _WsTransport(writer)
    conn = broker.open_connection(transport.send)
    buffer = b""
    try:
        while True:
            opcode, fin, payload = await _read_ws_frame(reader)
            if opcode == 0x8:  # close
                writer.write(ws_frame(payload, opcode=0x8))
                await writer.drain()
                break
            if opcode == 0x9:  # ping
                writer.write(ws_frame(payload, opcode=0xA))
                continue
            if opcode in (0x0, 0x1, 0x2):
                buffer += payload
                if not fin:
                    continue
                message, buffer = buffer, b""
                for line in message.split(b"\n"):
                    if line.strip():
                        broker.handle_line(conn, line)
                await writer.drain()
    except (asyncio.IncompleteReadError, ConnectionError, ValueError):
        pass
    finally:
        broker.connection_closed(conn)
        writer.close()


async def _serve_raw(broker: Broker, reader, writer, first_line: bytes) -> None:
    conn = broker.open_connection(lambda line: writer.write(line))
    try:
        line = first_line
        while line:
            if line.strip():
                broker.handle_line(conn, line)
                await writer.drain()
            line = await reader.readline()
    except (ConnectionError, asyncio.LimitOverrunError, ValueError):
        pass
    finally:
        broker.connection_closed(conn)
        writer.close()


async def _handle_connection(broker: Broker, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter) -> None:
    try:
        first = await reader.readline()
    except (asyncio.LimitOverrunError, ValueError, ConnectionError):
        writer.close()
        return
    if not first:
        writer.close()
        return
    if first.startswith(b"GET "):
        await _serve_websocket(broker, reader, writer, first)
    else:
        await _serve_raw(broker, reader, writer, first)


async def start_server(broker: Broker, port: int,
                       host: str = "127.0.0.1") -> asyncio.AbstractServer:
    async def handler(reader, writer):
        await _handle_connection(broker, reader, writer)

    return await asyncio.start_server(handler, host=host, port=port,
                                      limit=_READ_LIMIT)


async def serve_async(port: int, log_path: str | None = None,
                      scenario: Scenario | None = None,
                      ready: asyncio.Event | None = None) -> None:
    broker = build_broker(log_path, scenario)
    server = await start_server(broker, port)
    bound = server.sockets[0].getsockname()
    log.info("listening on %s:%d (TCP lines + WebSocket /ws)", *bound[:2])
    if ready is not None:
        ready.set()
    try:
        async with server:
            await server.serve_forever()
    finally:
        broker.event_log.close()


def serve(port: int, log_path: str | None = None,
          scenario: Scenario | None = None) -> None:
    try:
        asyncio.run(serve_async(port, log_path, scenario))
    except KeyboardInterrupt:
        log.info("shutting down")
