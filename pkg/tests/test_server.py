import asyncio
import base64
import hashlib
import struct

from xri.scenario import builtin_metaplant
from xri.server import build_broker, start_server, ws_frame
from xri.wire import Ack, Hello, Set, State, Sub, Welcome, decode, encode


def run_async(coro):
    return asyncio.run(asyncio.wait_for(coro, timeout=20))


async def with_server(body, scenario=None):
    broker = build_broker(None, scenario, clock=lambda: 0)
    server = await start_server(broker, port=0)
    port = server.sockets[0].getsockname()[1]
    try:
        return await body(broker, port)
    finally:
        server.close()
        await server.wait_closed()


async def read_msg(reader):
    line = await asyncio.wait_for(reader.readline(), timeout=5)
    return decode(line)


def mask_frame(payload: bytes, opcode=0x1, mask_key=b"\x01\x02\x03\x04") -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([0x80 | n])
    elif n < 1 << 16:
        head += bytes([0x80 | 126]) + struct.pack(">H", n)
    else:
        head += bytes([0x80 | 127]) + struct.pack(">Q", n)
    masked = bytes(c ^ mask_key[i % 4] for i, c in enumerate(payload))
    return head + mask_key + masked


async def read_ws_payload(reader):
    b1, b2 = await asyncio.wait_for(reader.readexactly(2), timeout=5)
    n = b2 & 0x7F
    if n == 126:
        (n,) = struct.unpack(">H", await reader.readexactly(2))
    elif n == 127:
        (n,) = struct.unpack(">Q", await reader.readexactly(8))
    return b1 & 0x0F, await reader.readexactly(n)


def test_raw_tcp_session():
    async def body(broker, port):
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(encode(Hello("dev1", "device", 1)))
        welcome = await read_msg(reader)
        assert isinstance(welcome, Welcome)
        writer.write(encode(Sub("env/#")))
        assert await read_msg(reader) == Ack("env/#")
        writer.close()
        await writer.wait_closed()
        await asyncio.sleep(0.05)
        assert broker.sessions == {}  # disconnect cleaned up

    run_async(with_server(body))


def test_two_tcp_clients_route():
    async def body(broker, port):
        r1, w1 = await asyncio.open_connection("127.0.0.1", port)
        w1.write(encode(Hello("console1", "console", 1)))
        await read_msg(r1)
        w1.write(encode(Sub("state/#")))
        assert await read_msg(r1) == Ack("state/#")
        snapshot = await read_msg(r1)
        assert isinstance(snapshot, State)
        assert snapshot.entries["moisture"].value == 0.42

        r2, w2 = await asyncio.open_connection("127.0.0.1", port)
        w2.write(encode(Hello("dev1", "device", 1)))
        await read_msg(r2)
        w2.write(encode(Set("plant1", "physical", "moisture", 0.2, 0)))
        assert await read_msg(r2) == Ack("applied")
        physical = await read_msg(r1)
        virtual = await read_msg(r1)
        assert {physical.facet, virtual.facet} == {"physical", "virtual"}
        assert physical.entries["moisture"].value == 0.2
        for w in (w1, w2):
            w.close()
            await w.wait_closed()

    run_async(with_server(body, scenario=builtin_metaplant()))


def test_websocket_handshake_and_session():
    async def body(broker, port):
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        key = base64.b64encode(b"0123456789abcdef").decode()
        writer.write(
            f"GET /ws HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\n"
            f"Connection: Upgrade\r\nSec-WebSocket-Key: {key}\r\n"
            f"Sec-WebSocket-Version: 13\r\n\r\n".encode())
        status = await reader.readline()
        assert b"101" in status
        headers = {}
        while True:
            line = await reader.readline()
            if line in (b"\r\n", b""):
                break
            name, _, value = line.decode().partition(":")
            headers[name.strip().lower()] = value.strip()
        expected = base64.b64encode(hashlib.sha1(
            (key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()).digest())
        assert headers["sec-websocket-accept"] == expected.decode()

        writer.write(mask_frame(encode(Hello("console1", "console", 1))))
        opcode, payload = await read_ws_payload(reader)
        assert opcode == 0x1
        assert isinstance(decode(payload), Welcome)

        # ping -> pong passthrough
        writer.write(mask_frame(b"hi", opcode=0x9))
        opcode, payload = await read_ws_payload(reader)
        assert opcode == 0xA and payload == b"hi"

        # clean close
        writer.write(mask_frame(b"", opcode=0x8))
        opcode, _ = await read_ws_payload(reader)
        assert opcode == 0x8
        writer.close()
        await writer.wait_closed()

    run_async(with_server(body))


def test_websocket_wrong_path_404():
    async def body(broker, port):
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(b"GET /nope HTTP/1.1\r\nHost: x\r\n"
                     b"Upgrade: websocket\r\nSec-WebSocket-Key: aaaa\r\n\r\n")
        status = await reader.readline()
        assert b"404" in status
        writer.close()
        await writer.wait_closed()

    run_async(with_server(body))


def test_garbage_line_gets_err_and_connection_survives():
    async def body(broker, port):
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(b"this is not json\n")
        err = await read_msg(reader)
        assert err.code == "malformed-syntax"
        writer.write(encode(Hello("dev1", "device", 1)))
        assert isinstance(await read_msg(reader), Welcome)
        writer.close()
        await writer.wait_closed()

    run_async(with_server(body))


def test_ws_frame_header_sizes():
    for size in (0, 125, 126, 65535, 65536):
        framed = ws_frame(b"x" * size)
        assert framed.endswith(b"x" * size)
        assert framed[0] == 0x81  # FIN + text
