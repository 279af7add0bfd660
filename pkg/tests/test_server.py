import asyncio
import os
import random
import shutil
import socket
import struct
from pathlib import Path

import pytest
from asyncua import Client, ua
from asyncua.ua.uaerrors import BadTooManySessions

from uaengine.codec import StatusCode
from uaengine.engine import read_capture, write_capture
from uaengine.engine.capture import Capture, Record
from uaengine.nsimage import DEVICE_LAST_NODE
from uaengine.server import ConfigError, ServerConfig, UaServer, parse_config
from uaengine.server.cli import main as uaserver
from uaengine.server.replay import group_messages, replay, split_frames
from uaengine.transport import TransportLimits, encode_hello
from uaengine.transport.chunks import Hello, decode_error

CAPTURES = Path(__file__).parent / "captures"
HELLO = encode_hello(Hello(TransportLimits(), "opc.tcp://127.0.0.1/"))


def run(coro, timeout=60):
    return asyncio.run(asyncio.wait_for(coro, timeout))


class Live:
    """A UaServer on a free port, serving in the background."""

    def __init__(self, cfg=None, **kw):
        self.server = UaServer(cfg or ServerConfig(), listen_port=0, **kw)

    async def __aenter__(self):
        await self.server.start()
        self.task = asyncio.create_task(self.server.serve_forever())
        return self.server

    async def __aexit__(self, *exc):
        self.task.cancel()
        await self.server.stop()


def url(server):
    return f"opc.tcp://127.0.0.1:{server.port}/"


async def raw(server):
    return await asyncio.open_connection("127.0.0.1", server.port)


async def read_frame(reader):
    head = await reader.readexactly(8)
    size = struct.unpack("<I", head[4:])[0]
    return head + await reader.readexactly(size - 8)


# --- live interop -----------------------------------------------------------------------


def test_reference_client_reads_and_writes():
    async def go():
        async with Live() as srv:
            async with Client(url(srv), timeout=10) as client:
                node = client.get_node(DEVICE_LAST_NODE)
                assert await node.read_value() == 0
                await node.write_value(ua.DataValue(ua.Variant(17, ua.VariantType.Int32)))
                dv = await node.read_data_value()
                assert dv.StatusCode.is_good() and dv.Value.Value == 17
                with pytest.raises(ua.UaStatusCodeError) as exc:
                    await client.get_node("ns=1;i=1001").write_value(ua.DataValue(ua.Variant(1, ua.VariantType.Int32)))
                assert exc.value.code == StatusCode.BadNotWritable
                name = await node.read_browse_name()
                assert name == ua.QualifiedName("Value3", 1)

    run(go())


def test_fourth_session_rejected_on_the_wire():
    async def go():
        async with Live() as srv:
            clients = [Client(url(srv), timeout=10) for _ in range(4)]
            for c in clients[:3]:
                await c.connect()
            with pytest.raises(BadTooManySessions):
                await clients[3].connect()
            clients[3].disconnect_socket()
            # the three sessions still work
            for c in clients[:3]:
                assert await c.get_node(DEVICE_LAST_NODE).read_value() == 0
            await clients[0].disconnect()
            # a freed stage admits a new session
            again = Client(url(srv), timeout=10)
            await again.connect()
            await again.disconnect()
            for c in clients[1:3]:
                await c.disconnect()

    run(go())


def test_malformed_first_bytes_get_err_and_server_survives():
    async def go():
        async with Live() as srv:
            reader, writer = await raw(srv)
            writer.write(b"GET / HTTP/1.1\r\n\r\n")
            frame = await read_frame(reader)
            assert frame[:4] == b"ERRF"
            assert decode_error(frame[8:])[0] == StatusCode.BadTcpMessageTypeInvalid
            assert await reader.read() == b""
            writer.close()
            async with Client(url(srv), timeout=10) as client:
                assert await client.get_node(DEVICE_LAST_NODE).read_value() == 0

    run(go())


def test_max_connections_enforced():
    async def go():
        async with Live(ServerConfig(max_connections=2)) as srv:
            conns = [await raw(srv) for _ in range(2)]
            await asyncio.sleep(0.05)
            reader, writer = await raw(srv)
            frame = await read_frame(reader)
            assert decode_error(frame[8:])[0] == StatusCode.BadTcpNotEnoughResources
            for _, w in conns:
                w.close()
            writer.close()

    run(go())


def test_idle_timeout_closes_and_frees_stage():
    async def go():
        async with Live(ServerConfig(idle_timeout_s=0.3)) as srv:
            client = Client(url(srv), timeout=10)
            await client.connect()
            assert srv.engine.s3.active_sessions() == 1
            # asyncua keeps the channel busy with renewals only every few minutes
            await asyncio.sleep(0.8)
            assert srv.engine.s3.active_sessions() == 0
            client.disconnect_socket()

    run(go())


def test_shutdown_closes_connections():
    async def go():
        srv = UaServer(ServerConfig(), listen_port=0)
        await srv.start()
        task = asyncio.create_task(srv.serve_forever())
        reader, writer = await raw(srv)
        writer.write(HELLO)
        assert (await read_frame(reader))[:3] == b"ACK"
        task.cancel()
        await srv.stop()
        assert await asyncio.wait_for(reader.read(), 5) == b""

    run(go())


def test_hostile_clients_stay_within_buffer_budget():
    rnd = random.Random(7)

    async def hostile(srv):
        reader, writer = await raw(srv)
        try:
            writer.write(HELLO)
            await reader.readexactly(28)
            for _ in range(20):
                kind = rnd.choice([b"MSGC", b"MSGF", b"OPNF", b"CLOF", b"HELF"])
                body = rnd.randbytes(rnd.randint(0, 9000))
                size = rnd.choice([len(body) + 8, 8192, 9000, 3, rnd.randint(0, 2**32 - 1)])
                writer.write(kind + struct.pack("<I", size) + body[: max(0, min(size, 9000) - 8)])
            await writer.drain()
            await asyncio.wait_for(reader.read(), 2)
        except (ConnectionError, asyncio.IncompleteReadError, asyncio.TimeoutError):
            pass
        finally:
            writer.close()

    async def chunker(srv):
        # an intermediate chunk that is never finished pins its bytes for a while
        client = Client(url(srv), timeout=10)
        await client.connect_socket()
        await client.send_hello()
        await client.open_secure_channel()
        proto = client.uaclient.protocol
        frame = proto._connection.message_to_binary(b"\x00" * 6000, ua.MessageType.SecureMessage, 99)
        proto.transport.write(frame.replace(b"MSGF", b"MSGC", 1))
        await asyncio.sleep(0.3)
        client.disconnect_socket()

    async def go():
        async with Live() as srv:
            await asyncio.gather(*[hostile(srv) for _ in range(10)], *[chunker(srv) for _ in range(5)])
            await asyncio.sleep(0.1)  # handlers notice the closed sockets
            assert 3 * 6000 <= srv.pool.peak <= 24 * 1024
            assert srv.pool.used == 0
            async with Client(url(srv), timeout=10) as client:
                assert await client.get_node(DEVICE_LAST_NODE).read_value() == 0

    run(go())


# --- record / replay ----------------------------------------------------------------------


def manifest_types(path):
    cap = read_capture(path)
    return [(r.conn, r.direction, r.data[:3].decode()) for r in cap.records]


def test_record_empty_session(tmp_path):
    async def go():
        async with Live(record_dir=tmp_path) as srv:
            reader, writer = await raw(srv)
            writer.write(HELLO)
            await read_frame(reader)
            writer.close()
            await writer.wait_closed()
            await asyncio.sleep(0.05)

    run(go())
    assert manifest_types(tmp_path) == [(0, "in", "HEL"), (0, "out", "ACK")]
    assert read_capture(tmp_path).seed is not None


def test_record_read_session_then_replay(tmp_path):
    async def go():
        async with Live(record_dir=tmp_path) as srv:
            async with Client(url(srv), timeout=10) as client:
                assert await client.get_node(DEVICE_LAST_NODE).read_value() == 0
            await asyncio.sleep(0.2)

    run(go())
    kinds = manifest_types(tmp_path)
    assert kinds[:4] == [(0, "in", "HEL"), (0, "out", "ACK"), (0, "in", "OPN"), (0, "out", "OPN")]
    assert (0, "in", "CLO") in kinds
    report = replay(tmp_path)
    assert report.passed, report.render()


@pytest.mark.parametrize("name", ["read100", "write100"])
def test_golden_capture_replays(name):
    report = replay(CAPTURES / name)
    assert report.passed, report.render()
    assert report.exchanges == 105


def first_read_response(cap):
    # ACK, OPN, CreateSession, ActivateSession, then the first Read
    return [i for i, r in enumerate(cap.records) if r.direction == "out"][4]


def altered(offset, fn):
    cap = read_capture(CAPTURES / "read100")
    k = first_read_response(cap)
    recs = list(cap.records)
    data = bytearray(recs[k].data)
    fn(data, 24 + offset)
    recs[k] = Record(recs[k].conn, "out", bytes(data))
    return Capture(recs, cap.meta)


def flip_service_result(data, pos):
    # body: type id (4), then Timestamp (8), RequestHandle (4), ServiceResult (4)
    data[pos + 12] ^= 0xFF


def test_flipped_service_result_is_reported():
    flip = flip_service_result

    report = replay(altered(4, flip))
    assert not report.passed
    (d,) = report.divergences
    assert d.exchange == 4 and d.field == "ResponseHeader.ServiceResult"
    assert "exchange 4" in report.render()


def test_flipped_value_is_reported():
    cap = read_capture(CAPTURES / "read100")
    k = first_read_response(cap)
    body = cap.records[k].data
    # the Int32 value 0 follows the encoding mask (0x06) of the variant
    pos = body.index(b"\x06\x00\x00\x00\x00")
    recs = list(cap.records)
    recs[k] = Record(0, "out", body[:pos + 1] + b"\x05" + body[pos + 2:])
    report = replay(Capture(recs, cap.meta))
    (d,) = report.divergences
    assert d.field == "Results[0].value.value" and d.actual != d.expected


def test_request_handle_is_masked():
    def flip(data, pos):
        data[pos + 8] ^= 0xFF

    assert replay(altered(4, flip)).passed


def test_timestamp_only_change_passes():
    def bump(data, pos):
        data[pos : pos + 8] = struct.pack("<q", 132_000_000_000_000_000)

    report = replay(altered(4, bump))
    assert report.passed, report.render()


def test_missing_response_is_reported():
    cap = read_capture(CAPTURES / "read100")
    last_out = max(i for i, r in enumerate(cap.records) if r.direction == "out")
    recs = cap.records[:last_out] + cap.records[last_out + 1 :]
    report = replay(Capture(recs, cap.meta))
    assert [d.field for d in report.divergences] == ["missing"]


def test_frames_group_into_messages():
    frames = [b"MSGC" + struct.pack("<I", 9) + b"a", b"MSGF" + struct.pack("<I", 9) + b"b", b"ACKF" + struct.pack("<I", 8)]
    assert split_frames(b"".join(frames)) == frames
    assert group_messages(frames) == [frames[:2], frames[2:]]


# --- configuration -----------------------------------------------------------------------


def test_config_defaults_and_endpoint():
    cfg = parse_config("host = 0.0.0.0\nport = 4841  # comment\n")
    assert cfg.port == 4841
    assert cfg.endpoint_url == "opc.tcp://0.0.0.0:4841/"
    assert cfg.engine.num_stages == 3 and cfg.idle_timeout_s == 120


def test_config_engine_keys(tmp_path):
    (tmp_path / "img.nsim").write_bytes(b"x")
    cfg = parse_config("num_stages = 2\nfeatures = fragmentation\nimage = img.nsim\nlog_level = debug", tmp_path)
    assert cfg.engine.num_stages == 2
    assert cfg.engine.session_slots == 1
    assert cfg.image_path == str(tmp_path / "img.nsim")


@pytest.mark.parametrize(
    "text",
    [
        "port = 0",
        "port = 65536",
        "port = eighty",
        "colour = blue",
        "just text",
        "num_stages = 4",
        "features = subscriptions",
        "image = nope.nsim",
        "log_level = loud",
        "max_connections = 0",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("port = 0\n")
    assert uaserver(["run", "-c", str(bad)]) == 1
    assert uaserver(["run", "-c", str(tmp_path / "missing.conf")]) == 1
    assert "config error" in capsys.readouterr().err


def test_cli_startup_failures_exit_2(tmp_path):
    corrupt = tmp_path / "bad.nsim"
    corrupt.write_bytes(b"not an image")
    conf = tmp_path / "a.conf"
    conf.write_text("image = bad.nsim\n")
    assert uaserver(["run", "-c", str(conf)]) == 2

    with socket.socket() as busy:
        busy.bind(("127.0.0.1", 0))
        busy.listen()
        conf.write_text(f"port = {busy.getsockname()[1]}\n")
        assert uaserver(["run", "-c", str(conf)]) == 2


def test_cli_replay_exit_codes(tmp_path, capsys):
    assert uaserver(["replay", str(CAPTURES / "write100")]) == 0
    assert "divergences=0" in capsys.readouterr().out
    broken = tmp_path / "cap"
    write_capture(broken, altered(4, flip_service_result))
    assert uaserver(["replay", str(broken)]) == 1
    assert "ServiceResult" in capsys.readouterr().out
    os.remove(broken / "manifest.txt")
    assert uaserver(["replay", str(broken)]) == 2


def test_recorded_capture_survives_copy(tmp_path):
    shutil.copytree(CAPTURES / "read100", tmp_path / "c")
    assert replay(tmp_path / "c").passed
