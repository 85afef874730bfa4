"""Tests for the stats stream codec and channel framing."""

import io

import numpy as np
import pytest

from tests.conftest import SNAPSHOT_LINES
from utils.statsproto import (
    ChannelClosed,
    MalformedLine,
    StatsChannel,
    StatsEvent,
    encode_event,
    parse_line,
    read_available,
)

RID_ALPHABET = [chr(c) for c in range(33, 127) if chr(c) != ";"]


class ChunkedStream:
    """Byte stream that hands out its payload in caller-chosen chunk sizes."""

    def __init__(self, payload: bytes, sizes):
        self.payload = payload
        self.sizes = list(sizes)
        self.pos = 0

    def read1(self, n: int = -1) -> bytes:
        if self.pos >= len(self.payload):
            return b""
        size = self.sizes.pop(0) if self.sizes else 1
        chunk = self.payload[self.pos:self.pos + size]
        self.pos += len(chunk)
        return chunk


def random_events(rng: np.random.Generator, count: int):
    events = []
    for _ in range(count):
        width = int(rng.integers(1, 9))
        rid = "".join(rng.choice(RID_ALPHABET, size=width))
        events.append(StatsEvent(int(rng.integers(0, 2 ** 31)), rid, int(rng.integers(0, 2 ** 63))))
    return events


def test_encode_snapshot_lines():
    assert encode_event(StatsEvent(75, "ixI.", 1498060927539)) == "75;ixI.;1498060927539\n"
    assert encode_event(StatsEvent(0, "aaaa", 0)) == "0;aaaa;0\n"
    assert encode_event(StatsEvent(77, "1J.D", 1498060928023)) == "77;1J.D;1498060928023\n"


def test_parse_snapshot_line():
    assert parse_line("78;579[;1498060927954") == StatsEvent(78, "579[", 1498060927954)


def test_parse_tolerates_terminators():
    assert parse_line("78;579[;1498060927954\n") == StatsEvent(78, "579[", 1498060927954)
    assert parse_line(b"78;579[;1498060927954\r\n") == StatsEvent(78, "579[", 1498060927954)


@pytest.mark.parametrize("line", ["78;;123", "78;abcd", "x;abcd;1", "78;abcd;-5", "78;ab;cd;1", "", "-1;abcd;1"])
def test_parse_rejects_malformed(line):
    with pytest.raises(MalformedLine):
        parse_line(line)


def test_parse_rejects_timestamp_beyond_64_bits():
    with pytest.raises(MalformedLine):
        parse_line(f"1;abcd;{2 ** 64}")
    assert parse_line(f"1;abcd;{2 ** 64 - 1}").timestamp_ms == 2 ** 64 - 1


@pytest.mark.parametrize("rid", ["", "a;b", "ab\n", "ab\r"])
def test_event_rejects_bad_request_ids(rid):
    with pytest.raises(ValueError):
        StatsEvent(1, rid, 1)


def test_round_trip_random_events():
    rng = np.random.default_rng(7)
    for event in random_events(rng, 10_000):
        assert parse_line(encode_event(event)) == event


def test_snapshot_elapsed_time_of_finished_request():
    events = [parse_line(line) for line in SNAPSHOT_LINES]
    begin, end = events[1], events[5]
    assert begin.request_id == end.request_id == "1J.D"
    assert end.timestamp_ms - begin.timestamp_ms == 70


def test_channel_reads_snapshot_in_order(snapshot_bytes):
    channel = StatsChannel(io.BytesIO(snapshot_bytes))
    events = read_available(channel)
    assert [encode_event(e).rstrip("\n") for e in events] == SNAPSHOT_LINES


def test_channel_keeps_partial_line():
    channel = StatsChannel(io.BytesIO(b"75;ixI.;1498060927539\n77;1J"))
    events = channel.read_available()
    assert events == [StatsEvent(75, "ixI.", 1498060927539)]
    assert channel.pending_bytes == len(b"77;1J")


def test_channel_completes_partial_line_on_next_read():
    stream = ChunkedStream(b"75;ixI.;1498060927539\n77;1J.D;1498060927953\n", [26, 100])
    channel = StatsChannel(stream)
    assert channel.read_available() == [StatsEvent(75, "ixI.", 1498060927539)]
    assert channel.read_available() == [StatsEvent(77, "1J.D", 1498060927953)]
    with pytest.raises(ChannelClosed):
        channel.read_available()


def test_closed_empty_channel():
    with pytest.raises(ChannelClosed):
        StatsChannel(io.BytesIO(b"")).read_available()


def test_partial_line_at_close_is_dropped():
    channel = StatsChannel(io.BytesIO(b"77;1J"))
    with pytest.raises(ChannelClosed):
        channel.read_available()
    assert channel.pending_bytes == 0


def test_malformed_lines_are_skipped_and_recorded():
    channel = StatsChannel(io.BytesIO(b"1;aaaa;5\ngarbage\n\n2;bbbb;6\r\n"))
    events = channel.read_available()
    assert events == [StatsEvent(1, "aaaa", 5), StatsEvent(2, "bbbb", 6)]
    assert list(channel.rejected) == ["garbage"]
    assert channel.rejected_count == 1


def test_framing_survives_arbitrary_chunking():
    rng = np.random.default_rng(11)
    events = random_events(rng, 500)
    payload = "".join(encode_event(e) for e in events).encode("ascii")
    sizes = rng.integers(1, 40, size=len(payload)).tolist()

    channel = StatsChannel(ChunkedStream(payload, sizes))
    received = []
    with pytest.raises(ChannelClosed):
        while True:
            received.extend(channel.read_available())
    assert received == events


def test_rejected_lines_are_bounded():
    payload = b"".join(f"bad line {i}\n".encode() for i in range(50)) + b"1;aaaa;5\n"
    channel = StatsChannel(io.BytesIO(payload), keep_rejected=10)
    assert channel.read_available() == [StatsEvent(1, "aaaa", 5)]
    assert channel.rejected_count == 50
    assert list(channel.rejected) == [f"bad line {i}" for i in range(40, 50)]
