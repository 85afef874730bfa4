"""
Stats stream codec
Reads and writes the `TID;RID;TIMESTAMP` lines an instrumented search server
prints on its pipe, one line per request begin or end.
"""

import logging
import re
from collections import deque
from dataclasses import dataclass
from typing import BinaryIO, Deque, List, Union

logger = logging.getLogger(__name__)

_UINT = re.compile(r"[0-9]+")
_MAX_TIMESTAMP = 2 ** 64
READ_CHUNK_BYTES = 4096
KEEP_REJECTED_LINES = 100


class MalformedLine(ValueError):
    """A stats line that does not decode; the stream is corrupted at that point."""


class ChannelClosed(EOFError):
    """The producer closed its end of the pipe."""


@dataclass(frozen=True)
class StatsEvent:
    thread_id: int
    request_id: str
    timestamp_ms: int

    def __post_init__(self):
        if isinstance(self.thread_id, bool) or not isinstance(self.thread_id, int) or self.thread_id < 0:
            raise ValueError(f"thread_id must be a non-negative integer, got {self.thread_id!r}")
        if not isinstance(self.request_id, str) or not self.request_id:
            raise ValueError("request_id must be a non-empty string")
        if any(ch in self.request_id for ch in ";\n\r"):
            raise ValueError(f"request_id {self.request_id!r} contains a separator or line break")
        if (isinstance(self.timestamp_ms, bool) or not isinstance(self.timestamp_ms, int)
                or not 0 <= self.timestamp_ms < _MAX_TIMESTAMP):
            raise ValueError(f"timestamp_ms must fit in 64 unsigned bits, got {self.timestamp_ms!r}")


def encode_event(event: StatsEvent) -> str:
    return f"{event.thread_id};{event.request_id};{event.timestamp_ms}\n"


def parse_line(line: Union[str, bytes]) -> StatsEvent:
    """
    Decode one stats line

    Args:
        line: text or ASCII bytes, with or without its `\\n` / `\\r\\n` terminator

    Returns:
        The decoded StatsEvent

    Raises:
        MalformedLine: wrong separator count, non-numeric tid/timestamp or empty rid
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("ascii")
        except UnicodeDecodeError as e:
            raise MalformedLine(f"non-ASCII stats line: {line!r}") from e
    if line.endswith("\r\n"):
        line = line[:-2]
    elif line.endswith("\n"):
        line = line[:-1]

    fields = line.split(";")
    if len(fields) != 3:
        raise MalformedLine(f"expected 3 ';'-separated fields, got {len(fields)}: {line!r}")
    tid, rid, ts = fields
    if not _UINT.fullmatch(tid):
        raise MalformedLine(f"thread id is not a decimal integer: {line!r}")
    if not _UINT.fullmatch(ts):
        raise MalformedLine(f"timestamp is not a decimal integer: {line!r}")
    if not rid:
        raise MalformedLine(f"empty request id: {line!r}")
    try:
        return StatsEvent(int(tid), rid, int(ts))
    except ValueError as e:
        raise MalformedLine(str(e)) from e


class StatsChannel:
    """Single-consumer line framer over a byte stream (a named pipe in production)."""

    def __init__(self, stream: BinaryIO, keep_rejected: int = KEEP_REJECTED_LINES):
        self.stream = stream
        self._buffer = b""
        self._read = getattr(stream, "read1", None) or stream.read
        # most recent malformed lines only; rejected_count covers the whole session
        self.rejected: Deque[str] = deque(maxlen=keep_rejected)
        self.rejected_count = 0

    @property
    def pending_bytes(self) -> int:
        return len(self._buffer)

    def read_available(self) -> List[StatsEvent]:
        """
        Block until at least one complete line is buffered, then decode every complete line

        Partial trailing lines stay buffered for the next call. Malformed lines are
        logged, counted in `rejected_count` and skipped; the latest are kept in `rejected`.

        Raises:
            ChannelClosed: end of stream with no complete line left
        """
        while b"\n" not in self._buffer:
            chunk = self._read(READ_CHUNK_BYTES)
            if not chunk:
                if self._buffer:
                    logger.warning(f"Dropping {len(self._buffer)} byte partial line at end of stream")
                    self._buffer = b""
                raise ChannelClosed("stats producer closed the channel")
            self._buffer += chunk

        complete, _, self._buffer = self._buffer.rpartition(b"\n")
        events = []
        for raw in complete.split(b"\n"):
            if not raw.strip():
                continue
            try:
                events.append(parse_line(raw + b"\n"))
            except MalformedLine as e:
                logger.warning(f"Skipping malformed stats line: {e}")
                self.rejected.append(raw.decode("ascii", errors="replace"))
                self.rejected_count += 1
        return events


def read_available(channel: StatsChannel) -> List[StatsEvent]:
    return channel.read_available()
