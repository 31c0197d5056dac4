"""Append-only event log: one encoded message per line, `<seq>\\t<ts>\\t` prefix.

The log is the broker's canonical serialized history.  Sequence numbers
start at 0 and must be contiguous; replay refuses logs with gaps or
corrupt lines and names the offending sequence number.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .wire import DecodeError, Message, decode, encode


class LogIntegrityError(ValueError):
    def __init__(self, detail: str, seq: int | None = None):
        at = f" (seq {seq})" if seq is not None else ""
        super().__init__(f"{detail}{at}")
        self.seq = seq


@dataclass(frozen=True)
class LogRecord:
    seq: int
    ts_ms: int
    msg: Message


def format_record(rec: LogRecord) -> bytes:
    return f"{rec.seq}\t{rec.ts_ms}\t".encode("ascii") + encode(rec.msg)


def parse_line(line: bytes, expected_seq: int) -> LogRecord:
    parts = line.rstrip(b"\n").split(b"\t", 2)
    if len(parts) != 3:
        raise LogIntegrityError("log line is not <seq>\\t<ts>\\t<message>",
                                seq=expected_seq)
    try:
        seq = int(parts[0])
        ts = int(parts[1])
    except ValueError:
        raise LogIntegrityError("non-numeric seq or timestamp",
                                seq=expected_seq) from None
    if seq != expected_seq:
        raise LogIntegrityError(f"missing seq {expected_seq}, found {seq}",
                                seq=expected_seq)
    if ts < 0:
        raise LogIntegrityError("negative timestamp", seq=seq)
    try:
        msg = decode(parts[2])
    except DecodeError as e:
        raise LogIntegrityError(f"corrupt message: {e}", seq=seq) from None
    return LogRecord(seq, ts, msg)


def parse_log(lines: Iterable[bytes]) -> Iterator[LogRecord]:
    expected = 0
    last_ts = 0
    for line in lines:
        if not line.strip():
            raise LogIntegrityError("blank line in log", seq=expected)
        rec = parse_line(line, expected)
        if rec.ts_ms < last_ts:
            raise LogIntegrityError("timestamps went backwards", seq=rec.seq)
        last_ts = rec.ts_ms
        expected += 1
        yield rec


def read_log(path: str | Path) -> list[LogRecord]:
    with open(path, "rb") as fh:
        return list(parse_log(fh))


class EventLog:
    """Append sink used by the broker; optionally streams each line to a file."""

    def __init__(self, path: str | Path | None = None):
        self.records: list[LogRecord] = []
        self._fh = open(path, "wb") if path is not None else None

    def append(self, ts_ms: int, msg: Message) -> LogRecord:
        rec = LogRecord(len(self.records), ts_ms, msg)
        self.records.append(rec)
        if self._fh is not None:
            self._fh.write(format_record(rec))
            self._fh.flush()
        return rec

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def to_bytes(self) -> bytes:
        return b"".join(format_record(r) for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LogRecord]:
        return iter(self.records)
