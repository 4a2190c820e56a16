"""Durable append-only log with deterministic replay.

One file of length-prefixed canonical-JSON records. Each record wraps a
payload (an accepted command, an emitted event, or an audit note) with a
per-collaboration contiguous sequence number and a CRC32 checksum of the
payload bytes. A truncated or corrupt tail never loses the prior records:
reading stops at the last valid record and reports the first bad offset.
"""

from __future__ import annotations

import io
import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from typing import Optional

from .canonical import canon_bytes
from .errors import CorruptLog

_LEN = struct.Struct(">I")


@dataclass(frozen=True, kw_only=True)
class LogRecord:
    seq: int                  # contiguous per collaboration, over all record types
    collaboration_id: str
    type: str                 # "command" | "event" | "audit"
    payload: dict
    checksum: int             # CRC32 of the canonical payload bytes

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "collaborationId": self.collaboration_id,
            "type": self.type,
            "payload": self.payload,
            "checksum": self.checksum,
        }


def make_record(seq: int, collaboration_id: str, type: str, payload: dict) -> LogRecord:
    return LogRecord(seq=seq, collaboration_id=collaboration_id, type=type,
                     payload=payload, checksum=zlib.crc32(canon_bytes(payload)))


@dataclass
class Corruption:
    offset: int   # byte offset of the first bad record
    reason: str


class LogStore:
    """Single-appender log file; appends are flushed (and fsynced) before
    the engine makes the command's effects visible."""

    def __init__(self, path: str, fsync: bool = True):
        self.path = str(path)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._fh = open(self.path, "ab")

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def append(self, record: LogRecord) -> None:
        data = canon_bytes(record.to_json())
        frame = _LEN.pack(len(data)) + data
        with self._lock:
            self._fh.write(frame)
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())

    def read_all(self) -> tuple[list, Optional[Corruption]]:
        """All valid records in order, plus corruption info for a bad tail."""
        records: list[LogRecord] = []
        try:
            fh = open(self.path, "rb")
        except FileNotFoundError:
            return records, None
        with fh:
            offset = 0
            while True:
                header = fh.read(_LEN.size)
                if not header:
                    return records, None
                if len(header) < _LEN.size:
                    return records, Corruption(offset, "truncated length prefix")
                (length,) = _LEN.unpack(header)
                data = fh.read(length)
                if len(data) < length:
                    return records, Corruption(offset, "truncated record body")
                try:
                    obj = json.loads(data.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    return records, Corruption(offset, "undecodable record")
                try:
                    record = LogRecord(
                        seq=obj["seq"], collaboration_id=obj["collaborationId"],
                        type=obj["type"], payload=obj["payload"], checksum=obj["checksum"],
                    )
                except (KeyError, TypeError):
                    return records, Corruption(offset, "malformed record")
                if zlib.crc32(canon_bytes(record.payload)) != record.checksum:
                    return records, Corruption(offset, "checksum mismatch")
                records.append(record)
                offset += _LEN.size + length

    def read_or_raise(self) -> list:
        records, corruption = self.read_all()
        if corruption is not None:
            raise CorruptLog(corruption.offset, corruption.reason)
        return records


def verify_contiguous(records: list) -> None:
    """Per-collaboration record sequences must be gap-free from 1."""
    expected: dict[str, int] = {}
    for r in records:
        want = expected.get(r.collaboration_id, 0) + 1
        if r.seq != want:
            raise CorruptLog(0, f"sequence gap for {r.collaboration_id}: "
                                f"got {r.seq}, expected {want}")
        expected[r.collaboration_id] = r.seq


# -- snapshots -----------------------------------------------------------------

def write_snapshot(path: str, state: dict) -> None:
    data = canon_bytes(state)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_snapshot(path: str) -> Optional[dict]:
    try:
        with open(path, "rb") as fh:
            return json.load(io.TextIOWrapper(fh, encoding="utf-8"))
    except FileNotFoundError:
        return None
