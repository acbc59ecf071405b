"""Event records and their canonical JSONL wire format.

One event per line, UTF-8, keys serialized in sorted order so that
serialize(parse(line)) is byte-identical for every valid line. Timestamps are
UTC with millisecond precision ("2024-01-01T00:00:00.000Z").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any


class EventKind(str, Enum):
    GROUP_CREATED = "GROUP_CREATED"
    MEMBER_JOINED = "MEMBER_JOINED"
    COMMIT = "COMMIT"
    MESSAGE = "MESSAGE"
    REACTION = "REACTION"
    NOTIFICATION = "NOTIFICATION"
    APP_OPEN = "APP_OPEN"


def format_ts(t: datetime) -> str:
    """Render an aware datetime as canonical UTC text, truncated to ms."""
    if t.tzinfo is None:
        raise ValueError("naive datetime")
    t = t.astimezone(timezone.utc)
    ms = t.microsecond // 1000
    return f"{t.year:04d}-{t.month:02d}-{t.day:02d}T{t.hour:02d}:{t.minute:02d}:{t.second:02d}.{ms:03d}Z"


def parse_ts(s: str) -> datetime:
    if not s.endswith("Z"):
        raise ValueError(f"timestamp not UTC: {s!r}")
    body = s[:-1]
    dt = datetime.fromisoformat(body)
    if dt.tzinfo is not None:
        raise ValueError(f"unexpected offset in timestamp: {s!r}")
    return dt.replace(tzinfo=timezone.utc)


@dataclass
class EventRecord:
    seq: int
    at: datetime
    kind: EventKind
    payload: dict[str, Any] = field(default_factory=dict)

    def to_line(self) -> str:
        doc = {
            "seq": self.seq,
            "at": format_ts(self.at),
            "kind": self.kind.value,
            "payload": self.payload,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class CorruptRecord(ValueError):
    """Raised when a log line cannot be parsed; carries the 1-based position."""

    def __init__(self, position: int, reason: str):
        super().__init__(f"corrupt record at line {position}: {reason}")
        self.position = position


def parse_line(line: str, position: int = 0) -> EventRecord:
    try:
        doc = json.loads(line)
        return EventRecord(
            seq=int(doc["seq"]),
            at=parse_ts(doc["at"]),
            kind=EventKind(doc["kind"]),
            payload=doc["payload"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptRecord(position, str(exc)) from exc
