"""Append-only event logs with deterministic replay.

One JSONL file per group (`<group_id>.events.jsonl`) plus a `manifest.json`
listing every group's configuration. The log is the single source of truth:
live state is a fold over it, and analytics read it directly.
"""

from __future__ import annotations

import json
import os
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional

from . import core
from .events import CorruptRecord, EventKind, EventRecord, parse_line

MANIFEST_NAME = "manifest.json"


class EventLog:
    """Single-writer append-only log for one group.

    `append` validates the event against the replayed state before writing,
    so an accepted log always replays cleanly.
    """

    def __init__(self, config: core.GroupConfig, path: Optional[Path] = None):
        self.config = config
        self.path = path
        self.records: list[EventRecord] = []
        self.state = core.new_group_state(config)

    # -- construction ---------------------------------------------------------

    @classmethod
    def create(cls, config: core.GroupConfig, created_at: datetime,
               path: Optional[Path] = None) -> "EventLog":
        log = cls(config, path)
        log.append(EventRecord(0, created_at, EventKind.GROUP_CREATED,
                               {"config": config.to_json_dict()}))
        return log

    @classmethod
    def load(cls, path: Path, config: Optional[core.GroupConfig] = None) -> "EventLog":
        lines = path.read_text(encoding="utf-8").splitlines()
        if config is None:
            first = parse_line(lines[0], 1)
            if first.kind is not EventKind.GROUP_CREATED:
                raise CorruptRecord(1, "log does not start with GROUP_CREATED")
            config = core.GroupConfig.from_json_dict(first.payload["config"])
        log = cls(config, path)
        for i, line in enumerate(lines, start=1):
            record = parse_line(line, i)
            if record.seq != log.state.last_seq + 1:
                raise CorruptRecord(i, f"seq {record.seq} breaks monotone order")
            if log.state.last_at is not None and record.at < log.state.last_at:
                raise CorruptRecord(i, "timestamp decreases")
            record_applied = record
            log.records.append(record_applied)
            log.state.apply(record_applied)
        return log

    # -- writes ----------------------------------------------------------------

    def append(self, event: EventRecord) -> int:
        if self.state.last_at is not None and event.at < self.state.last_at:
            raise core.ValidationError(
                f"timestamp {event.at} precedes log head {self.state.last_at}"
            )
        self.state.validate_event(event)
        event.seq = self.state.last_seq + 1
        self.records.append(event)
        self.state.apply(event)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(event.to_line() + "\n")
        return event.seq

    # -- reads -----------------------------------------------------------------

    def replay(self, up_to_seq: Optional[int] = None) -> core.GroupState:
        state = core.new_group_state(self.config)
        for record in self.records:
            if up_to_seq is not None and record.seq > up_to_seq:
                break
            state.apply(record)
        return state

    def events(self) -> list[EventRecord]:
        return list(self.records)


class GroupStore:
    """Directory of group logs plus the manifest of their configurations."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.logs: dict[str, EventLog] = {}
        self._configs: dict[str, core.GroupConfig] = {}
        self._load_manifest()

    # -- manifest ---------------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def _load_manifest(self) -> None:
        if not self.manifest_path.exists():
            return
        doc = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        for entry in doc.get("groups", []):
            cfg = core.GroupConfig.from_json_dict(entry)
            self._configs[cfg.group_id] = cfg

    def _write_manifest(self) -> None:
        doc = {"groups": [cfg.to_json_dict() for cfg in self._configs.values()]}
        tmp = self.manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                       encoding="utf-8")
        os.replace(tmp, self.manifest_path)

    def configs(self) -> dict[str, core.GroupConfig]:
        return dict(self._configs)

    # -- group lifecycle ----------------------------------------------------------

    def log_path(self, group_id: str) -> Path:
        return self.root / f"{group_id}.events.jsonl"

    def create_group(self, config: core.GroupConfig, created_at: datetime) -> EventLog:
        config.validate()
        if config.group_id in self._configs:
            raise core.ValidationError(f"group {config.group_id!r} already exists")
        log = EventLog.create(config, created_at, self.log_path(config.group_id))
        self.logs[config.group_id] = log
        self._configs[config.group_id] = config
        self._write_manifest()
        return log

    def open_log(self, group_id: str) -> EventLog:
        if group_id in self.logs:
            return self.logs[group_id]
        cfg = self._configs.get(group_id)
        path = self.log_path(group_id)
        if not path.exists():
            raise core.ValidationError(f"no log for group {group_id!r}")
        log = EventLog.load(path, cfg)
        self.logs[group_id] = log
        self._configs.setdefault(group_id, log.config)
        return log

    def group_ids(self) -> list[str]:
        ids = set(self._configs)
        for p in self.root.glob("*.events.jsonl"):
            ids.add(p.name[: -len(".events.jsonl")])
        return sorted(ids)

    def all_logs(self) -> Iterable[EventLog]:
        for gid in self.group_ids():
            yield self.open_log(gid)
