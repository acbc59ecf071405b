"""Live group-chat service: sessions, endpoint operations, clock processing.

All mutations funnel through the per-group single-writer log. Reads never
cache gating decisions: every feed request re-evaluates `can_read` at the
current clock instant. Advancing the clock materializes cycle boundaries
(auto-renewals when enabled), evaluates the notification rules over the
elapsed window, appends the results to the log, and pushes events to
subscribers.

Notification records are stamped with their delivery time; the trigger
instant travels in the payload (`fired_at`), keeping log timestamps
monotone.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Optional

from . import core
from .clock import Clock, VirtualClock
from .core import (
    BannerState,
    CommitVia,
    Condition,
    GroupConfig,
    MessageKind,
    ReactionKind,
)
from .events import EventKind, EventRecord, format_ts, parse_ts
from .notify import Notification, RuleEngine
from .store import GroupStore


class AuthError(core.ChatError):
    code = "INVALID_TOKEN"


class UnknownGroup(core.ChatError):
    code = "UNKNOWN_GROUP"


@dataclass(frozen=True)
class Session:
    token: str
    group_id: str
    member_id: str


@dataclass
class Subscription:
    token: str
    callback: Callable[[dict[str, Any]], None]
    last_banner: Optional[BannerState] = None


@dataclass
class ObscuredView:
    group_name: str
    committed_member_count: int


def _record_dict(record: EventRecord) -> dict[str, Any]:
    return {
        "seq": record.seq,
        "at": format_ts(record.at),
        "kind": record.kind.value,
        "payload": record.payload,
    }


def message_dict(msg: core.Message) -> dict[str, Any]:
    return {
        "message_id": msg.message_id,
        "sender_id": msg.sender_id,
        "sent_at": format_ts(msg.sent_at),
        "kind": msg.kind.value,
        "body": msg.body,
        "seq": msg.seq,
    }


def banner_dict(banner: BannerState) -> dict[str, Any]:
    return {"kind": banner.kind.value, "days_since_post": banner.days_since_post}


def commitment_dict(rec: core.CommitmentRecord) -> dict[str, Any]:
    return {
        "member_id": rec.member_id,
        "cycle": rec.cycle,
        "committed_at": format_ts(rec.committed_at),
        "via": rec.via.value,
        "null_commit": rec.null_commit,
        "messages_sent": rec.messages_sent,
    }


@dataclass
class _Runtime:
    log: Any
    engine: RuleEngine
    last_processed: datetime
    engine_buffer: list[EventRecord] = field(default_factory=list)
    delivered: set[tuple[str, str, datetime]] = field(default_factory=set)
    subscriptions: dict[str, Subscription] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)
    message_n: int = 0
    reaction_n: int = 0


class ChatService:
    """Endpoint surface shared by the HTTP server, the CLI, and sim agents."""

    def __init__(self, store: GroupStore, clock: Clock):
        self.store = store
        self.clock = clock
        self.sessions: dict[str, Session] = {}
        self.runtimes: dict[str, _Runtime] = {}
        for gid in store.group_ids():
            self._load_runtime(gid)

    # -- runtime management ----------------------------------------------------

    def _load_runtime(self, group_id: str) -> _Runtime:
        log = self.store.open_log(group_id)
        engine = RuleEngine(log.config)
        delivered: set[tuple[str, str, datetime]] = set()
        last = log.config.epoch
        for record in log.records:
            if record.kind is EventKind.NOTIFICATION:
                fired = parse_ts(record.payload["fired_at"])
                delivered.add((record.payload["member_id"], record.payload["rule_id"], fired))
            else:
                engine.observe(record)
            last = max(last, record.at)
        rt = _Runtime(log=log, engine=engine, last_processed=last, delivered=delivered)
        rt.message_n = len(log.state.messages)
        rt.reaction_n = len(log.state.reactions)
        self.runtimes[group_id] = rt
        return rt

    def _runtime(self, group_id: str) -> _Runtime:
        rt = self.runtimes.get(group_id)
        if rt is None:
            raise UnknownGroup(f"unknown group {group_id!r}")
        return rt

    def _session(self, token: str) -> Session:
        session = self.sessions.get(token)
        if session is None:
            raise AuthError("invalid session token")
        return session

    def _append(self, rt: _Runtime, event: EventRecord) -> EventRecord:
        rt.log.append(event)
        if event.kind is not EventKind.NOTIFICATION:
            rt.engine_buffer.append(event)
        return event

    def now(self) -> datetime:
        return self.clock.now()

    # -- provisioning ------------------------------------------------------------

    def create_group(self, config: GroupConfig) -> None:
        log = self.store.create_group(config, max(self.now(), config.epoch))
        self._load_runtime(config.group_id)
        # GROUP_CREATED is already in the log; runtime loaded from it
        assert log is self.runtimes[config.group_id].log

    def list_groups(self) -> list[dict[str, Any]]:
        out = []
        for gid in sorted(self.runtimes):
            rt = self.runtimes[gid]
            cfg = rt.log.config
            out.append({
                "group_id": gid,
                "name": cfg.display_name,
                "condition": cfg.condition.value,
                "cycle_seconds": int(cfg.cycle_length.total_seconds()),
                "member_count": len(rt.log.state.members),
            })
        return out

    # -- endpoints ----------------------------------------------------------------

    def join_group(self, group_id: str, member_id: str, display_name: str = "") -> Session:
        rt = self._runtime(group_id)
        with rt.lock:
            state = rt.log.state
            if member_id not in state.members:
                at = max(self.now(), rt.log.config.epoch)
                self._append(rt, state.make_join_event(member_id, display_name or member_id, at))
            session = Session(token=uuid.uuid4().hex, group_id=group_id, member_id=member_id)
            self.sessions[session.token] = session
            return session

    def get_feed(self, token: str, since_seq: int = 0):
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            state = rt.log.state
            at = self.now()
            if state.can_read(session.member_id, at):
                return {
                    "kind": "messages",
                    "messages": [message_dict(m) for m in state.feed_since(since_seq)],
                    "last_seq": state.last_seq,
                }
            view = ObscuredView(
                group_name=state.config.display_name,
                committed_member_count=state.committed_member_count(at),
            )
            return {
                "kind": "obscured",
                "group_name": view.group_name,
                "committed_member_count": view.committed_member_count,
            }

    def do_commit(self, token: str, target_cycle: Optional[int] = None,
                  null_commit: bool = False) -> dict[str, Any]:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            state = rt.log.state
            at = self.now()
            if target_cycle is None:
                target_cycle = state.next_uncommitted_cycle(session.member_id, at)
                if target_cycle is None:
                    current = core.cycle_of(at, state.config)
                    return commitment_dict(state.ledger[(session.member_id, current)])
            try:
                event = state.make_commit_event(
                    session.member_id, target_cycle, CommitVia.BUTTON, at, null_commit)
            except core.DuplicateCommit:
                return commitment_dict(state.ledger[(session.member_id, target_cycle)])
            self._append(rt, event)
            self._push_banners(rt)
            return commitment_dict(state.ledger[(session.member_id, target_cycle)])

    def send_message(self, token: str, body: str,
                     kind: MessageKind = MessageKind.TEXT) -> dict[str, Any]:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            state = rt.log.state
            at = self.now()
            rt.message_n += 1
            message_id = f"{session.group_id}-m{rt.message_n}"
            event = state.make_message_event(message_id, session.member_id, body, at, kind)
            self._append(rt, event)
            msg = state.messages_by_id[message_id]
            self._push_message(rt, msg)
            self._push_banners(rt)
            return message_dict(msg)

    def send_reaction(self, token: str, message_id: str, kind: ReactionKind,
                      emoji: Optional[str] = None) -> dict[str, Any]:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            state = rt.log.state
            at = self.now()
            rt.reaction_n += 1
            reaction_id = f"{session.group_id}-r{rt.reaction_n}"
            event = state.make_reaction_event(
                reaction_id, message_id, session.member_id, kind, at, emoji)
            self._append(rt, event)
            commitment = None
            if kind is ReactionKind.COMMIT_REACTION and \
                    state.config.condition is Condition.COMMIT:
                nxt = state.next_uncommitted_cycle(session.member_id, at)
                if nxt is not None:
                    self._append(rt, state.make_commit_event(
                        session.member_id, nxt, CommitVia.REACTION, at))
                    commitment = commitment_dict(state.ledger[(session.member_id, nxt)])
            self._push(rt, {"type": "reaction", "record": _record_dict(event)})
            self._push_banners(rt)
            return {
                "reaction_id": reaction_id,
                "message_id": message_id,
                "reactor_id": session.member_id,
                "kind": kind.value,
                "emoji": emoji,
                "at": format_ts(at),
                "commitment": commitment,
            }

    def get_members(self, token: str) -> list[dict[str, Any]]:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            rows = rt.log.state.membership_view(self.now())
            return [{
                "member_id": r.member_id,
                "display_name": r.display_name,
                "last_posted_at": format_ts(r.last_posted_at) if r.last_posted_at else None,
                "currently_committed": r.currently_committed,
            } for r in rows]

    def get_banner(self, token: str) -> dict[str, Any]:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            return banner_dict(rt.log.state.banner_state(session.member_id, self.now()))

    def open_app(self, token: str) -> None:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            state = rt.log.state
            self._append(rt, state.make_open_event(session.member_id, self.now()))

    def get_notifications(self, token: str, since_seq: int = 0) -> list[dict[str, Any]]:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            out = []
            for record in rt.log.records:
                if record.kind is EventKind.NOTIFICATION and record.seq > since_seq \
                        and record.payload["member_id"] == session.member_id:
                    out.append(_record_dict(record))
            return out

    # -- push channel ------------------------------------------------------------

    def subscribe(self, token: str, callback: Callable[[dict[str, Any]], None]) -> Subscription:
        session = self._session(token)
        rt = self._runtime(session.group_id)
        with rt.lock:
            sub = Subscription(token=token, callback=callback)
            sub.last_banner = rt.log.state.banner_state(session.member_id, self.now())
            rt.subscriptions[token] = sub
            return sub

    def unsubscribe(self, token: str) -> None:
        session = self.sessions.get(token)
        if session is None:
            return
        rt = self.runtimes.get(session.group_id)
        if rt is not None:
            rt.subscriptions.pop(token, None)

    def _push(self, rt: _Runtime, event: dict[str, Any],
              member_id: Optional[str] = None) -> None:
        for sub in list(rt.subscriptions.values()):
            session = self.sessions[sub.token]
            if member_id is not None and session.member_id != member_id:
                continue
            sub.callback(event)

    def _push_message(self, rt: _Runtime, msg: core.Message) -> None:
        """Fan a new message out to subscribers, hiding the body from anyone
        who cannot currently read the group."""
        state = rt.log.state
        at = self.now()
        for sub in list(rt.subscriptions.values()):
            session = self.sessions[sub.token]
            visible = state.can_read(session.member_id, at)
            record = {
                "seq": msg.seq,
                "at": format_ts(msg.sent_at),
                "kind": EventKind.MESSAGE.value,
                "payload": {
                    "message_id": msg.message_id,
                    "sender_id": msg.sender_id,
                    "kind": msg.kind.value,
                    "body": msg.body if visible else None,
                },
            }
            sub.callback({
                "type": "message",
                "content_visible": visible,
                "record": record,
            })

    def _push_banners(self, rt: _Runtime) -> None:
        at = self.now()
        state = rt.log.state
        for sub in list(rt.subscriptions.values()):
            session = self.sessions[sub.token]
            banner = state.banner_state(session.member_id, at)
            if banner != sub.last_banner:
                sub.last_banner = banner
                sub.callback({"type": "banner", "at": format_ts(at),
                              "banner": banner_dict(banner)})

    # -- clock processing -----------------------------------------------------------

    def advance_to(self, to: datetime) -> list[Notification]:
        """Move the virtual clock and process every group up to `to`."""
        if isinstance(self.clock, VirtualClock):
            self.clock.advance_to(to)
        delivered: list[Notification] = []
        for gid in sorted(self.runtimes):
            delivered.extend(self.process_group(gid, to))
        return delivered

    def tick(self) -> list[Notification]:
        """Process all groups up to the current wall-clock instant."""
        now = self.clock.now()
        out = []
        for gid in sorted(self.runtimes):
            out.extend(self.process_group(gid, now))
        return out

    def process_group(self, group_id: str, to: datetime) -> list[Notification]:
        rt = self._runtime(group_id)
        with rt.lock:
            cfg = rt.log.config
            state = rt.log.state
            if to <= rt.last_processed:
                return []

            # Cycle boundaries crossed in (last_processed, to]: auto-renewals
            # first so boundary-instant triggers see them.
            boundaries: list[int] = []
            if to >= cfg.epoch:
                k = core.cycle_of(rt.last_processed, cfg) + 1 \
                    if rt.last_processed >= cfg.epoch else 0
                while core.cycle_start(k, cfg) <= to:
                    if core.cycle_start(k, cfg) > rt.last_processed:
                        boundaries.append(k)
                    k += 1
            if cfg.auto_renew and cfg.condition is Condition.COMMIT:
                for k in boundaries:
                    at = core.cycle_start(k, cfg)
                    for member_id in state.members:
                        if state.committed_for(member_id, k):
                            continue
                        if state.committed_for(member_id, k - 1) and \
                                state.fulfilled(member_id, k - 1):
                            self._append(rt, state.make_commit_event(
                                member_id, k, CommitVia.AUTO_RENEW, at))

            window_events = [e for e in rt.engine_buffer if e.at < to]
            rt.engine_buffer = [e for e in rt.engine_buffer if e.at >= to]
            notifications = rt.engine.window(window_events, rt.last_processed, to)
            rt.last_processed = to

            fresh: list[Notification] = []
            for n in notifications:
                key = (n.member_id, n.rule_id, n.fired_at)
                if key in rt.delivered:
                    continue
                rt.delivered.add(key)
                payload = n.to_event_payload()
                payload["fired_at"] = format_ts(n.fired_at)
                record = EventRecord(0, to, EventKind.NOTIFICATION, payload)
                self._append(rt, record)
                self._push(rt, {"type": "notification", "record": _record_dict(record)},
                           member_id=n.member_id)
                fresh.append(n)

            for k in boundaries:
                self._push(rt, {"type": "cycle_started", "cycle": k,
                                "at": format_ts(core.cycle_start(k, cfg))})
            self._push_banners(rt)
            return fresh


def build_service(log_dir, virtual_start: Optional[datetime] = None,
                  clock: Optional[Clock] = None) -> ChatService:
    from .clock import WallClock

    store = GroupStore(log_dir)
    if clock is None:
        clock = VirtualClock(virtual_start) if virtual_start else WallClock()
    return ChatService(store, clock)

