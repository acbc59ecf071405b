"""Domain model and commitment state machine.

Groups run on synchronized fixed-length cycles indexed from the group epoch.
Members promise a minimum number of messages per cycle; holding a commitment
for the current cycle is what grants read access in commitment-condition
groups. Control-condition groups keep the same chat surface with the gating
mechanism disabled.

State is event-sourced: `GroupState.apply` folds validated events, and the
`make_*_event` helpers validate a command against the current state and build
the event it would append. Replay of a log therefore reproduces live state
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Optional

from .events import EventKind, EventRecord, format_ts, parse_ts


class Condition(str, Enum):
    COMMIT = "COMMIT"
    CONTROL = "CONTROL"


class Enforcement(str, Enum):
    SOCIAL_ONLY = "SOCIAL_ONLY"
    FORFEIT_AFTER_N = "FORFEIT_AFTER_N"


class CommitVia(str, Enum):
    BUTTON = "BUTTON"
    REACTION = "REACTION"
    AUTO_RENEW = "AUTO_RENEW"


class MessageKind(str, Enum):
    TEXT = "TEXT"
    IMAGE = "IMAGE"


class ReactionKind(str, Enum):
    EMOJI = "EMOJI"
    COMMIT_REACTION = "COMMIT_REACTION"


# ---------------------------------------------------------------------------
# Errors. Each carries a stable code that the API surfaces verbatim.


class ChatError(Exception):
    code = "ERROR"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class BeforeGroupStart(ChatError):
    code = "BEFORE_GROUP_START"


class UnknownMember(ChatError):
    code = "UNKNOWN_MEMBER"


class UnknownMessage(ChatError):
    code = "UNKNOWN_MESSAGE"


class RejectAheadLimit(ChatError):
    code = "REJECT_AHEAD_LIMIT"


class RejectPastCycle(ChatError):
    code = "REJECT_PAST_CYCLE"


class RejectWrongCondition(ChatError):
    code = "REJECT_WRONG_CONDITION"


class RejectNotCommitted(ChatError):
    code = "REJECT_NOT_COMMITTED"


class DuplicateCommit(ChatError):
    code = "DUPLICATE_COMMIT"


class ValidationError(ChatError):
    code = "VALIDATION_ERROR"


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class GroupConfig:
    group_id: str
    epoch: datetime
    condition: Condition = Condition.COMMIT
    name: str = ""
    cycle_length: timedelta = timedelta(hours=48)
    expectation_count: int = 1
    commit_ahead_limit: int = 1
    null_commit_allowed: bool = False
    enforcement: Enforcement = Enforcement.SOCIAL_ONLY
    forfeit_after: Optional[int] = None
    auto_renew: bool = False
    urgency_fraction: float = 0.75
    # Group-local clock, used by "morning of a new cycle" reminders.
    utc_offset_minutes: int = 0
    morning_hour: int = 9

    @property
    def display_name(self) -> str:
        return self.name or self.group_id

    def validate(self) -> None:
        if self.cycle_length <= timedelta(0):
            raise ValidationError("cycle_length must be positive")
        if self.expectation_count < 1:
            raise ValidationError("expectation_count must be >= 1")
        if self.commit_ahead_limit < 0:
            raise ValidationError("commit_ahead_limit must be >= 0")
        if not (0.0 < self.urgency_fraction < 1.0):
            raise ValidationError("urgency_fraction must be in (0, 1)")
        if self.epoch.tzinfo is None:
            raise ValidationError("epoch must be timezone-aware")
        if self.enforcement is Enforcement.FORFEIT_AFTER_N and not self.forfeit_after:
            raise ValidationError("FORFEIT_AFTER_N requires forfeit_after >= 1")
        if not (0 <= self.morning_hour <= 23):
            raise ValidationError("morning_hour must be an hour of day")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "group_id": self.group_id,
            "name": self.name,
            "condition": self.condition.value,
            "epoch": format_ts(self.epoch),
            "cycle_seconds": int(self.cycle_length.total_seconds()),
            "expectation_count": self.expectation_count,
            "commit_ahead_limit": self.commit_ahead_limit,
            "null_commit_allowed": self.null_commit_allowed,
            "enforcement": self.enforcement.value,
            "forfeit_after": self.forfeit_after,
            "auto_renew": self.auto_renew,
            "urgency_fraction": self.urgency_fraction,
            "utc_offset_minutes": self.utc_offset_minutes,
            "morning_hour": self.morning_hour,
        }

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "GroupConfig":
        cfg = cls(
            group_id=doc["group_id"],
            name=doc.get("name", ""),
            condition=Condition(doc.get("condition", "COMMIT")),
            epoch=parse_ts(doc["epoch"]),
            cycle_length=timedelta(seconds=doc.get("cycle_seconds", 48 * 3600)),
            expectation_count=doc.get("expectation_count", 1),
            commit_ahead_limit=doc.get("commit_ahead_limit", 1),
            null_commit_allowed=doc.get("null_commit_allowed", False),
            enforcement=Enforcement(doc.get("enforcement", "SOCIAL_ONLY")),
            forfeit_after=doc.get("forfeit_after"),
            auto_renew=doc.get("auto_renew", False),
            urgency_fraction=doc.get("urgency_fraction", 0.75),
            utc_offset_minutes=doc.get("utc_offset_minutes", 0),
            morning_hour=doc.get("morning_hour", 9),
        )
        cfg.validate()
        return cfg


def cycle_of(t: datetime, cfg: GroupConfig) -> int:
    """Index of the cycle containing t; cycle k spans
    [epoch + k*len, epoch + (k+1)*len)."""
    if t < cfg.epoch:
        raise BeforeGroupStart("before group start")
    return (t - cfg.epoch) // cfg.cycle_length


def cycle_start(k: int, cfg: GroupConfig) -> datetime:
    return cfg.epoch + k * cfg.cycle_length


def cycle_end(k: int, cfg: GroupConfig) -> datetime:
    return cfg.epoch + (k + 1) * cfg.cycle_length


# ---------------------------------------------------------------------------
# Domain records


@dataclass
class CommitmentRecord:
    member_id: str
    cycle: int
    committed_at: datetime
    via: CommitVia
    null_commit: bool = False
    messages_sent: int = 0


@dataclass
class Message:
    message_id: str
    group_id: str
    sender_id: str
    sent_at: datetime
    body: str
    kind: MessageKind = MessageKind.TEXT
    seq: int = 0


@dataclass
class Reaction:
    reaction_id: str
    message_id: str
    reactor_id: str
    kind: ReactionKind
    at: datetime
    emoji: Optional[str] = None


@dataclass
class MemberState:
    member_id: str
    display_name: str
    joined_at: datetime
    last_posted_at: Optional[datetime] = None
    last_opened_at: Optional[datetime] = None


@dataclass(frozen=True)
class MembershipView:
    member_id: str
    display_name: str
    last_posted_at: Optional[datetime]
    currently_committed: bool


class BannerKind(str, Enum):
    NOT_COMMITTED = "NOT_COMMITTED"
    COMMITTED_UNFULFILLED = "COMMITTED_UNFULFILLED"
    COMMITTED_UNFULFILLED_URGENT = "COMMITTED_UNFULFILLED_URGENT"
    COMMITTED_FULFILLED_NO_RENEWAL = "COMMITTED_FULFILLED_NO_RENEWAL"
    COMMITTED_FULFILLED_RENEWED = "COMMITTED_FULFILLED_RENEWED"
    CONTROL_DAYS_SINCE_POST = "CONTROL_DAYS_SINCE_POST"


@dataclass(frozen=True)
class BannerState:
    kind: BannerKind
    days_since_post: Optional[int] = None


@dataclass(frozen=True)
class NotificationEntry:
    member_id: str
    rule_id: str
    at: datetime                      # delivery time (the record timestamp)
    text: str
    content_visible: bool
    fired_at: Optional[datetime] = None  # trigger instant


# ---------------------------------------------------------------------------
# Group state


@dataclass
class GroupState:
    config: GroupConfig
    members: dict[str, MemberState] = field(default_factory=dict)  # join order
    ledger: dict[tuple[str, int], CommitmentRecord] = field(default_factory=dict)
    messages: list[Message] = field(default_factory=list)
    messages_by_id: dict[str, Message] = field(default_factory=dict)
    reactions: list[Reaction] = field(default_factory=list)
    notifications: list[NotificationEntry] = field(default_factory=list)
    last_seq: int = 0
    last_at: Optional[datetime] = None

    # -- queries ------------------------------------------------------------

    def member(self, member_id: str) -> MemberState:
        m = self.members.get(member_id)
        if m is None:
            raise UnknownMember(f"unknown member {member_id!r}")
        return m

    def committed_for(self, member_id: str, cycle: int) -> bool:
        return (member_id, cycle) in self.ledger

    def fulfilled(self, member_id: str, cycle: int) -> bool:
        entry = self.ledger.get((member_id, cycle))
        if entry is None:
            return False
        return entry.null_commit or entry.messages_sent >= self.config.expectation_count

    def can_read(self, member_id: str, at: datetime) -> bool:
        self.member(member_id)
        if self.config.condition is Condition.CONTROL:
            return True
        return self.committed_for(member_id, cycle_of(at, self.config))

    def committed_member_count(self, at: datetime) -> int:
        if self.config.condition is Condition.CONTROL:
            return len(self.members)
        k = cycle_of(at, self.config)
        return sum(1 for m in self.members if self.committed_for(m, k))

    def banner_state(self, member_id: str, at: datetime) -> BannerState:
        member = self.member(member_id)
        cfg = self.config
        if cfg.condition is Condition.CONTROL:
            if member.last_posted_at is None:
                return BannerState(BannerKind.CONTROL_DAYS_SINCE_POST, 0)
            days = (at - member.last_posted_at) // timedelta(days=1)
            return BannerState(BannerKind.CONTROL_DAYS_SINCE_POST, max(0, days))
        k = cycle_of(at, cfg)
        if not self.committed_for(member_id, k):
            return BannerState(BannerKind.NOT_COMMITTED)
        if not self.fulfilled(member_id, k):
            elapsed = (at - cycle_start(k, cfg)) / cfg.cycle_length
            if elapsed >= cfg.urgency_fraction:
                return BannerState(BannerKind.COMMITTED_UNFULFILLED_URGENT)
            return BannerState(BannerKind.COMMITTED_UNFULFILLED)
        if self.committed_for(member_id, k + 1):
            return BannerState(BannerKind.COMMITTED_FULFILLED_RENEWED)
        return BannerState(BannerKind.COMMITTED_FULFILLED_NO_RENEWAL)

    def _forfeited(self, member_id: str, at: datetime) -> bool:
        """True once a member has N consecutive committed-but-unfulfilled
        completed cycles, under FORFEIT_AFTER_N enforcement."""
        cfg = self.config
        n = cfg.forfeit_after or 0
        if cfg.enforcement is not Enforcement.FORFEIT_AFTER_N or n < 1:
            return False
        current = cycle_of(at, cfg)
        run = 0
        for k in range(0, current):  # completed cycles only
            entry = self.ledger.get((member_id, k))
            if entry is not None and not self.fulfilled(member_id, k):
                run += 1
                if run >= n:
                    return True
            else:
                run = 0
        return False

    def membership_view(self, at: datetime) -> list[MembershipView]:
        cfg = self.config
        if cfg.condition is Condition.CONTROL:
            current = None
        else:
            current = cycle_of(at, cfg)
        rows = []
        for m in self.members.values():
            if self._forfeited(m.member_id, at):
                continue
            committed = current is not None and self.committed_for(m.member_id, current)
            rows.append(
                MembershipView(m.member_id, m.display_name, m.last_posted_at, committed)
            )
        return rows

    def feed_since(self, since_seq: int) -> list[Message]:
        return [m for m in self.messages if m.seq > since_seq]

    # -- command validation / event construction -----------------------------
    # Each make_* helper checks preconditions against the current state and
    # returns the event payload it would append (seq is assigned by the log).

    def make_join_event(self, member_id: str, display_name: str, at: datetime) -> EventRecord:
        if member_id in self.members:
            raise ValidationError(f"member {member_id!r} already joined")
        if at < self.config.epoch:
            raise BeforeGroupStart("cannot join before group start")
        return EventRecord(0, at, EventKind.MEMBER_JOINED,
                           {"member_id": member_id, "display_name": display_name})

    def make_commit_event(
        self,
        member_id: str,
        target_cycle: int,
        via: CommitVia,
        at: datetime,
        null_commit: bool = False,
    ) -> EventRecord:
        cfg = self.config
        self.member(member_id)
        if cfg.condition is Condition.CONTROL:
            raise RejectWrongCondition("commitment mechanism disabled in control groups")
        if null_commit and not cfg.null_commit_allowed:
            raise ValidationError("null commitments are not enabled for this group")
        current = cycle_of(at, cfg)
        if target_cycle < current:
            raise RejectPastCycle(f"cycle {target_cycle} already ended")
        if target_cycle > current + cfg.commit_ahead_limit:
            raise RejectAheadLimit(
                f"cycle {target_cycle} exceeds commit-ahead limit "
                f"(current {current}, limit {cfg.commit_ahead_limit})"
            )
        if (member_id, target_cycle) in self.ledger:
            raise DuplicateCommit(f"already committed for cycle {target_cycle}")
        return EventRecord(0, at, EventKind.COMMIT, {
            "member_id": member_id,
            "cycle": target_cycle,
            "via": via.value,
            "null_commit": null_commit,
        })

    def next_uncommitted_cycle(self, member_id: str, at: datetime) -> Optional[int]:
        """Earliest cycle in the allowed commit window without an entry."""
        cfg = self.config
        current = cycle_of(at, cfg)
        for k in range(current, current + cfg.commit_ahead_limit + 1):
            if not self.committed_for(member_id, k):
                return k
        return None

    def make_message_event(
        self,
        message_id: str,
        sender_id: str,
        body: str,
        at: datetime,
        kind: MessageKind = MessageKind.TEXT,
    ) -> EventRecord:
        self.member(sender_id)
        cfg = self.config
        if cfg.condition is Condition.COMMIT:
            if not self.committed_for(sender_id, cycle_of(at, cfg)):
                raise RejectNotCommitted("sender holds no commitment for the current cycle")
        else:
            cycle_of(at, cfg)  # still reject posts before the epoch
        return EventRecord(0, at, EventKind.MESSAGE, {
            "message_id": message_id,
            "sender_id": sender_id,
            "kind": kind.value,
            "body": body,
        })

    def make_reaction_event(
        self,
        reaction_id: str,
        message_id: str,
        reactor_id: str,
        kind: ReactionKind,
        at: datetime,
        emoji: Optional[str] = None,
    ) -> EventRecord:
        self.member(reactor_id)
        if message_id not in self.messages_by_id:
            raise UnknownMessage(f"unknown message {message_id!r}")
        if not self.can_read(reactor_id, at):
            raise RejectNotCommitted("reactor cannot read the group")
        if kind is ReactionKind.EMOJI and not emoji:
            raise ValidationError("emoji reactions need a tag")
        return EventRecord(0, at, EventKind.REACTION, {
            "reaction_id": reaction_id,
            "message_id": message_id,
            "reactor_id": reactor_id,
            "kind": kind.value,
            "emoji": emoji,
        })

    def make_open_event(self, member_id: str, at: datetime) -> EventRecord:
        self.member(member_id)
        return EventRecord(0, at, EventKind.APP_OPEN, {"member_id": member_id})

    def validate_event(self, event: EventRecord) -> None:
        """Re-run command validation for an already-built event."""
        p = event.payload
        if event.kind is EventKind.GROUP_CREATED:
            if self.last_seq != 0 or self.members:
                raise ValidationError("group already created")
        elif event.kind is EventKind.MEMBER_JOINED:
            self.make_join_event(p["member_id"], p.get("display_name", ""), event.at)
        elif event.kind is EventKind.COMMIT:
            self.make_commit_event(p["member_id"], p["cycle"], CommitVia(p["via"]),
                                   event.at, p.get("null_commit", False))
        elif event.kind is EventKind.MESSAGE:
            self.make_message_event(p["message_id"], p["sender_id"], p["body"],
                                    event.at, MessageKind(p["kind"]))
        elif event.kind is EventKind.REACTION:
            self.make_reaction_event(p["reaction_id"], p["message_id"], p["reactor_id"],
                                     ReactionKind(p["kind"]), event.at, p.get("emoji"))
        elif event.kind is EventKind.NOTIFICATION:
            self.member(p["member_id"])
        elif event.kind is EventKind.APP_OPEN:
            self.member(p["member_id"])

    # -- folding -------------------------------------------------------------

    def apply(self, event: EventRecord) -> None:
        p = event.payload
        if event.kind is EventKind.MEMBER_JOINED:
            self.members[p["member_id"]] = MemberState(
                member_id=p["member_id"],
                display_name=p.get("display_name") or p["member_id"],
                joined_at=event.at,
            )
        elif event.kind is EventKind.COMMIT:
            record = CommitmentRecord(
                member_id=p["member_id"],
                cycle=p["cycle"],
                committed_at=event.at,
                via=CommitVia(p["via"]),
                null_commit=p.get("null_commit", False),
            )
            self.ledger[(record.member_id, record.cycle)] = record
        elif event.kind is EventKind.MESSAGE:
            msg = Message(
                message_id=p["message_id"],
                group_id=self.config.group_id,
                sender_id=p["sender_id"],
                sent_at=event.at,
                body=p["body"],
                kind=MessageKind(p["kind"]),
                seq=event.seq,
            )
            self.messages.append(msg)
            self.messages_by_id[msg.message_id] = msg
            member = self.members[msg.sender_id]
            member.last_posted_at = event.at
            member.last_opened_at = event.at
            entry = self.ledger.get((msg.sender_id, cycle_of(event.at, self.config)))
            if entry is not None:
                entry.messages_sent += 1
        elif event.kind is EventKind.REACTION:
            self.reactions.append(Reaction(
                reaction_id=p["reaction_id"],
                message_id=p["message_id"],
                reactor_id=p["reactor_id"],
                kind=ReactionKind(p["kind"]),
                at=event.at,
                emoji=p.get("emoji"),
            ))
            self.members[p["reactor_id"]].last_opened_at = event.at
        elif event.kind is EventKind.NOTIFICATION:
            fired = p.get("fired_at")
            self.notifications.append(NotificationEntry(
                member_id=p["member_id"],
                rule_id=p["rule_id"],
                at=event.at,
                text=p["text"],
                content_visible=p.get("content_visible", True),
                fired_at=parse_ts(fired) if fired else None,
            ))
        elif event.kind is EventKind.APP_OPEN:
            self.members[p["member_id"]].last_opened_at = event.at
        self.last_seq = event.seq
        self.last_at = event.at


def new_group_state(config: GroupConfig) -> GroupState:
    config.validate()
    return GroupState(config=config)

