"""Reminder and activity notifications, generated from the event log.

Commitment-condition reminders and their control-condition counterparts are
paired row-for-row: each paired rule fires on the same cadence (one cycle,
two cycles) so the two conditions receive nudges at matching rates; only the
framing differs. Two rules are deliberately unpaired. Message and reaction
notices apply to both conditions, with message content hidden from recipients
who cannot currently read the group.

Trigger instants are pure functions of the group's event history, so a window
evaluation is deterministic and independent of how the caller partitions time
into windows: an instant falls in exactly one half-open window. Events apply
before triggers at the same instant (committing exactly at a cycle boundary
suppresses the lapse notice at that boundary).

Reminder rules are edge-triggered per episode: a lapse episode yields at most
one lapse notice, one lapsed-a-full-cycle notice, three new-cycle-morning
notices, and one long-absence notice, after which reminders stay quiet until
the member returns. Control reminders fire once per idle episode and re-arm
when the member checks or posts again.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Iterable, Optional

from .core import (
    Condition,
    GroupConfig,
    RejectWrongCondition,
    ValidationError,
    cycle_end,
    cycle_of,
    cycle_start,
)
from .events import EventKind, EventRecord


class RuleCondition(str, Enum):
    COMMIT = "COMMIT"
    CONTROL = "CONTROL"
    BOTH = "BOTH"


@dataclass(frozen=True)
class NotificationRule:
    rule_id: str
    condition: RuleCondition
    text_template: Optional[str]  # None when the text is assembled per event
    paired_with: Optional[str]    # rule_id of the other condition's counterpart
    max_fires: int = 1            # per (member, trigger episode)


# Reminder texts are the product's notification strings; placeholders are
# substituted verbatim.
RULES: dict[str, NotificationRule] = {
    r.rule_id: r
    for r in [
        NotificationRule(
            "commit_lapsed",
            RuleCondition.COMMIT,
            "Your commitment to [group name] has lapsed! Make sure to come back "
            "and re-commit so you can continue seeing content.",
            paired_with="control_no_check_2d",
        ),
        NotificationRule(
            "commit_lapsed_full_cycle",
            RuleCondition.COMMIT,
            "Your commitment to [group name] has been lapsed for a cycle. "
            "Do you want to recommit?",
            paired_with="control_no_check_4d",
        ),
        NotificationRule(
            "commit_new_cycle_morning",
            RuleCondition.COMMIT,
            "A new commitment cycle is starting! Make sure to come back and "
            "re-commit so you can continue seeing content in [group name] has lapsed!",
            paired_with=None,
            max_fires=3,
        ),
        NotificationRule(
            "commit_ending_unfulfilled",
            RuleCondition.COMMIT,
            "The commitment period for [group name] is close to ending and you "
            "have not contributed yet. Come back and share your thoughts!",
            paired_with="control_no_message_2d",
        ),
        NotificationRule(
            "commit_long_absence",
            RuleCondition.COMMIT,
            "We miss you in [group name]! Come back and re-commit whenever "
            "you are ready.",
            paired_with=None,
        ),
        NotificationRule(
            "control_no_check_2d",
            RuleCondition.CONTROL,
            "You haven’t checked [group name] in several days! Come back and "
            "check out what you've missed.",
            paired_with="commit_lapsed",
        ),
        NotificationRule(
            "control_no_check_4d",
            RuleCondition.CONTROL,
            "It’s been a while since you've visited [group name]! Come back "
            "and check out what you've missed.",
            paired_with="commit_lapsed_full_cycle",
        ),
        NotificationRule(
            "control_no_message_2d",
            RuleCondition.CONTROL,
            "You haven’t messaged in [group name] since several days ago. "
            "Come back and catch up!",
            paired_with="commit_ending_unfulfilled",
        ),
        NotificationRule(
            "control_no_message_4d",
            RuleCondition.CONTROL,
            "You haven’t messaged in [group name] since several days ago. "
            "Come back and catch up!",
            paired_with=None,
        ),
        NotificationRule("new_message", RuleCondition.BOTH, None, None, max_fires=0),
        NotificationRule("reaction_to_your_message", RuleCondition.BOTH, None, None,
                         max_fires=0),
    ]
}

UNPAIRED_RULE_IDS = tuple(
    r.rule_id for r in RULES.values()
    if r.paired_with is None and r.condition is not RuleCondition.BOTH
)


def render(rule_id: str, config: GroupConfig) -> str:
    """Substitute the group name into a reminder template."""
    rule = RULES[rule_id]
    if rule.condition is not RuleCondition.BOTH:
        if rule.condition.value != config.condition.value:
            raise RejectWrongCondition(
                f"rule {rule_id} does not apply to {config.condition.value} groups"
            )
    if rule.text_template is None:
        raise ValidationError(f"rule {rule_id} has no static template")
    return rule.text_template.replace("[group name]", config.display_name)


@dataclass(frozen=True)
class Notification:
    member_id: str
    group_id: str
    rule_id: str
    fired_at: datetime
    rendered_text: str
    content_visible: bool = True
    message_id: Optional[str] = None

    def to_event_payload(self) -> dict:
        return {
            "member_id": self.member_id,
            "rule_id": self.rule_id,
            "text": self.rendered_text,
            "content_visible": self.content_visible,
            "message_id": self.message_id,
        }


@dataclass
class _MemberTrack:
    member_id: str
    display_name: str
    joined_at: datetime
    last_action_at: datetime          # any interaction: join, commit, post, react, open
    last_message_at: Optional[datetime] = None


class RuleEngine:
    """Incremental notification generator for one group.

    Feed history with `observe`, then ask for the firings of a half-open
    window with `window`. The pure convenience wrapper `due_notifications`
    rebuilds an engine from a log slice and must produce identical output.
    """

    def __init__(self, config: GroupConfig):
        config.validate()
        self.config = config
        self.members: dict[str, _MemberTrack] = {}
        # committed cycles per member: cycle -> (committed_at, null_commit)
        self.commits: dict[str, dict[int, tuple[datetime, bool]]] = {}
        self.msgs_per_cycle: dict[tuple[str, int], int] = {}
        self.message_senders: dict[str, str] = {}

    # -- state ingestion -----------------------------------------------------

    def observe(self, event: EventRecord) -> None:
        p = event.payload
        kind = event.kind
        if kind is EventKind.MEMBER_JOINED:
            track = _MemberTrack(
                member_id=p["member_id"],
                display_name=p.get("display_name") or p["member_id"],
                joined_at=event.at,
                last_action_at=event.at,
            )
            self.members[track.member_id] = track
            self.commits[track.member_id] = {}
        elif kind is EventKind.COMMIT:
            self.commits[p["member_id"]][p["cycle"]] = (event.at, p.get("null_commit", False))
            self.members[p["member_id"]].last_action_at = event.at
        elif kind is EventKind.MESSAGE:
            track = self.members[p["sender_id"]]
            track.last_action_at = event.at
            track.last_message_at = event.at
            k = cycle_of(event.at, self.config)
            key = (p["sender_id"], k)
            self.msgs_per_cycle[key] = self.msgs_per_cycle.get(key, 0) + 1
            self.message_senders[p["message_id"]] = p["sender_id"]
        elif kind is EventKind.REACTION:
            self.members[p["reactor_id"]].last_action_at = event.at
        elif kind is EventKind.APP_OPEN:
            self.members[p["member_id"]].last_action_at = event.at
        # GROUP_CREATED and NOTIFICATION events carry no trigger state.

    # -- window evaluation -----------------------------------------------------

    def window(self, events: list[EventRecord], start: datetime, end: datetime,
               ) -> list[Notification]:
        if start >= end:
            raise ValidationError("window_start must precede window_end")
        out: list[Notification] = []
        cursor = start
        for ev in events:
            if not (start <= ev.at < end):
                raise ValidationError("event outside window")
            if ev.at > cursor:
                out.extend(self._reminders_between(cursor, ev.at))
                cursor = ev.at
            out.extend(self._event_notifications(ev))
            self.observe(ev)
        out.extend(self._reminders_between(cursor, end))
        out.sort(key=lambda n: (n.fired_at, n.member_id, n.rule_id))
        return out

    # -- event-driven notices ----------------------------------------------------

    def _event_notifications(self, ev: EventRecord) -> list[Notification]:
        cfg = self.config
        p = ev.payload
        out: list[Notification] = []
        if ev.kind is EventKind.MESSAGE:
            sender = p["sender_id"]
            sender_name = self.members[sender].display_name
            k = cycle_of(ev.at, cfg)
            for member_id, track in self.members.items():
                if member_id == sender or track.joined_at > ev.at:
                    continue
                visible = (cfg.condition is Condition.CONTROL
                           or k in self.commits[member_id])
                if visible:
                    text = f"{sender_name} posted in {cfg.display_name}: {p['body']}"
                else:
                    text = f"{sender_name} posted in {cfg.display_name}"
                out.append(Notification(
                    member_id=member_id,
                    group_id=cfg.group_id,
                    rule_id="new_message",
                    fired_at=ev.at,
                    rendered_text=text,
                    content_visible=visible,
                    message_id=p["message_id"],
                ))
        elif ev.kind is EventKind.REACTION:
            author = self.message_senders.get(p["message_id"])
            if author and author != p["reactor_id"]:
                reactor_name = self.members[p["reactor_id"]].display_name
                out.append(Notification(
                    member_id=author,
                    group_id=cfg.group_id,
                    rule_id="reaction_to_your_message",
                    fired_at=ev.at,
                    rendered_text=(
                        f"{reactor_name} reacted to your message in {cfg.display_name}"
                    ),
                    message_id=p["message_id"],
                ))
        return out

    # -- time-driven reminders ------------------------------------------------
    # State is frozen inside (s0, s1): no events occur there, so every trigger
    # instant is computable in closed form.

    def _reminders_between(self, s0: datetime, s1: datetime) -> list[Notification]:
        cfg = self.config
        if s1 <= cfg.epoch:
            return []
        s0 = max(s0, cfg.epoch)
        out: list[Notification] = []
        for member_id in self.members:
            if cfg.condition is Condition.COMMIT:
                out.extend(self._commit_reminders(member_id, s0, s1))
            else:
                out.extend(self._control_reminders(member_id, s0, s1))
        return out

    def _fire(self, member_id: str, rule_id: str, at: datetime) -> Notification:
        return Notification(
            member_id=member_id,
            group_id=self.config.group_id,
            rule_id=rule_id,
            fired_at=at,
            rendered_text=render(rule_id, self.config),
        )

    def _lapse_runs(self, committed: Iterable[int]) -> list[tuple[int, Optional[int]]]:
        """Maximal runs [j1, j2] of uncommitted cycles preceded by a committed
        cycle; the tail run after the last committed cycle is open-ended."""
        cycles = sorted(committed)
        if not cycles:
            return []
        runs: list[tuple[int, Optional[int]]] = []
        for a, b in zip(cycles, cycles[1:]):
            if b > a + 1:
                runs.append((a + 1, b - 1))
        runs.append((cycles[-1] + 1, None))
        return runs

    def _morning_of(self, k: int) -> Optional[datetime]:
        """First group-local `morning_hour` o'clock at or after cycle k starts,
        if it lands inside cycle k."""
        cfg = self.config
        offset = timedelta(minutes=cfg.utc_offset_minutes)
        start_local = cycle_start(k, cfg) + offset
        candidate = start_local.replace(hour=cfg.morning_hour, minute=0, second=0,
                                        microsecond=0)
        if candidate < start_local:
            candidate += timedelta(days=1)
        morning = candidate - offset
        if morning >= cycle_end(k, cfg):
            return None
        return morning

    def _commit_reminders(self, member_id: str, s0: datetime, s1: datetime,
                          ) -> list[Notification]:
        cfg = self.config
        committed = self.commits[member_id]
        out: list[Notification] = []

        # Lapse onset: boundary where the previous cycle was committed and the
        # new one is not.
        k = cycle_of(s0, cfg)
        if cycle_start(k, cfg) < s0:
            k += 1
        while cycle_start(k, cfg) < s1:
            boundary = cycle_start(k, cfg)
            if k >= 1 and (k - 1) in committed and k not in committed:
                out.append(self._fire(member_id, "commit_lapsed", boundary))
            k += 1

        # Per lapse episode: lapsed-a-full-cycle, capped new-cycle mornings,
        # and the long-absence one-shot.
        for j1, j2 in self._lapse_runs(committed):
            episode_start = cycle_start(j1, cfg)
            if episode_start >= s1:
                break
            full_cycle_at = cycle_start(j1 + 1, cfg)
            if (j2 is None or j2 >= j1 + 1) and s0 <= full_cycle_at < s1:
                out.append(self._fire(member_id, "commit_lapsed_full_cycle", full_cycle_at))
            absence_at = cycle_start(j1 + 3, cfg)
            if (j2 is None or j2 >= j1 + 3) and s0 <= absence_at < s1:
                out.append(self._fire(member_id, "commit_long_absence", absence_at))
            fired = 0
            cyc = j1
            cap = RULES["commit_new_cycle_morning"].max_fires
            while fired < cap and (j2 is None or cyc <= j2):
                morning = self._morning_of(cyc)
                if morning is not None:
                    if morning >= s1:
                        break
                    fired += 1
                    if morning >= s0:
                        out.append(self._fire(member_id, "commit_new_cycle_morning", morning))
                elif j2 is None and cycle_start(cyc, cfg) >= s1:
                    break
                cyc += 1

        # Cycle close to ending without the expected contribution.
        urgency = cfg.cycle_length * cfg.urgency_fraction
        k = cycle_of(s0 - urgency, cfg) if s0 - urgency >= cfg.epoch else 0
        while cycle_start(k, cfg) + urgency < s1:
            instant = cycle_start(k, cfg) + urgency
            if instant >= s0 and k in committed:
                committed_at, null_commit = committed[k]
                sent = self.msgs_per_cycle.get((member_id, k), 0)
                if (not null_commit and committed_at <= instant
                        and sent < cfg.expectation_count):
                    out.append(self._fire(member_id, "commit_ending_unfulfilled", instant))
            k += 1

        return out

    def _control_reminders(self, member_id: str, s0: datetime, s1: datetime,
                           ) -> list[Notification]:
        cfg = self.config
        track = self.members[member_id]
        out: list[Notification] = []
        one = cfg.cycle_length        # Table-2 "two days" at the default length
        checked = track.last_action_at
        messaged = track.last_message_at or track.joined_at
        for rule_id, base, gap in [
            ("control_no_check_2d", checked, one),
            ("control_no_check_4d", checked, 2 * one),
            ("control_no_message_2d", messaged, one),
            ("control_no_message_4d", messaged, 2 * one),
        ]:
            instant = base + gap
            if s0 <= instant < s1:
                out.append(self._fire(member_id, rule_id, instant))
        return out


def due_notifications(
    config: GroupConfig,
    events: list[EventRecord],
    window_start: datetime,
    window_end: datetime,
) -> list[Notification]:
    """Every notification whose trigger instant falls in [start, end),
    deterministically ordered by (time, member, rule)."""
    engine = RuleEngine(config)
    in_window: list[EventRecord] = []
    for ev in events:
        if ev.at < window_start:
            engine.observe(ev)
        elif ev.at < window_end:
            in_window.append(ev)
    return engine.window(in_window, window_start, window_end)

