"""Scripted-agent experiment harness.

Agents live a study on a virtual clock, interacting only through the service
endpoints, so gating binds them exactly as it would human participants. Every
decision draws from a purpose-scoped seeded stream (reply, spontaneous post,
conversation start, recommit, commit-ahead), which makes runs byte-identical
under a fixed seed and lets the two condition arms share matched base
behavior: paired groups in the two arms use the same seed, and the commitment
arm differs only in the mechanism and notifications it is exposed to.

Policy defaults are illustrative. The notification-response probabilities are
not calibrated against human data; they exist to exercise the mechanism, and
the contrast they produce is meaningful only directionally.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Optional

from .clock import VirtualClock
from .core import Condition, GroupConfig
from .events import format_ts, parse_ts
from .metrics import AnalysisConfig, analyze_store
from .service import ChatService, Session
from .store import GroupStore

LAPSE_RULES = frozenset({
    "commit_lapsed", "commit_lapsed_full_cycle",
    "commit_new_cycle_morning", "commit_long_absence",
})
CONTRIBUTE_RULES = frozenset({
    "commit_ending_unfulfilled", "control_no_message_2d", "control_no_message_4d",
})
CHECK_RULES = frozenset({"control_no_check_2d", "control_no_check_4d"})

H = timedelta(hours=1)


@dataclass(frozen=True)
class AgentPolicy:
    p_intro: float = 1.0  # onboarding: commit (if gated) and introduce yourself
    p_commit_on_lapse: float = 0.85
    p_commit_ahead: float = 0.3
    p_fulfill_spontaneous: float = 0.10
    p_post_on_reminder: float = 0.65
    p_reply: float = 0.15
    p_start: float = 0.03
    reply_delay_mean_hours: float = 3.0
    max_replies_per_day: int = 3

    def validate(self) -> None:
        for name in ("p_intro", "p_commit_on_lapse", "p_commit_ahead",
                     "p_fulfill_spontaneous", "p_post_on_reminder", "p_reply", "p_start"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.reply_delay_mean_hours <= 0:
            raise ValueError("reply_delay_mean_hours must be positive")
        if self.max_replies_per_day < 0:
            raise ValueError("max_replies_per_day must be >= 0")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "p_intro": self.p_intro,
            "p_commit_on_lapse": self.p_commit_on_lapse,
            "p_commit_ahead": self.p_commit_ahead,
            "p_fulfill_spontaneous": self.p_fulfill_spontaneous,
            "p_post_on_reminder": self.p_post_on_reminder,
            "p_reply": self.p_reply,
            "p_start": self.p_start,
            "reply_delay_mean_hours": self.reply_delay_mean_hours,
            "max_replies_per_day": self.max_replies_per_day,
        }

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "AgentPolicy":
        return cls(**doc)


@dataclass(frozen=True)
class ExperimentPlan:
    groups_per_condition: int = 6
    members_per_group: int = 5
    short_groups_per_condition: int = 1  # groups with one fewer member
    study_days: int = 21
    cycle_hours: float = 48.0
    tick_hours: int = 1
    auto_renew: bool = False
    master_seed: int = 0
    epoch: datetime = datetime(2024, 1, 1, tzinfo=timezone.utc)
    commit_policy: AgentPolicy = AgentPolicy()
    control_policy: AgentPolicy = AgentPolicy()
    seed_overrides: dict[str, int] = field(default_factory=dict)

    def validate(self) -> None:
        if self.groups_per_condition < 0:
            raise ValueError("groups_per_condition must be >= 0")
        if self.members_per_group < 1:
            raise ValueError("members_per_group must be >= 1")
        if self.short_groups_per_condition > self.groups_per_condition:
            raise ValueError("more short groups than groups")
        if self.members_per_group == 1 and self.short_groups_per_condition:
            raise ValueError("short groups would be empty")
        if self.study_days < 1:
            raise ValueError("study_days must be >= 1")
        if self.cycle_hours <= 0:
            raise ValueError("cycle_hours must be positive")
        if self.tick_hours < 1:
            raise ValueError("tick_hours must be >= 1")
        self.commit_policy.validate()
        self.control_policy.validate()

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "groups_per_condition": self.groups_per_condition,
            "members_per_group": self.members_per_group,
            "short_groups_per_condition": self.short_groups_per_condition,
            "study_days": self.study_days,
            "cycle_hours": self.cycle_hours,
            "tick_hours": self.tick_hours,
            "auto_renew": self.auto_renew,
            "master_seed": self.master_seed,
            "epoch": format_ts(self.epoch),
            "commit_policy": self.commit_policy.to_json_dict(),
            "control_policy": self.control_policy.to_json_dict(),
            "seed_overrides": dict(self.seed_overrides),
        }

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "ExperimentPlan":
        plan = cls(
            groups_per_condition=doc.get("groups_per_condition", 6),
            members_per_group=doc.get("members_per_group", 5),
            short_groups_per_condition=doc.get("short_groups_per_condition", 1),
            study_days=doc.get("study_days", 21),
            cycle_hours=doc.get("cycle_hours", 48.0),
            tick_hours=doc.get("tick_hours", 1),
            auto_renew=doc.get("auto_renew", False),
            master_seed=doc.get("master_seed", 0),
            epoch=parse_ts(doc["epoch"]) if "epoch" in doc else cls.epoch,
            commit_policy=AgentPolicy.from_json_dict(doc.get("commit_policy", {})),
            control_policy=AgentPolicy.from_json_dict(doc.get("control_policy", {})),
            seed_overrides=doc.get("seed_overrides", {}),
        )
        plan.validate()
        return plan

    @classmethod
    def load(cls, path: Path) -> "ExperimentPlan":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class Agent:
    """One scripted participant. All group access goes through the service."""

    def __init__(self, service: ChatService, session: Session, config: GroupConfig,
                 policy: AgentPolicy, seed: str):
        self.service = service
        self.session = session
        self.config = config
        self.policy = policy
        self.streams = {
            name: random.Random(f"{seed}:{name}")
            for name in ("commit", "prompted", "reply", "spont", "start", "ahead")
        }
        self.inbox: list[dict[str, Any]] = []
        self.scheduled: list[tuple[datetime, str, Optional[str]]] = []
        self.reads: list[tuple[str, datetime, str]] = []  # honesty audit trail
        self._post_n = 0
        self._last_ahead_cycle = -1
        self._replies_today: tuple[int, int] = (-1, 0)
        service.subscribe(session.token, self._receive)

    # -- plumbing ---------------------------------------------------------------

    def _receive(self, event: dict[str, Any]) -> None:
        if event.get("type") == "notification":
            self.inbox.append(event["record"]["payload"])

    def _cycle_hours(self) -> int:
        return int(self.config.cycle_length / H)

    def _is_committed_now(self) -> bool:
        banner = self.service.get_banner(self.session.token)
        return banner["kind"] != "NOT_COMMITTED"

    def _ensure_committed(self) -> None:
        if self.config.condition is Condition.CONTROL:
            return
        if not self._is_committed_now():
            self.service.do_commit(self.session.token)

    def _post(self, body: str) -> None:
        self._ensure_committed()
        self.service.send_message(self.session.token, body)

    def _read_message(self, message_id: str, now: datetime) -> bool:
        """Fetch a message through the gated feed; commits first if needed."""
        self._ensure_committed()
        feed = self.service.get_feed(self.session.token)
        if feed["kind"] != "messages":
            return False
        if any(m["message_id"] == message_id for m in feed["messages"]):
            self.reads.append((self.session.member_id, now, message_id))
            return True
        return False

    def _reply_budget(self, now: datetime) -> bool:
        day = (now - self.config.epoch) // timedelta(days=1)
        last_day, used = self._replies_today
        if day != last_day:
            self._replies_today = (day, 0)
            used = 0
        if used >= self.policy.max_replies_per_day:
            return False
        self._replies_today = (day, used + 1)
        return True

    # -- behavior -----------------------------------------------------------------

    def bootstrap(self, now: datetime) -> None:
        """Study onboarding: commit (when gated) and post an introduction."""
        if self.streams["spont"].random() < self.policy.p_intro:
            self._post_n += 1
            self._post(f"intro:{self.session.member_id}")

    def on_tick(self, now: datetime, horizon: datetime) -> None:
        pol = self.policy
        inbox, self.inbox = self.inbox, []
        for payload in inbox:
            rule = payload["rule_id"]
            if rule in LAPSE_RULES:
                c = self.streams["commit"].random()
                p = self.streams["prompted"].random()
                if c < pol.p_commit_on_lapse:
                    self._ensure_committed()
                    if p < pol.p_post_on_reminder:
                        self.scheduled.append((now, "prompted", None))
            elif rule in CONTRIBUTE_RULES:
                c = self.streams["commit"].random()
                p = self.streams["prompted"].random()
                if p < pol.p_post_on_reminder:
                    self.scheduled.append((now, "prompted", None))
            elif rule in CHECK_RULES:
                c = self.streams["commit"].random()
                p = self.streams["prompted"].random()
                if c < pol.p_commit_on_lapse:
                    self.service.open_app(self.session.token)
            elif rule == "new_message":
                r = self.streams["reply"].random()
                delay = self.streams["reply"].expovariate(
                    1.0 / pol.reply_delay_mean_hours)
                if r < pol.p_reply and self._reply_budget(now):
                    if self._read_message(payload["message_id"], now):
                        due = now + max(1, round(delay)) * H
                        self.scheduled.append((due, "reply", payload["message_id"]))

        # periodic hooks run after notification handling
        offset = now - self.config.epoch
        if offset % self.config.cycle_length == timedelta(0):
            s = self.streams["spont"].random()
            jitter = self.streams["spont"].randrange(self._cycle_hours())
            if s < pol.p_fulfill_spontaneous:
                self.scheduled.append((now + jitter * H, "spont", None))
        if offset % timedelta(days=1) == timedelta(0):
            st = self.streams["start"].random()
            jitter = self.streams["start"].randrange(24)
            if st < pol.p_start:
                self.scheduled.append((now + jitter * H, "start", None))
        if self.config.condition is Condition.COMMIT:
            cycle = offset // self.config.cycle_length
            into = offset - cycle * self.config.cycle_length
            if (into / self.config.cycle_length >= self.config.urgency_fraction
                    and self._last_ahead_cycle != cycle):
                self._last_ahead_cycle = cycle
                a = self.streams["ahead"].random()
                if a < pol.p_commit_ahead:
                    banner = self.service.get_banner(self.session.token)
                    if banner["kind"] == "COMMITTED_FULFILLED_NO_RENEWAL":
                        self.service.do_commit(self.session.token)

        due = [item for item in self.scheduled if item[0] <= now]
        self.scheduled = [item for item in self.scheduled if item[0] > now]
        for _, tag, ref in due:
            if now >= horizon:
                continue
            self._post_n += 1
            body = f"{tag}:{ref}:{self._post_n}" if ref else f"{tag}:{self._post_n}"
            self._post(body)


@dataclass
class RunResult:
    store: GroupStore
    service: ChatService
    plan: ExperimentPlan
    group_conditions: dict[str, Condition]
    agents: list[Agent]


def _group_specs(plan: ExperimentPlan) -> list[tuple[str, Condition, int, int]]:
    """(group_id, condition, pair_seed, size) for every group in the plan."""
    specs = []
    for condition in (Condition.COMMIT, Condition.CONTROL):
        for i in range(plan.groups_per_condition):
            gid = f"{condition.value.lower()}-{i + 1}"
            seed = plan.seed_overrides.get(gid, plan.master_seed * 1009 + i)
            size = plan.members_per_group - (1 if i < plan.short_groups_per_condition else 0)
            specs.append((gid, condition, seed, size))
    return specs


def run_experiment(plan: ExperimentPlan, out_dir: Path) -> RunResult:
    """Drive the full study; logs land in out_dir as standard store logs."""
    plan.validate()
    out_dir = Path(out_dir)
    store = GroupStore(out_dir)
    clock = VirtualClock(plan.epoch)
    service = ChatService(store, clock)

    agents: list[Agent] = []
    conditions: dict[str, Condition] = {}
    for gid, condition, seed, size in _group_specs(plan):
        config = GroupConfig(
            group_id=gid,
            name=gid,
            condition=condition,
            epoch=plan.epoch,
            cycle_length=timedelta(hours=plan.cycle_hours),
            auto_renew=plan.auto_renew,
        )
        service.create_group(config)
        conditions[gid] = condition
        policy = plan.commit_policy if condition is Condition.COMMIT else plan.control_policy
        for m in range(size):
            member_id = f"{gid}.p{m + 1}"
            session = service.join_group(gid, member_id, f"p{m + 1}")
            agents.append(Agent(service, session, config, policy, f"{seed}:{m}"))

    horizon = plan.epoch + timedelta(days=plan.study_days)
    for agent in agents:
        agent.bootstrap(plan.epoch)
    for agent in agents:
        agent.on_tick(plan.epoch, horizon)
    step = plan.tick_hours * H
    now = plan.epoch
    while now < horizon:
        now = min(now + step, horizon)
        service.advance_to(now)
        for agent in agents:
            agent.on_tick(now, horizon)

    # run manifest alongside the logs
    manifest = {
        "plan": plan.to_json_dict(),
        "groups": [{"group_id": gid, "condition": cond.value, "seed": seed}
                   for gid, cond, seed, _ in _group_specs(plan)],
    }
    (out_dir / "run.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunResult(store=store, service=service, plan=plan,
                     group_conditions=conditions, agents=agents)


def condition_contrast(plan: ExperimentPlan, out_dir: Path) -> dict[str, Any]:
    """Run both arms with matched seeds and identical base policies; report
    the paired participation metrics next to the full analysis."""
    result = run_experiment(plan, out_dir)
    analysis = AnalysisConfig(study_days=plan.study_days)
    report = analyze_store(result.store, analysis)
    by_condition = report["cohort"]["by_condition"]

    def arm(name: str) -> dict[str, Any]:
        stats = by_condition.get(name, {})
        return {
            "median_messages": stats.get("median_messages"),
            "median_active_days": stats.get("median_active_days"),
            "surviving_fraction_at_end": stats.get("surviving_fraction_at_end"),
        }

    return {
        "commit": arm("COMMIT"),
        "control": arm("CONTROL"),
        "report": report,
    }


def null_policy_pair(base: AgentPolicy) -> tuple[AgentPolicy, AgentPolicy]:
    """Both arms with reminder responsiveness removed."""
    muted = replace(base, p_post_on_reminder=0.0)
    return muted, muted
