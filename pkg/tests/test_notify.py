"""Notification rules: verbatim texts, trigger times, pairing, determinism."""

from __future__ import annotations

import random
from datetime import timedelta

import pytest

from commitchat import core, notify
from commitchat.core import CommitVia, Condition
from commitchat.events import EventKind, EventRecord
from commitchat.notify import RULES, due_notifications, render

from helpers import EPOCH, make_config, random_group_log

H = timedelta(hours=1)
D = timedelta(days=1)


def scripted_commit_trace(cfg):
    """Join + commit for cycle 0 at the epoch, then eight idle days."""
    return [
        EventRecord(1, EPOCH, EventKind.GROUP_CREATED, {"config": cfg.to_json_dict()}),
        EventRecord(2, EPOCH, EventKind.MEMBER_JOINED,
                    {"member_id": "m", "display_name": "M"}),
        EventRecord(3, EPOCH, EventKind.COMMIT,
                    {"member_id": "m", "cycle": 0, "via": "BUTTON", "null_commit": False}),
    ]


def scripted_control_trace(cfg):
    return [
        EventRecord(1, EPOCH, EventKind.GROUP_CREATED, {"config": cfg.to_json_dict()}),
        EventRecord(2, EPOCH, EventKind.MEMBER_JOINED,
                    {"member_id": "m", "display_name": "M"}),
    ]


class TestRenderTexts:
    def test_lapsed_text_exact(self):
        cfg = make_config(name="book-club")
        assert render("commit_lapsed", cfg) == (
            "Your commitment to book-club has lapsed! Make sure to come back "
            "and re-commit so you can continue seeing content."
        )

    def test_ending_unfulfilled_text_exact(self):
        cfg = make_config(name="g")
        assert render("commit_ending_unfulfilled", cfg) == (
            "The commitment period for g is close to ending and you have not "
            "contributed yet. Come back and share your thoughts!"
        )

    def test_control_no_check_text_exact(self):
        cfg = make_config(name="g", condition=Condition.CONTROL)
        assert render("control_no_check_2d", cfg) == (
            "You haven’t checked g in several days! Come back and check out "
            "what you've missed."
        )

    def test_control_four_day_texts(self):
        cfg = make_config(name="g", condition=Condition.CONTROL)
        assert render("control_no_check_4d", cfg) == (
            "It’s been a while since you've visited g! Come back and check "
            "out what you've missed."
        )
        # the two no-message reminders share one text
        assert render("control_no_message_4d", cfg) == render("control_no_message_2d", cfg)

    def test_condition_mismatch_rejected(self):
        cfg = make_config(name="g", condition=Condition.CONTROL)
        with pytest.raises(core.RejectWrongCondition):
            render("commit_lapsed", cfg)


class TestScriptedTraces:
    """Eight-day single-member traces per condition, frozen trigger times."""

    def test_commit_member_trace(self):
        cfg = make_config(name="g")
        out = due_notifications(cfg, scripted_commit_trace(cfg), EPOCH, EPOCH + 9 * D)
        got = [((n.fired_at - EPOCH) // H, n.rule_id) for n in out]
        assert got == [
            (36, "commit_ending_unfulfilled"),
            (48, "commit_lapsed"),
            (57, "commit_new_cycle_morning"),   # 09:00 on the first day of cycle 1
            (96, "commit_lapsed_full_cycle"),
            (105, "commit_new_cycle_morning"),
            (153, "commit_new_cycle_morning"),  # third and last morning reminder
            (192, "commit_long_absence"),       # three lapsed cycles completed
        ]
        for n in out:
            assert n.rendered_text == render(n.rule_id, cfg)

    def test_control_member_trace(self):
        cfg = make_config(name="g", condition=Condition.CONTROL)
        out = due_notifications(cfg, scripted_control_trace(cfg), EPOCH, EPOCH + 9 * D)
        got = [((n.fired_at - EPOCH) // H, n.rule_id) for n in out]
        assert got == [
            (48, "control_no_check_2d"),
            (48, "control_no_message_2d"),
            (96, "control_no_check_4d"),
            (96, "control_no_message_4d"),
        ]
        for n in out:
            assert n.rendered_text == render(n.rule_id, cfg)

    def test_paired_rows_fire_equal_counts_for_idle_member(self):
        commit_cfg = make_config(name="g")
        control_cfg = make_config(group_id="g2", name="g", condition=Condition.CONTROL)
        window = (EPOCH, EPOCH + 8 * D + H)
        commit_fired = due_notifications(commit_cfg, scripted_commit_trace(commit_cfg), *window)
        control_fired = due_notifications(control_cfg, scripted_control_trace(control_cfg), *window)

        def counts(notifs):
            c: dict[str, int] = {}
            for n in notifs:
                c[n.rule_id] = c.get(n.rule_id, 0) + 1
            return c

        commit_counts, control_counts = counts(commit_fired), counts(control_fired)
        for rule in RULES.values():
            if rule.paired_with is None:
                continue
            assert commit_counts.get(rule.rule_id, 0) or control_counts.get(rule.rule_id, 0)
            mine = (commit_counts if rule.condition.value == "COMMIT" else control_counts)
            theirs = (control_counts if rule.condition.value == "COMMIT" else commit_counts)
            assert mine.get(rule.rule_id, 0) == theirs.get(rule.paired_with, 0)

    def test_unmatched_rows(self):
        assert set(notify.UNPAIRED_RULE_IDS) == {
            "commit_new_cycle_morning", "control_no_message_4d", "commit_long_absence",
        }

    def test_control_idle_four_days(self):
        cfg = make_config(name="g", condition=Condition.CONTROL)
        out = due_notifications(cfg, scripted_control_trace(cfg), EPOCH, EPOCH + 4 * D + H)
        per_rule = {}
        for n in out:
            per_rule.setdefault(n.rule_id, []).append(n.fired_at)
        assert per_rule["control_no_check_2d"] == [EPOCH + 2 * D]
        assert per_rule["control_no_check_4d"] == [EPOCH + 4 * D]


class TestTriggerSuppression:
    def test_fulfilled_and_recommitted_member_gets_no_reminders(self):
        cfg = make_config(name="g")
        events = scripted_commit_trace(cfg) + [
            EventRecord(4, EPOCH + 2 * H, EventKind.MESSAGE,
                        {"message_id": "m1", "sender_id": "m", "kind": "TEXT", "body": "hi"}),
            EventRecord(5, EPOCH + 40 * H, EventKind.COMMIT,
                        {"member_id": "m", "cycle": 1, "via": "BUTTON", "null_commit": False}),
        ]
        out = due_notifications(cfg, events, EPOCH, EPOCH + 2 * D + H)
        assert [n for n in out if n.rule_id in ("commit_lapsed", "commit_ending_unfulfilled")] == []

    def test_commit_exactly_at_boundary_suppresses_lapse(self):
        cfg = make_config(name="g")
        events = scripted_commit_trace(cfg) + [
            EventRecord(4, EPOCH + 48 * H, EventKind.COMMIT,
                        {"member_id": "m", "cycle": 1, "via": "BUTTON", "null_commit": False}),
        ]
        out = due_notifications(cfg, events, EPOCH, EPOCH + 3 * D)
        assert [n for n in out if n.rule_id == "commit_lapsed"] == []

    def test_returning_member_rearms_control_reminders(self):
        cfg = make_config(name="g", condition=Condition.CONTROL)
        events = scripted_control_trace(cfg) + [
            EventRecord(3, EPOCH + 3 * D, EventKind.MESSAGE,
                        {"message_id": "m1", "sender_id": "m", "kind": "TEXT", "body": "back"}),
        ]
        out = due_notifications(cfg, events, EPOCH, EPOCH + 8 * D)
        fired = [(n.fired_at, n.rule_id) for n in out if n.rule_id == "control_no_message_2d"]
        assert fired == [(EPOCH + 2 * D, "control_no_message_2d"),
                         (EPOCH + 5 * D, "control_no_message_2d")]

    def test_reminders_stop_during_long_lapse(self):
        """After the long-absence one-shot, a lapsed member hears nothing."""
        cfg = make_config(name="g")
        out = due_notifications(cfg, scripted_commit_trace(cfg),
                                EPOCH + 9 * D, EPOCH + 30 * D)
        assert out == []

    def test_morning_rule_follows_group_local_offset(self):
        """A group five hours west of UTC gets its 09:00 reminder at 14:00 UTC."""
        cfg = make_config(name="g", utc_offset_minutes=-300)
        out = due_notifications(cfg, scripted_commit_trace(cfg), EPOCH, EPOCH + 3 * D)
        mornings = [n.fired_at for n in out if n.rule_id == "commit_new_cycle_morning"]
        assert mornings == [EPOCH + 2 * D + 14 * H]

    def test_null_commit_entry_triggers_no_unfulfilled_reminder(self):
        cfg = make_config(name="g", null_commit_allowed=True)
        events = scripted_commit_trace(cfg)
        events[2] = EventRecord(3, EPOCH, EventKind.COMMIT,
                                {"member_id": "m", "cycle": 0, "via": "BUTTON",
                                 "null_commit": True})
        out = due_notifications(cfg, events, EPOCH, EPOCH + 2 * D)
        assert [n for n in out if n.rule_id == "commit_ending_unfulfilled"] == []


class TestMessageNotices:
    def _group_with_message(self, condition=Condition.COMMIT):
        cfg = make_config(name="g", condition=condition)
        events = [
            EventRecord(1, EPOCH, EventKind.GROUP_CREATED, {"config": cfg.to_json_dict()}),
            EventRecord(2, EPOCH, EventKind.MEMBER_JOINED,
                        {"member_id": "alice", "display_name": "Alice"}),
            EventRecord(3, EPOCH, EventKind.MEMBER_JOINED,
                        {"member_id": "bob", "display_name": "Bob"}),
        ]
        if condition is Condition.COMMIT:
            events.append(EventRecord(4, EPOCH, EventKind.COMMIT,
                                      {"member_id": "alice", "cycle": 0,
                                       "via": "BUTTON", "null_commit": False}))
        events.append(EventRecord(9, EPOCH + H, EventKind.MESSAGE,
                                  {"message_id": "m1", "sender_id": "alice",
                                   "kind": "TEXT", "body": "secret plans"}))
        return cfg, events

    def test_committed_recipient_sees_content(self):
        cfg, events = self._group_with_message(Condition.CONTROL)
        out = due_notifications(cfg, events, EPOCH, EPOCH + 2 * H)
        (n,) = [x for x in out if x.rule_id == "new_message"]
        assert n.member_id == "bob" and n.content_visible
        assert "secret plans" in n.rendered_text

    def test_uncommitted_recipient_gets_no_content(self):
        cfg, events = self._group_with_message(Condition.COMMIT)
        out = due_notifications(cfg, events, EPOCH, EPOCH + 2 * H)
        (n,) = [x for x in out if x.rule_id == "new_message"]
        assert n.member_id == "bob"
        assert not n.content_visible
        assert "secret plans" not in n.rendered_text
        assert n.message_id == "m1"

    def test_reaction_notifies_author_only(self):
        cfg, events = self._group_with_message(Condition.CONTROL)
        events.append(EventRecord(10, EPOCH + 2 * H, EventKind.REACTION,
                                  {"reaction_id": "r1", "message_id": "m1",
                                   "reactor_id": "bob", "kind": "EMOJI", "emoji": "like"}))
        out = due_notifications(cfg, events, EPOCH, EPOCH + 3 * H)
        reacts = [x for x in out if x.rule_id == "reaction_to_your_message"]
        assert [n.member_id for n in reacts] == ["alice"]


class TestDeterminismProperties:
    def test_identical_inputs_identical_outputs(self):
        log = random_group_log(random.Random(11))
        cfg = log.config
        window = (EPOCH + D, EPOCH + 6 * D)
        a = due_notifications(cfg, log.records, *window)
        b = due_notifications(cfg, log.records, *window)
        assert a == b

    def test_window_partition_invariance(self):
        """Hourly windows concatenated equal one large window."""
        for seed in (21, 22, 23):
            condition = Condition.COMMIT if seed % 2 else Condition.CONTROL
            log = random_group_log(random.Random(seed), condition=condition, hours=6 * 24)
            cfg = log.config
            whole = due_notifications(cfg, log.records, EPOCH, EPOCH + 7 * D)
            pieces = []
            t = EPOCH
            while t < EPOCH + 7 * D:
                pieces.extend(due_notifications(cfg, log.records, t, t + H))
                t += H
            assert pieces == whole

    def test_incremental_engine_matches_pure_function(self):
        log = random_group_log(random.Random(31), hours=5 * 24)
        cfg = log.config
        engine = notify.RuleEngine(cfg)
        streamed = []
        t = EPOCH
        pending = list(log.records)
        while t < EPOCH + 6 * D:
            batch = [e for e in pending if t <= e.at < t + 4 * H]
            pending = [e for e in pending if not (t <= e.at < t + 4 * H)]
            for e in [e for e in pending if e.at < t]:
                raise AssertionError("event order broke")
            streamed.extend(engine.window(batch, t, t + 4 * H))
            t += 4 * H
        whole = due_notifications(cfg, log.records, EPOCH, EPOCH + 6 * D)
        assert streamed == whole
