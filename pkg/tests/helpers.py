"""Shared fixtures: group configs and a generator of random valid event logs.

The generator drives random commands through the real validation path, so
every produced log is accepted by the store and can be replayed. Rejected
commands are counted but never appended, mirroring how the service behaves.
"""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from commitchat import core
from commitchat.core import CommitVia, Condition, GroupConfig, MessageKind, ReactionKind
from commitchat.store import EventLog

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def make_config(
    group_id: str = "g1",
    condition: Condition = Condition.COMMIT,
    cycle_hours: float = 48,
    **kwargs,
) -> GroupConfig:
    cfg = GroupConfig(
        group_id=group_id,
        name=kwargs.pop("name", group_id),
        condition=condition,
        epoch=kwargs.pop("epoch", EPOCH),
        cycle_length=timedelta(hours=cycle_hours),
        **kwargs,
    )
    cfg.validate()
    return cfg


def random_group_log(
    rng: random.Random,
    condition: Condition = Condition.COMMIT,
    n_members: int = 4,
    hours: int = 10 * 24,
    config: GroupConfig | None = None,
) -> EventLog:
    cfg = config or make_config(
        group_id=f"rand-{condition.value.lower()}",
        condition=condition,
        commit_ahead_limit=rng.choice([0, 1, 2]),
    )
    log = EventLog.create(cfg, cfg.epoch)
    members = [f"m{i}" for i in range(n_members)]
    for m in members:
        log.append(log.state.make_join_event(m, m.upper(), cfg.epoch))

    t = cfg.epoch
    msg_n = 0
    react_n = 0
    end = cfg.epoch + timedelta(hours=hours)
    while t < end:
        t = t + timedelta(minutes=rng.randrange(20, 360))
        if t >= end:
            break
        m = rng.choice(members)
        action = rng.random()
        try:
            if action < 0.35 and condition is Condition.COMMIT:
                current = core.cycle_of(t, cfg)
                target = current + rng.randrange(-1, cfg.commit_ahead_limit + 2)
                log.append(log.state.make_commit_event(m, target, CommitVia.BUTTON, t))
            elif action < 0.70:
                msg_n += 1
                log.append(log.state.make_message_event(
                    f"msg-{msg_n}", m, f"body-{msg_n}", t,
                    MessageKind.IMAGE if rng.random() < 0.1 else MessageKind.TEXT))
            elif action < 0.90 and log.state.messages:
                react_n += 1
                target_msg = rng.choice(log.state.messages)
                kind = (ReactionKind.COMMIT_REACTION
                        if rng.random() < 0.3 else ReactionKind.EMOJI)
                emoji = None if kind is ReactionKind.COMMIT_REACTION else "like"
                log.append(log.state.make_reaction_event(
                    f"react-{react_n}", target_msg.message_id, m, kind, t, emoji))
                if kind is ReactionKind.COMMIT_REACTION:
                    nxt = log.state.next_uncommitted_cycle(m, t)
                    if nxt is not None:
                        log.append(log.state.make_commit_event(
                            m, nxt, CommitVia.REACTION, t))
            else:
                log.append(log.state.make_open_event(m, t))
        except core.ChatError:
            continue
    return log
