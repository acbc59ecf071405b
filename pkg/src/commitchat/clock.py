"""Clock abstraction so the service can run on wall time in production and on
a virtual clock in simulations and tests."""

from __future__ import annotations

from datetime import datetime, timezone


class Clock:
    def now(self) -> datetime:
        raise NotImplementedError


class WallClock(Clock):
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class VirtualClock(Clock):
    """Manually advanced clock. Time never moves backwards."""

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            raise ValueError("virtual clock requires an aware datetime")
        self._now = start

    def now(self) -> datetime:
        return self._now

    def advance_to(self, t: datetime) -> datetime:
        if t < self._now:
            raise ValueError(f"clock cannot move backwards: {t} < {self._now}")
        self._now = t
        return self._now
