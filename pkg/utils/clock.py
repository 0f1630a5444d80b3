from datetime import datetime, timedelta, timezone
from typing import Optional


class ManualClock:
    """A settable clock with the same call shape as the tree's default clock.

    Used where device time matters: scripted charger sessions and replayed
    simulator streams stamp platform records with the simulated instant.
    """

    def __init__(self, start: Optional[datetime] = None):
        self.now = start or datetime(1970, 1, 1, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        return self.now

    def set(self, moment: datetime) -> None:
        if moment.tzinfo is None:
            raise ValueError("ManualClock needs timezone-aware datetimes")
        self.now = moment

    def set_epoch(self, seconds: float) -> None:
        self.now = datetime.fromtimestamp(seconds, timezone.utc)

    def advance(self, seconds: float) -> None:
        self.now = self.now + timedelta(seconds=seconds)
