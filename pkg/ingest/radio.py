"""RSSI classification for LoRaWAN uplinks."""
import enum
from typing import Dict, Iterable

IDEAL_MAX_DBM = -30.0
IDEAL_MIN_DBM = -120.0


class RssiClass(str, enum.Enum):
    IDEAL = "Ideal"
    BELOW_IDEAL = "BelowIdeal"
    ABOVE_IDEAL = "AboveIdeal"


def classify_rssi(dbm: float) -> RssiClass:
    """Ideal in [-120, -30] dBm, both ends included; below -120 risks packet loss."""
    if dbm < IDEAL_MIN_DBM:
        return RssiClass.BELOW_IDEAL
    if dbm <= IDEAL_MAX_DBM:
        return RssiClass.IDEAL
    return RssiClass.ABOVE_IDEAL


def rssi_summary(readings: Iterable[float]) -> Dict[str, object]:
    """Counts per class plus the share of readings in the ideal band."""
    counts = {c.value: 0 for c in RssiClass}
    total = 0
    for dbm in readings:
        if dbm is None:
            continue
        counts[classify_rssi(float(dbm)).value] += 1
        total += 1
    share = counts[RssiClass.IDEAL.value] / total if total else 0.0
    return {"total": total, "counts": counts, "ideal_share": round(share, 4)}
