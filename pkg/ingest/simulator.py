"""
Fault-injecting sensor simulator.

A profile drives one node at its sampling period. Per slot the simulator draws
the parameter values and the fault plan: how many copies reach the platform
(0 = dropped, 2+ = retransmissions), the transmission delay, an optional
outlier and an optional null. Copies are emitted back to back and recorded
times never go backwards, the way a node retrying until it gets an ack looks
from the platform side.

Every emitted record is also ground truth: ground_truth_tally() computes the
duplicate distribution, delays and out-of-range counts the quality pipeline
must reproduce.
"""
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from core.campus import CampusNode, DeviceModel
from core.payload import format_positional_payload
from utils.clock import ManualClock
from utils.logging_setup import get_logger
from utils.settings import ConfigError, load_yaml

logger = get_logger("Simulator")


@dataclass
class FaultPlan:
    duplicate_prob: float = 0.0
    max_repeats: int = 2
    delay_mean: float = 0.0
    delay_std: float = 0.0
    outlier_prob: float = 0.0
    null_prob: float = 0.0
    sampling_jitter: int = 0
    drop_prob: float = 0.0
    parameters: Optional[List[str]] = None
    # exact mode: copies per slot -> number of slots; every other slot is dropped
    repeat_counts: Optional[Dict[int, int]] = None

    @property
    def exact(self) -> bool:
        return self.repeat_counts is not None

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "FaultPlan":
        raw = dict(raw or {})
        exact = raw.pop("exact", None)
        known = set(cls.__dataclass_fields__) - {"repeat_counts"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"Unknown fault plan keys: {unknown}")
        plan = cls(**raw)
        if exact:
            plan.repeat_counts = {int(k): int(v) for k, v in (exact.get("repeat_counts") or {}).items()}
        if plan.max_repeats < 2:
            raise ConfigError("max_repeats must be at least 2")
        return plan


@dataclass
class SimProfile:
    name: str
    node_id: str
    period: int
    generators: Dict[str, Dict[str, Any]]
    faults: FaultPlan = field(default_factory=FaultPlan)
    start: int = 0

    def __post_init__(self):
        if not isinstance(self.period, int) or self.period <= 0:
            raise ConfigError(f"Profile {self.name}: sampling period must be a positive integer")


def load_profiles(path: Path) -> Dict[str, SimProfile]:
    raw = load_yaml(path)
    start = int(datetime.fromisoformat(raw.get("start", "2022-01-12T00:00:00+05:30")).timestamp())
    profiles = {}
    for name, spec in (raw.get("profiles") or {}).items():
        try:
            profiles[name] = SimProfile(
                name=name,
                node_id=spec["node"],
                period=int(spec["period"]),
                generators=dict(spec.get("generators") or {}),
                faults=FaultPlan.from_dict(spec.get("faults") or {}),
                start=int(spec.get("start", start)),
            )
        except KeyError as e:
            raise ConfigError(f"Profile {name} is missing {e}") from e
    return profiles


@dataclass(frozen=True)
class SimRecord:
    slot: int
    copy: int
    t_new: int
    t_rec: int
    values: Tuple[Any, ...]
    outliers: Tuple[str, ...] = ()
    nulls: Tuple[str, ...] = ()

    @property
    def is_retransmission(self) -> bool:
        return self.copy > 1

    def con(self) -> str:
        return format_positional_payload(list(self.values))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slot": self.slot,
            "copy": self.copy,
            "t_new": self.t_new,
            "t_rec": self.t_rec,
            "values": list(self.values),
            "outliers": list(self.outliers),
            "nulls": list(self.nulls),
        }


class Simulator:
    def __init__(self, profile: SimProfile, model: DeviceModel, seed: int = 42):
        self.profile = profile
        self.model = model
        self.seed = seed
        unknown = sorted(set(profile.generators) - set(model.names))
        if unknown:
            raise ConfigError(f"Profile {profile.name} generates unknown parameters {unknown}")
        numeric = [name for name, g in profile.generators.items() if "mean" in g]
        self.fault_parameters = list(profile.faults.parameters or numeric)

    # ------------------------------------------------------------------
    def _copies(self, rng: np.random.Generator, slots: int) -> List[int]:
        plan = self.profile.faults
        if plan.exact:
            counts = [copies for copies, n in sorted(plan.repeat_counts.items()) for _ in range(n)]
            if len(counts) > slots:
                raise ConfigError(f"Exact fault plan needs {len(counts)} slots, run has {slots}")
            counts += [0] * (slots - len(counts))
            return [int(c) for c in rng.permutation(np.array(counts, dtype=int))]

        copies = []
        for _ in range(slots):
            dropped = rng.random() < plan.drop_prob
            duplicated = rng.random() < plan.duplicate_prob
            extra = int(rng.integers(1, plan.max_repeats)) if duplicated else 0
            copies.append(0 if dropped else 1 + extra)
        return copies

    def _value(self, rng: np.random.Generator, spec: Dict[str, Any]) -> Any:
        if "constant" in spec:
            return spec["constant"]
        if "choice" in spec:
            return spec["choice"][int(rng.integers(0, len(spec["choice"])))]
        value = float(rng.normal(spec.get("mean", 0.0), spec.get("std", 0.0)))
        if "min" in spec:
            value = max(value, float(spec["min"]))
        if "max" in spec:
            value = min(value, float(spec["max"]))
        return round(value, int(spec.get("decimals", 2)))

    def run(self, duration: int) -> List[SimRecord]:
        """Records for `duration` seconds of operation, in emission order."""
        profile, plan = self.profile, self.profile.faults
        rng = np.random.default_rng(self.seed)
        slots = max(int(duration) // profile.period, 0)
        copies_per_slot = self._copies(rng, slots)
        time_name = self.model.timestamp.name

        records: List[SimRecord] = []
        prev_t_new = None
        prev_t_rec = None
        for slot, copies in enumerate(copies_per_slot):
            jitter = int(rng.integers(0, plan.sampling_jitter + 1)) if plan.sampling_jitter else 0
            t_new = profile.start + slot * profile.period + jitter
            if prev_t_new is not None:
                t_new = max(t_new, prev_t_new + 1)
            prev_t_new = t_new

            values = {name: self._value(rng, spec) for name, spec in profile.generators.items()}
            outliers: Tuple[str, ...] = ()
            nulls: Tuple[str, ...] = ()
            if self.fault_parameters and rng.random() < plan.outlier_prob:
                name = self.fault_parameters[int(rng.integers(0, len(self.fault_parameters)))]
                bound = abs(float(profile.generators[name].get("max", profile.generators[name].get("mean", 0.0))))
                values[name] = -(bound * 10 + 1000.0)
                outliers = (name,)
            if self.fault_parameters and rng.random() < plan.null_prob:
                name = self.fault_parameters[int(rng.integers(0, len(self.fault_parameters)))]
                if name not in outliers:
                    values[name] = None
                    nulls = (name,)
            delay = max(0, int(round(float(rng.normal(plan.delay_mean, plan.delay_std))))) if plan.delay_mean or plan.delay_std else 0

            ordered = tuple(
                t_new if name == time_name else values.get(name)
                for name in self.model.names
            )
            for copy in range(1, copies + 1):
                if copy == 1:
                    t_rec = t_new + delay
                else:
                    t_rec = prev_t_rec + 1 + int(rng.integers(0, 3))
                if prev_t_rec is not None:
                    t_rec = max(t_rec, prev_t_rec)
                prev_t_rec = t_rec
                records.append(SimRecord(slot, copy, t_new, t_rec, ordered, outliers, nulls))

        logger.info(
            f"[Simulator] RUN | profile={profile.name} | node={profile.node_id} | slots={slots} | records={len(records)}"
        )
        return records


def simulate(profile: SimProfile, model: DeviceModel, duration: int, seed: int = 42) -> List[SimRecord]:
    return Simulator(profile, model, seed).run(duration)


def ground_truth_tally(records: Iterable[SimRecord], period: int, model: Optional[DeviceModel] = None) -> Dict[str, Any]:
    """
    What a correct quality pipeline reports for this stream.

    Duplicate distribution: copies received per unique observation.
    Time delay: max(0, gap - period) between consecutive unique observations.
    Out of range: unique observations carrying an outlier or a null, per parameter.
    """
    records = list(records)
    copies = Counter(r.slot for r in records)
    firsts = [r for r in records if r.copy == 1]

    transmission = [r.t_rec - r.t_new for r in firsts]
    time_delays = []
    previous = None
    for r in firsts:
        time_delays.append(0 if previous is None else max(0, (r.t_new - previous) - period))
        previous = r.t_new

    out_of_range: Counter = Counter()
    for r in firsts:
        for name in r.outliers + r.nulls:
            out_of_range[name] += 1
    if model is not None:
        by_exchange = {p.name: p.exchange for p in model.parameters}
        out_of_range = Counter({by_exchange.get(k, k): v for k, v in out_of_range.items()})

    return {
        "fed": len(records),
        "unique": len(firsts),
        "duplicate_distribution": dict(sorted(Counter(copies.values()).items())),
        "transmission_delays": transmission,
        "time_delays": time_delays,
        "out_of_range": dict(sorted(out_of_range.items())),
    }


def write_ground_truth(records: Iterable[SimRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    return path


def read_ground_truth(path: Path) -> List[SimRecord]:
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if line.strip():
                raw = json.loads(line)
                records.append(SimRecord(
                    slot=raw["slot"], copy=raw["copy"], t_new=raw["t_new"], t_rec=raw["t_rec"],
                    values=tuple(raw["values"]), outliers=tuple(raw["outliers"]), nulls=tuple(raw["nulls"]),
                ))
    return records


def post_stream(records: Iterable[SimRecord], client, node: CampusNode, root_path: str,
                clock: Optional[ManualClock] = None) -> int:
    """
    Post every record as a content instance of the node's Data container.

    With a ManualClock shared with the tree, each instance is stamped with the
    record's recorded time so transmission delays survive the trip.
    """
    data_path = node.data_path(root_path)
    labels = node.cin_labels()
    posted = 0
    for record in records:
        if clock is not None:
            clock.set_epoch(record.t_rec)
        client.insert_cin(data_path, record.con(), labels)
        posted += 1
    logger.info(f"[Simulator] POSTED | node={node.node_id} | records={posted}")
    return posted
