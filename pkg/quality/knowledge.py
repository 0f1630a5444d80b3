"""
Knowledge base and quality-factor tables.

The knowledge base links every campus node to its feature of interest, its
device placement and the sensors behind each observed property. Units,
datatypes and sensor names come from the campus device models; the
knowledge_base.yaml file adds what a descriptor sheet does not carry.

Quality factors (quality_factors.yaml) give, per feature of interest, the
expected delay between two observations and the allowed range per property,
optionally split into local time-of-day windows.
"""
import hashlib
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from core.campus import Campus
from core.payload import parse_utc_offset
from quality.errors import BadFactor, MissingTimestamp, UnknownNode
from quality.models import (
    EnrichedObservation,
    ExpectedDelay,
    KnowledgeBaseEntry,
    ObservedProperty,
    RangeValue,
    RawRecord,
    SensorDescription,
)
from utils.logging_setup import get_logger
from utils.settings import load_yaml

logger = get_logger("KnowledgeBase")

DAY_SECONDS = 24 * 3600


def mint_uri(namespace: str, node_id: str, prop: str, t_new: int) -> str:
    """Same (node, property, result time) -> same uri, so retransmissions collide."""
    digest = hashlib.sha1(f"{node_id}|{prop}|{int(t_new)}".encode("utf-8")).hexdigest()[:20]
    return f"{namespace}observation/{digest}"


class KnowledgeBase:
    def __init__(self, campus: Campus, raw: Dict[str, Any]):
        self.campus = campus
        self.namespace = raw.get("namespace") or "http://cityops.local/kb/"
        self.features = dict(raw.get("features_of_interest") or {})
        self.devices = dict(raw.get("devices") or {})
        self.node_overrides = dict(raw.get("nodes") or {})
        self.sensors: Dict[str, SensorDescription] = {}
        for name, spec in (raw.get("sensors") or {}).items():
            low_high = spec.get("operating_range")
            self.sensors[name] = SensorDescription(
                name=name,
                operating_range=(float(low_high[0]), float(low_high[1])) if low_high else None,
                capabilities={k: str(v) for k, v in (spec.get("capabilities") or {}).items()},
            )
        self._entries: Dict[str, KnowledgeBaseEntry] = {}

    @classmethod
    def load(cls, path: Path, campus: Campus) -> "KnowledgeBase":
        return cls(campus, load_yaml(path))

    def entry(self, node_id: str) -> KnowledgeBaseEntry:
        """
        Knowledge-base entry for a node, built once from the campus model.

        Raises:
            UnknownNode: the node is not on the campus or its model has no feature of interest
        """
        if node_id in self._entries:
            return self._entries[node_id]
        node = self.campus.find(node_id)
        if node is None:
            raise UnknownNode(f"{node_id} is not in the knowledge base")
        override = self.node_overrides.get(node_id) or {}
        foi = override.get("feature_of_interest") or self.features.get(node.model.key)
        if not foi:
            raise UnknownNode(f"{node_id}: model {node.model.key} has no feature of interest")

        time_name = node.model.timestamp.name
        properties = [
            ObservedProperty(
                name=p.name,
                exchange=p.exchange,
                unit=p.spec.units,
                datatype=p.spec.datatype,
                sensor=p.spec.sensor or None,
            )
            for p in node.model.parameters
            if p.name != time_name
        ]
        device = self.devices.get(node.model.key) or {}
        entry = KnowledgeBaseEntry(
            node_id=node_id,
            model=node.model.key,
            feature_of_interest=foi,
            device=device.get("device", ""),
            location=device.get("location", ""),
            properties=properties,
            sensors={p.sensor: self.sensors[p.sensor] for p in properties if p.sensor in self.sensors},
        )
        self._entries[node_id] = entry
        return entry

    def enrich(self, raw: RawRecord) -> List[EnrichedObservation]:
        """
        One observation per observed property of the record.

        Raises:
            UnknownNode: no knowledge-base entry for the node
            MissingTimestamp: the record has no integer result time
        """
        entry = self.entry(raw.node_id)
        if not isinstance(raw.t_new, int) or isinstance(raw.t_new, bool):
            raise MissingTimestamp(f"{raw.node_id}: record has no result time")
        return [
            EnrichedObservation(
                uri=mint_uri(self.namespace, raw.node_id, prop.exchange, raw.t_new),
                node_id=raw.node_id,
                foi=entry.feature_of_interest,
                prop=prop.exchange,
                value=raw.values.get(prop.name),
                unit=prop.unit,
                t_new=raw.t_new,
                t_rec=int(raw.t_rec),
                sensor=prop.sensor,
                datatype=prop.datatype,
            )
            for prop in entry.properties
        ]


def _clock_seconds(value: str) -> int:
    try:
        hours, minutes = str(value).split(":")
        seconds = int(hours) * 3600 + int(minutes) * 60
    except ValueError as e:
        raise BadFactor(f"Bad time of day {value!r}, expected HH:MM") from e
    if not 0 <= seconds <= DAY_SECONDS:
        raise BadFactor(f"Time of day {value!r} is outside 00:00-24:00")
    return seconds


def _bounds(foi: str, prop: str, pair: Any) -> Tuple[float, float]:
    if not isinstance(pair, (list, tuple)) or len(pair) != 2:
        raise BadFactor(f"{foi}/{prop}: range must be [min, max]")
    low, high = float(pair[0]), float(pair[1])
    if low > high:
        raise BadFactor(f"{foi}/{prop}: min {low} is above max {high}")
    return low, high


class FactorTable:
    def __init__(self, raw: Dict[str, Any]):
        self.tz: timezone = parse_utc_offset(raw.get("utc_offset", "+05:30"))
        self.delays: Dict[str, ExpectedDelay] = {}
        self.windows: Dict[Tuple[str, str], List[RangeValue]] = {}
        self.defaults: Dict[Tuple[str, str], RangeValue] = {}

        for foi, spec in (raw.get("factors") or {}).items():
            spec = spec or {}
            if "delay" in spec:
                seconds = spec["delay"]
                if not isinstance(seconds, int) or seconds <= 0:
                    raise BadFactor(f"{foi}: expected delay must be a positive number of seconds")
                self.delays[foi] = ExpectedDelay(foi, seconds)
            for prop, rule in (spec.get("ranges") or {}).items():
                self._add_range(foi, prop, rule)

        fois = set(self.delays) | {foi for foi, _ in self.defaults} | {foi for foi, _ in self.windows}
        logger.info(f"[FactorTable] LOADED | fois={len(fois)} | delays={len(self.delays)}")

    @classmethod
    def load(cls, path: Path) -> "FactorTable":
        return cls(load_yaml(path))

    def _add_range(self, foi: str, prop: str, rule: Any) -> None:
        if not isinstance(rule, dict):
            low, high = _bounds(foi, prop, rule)
            self.defaults[(foi, prop)] = RangeValue(foi, prop, low, high)
            return

        windows = []
        for window in rule.get("windows") or []:
            start, end = _clock_seconds(window["start"]), _clock_seconds(window["end"])
            if start >= end:
                raise BadFactor(f"{foi}/{prop}: window {window['start']}-{window['end']} is empty")
            low, high = _bounds(foi, prop, [window["min"], window["max"]])
            windows.append(RangeValue(foi, prop, low, high, (start, end)))
        windows.sort(key=lambda r: r.interval)
        for before, after in zip(windows, windows[1:]):
            if after.interval[0] < before.interval[1]:
                raise BadFactor(f"{foi}/{prop}: time windows overlap")
        if windows:
            self.windows[(foi, prop)] = windows
        if rule.get("default") is not None:
            low, high = _bounds(foi, prop, rule["default"])
            self.defaults[(foi, prop)] = RangeValue(foi, prop, low, high)

    def second_of_day(self, ts: int) -> int:
        local = datetime.fromtimestamp(int(ts), self.tz)
        return local.hour * 3600 + local.minute * 60 + local.second

    def expected_delay(self, foi: str) -> Optional[ExpectedDelay]:
        return self.delays.get(foi)

    def range_for(self, foi: str, prop: str, ts: int) -> Optional[RangeValue]:
        """The window covering ts's local time of day, else the whole-day default."""
        second = self.second_of_day(ts)
        for window in self.windows.get((foi, prop), []):
            if window.covers(second):
                return window
        return self.defaults.get((foi, prop))
