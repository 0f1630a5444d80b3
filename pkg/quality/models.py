"""
Records flowing through the quality pipeline.

A RawRecord is one received instance (all parameters of one node at one
time); enrichment splits it into one EnrichedObservation per observed
property, and the assessment layers attach an AssessmentResult to each.
"""
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple


@dataclass(frozen=True)
class RawRecord:
    node_id: str
    t_new: Optional[int]
    t_rec: int
    values: Dict[str, Any]
    source: str = "lake"


@dataclass(frozen=True)
class SensorDescription:
    name: str
    operating_range: Optional[Tuple[float, float]] = None
    capabilities: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ObservedProperty:
    name: str       # descriptor parameter name, e.g. "Pressure Voltage"
    exchange: str   # property name used everywhere downstream, e.g. "pressureVoltage"
    unit: str
    datatype: str
    sensor: Optional[str] = None


@dataclass
class KnowledgeBaseEntry:
    node_id: str
    model: str
    feature_of_interest: str
    device: str
    location: str
    properties: List[ObservedProperty]
    sensors: Dict[str, SensorDescription]


@dataclass(frozen=True)
class EnrichedObservation:
    uri: str
    node_id: str
    foi: str
    prop: str
    value: Any
    unit: str
    t_new: int
    t_rec: int
    sensor: Optional[str] = None
    datatype: str = "float"

    @property
    def stream(self) -> Tuple[str, str, str]:
        # nodes sharing a feature of interest still keep separate streams
        return (self.node_id, self.foi, self.prop)


@dataclass
class AssessmentResult:
    num_of_duplicates: int = 0
    transmission_delay: Optional[int] = None
    time_delay: Optional[int] = None
    is_out_of_range: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        """IDQA property names; a duplicate carries only its count."""
        body: Dict[str, Any] = {"numOfDuplicates": self.num_of_duplicates}
        if self.transmission_delay is not None:
            body["transmissionDelay"] = self.transmission_delay
        if self.time_delay is not None:
            body["timeDelay"] = self.time_delay
        if self.is_out_of_range is not None:
            body["isOutOfRange"] = self.is_out_of_range
        return body


@dataclass
class AssessedObservation:
    observation: EnrichedObservation
    result: AssessmentResult = field(default_factory=AssessmentResult)
    duplicate: bool = False
    # result time of the stream's previous non-duplicate, captured by the duplicacy layer
    previous: Optional[int] = None
    missing: List[str] = field(default_factory=list)


@dataclass
class StreamState:
    """Per (node, feature of interest, property) state of the duplicacy layer."""
    t_last: Optional[int] = None
    last_uri: Optional[str] = None
    received: Counter = field(default_factory=Counter)


@dataclass(frozen=True)
class RangeValue:
    foi: str
    prop: str
    min_value: float
    max_value: float
    # seconds since local midnight, [start, end); None means the whole day
    interval: Optional[Tuple[int, int]] = None

    def covers(self, second_of_day: int) -> bool:
        if self.interval is None:
            return True
        start, end = self.interval
        return start <= second_of_day < end

    def contains(self, value: float) -> bool:
        return self.min_value <= value <= self.max_value


@dataclass(frozen=True)
class ExpectedDelay:
    foi: str
    seconds: int
