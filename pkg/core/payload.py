"""
Descriptor records and positional data payloads.

A node publishes two kinds of content instance: one Descriptor CIN (JSON,
keys as in the node sheets: "Node ID", "Node Location", "Device Model",
"Version History", "Data String Parameters", "Parameters Description") and
many Data CINs whose con is a bracketed positional array. The descriptor's
"Data String Parameters" names the positions.
"""
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Dict, List, Optional, Sequence, Tuple

from core.errors import ArityMismatch, MalformedContent
from utils.json_parser import extract_array_tokens, extract_json_block

DESCRIPTOR_TIME_FORMAT = "%d-%m-%Y %H-%M-%S"
OPEN_END_YEAR = 9999

_INT = re.compile(r"^[+-]?\d+$")
_NULL_TOKENS = {"nan", "null", "none", ""}


def parse_utc_offset(offset: str) -> timezone:
    """"+05:30" -> timezone(timedelta(hours=5, minutes=30))."""
    match = re.fullmatch(r"([+-])(\d{2}):?(\d{2})", offset or "")
    if not match:
        raise ValueError(f"Bad UTC offset: {offset!r}")
    sign = -1 if match.group(1) == "-" else 1
    return timezone(sign * timedelta(hours=int(match.group(2)), minutes=int(match.group(3))))


@dataclass(frozen=True)
class VersionEntry:
    ver: str
    dt_start: str
    dt_end: str
    comments: str = ""

    def is_open(self) -> bool:
        return self.dt_end.split(" ")[0].endswith(str(OPEN_END_YEAR))

    def start(self, tz: timezone) -> datetime:
        return datetime.strptime(self.dt_start, DESCRIPTOR_TIME_FORMAT).replace(tzinfo=tz)

    def end(self, tz: timezone) -> Optional[datetime]:
        """None for the 31-12-9999 sentinel, which means the version is still current."""
        if self.is_open():
            return None
        return datetime.strptime(self.dt_end, DESCRIPTOR_TIME_FORMAT).replace(tzinfo=tz)

    def covers(self, ts: int, tz: timezone) -> bool:
        moment = datetime.fromtimestamp(ts, tz)
        end = self.end(tz)
        return self.start(tz) <= moment and (end is None or moment < end)

    def to_dict(self) -> Dict[str, str]:
        entry = {"ver": self.ver, "dt_start": self.dt_start, "dt_end": self.dt_end}
        if self.comments:
            entry["comments"] = self.comments
        return entry


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    description: str = ""
    datatype: str = "float"
    units: str = ""
    resolution: str = ""
    accuracy: str = ""
    sensor: str = ""

    def to_dict(self) -> Dict[str, str]:
        return {
            "Data Description": self.description,
            "datatype": self.datatype,
            "Units": self.units,
            "Resolution": self.resolution,
            "Accuracy": self.accuracy,
            "Sensor": self.sensor,
        }

    @classmethod
    def from_dict(cls, name: str, raw: Dict[str, Any]) -> "ParameterSpec":
        return cls(
            name=name,
            description=raw.get("Data Description", ""),
            datatype=raw.get("datatype", "float"),
            units=raw.get("Units", ""),
            resolution=str(raw.get("Resolution", "")),
            accuracy=str(raw.get("Accuracy", "")),
            sensor=raw.get("Sensor", ""),
        )


@dataclass
class DescriptorRecord:
    node_id: str
    location: Tuple[float, float]
    device_model: Dict[str, Any]
    versions: List[VersionEntry]
    parameters: List[str]
    descriptions: Dict[str, ParameterSpec] = field(default_factory=dict)

    def spec(self, name: str) -> ParameterSpec:
        return self.descriptions.get(name) or ParameterSpec(name=name)

    def version_at(self, ts: int, tz: timezone) -> Optional[VersionEntry]:
        for entry in self.versions:
            if entry.covers(ts, tz):
                return entry
        return None

    def current_version(self) -> Optional[VersionEntry]:
        return self.versions[-1] if self.versions else None

    def to_json(self) -> str:
        return json.dumps({
            "Node ID": self.node_id,
            "Node Location": {"Latitude": self.location[0], "Longitude": self.location[1]},
            "Device Model": self.device_model,
            "Version History": [v.to_dict() for v in self.versions],
            "Data String Parameters": list(self.parameters),
            "Parameters Description": {name: self.spec(name).to_dict() for name in self.parameters},
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "DescriptorRecord":
        raw = extract_json_block(text)
        if raw is None:
            raise MalformedContent("Descriptor content is not a JSON object")
        try:
            location = raw.get("Node Location") or {}
            return cls(
                node_id=raw["Node ID"],
                location=(float(location.get("Latitude", 0.0)), float(location.get("Longitude", 0.0))),
                device_model=raw.get("Device Model") or {},
                versions=[VersionEntry(**v) for v in raw.get("Version History", [])],
                parameters=list(raw["Data String Parameters"]),
                descriptions={
                    name: ParameterSpec.from_dict(name, spec)
                    for name, spec in (raw.get("Parameters Description") or {}).items()
                },
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedContent(f"Descriptor content is incomplete: {e}") from e


def _parse_token(token: str):
    if token.lower() in _NULL_TOKENS:
        return None
    if len(token) >= 2 and token[0] == token[-1] == '"':
        try:
            return json.loads(token)
        except ValueError:
            raise MalformedContent(f"Bad quoted value in content: {token!r}")
    if len(token) >= 2 and token[0] == token[-1] == "'":
        return token[1:-1]
    if _INT.match(token):
        return int(token)
    try:
        return float(token)
    except ValueError:
        raise MalformedContent(f"Unparseable value in content: {token!r}")


def parse_positional_values(con: str) -> List[Any]:
    """Parse a bracketed positional array; "nan" becomes None."""
    tokens = extract_array_tokens(con)
    if tokens is None:
        raise MalformedContent(f"Content is not a bracketed array: {con!r}")
    return [_parse_token(token) for token in tokens]


def parse_positional_payload(desc: DescriptorRecord, con: str) -> Dict[str, Any]:
    """
    Bind the i-th value of con to the i-th descriptor parameter.

    Raises:
        MalformedContent: con is not a bracketed comma-separated array
        ArityMismatch: value count differs from the parameter count
    """
    values = parse_positional_values(con)
    if len(values) != len(desc.parameters):
        raise ArityMismatch(
            f"{desc.node_id}: content carries {len(values)} values, descriptor names {len(desc.parameters)}"
        )
    return dict(zip(desc.parameters, values))


def _format_value(value: Any) -> str:
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "nan" if value != value else repr(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    return str(value)


def format_positional_payload(values: Sequence[Any]) -> str:
    """Inverse of parse_positional_values: [1645254204, 867.0, None] -> "[1645254204, 867.0, nan]"."""
    return "[" + ", ".join(_format_value(v) for v in values) + "]"
