"""
Resource server: metadata, latest and temporal APIs over the campus data.

Latest data comes from the monitor tree (the newest instance of the node's
Data container); temporal data comes from the lake. Both are rendered in the
exchange data model: quantities as {"instValue": v}, text and code attributes
as plain strings, observationDateTime in the server's UTC offset.
"""
import operator
import re
import time
from datetime import datetime, timedelta, timezone
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from core.campus import CampusNode, read_descriptor
from core.errors import Empty, NotFound, ResourceError
from core.payload import DESCRIPTOR_TIME_FORMAT, DescriptorRecord, parse_positional_payload, parse_utc_offset
from core.tree import ResourceTree
from exchange.catalogue import Catalogue
from exchange.errors import BadQuery, NoData, SpanTooLarge, UnknownItem
from exchange.tokens import RevocationTable, TokenVerifier
from lake.errors import LakeError, UnknownNode
from lake.lake import DataLake
from utils.logging_setup import get_logger

logger = get_logger("ResourceServer")

SUCCESS = "urn:dx:rs:success"
OBSERVATION_TIME = "observationDateTime"
TIMERELS = ("before", "after", "during")

_FILTER = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*(>=|<=|==|!=|>|<)\s*(.+?)\s*$")
_OPS = {
    ">": operator.gt, "<": operator.lt, ">=": operator.ge,
    "<=": operator.le, "==": operator.eq, "!=": operator.ne,
}


def _success(results: List[Dict[str, Any]], title: str = "Successful Operation", **extra) -> Dict[str, Any]:
    return {"title": title, "type": SUCCESS, "results": results, **extra}


def parse_time(value: str) -> datetime:
    """ISO-8601 with offset or Z; naive times are read as UTC."""
    try:
        moment = datetime.fromisoformat(value.strip().replace("Z", "+00:00"))
    except (AttributeError, ValueError) as e:
        raise BadQuery(f"Bad date-time {value!r}") from e
    return moment if moment.tzinfo else moment.replace(tzinfo=timezone.utc)


class ValueFilter:
    """One attribute comparison, e.g. pm2p5>30.00 or airQualityLevel==POOR."""

    def __init__(self, attr: str, op: str, literal: Any):
        self.attr = attr
        self.op = op
        self.literal = literal

    @classmethod
    def parse(cls, q: str) -> "ValueFilter":
        match = _FILTER.match(q or "")
        if not match:
            raise BadQuery(f"Bad value filter {q!r}")
        attr, op, raw = match.groups()
        raw = raw.strip("'\"")
        try:
            literal: Any = float(raw)
        except ValueError:
            if op not in ("==", "!="):
                raise BadQuery(f"Operator {op} needs a numeric literal")
            literal = raw
        return cls(attr, op, literal)

    def matches(self, value: Any) -> bool:
        if value is None or value == "nan":
            return False
        if isinstance(self.literal, float):
            try:
                return _OPS[self.op](float(value), self.literal)
            except (TypeError, ValueError):
                return False
        return _OPS[self.op](str(value), self.literal)


class ResourceServer:
    def __init__(
        self,
        catalogue: Catalogue,
        verifier: TokenVerifier,
        tree: ResourceTree,
        lake: DataLake,
        admin_origin: str = "admin:admin",
        page_size: int = 2000,
        max_span_days: int = 10,
        utc_offset: str = "+05:30",
        clock: Callable[[], float] = time.time,
    ):
        self.catalogue = catalogue
        self.verifier = verifier
        self.tree = tree
        self.lake = lake
        self.admin_origin = admin_origin
        self.page_size = page_size
        self.max_span = timedelta(days=max_span_days)
        self.tz = parse_utc_offset(utc_offset)
        self.clock = clock

    @property
    def revocations(self) -> RevocationTable:
        return self.verifier.revocations

    def _authorize(self, token: Optional[str], resource_id: str) -> CampusNode:
        self.verifier.verify(token, resource_id, self.clock())
        _, node = self.catalogue.resolve(resource_id)
        return node

    def _descriptor(self, node: CampusNode) -> DescriptorRecord:
        return read_descriptor(self.tree, node, self.admin_origin)

    def _iso(self, ts: int) -> str:
        return datetime.fromtimestamp(int(ts), self.tz).isoformat()

    def _descriptor_time(self, value: str) -> str:
        return datetime.strptime(value, DESCRIPTOR_TIME_FORMAT).replace(tzinfo=self.tz).isoformat()

    # ------------------------------------------------------------------
    # rendering
    # ------------------------------------------------------------------
    def render(self, node: CampusNode, values: Dict[str, Any], ts: int, version: Optional[str]) -> Dict[str, Any]:
        """One observation in the exchange data model."""
        record: Dict[str, Any] = {"id": self.catalogue.item_id(node)}
        time_name = node.model.timestamp.name
        for parameter in node.model.parameters:
            if parameter.name == time_name:
                continue
            record[parameter.exchange] = parameter.render(values.get(parameter.name))
        record[OBSERVATION_TIME] = self._iso(ts)
        record["versionInfo"] = {"versionName": version}
        return record

    # ------------------------------------------------------------------
    # APIs
    # ------------------------------------------------------------------
    def metadata(self, token: Optional[str], resource_id: str) -> Dict[str, Any]:
        node = self._authorize(token, resource_id)
        descriptor = self._descriptor(node)
        sensors = {
            p.exchange: descriptor.spec(p.name).sensor
            for p in node.model.parameters
            if descriptor.spec(p.name).sensor
        }
        controller = descriptor.device_model.get("Controller")
        if controller:
            sensors["controller"] = controller
        versions = [
            {
                "versionName": v.ver,
                "startDateTime": self._descriptor_time(v.dt_start),
                "endDateTime": self._descriptor_time(v.dt_end),
                "versionSpec": dict(sensors),
                "comments": v.comments,
            }
            for v in descriptor.versions
        ]
        group_id = self.catalogue.group_id(node.group)
        return _success([{
            "id": f"{group_id}-version/version-info",
            "deviceInfo": {"deviceID": node.node_id, "deviceName": node.label},
            "versionInfo": versions,
        }], title="Successful operation")

    def latest(self, token: Optional[str], resource_id: str) -> Dict[str, Any]:
        node = self._authorize(token, resource_id)
        try:
            cin = self.tree.latest(node.data_path(self.tree.root.path), self.admin_origin)
        except (Empty, NotFound) as e:
            raise NoData(f"No data for {node.node_id}") from e
        descriptor = self._descriptor(node)
        try:
            values = parse_positional_payload(descriptor, cin.con)
        except ResourceError as e:
            raise NoData(f"Latest instance of {node.node_id} is unreadable: {e.message}") from e
        ts = values.get(node.model.timestamp.name)
        if not isinstance(ts, int):
            raise NoData(f"Latest instance of {node.node_id} has no timestamp")
        version = descriptor.version_at(ts, self.tz)
        if version is not None:
            version_name = version.ver
        else:
            version_name = cin.lbl[2] if len(cin.lbl) > 2 else None
        return _success([self.render(node, values, ts, version_name)])

    def window(self, timerel: str, time_value: str, end_time: Optional[str]) -> Tuple[int, int]:
        """[start, end) epoch window; before/after reach back/forward the maximum span."""
        if timerel not in TIMERELS:
            raise BadQuery(f"timerel must be one of {list(TIMERELS)}")
        moment = parse_time(time_value)
        if timerel == "before":
            start, end = moment - self.max_span, moment
        elif timerel == "after":
            start, end = moment, moment + self.max_span
        else:
            if not end_time:
                raise BadQuery("timerel=during needs endTime")
            end = parse_time(end_time)
            start = moment
            if start > end:
                raise BadQuery("time is after endTime")
            if end - start > self.max_span:
                raise SpanTooLarge(f"Window exceeds {self.max_span.days} days")
        return int(start.timestamp()), int(end.timestamp())

    def temporal(
        self,
        token: Optional[str],
        resource_id: str,
        timerel: str,
        time_value: str,
        end_time: Optional[str] = None,
        attrs: Optional[Iterable[str]] = None,
        q: Optional[str] = None,
        offset: int = 0,
    ) -> Dict[str, Any]:
        """Lake rows in the window, newest first, filtered, projected and paged."""
        node = self._authorize(token, resource_id)
        if offset < 0:
            raise BadQuery("offset must be >= 0")
        start, end = self.window(timerel, time_value, end_time)

        known = {p.exchange for p in node.model.parameters} | {OBSERVATION_TIME, "id", "versionInfo"}
        attrs = [a for a in (attrs or []) if a]
        unknown = [a for a in attrs if a not in known]
        if unknown:
            raise BadQuery(f"Unknown attributes {unknown}")
        value_filter = ValueFilter.parse(q) if q else None
        if value_filter and value_filter.attr not in known:
            raise BadQuery(f"Unknown filter attribute {value_filter.attr}")

        try:
            rows = self.lake.query_temporal(node.model.vertical, node.node_id, start, end)
        except UnknownNode:
            rows = []
        except LakeError as e:
            raise BadQuery(e.message) from e

        results = []
        for row in reversed(rows):
            record = self.render(node, row["values"], row["ts"], row["version"])
            if value_filter:
                parameter = node.model.by_exchange(value_filter.attr)
                raw = row["values"].get(parameter.name) if parameter and parameter.kind == "quantity" else record.get(value_filter.attr)
                if not value_filter.matches(raw):
                    continue
            if attrs:
                record = {a: record[a] for a in attrs}
            results.append(record)

        page = results[offset:offset + self.page_size]
        logger.info(
            f"[ResourceServer] TEMPORAL | node={node.node_id} | timerel={timerel} | hits={len(results)} | offset={offset}"
        )
        return _success(page, limit=self.page_size, offset=offset, totalHits=len(results))

    def revoke(self, request_token: str) -> Dict[str, Any]:
        return _success([self.revocations.apply(request_token)], title="Token revoked")
