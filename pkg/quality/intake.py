"""
Sources of raw records for the quality pipeline.

The result time comes from the node's Timestamp parameter, the recorded time
from the instance creation time the platform stamped (ct).
"""
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

from core.campus import Campus, CampusNode
from core.errors import ResourceError
from core.payload import parse_positional_payload
from core.tree import TIMESTAMP_FORMAT
from lake.errors import LakeError
from lake.intake import extract_cin
from lake.lake import LakeEvent
from quality.errors import MissingTimestamp, UnknownNode
from quality.models import RawRecord
from utils.journal import Journal
from utils.logging_setup import get_logger

logger = get_logger("QualityIntake")


def recorded_time(cin: Dict[str, Any]) -> int:
    """Epoch seconds of an instance's ct ("20220112T000005", UTC)."""
    ct = cin.get("ct")
    try:
        return int(datetime.strptime(ct, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc).timestamp())
    except (TypeError, ValueError) as e:
        raise MissingTimestamp(f"Instance has no usable creation time: {ct!r}") from e


def _result_time(value: Any) -> Optional[int]:
    return value if isinstance(value, int) and not isinstance(value, bool) else None


def raw_from_event(event: LakeEvent, campus: Campus) -> RawRecord:
    """Adapter for lake post-store events (stored rows and re-deliveries alike)."""
    node = campus.find(event.node_id)
    if node is None:
        raise UnknownNode(f"{event.node_id} is not on the campus")
    return RawRecord(
        node_id=event.node_id,
        t_new=int(event.ts),
        t_rec=recorded_time(event.cin),
        values={k: v for k, v in event.values.items() if k != node.model.timestamp.name},
        source="lake",
    )


def raw_from_cin(cin: Dict[str, Any], campus: Campus, source: str = "notification") -> RawRecord:
    """Adapter for a bare content instance (a notification or a journaled one)."""
    node = campus.node_for_labels(list(cin.get("lbl") or []))
    if node is None:
        raise UnknownNode(f"No known node label in {cin.get('lbl')}")
    try:
        values = parse_positional_payload(node.descriptor(), cin.get("con", ""))
    except ResourceError as e:
        raise MissingTimestamp(f"{node.node_id}: {e.message}") from e
    time_name = node.model.timestamp.name
    return RawRecord(
        node_id=node.node_id,
        t_new=_result_time(values.get(time_name)),
        t_rec=recorded_time(cin),
        values={k: v for k, v in values.items() if k != time_name},
        source=source,
    )


def journal_source(path: Path, campus: Campus) -> Iterator[RawRecord]:
    """Raw records from the lake intake journal, in arrival order."""
    skipped = 0
    for entry in Journal(Path(path)).replay():
        try:
            cin = extract_cin(entry.get("body"))
            if cin is None:
                continue
            yield raw_from_cin(cin, campus, source="journal")
        except (LakeError, UnknownNode, MissingTimestamp) as e:
            skipped += 1
            logger.warning(f"[QualityIntake] SKIP | path={path} | reason={e}")
    logger.info(f"[QualityIntake] JOURNAL DONE | path={path} | skipped={skipped}")


def raw_from_sim(record, node: CampusNode) -> RawRecord:
    """Adapter for simulator records (ground-truth logs), bypassing the platform."""
    time_name = node.model.timestamp.name
    return RawRecord(
        node_id=node.node_id,
        t_new=int(record.t_new),
        t_rec=int(record.t_rec),
        values={name: value for name, value in zip(node.model.names, record.values) if name != time_name},
        source="simulator",
    )
