"""
DataLake: routes content instances to per-vertical tenant stores.

The tenant is the vertical behind the instance's AE label ("AE-AQ" -> AQ,
"AE-WM-WF" -> WM). The node comes from the node label, the values from the
node's descriptor and the version from the descriptor's version history at
the observation time.
"""
import threading
from collections import Counter
from dataclasses import dataclass, field
from datetime import timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional

from core.campus import Campus, CampusNode
from core.errors import ResourceError
from core.payload import parse_positional_payload, parse_utc_offset
from lake.errors import DuplicateKey, LakeError, UnknownNode, UnknownTenant, UnknownVertical, VersionNotFound
from lake.store import TenantStore
from utils.logging_setup import get_logger

logger = get_logger("DataLake")

STORED = "stored"
DUPLICATE = "duplicate"


@dataclass
class LakeEvent:
    """What a post-store listener sees: one routed instance and its outcome."""
    tenant: str
    node_id: str
    ts: int
    version: str
    values: Dict[str, Any]
    cin: Dict[str, Any]
    outcome: str
    keys: Dict[str, Any] = field(default_factory=dict)


LakeListener = Callable[[LakeEvent], None]


class DataLake:
    def __init__(
        self,
        campus: Campus,
        data_dir: Optional[Path] = None,
        verticals: Optional[Iterable[str]] = None,
        utc_offset: str = "+05:30",
        write_delay: float = 0.0,
    ):
        self.campus = campus
        self.root = Path(data_dir) / "lake" if data_dir else None
        self.tz: timezone = parse_utc_offset(utc_offset)
        self.verticals = sorted(set(verticals or []) | set(campus.verticals()))
        self.stores: Dict[str, TenantStore] = {
            v: TenantStore(v, self.root, write_delay=write_delay) for v in self.verticals
        }
        self.stats: Counter = Counter()
        self._listeners: List[LakeListener] = []
        self._ae_vertical = {m.ae: m.vertical for m in campus.models.values()}
        self._stats_lock = threading.Lock()

    # ------------------------------------------------------------------
    def add_listener(self, listener: LakeListener) -> None:
        self._listeners.append(listener)

    def tenant(self, name: str) -> TenantStore:
        store = self.stores.get(name)
        if store is None:
            raise UnknownTenant(f"No tenant store for vertical {name!r}")
        return store

    def route_tenant(self, labels: Iterable[str]) -> str:
        """Tenant for an instance's labels, from its AE label."""
        for label in labels or []:
            if not isinstance(label, str) or not label.startswith("AE-"):
                continue
            vertical = self._ae_vertical.get(label) or label[3:].split("-", 1)[0]
            if vertical in self.stores:
                return vertical
            raise UnknownVertical(f"AE label {label} maps to unknown vertical {vertical!r}")
        raise UnknownVertical(f"No AE label in {list(labels or [])}")

    def _node(self, labels: List[str]) -> CampusNode:
        node = self.campus.node_for_labels(labels)
        if node is None:
            raise UnknownNode(f"No known node label in {labels}")
        return node

    # ------------------------------------------------------------------
    def ingest(self, cin: Dict[str, Any], tenant: Optional[str] = None) -> LakeEvent:
        """
        Parse, route and store one content instance (its m2m:cin attributes).

        Re-deliveries of an already stored (node, ts) are counted as duplicates
        and reported to listeners, but stored once.

        Raises:
            LakeError: unknown vertical/node, no covering version, or the store failed
        """
        labels = list(cin.get("lbl") or [])
        tenant = tenant or self.route_tenant(labels)
        store = self.tenant(tenant)
        node = self._node(labels)
        if node.model.vertical != tenant:
            raise UnknownNode(f"Node {node.node_id} does not belong to tenant {tenant}")

        descriptor = node.descriptor()
        try:
            values = parse_positional_payload(descriptor, cin.get("con", ""))
        except ResourceError as e:
            raise LakeError(f"{node.node_id}: {e.message}") from e
        ts = values.get(node.model.timestamp.name)
        if not isinstance(ts, int):
            raise LakeError(f"{node.node_id}: observation has no integer timestamp")
        version = descriptor.version_at(ts, self.tz)
        if version is None:
            raise VersionNotFound(f"{node.node_id}: no version covers ts={ts}")

        try:
            keys = store.store_observation(node, version, values, ts)
            outcome = STORED
        except DuplicateKey:
            keys = {}
            outcome = DUPLICATE
        self._count(outcome)

        event = LakeEvent(tenant, node.node_id, ts, version.ver, values, cin, outcome, keys)
        for listener in list(self._listeners):
            try:
                listener(event)
            except Exception as e:
                logger.error(f"[DataLake] LISTENER ERROR | tenant={tenant} | node={node.node_id} | error={e}")
        return event

    def store_observation(self, tenant: str, node_id: str, values: Dict[str, Any], ts: int) -> Dict[str, Any]:
        """Store already-parsed values for a node; the version is resolved from ts."""
        node = self.campus.find(node_id)
        if node is None:
            raise UnknownNode(f"Unknown node {node_id}")
        version = node.descriptor().version_at(int(ts), self.tz)
        if version is None:
            raise VersionNotFound(f"{node_id}: no version covers ts={ts}")
        return self.tenant(tenant).store_observation(node, version, values, ts)

    def query_temporal(
        self, tenant: str, node_id: str, start: int, end: int, attrs: Optional[Iterable[str]] = None,
    ) -> List[Dict[str, Any]]:
        return self.tenant(tenant).query_temporal(node_id, start, end, attrs)

    def dump(self, tenant: str) -> str:
        return self.tenant(tenant).dump()

    def _count(self, key: str) -> None:
        with self._stats_lock:
            self.stats[key] += 1
