"""
One tenant's galaxy schema.

Two fact tables share the dimensions:
  data        (DFT) one row per observation, primary key (node, ts)
  parameters  (PFT) one row per (vertical, version, parameter)
and four dimension tables: nodes, versions, verticals, sensors.

Each table is an append-only JSONL file under <data_dir>/lake/<tenant>/.
Writers are serialised by a writer lock held across the slow part of a write.
Readers share a separate lock that a writer takes only to publish finished
rows, so queries never wait on a write in flight.
"""
import bisect
import json
import threading
import time
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from core.campus import CampusNode
from core.payload import VersionEntry
from lake.errors import BadWindow, DuplicateKey, StoreUnavailable, UnknownNode
from utils.logging_setup import get_logger

logger = get_logger("TenantStore")

TABLES = ("nodes", "versions", "verticals", "sensors", "parameters", "data")


def _key(*parts: Any) -> str:
    return "|".join(str(p) for p in parts)


class TenantStore:
    def __init__(self, tenant: str, root: Optional[Path] = None, write_delay: float = 0.0):
        self.tenant = tenant
        self.root = Path(root) / tenant if root else None
        self.write_delay = write_delay
        self.online = True

        self._writer = threading.Lock()
        # guards the in-memory tables; held briefly by readers and by the publish step
        self._lock = threading.Lock()
        self._tables: Dict[str, Dict[str, Dict[str, Any]]] = {name: {} for name in TABLES}
        self._index: Dict[str, List[int]] = {}

        if self.root:
            self.root.mkdir(parents=True, exist_ok=True)
            self._load()

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------
    def _table_path(self, table: str) -> Path:
        return self.root / f"{table}.jsonl"

    def _load(self) -> None:
        rows = 0
        for table in TABLES:
            path = self._table_path(table)
            if not path.exists():
                continue
            with open(path, 'r', encoding='utf-8') as f:
                for line in f:
                    if not line.strip():
                        continue
                    try:
                        row = json.loads(line)
                    except json.JSONDecodeError:
                        logger.warning(f"[TenantStore] SKIP | tenant={self.tenant} | table={table} | reason=corrupt row")
                        continue
                    self._put(table, row)
                    rows += 1
        if rows:
            logger.info(f"[TenantStore] LOADED | tenant={self.tenant} | rows={rows}")

    def _put(self, table: str, row: Dict[str, Any]) -> None:
        key = row["key"]
        self._tables[table][key] = row
        if table == "data":
            bisect.insort(self._index.setdefault(row["node"], []), int(row["ts"]))

    def _append(self, table: str, row: Dict[str, Any]) -> None:
        if self.root:
            with open(self._table_path(table), 'a', encoding='utf-8') as f:
                f.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")

    def _upsert(self, pending: List[Tuple[str, Dict[str, Any]]], table: str, row: Dict[str, Any]) -> str:
        """Stage a dimension row once; later writes of the same key are no-ops."""
        key = row["key"]
        if key not in self._tables[table] and not any(t == table and r["key"] == key for t, r in pending):
            pending.append((table, row))
        return key

    # ------------------------------------------------------------------
    # writes
    # ------------------------------------------------------------------
    def store_observation(
        self, node: CampusNode, version: VersionEntry, values: Dict[str, Any], ts: int,
    ) -> Dict[str, Any]:
        """
        Insert one data fact row and upsert the dimension and parameter rows it references.

        Writers are serialised by the writer lock. The rows become visible to
        readers in one short publish step after they reach disk.

        Returns:
            dict: keys of the rows written or referenced

        Raises:
            DuplicateKey: (node, ts) is already stored
            StoreUnavailable: the store is offline
        """
        if not self.online:
            raise StoreUnavailable(f"Tenant store {self.tenant} is offline")
        ts = int(ts)
        data_key = _key(node.node_id, ts)
        model = node.model

        with self._writer:
            if data_key in self._tables["data"]:
                raise DuplicateKey(f"{self.tenant}: ({node.node_id}, {ts}) already stored")
            if self.write_delay:
                time.sleep(self.write_delay)

            pending: List[Tuple[str, Dict[str, Any]]] = []
            vertical_key = self._upsert(pending, "verticals", {"key": model.vertical, "name": model.vertical, "ae": model.ae})
            node_key = self._upsert(pending, "nodes", {
                "key": node.node_id, "node": node.node_id, "label": node.label,
                "lat": node.lat, "lon": node.lon, "vertical": vertical_key,
            })
            version_key = self._upsert(pending, "versions", {
                "key": _key(node.node_id, version.ver), "node": node_key, **version.to_dict(),
            })

            parameter_keys = []
            for parameter in model.parameters:
                spec = parameter.spec
                sensor_key = None
                if spec.sensor:
                    sensor_key = self._upsert(pending, "sensors", {"key": spec.sensor, "name": spec.sensor})
                parameter_keys.append(self._upsert(pending, "parameters", {
                    "key": _key(model.vertical, version.ver, spec.name),
                    "parameter": spec.name,
                    "vertical": vertical_key,
                    "version": version.ver,
                    "sensor": sensor_key,
                    "datatype": spec.datatype,
                    "unit": spec.units,
                    "accuracy": spec.accuracy,
                    "resolution": spec.resolution,
                }))

            pending.append(("data", {
                "key": data_key,
                "node": node_key,
                "vertical": vertical_key,
                "ts": ts,
                "version": version.ver,
                "values": {k: v for k, v in values.items() if k != model.timestamp.name},
                "parameters": parameter_keys,
            }))

            for table, row in pending:
                self._append(table, row)
            with self._lock:
                for table, row in pending:
                    self._put(table, row)

        logger.debug(f"[TenantStore] STORED | tenant={self.tenant} | node={node.node_id} | ts={ts} | version={version.ver}")
        return {"data": data_key, "node": node_key, "version": version_key, "parameters": parameter_keys}

    # ------------------------------------------------------------------
    # reads
    # ------------------------------------------------------------------
    def has_node(self, node_id: str) -> bool:
        return node_id in self._tables["nodes"]

    def query_temporal(
        self, node_id: str, start: int, end: int, attrs: Optional[Iterable[str]] = None,
    ) -> List[Dict[str, Any]]:
        """
        Rows with start <= ts < end in ascending ts.

        With attrs the rows carry only ts and the selected values.
        """
        if start > end:
            raise BadWindow(f"Query start {start} is after end {end}")
        with self._lock:
            if node_id not in self._tables["nodes"]:
                raise UnknownNode(f"Node {node_id} has no rows in tenant {self.tenant}")
            index = self._index.get(node_id, [])
            lo = bisect.bisect_left(index, int(start))
            hi = bisect.bisect_left(index, int(end))
            rows = [dict(self._tables["data"][_key(node_id, ts)]) for ts in index[lo:hi]]

        if attrs is None:
            return [
                {"node": r["node"], "vertical": r["vertical"], "ts": r["ts"], "version": r["version"], "values": dict(r["values"])}
                for r in rows
            ]
        wanted = list(attrs)
        return [{"ts": r["ts"], "values": {a: r["values"].get(a) for a in wanted}} for r in rows]

    def latest(self, node_id: str) -> Optional[Dict[str, Any]]:
        with self._lock:
            index = self._index.get(node_id)
            if not index:
                return None
            return dict(self._tables["data"][_key(node_id, index[-1])])

    def rows(self, table: str) -> List[Dict[str, Any]]:
        with self._lock:
            return [dict(r) for r in self._tables[table].values()]

    def count(self, table: str = "data") -> int:
        return len(self._tables[table])

    def nodes(self) -> List[str]:
        return sorted(self._tables["nodes"])

    def dump(self) -> str:
        """Canonical text of every table; two stores holding the same rows dump identically."""
        lines: List[str] = []
        with self._lock:
            for table in TABLES:
                lines.append(f"# {table}")
                for key in sorted(self._tables[table]):
                    lines.append(json.dumps(self._tables[table][key], sort_keys=True, ensure_ascii=False))
        return "\n".join(lines) + "\n"

    def span(self, node_id: str) -> Optional[Tuple[int, int]]:
        index = self._index.get(node_id)
        return (index[0], index[-1]) if index else None
