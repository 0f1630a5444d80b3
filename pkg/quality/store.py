"""
Assessed-observation store.

One row per observation uri, persisted as an append-only journal of
operations (accept / duplicate / fed) and replayed on open. dump() gives a
canonical text form, so two stores fed the same stream compare byte for
byte. export_triples() writes the rows as N-Triples with SOSA and IDQA
property names.
"""
import threading
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional
from urllib.parse import quote

from rdflib import Graph, Literal, Namespace, URIRef
from rdflib.namespace import RDF, XSD

from quality.models import AssessedObservation
from utils.journal import Journal
from utils.logging_setup import get_logger

logger = get_logger("AssessedStore")

SOSA = Namespace("http://www.w3.org/ns/sosa/")
IDQA = Namespace("http://cityops.local/idqa#")
QUDT = Namespace("http://qudt.org/schema/qudt/")


class AssessedStore:
    def __init__(self, path: Optional[Path] = None, namespace: str = "http://cityops.local/kb/"):
        self.journal = Journal(path)
        self.namespace = namespace
        self.rows: Dict[str, Dict[str, Any]] = {}
        self.fed: Counter = Counter()
        self._lock = threading.Lock()
        for op in self.journal.replay():
            self._apply(op)
        if self.rows:
            logger.info(f"[AssessedStore] LOADED | rows={len(self.rows)} | path={path}")

    # ------------------------------------------------------------------
    def _apply(self, op: Dict[str, Any]) -> None:
        kind = op.get("op")
        if kind == "fed":
            self.fed[op["node"]] += int(op["count"])
        elif kind == "accept":
            self.rows[op["row"]["uri"]] = dict(op["row"])
        elif kind == "duplicate":
            row = self.rows.get(op["uri"])
            if row is None:
                # late copy of an observation that was never accepted
                row = {k: op[k] for k in ("uri", "node", "foi", "property", "resultTime")}
                self.rows[op["uri"]] = row
            row["numOfDuplicates"] = int(op["count"])

    def _commit(self, op: Dict[str, Any]) -> None:
        with self._lock:
            self._apply(op)
            self.journal.append(op)

    def record_fed(self, node_id: str, count: int = 1) -> None:
        self._commit({"op": "fed", "node": node_id, "count": int(count)})

    def put(self, assessed: AssessedObservation) -> None:
        obs = assessed.observation
        if assessed.duplicate:
            self._commit({
                "op": "duplicate",
                "uri": obs.uri,
                "node": obs.node_id,
                "foi": obs.foi,
                "property": obs.prop,
                "resultTime": obs.t_new,
                "count": assessed.result.num_of_duplicates,
            })
            return
        row = {
            "uri": obs.uri,
            "node": obs.node_id,
            "foi": obs.foi,
            "property": obs.prop,
            "value": obs.value,
            "unit": obs.unit,
            "datatype": obs.datatype,
            "sensor": obs.sensor,
            "resultTime": obs.t_new,
            "recordedTime": obs.t_rec,
            **assessed.result.to_dict(),
        }
        self._commit({"op": "accept", "row": row})

    # ------------------------------------------------------------------
    def observations(self, node_id: str, start: Optional[int] = None, end: Optional[int] = None) -> List[Dict[str, Any]]:
        """Rows of one node with start <= resultTime < end, ordered by (resultTime, property)."""
        with self._lock:
            rows = [
                dict(r) for r in self.rows.values()
                if r["node"] == node_id
                and (start is None or r["resultTime"] >= start)
                and (end is None or r["resultTime"] < end)
            ]
        return sorted(rows, key=lambda r: (r["resultTime"], r["property"]))

    def nodes(self) -> List[str]:
        with self._lock:
            return sorted({r["node"] for r in self.rows.values()})

    def __len__(self) -> int:
        return len(self.rows)

    def dump(self) -> str:
        with self._lock:
            lines = ["# rows"]
            lines += [Journal.encode(self.rows[uri]) for uri in sorted(self.rows)]
            lines.append("# fed")
            lines += [Journal.encode({"node": n, "count": c}) for n, c in sorted(self.fed.items())]
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------------
    def graph(self) -> Graph:
        g = Graph()
        g.bind("sosa", SOSA)
        g.bind("idqa", IDQA)
        g.bind("qudt", QUDT)
        kb = Namespace(self.namespace)
        with self._lock:
            rows = [dict(r) for r in self.rows.values()]

        for row in rows:
            obs = URIRef(row["uri"])
            g.add((obs, RDF.type, SOSA.Observation))
            g.add((obs, SOSA.observedProperty, kb[f"property/{quote(row['property'])}"]))
            g.add((obs, SOSA.hasFeatureOfInterest, kb[f"foi/{quote(row['foi'])}"]))
            g.add((obs, SOSA.resultTime, Literal(
                datetime.fromtimestamp(row["resultTime"], timezone.utc).isoformat(), datatype=XSD.dateTime,
            )))
            g.add((obs, IDQA.numOfDuplicates, Literal(int(row["numOfDuplicates"]))))
            if "value" not in row:
                continue
            if row["value"] is not None:
                g.add((obs, SOSA.hasSimpleResult, Literal(row["value"])))
            if row.get("unit"):
                g.add((obs, QUDT.unit, Literal(row["unit"])))
            if row.get("sensor"):
                g.add((obs, SOSA.madeBySensor, kb[f"sensor/{quote(row['sensor'])}"]))
            if "transmissionDelay" in row:
                g.add((obs, IDQA.transmissionDelay, Literal(int(row["transmissionDelay"]))))
            if "timeDelay" in row:
                g.add((obs, IDQA.timeDelay, Literal(int(row["timeDelay"]))))
            if "isOutOfRange" in row:
                g.add((obs, IDQA.isOutOfRange, Literal(bool(row["isOutOfRange"]))))
        return g

    def export_triples(self, path: Path) -> int:
        """Write sorted N-Triples lines; returns the triple count."""
        g = self.graph()
        lines = sorted(line for line in g.serialize(format="nt").splitlines() if line.strip())
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info(f"[AssessedStore] EXPORT | path={path} | triples={len(lines)}")
        return len(lines)
