"""
Orchestrator module for the quality-assessment pipeline.

This module ensures strict sequential data flow across the layers named in
config/workflows.yaml:
1. EnrichmentAgent → observations (one per node property, deterministic uri)
2. DuplicacyAgent → assessed observations (duplicate or new, numOfDuplicates)
3. DelayAgent → transmission and sampling delays on new observations
4. ValidationAgent → isOutOfRange on new observations
5. StorageAgent → store summary (stored, duplicates)

Each stage output is validated before the next stage runs. Items that fail
a stage or a validation are dead-lettered with the stage tag; the rest of
the batch carries on.
"""
import threading
from collections import Counter, defaultdict
from contextlib import ExitStack
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from agents.delay_agent import DelayAgent
from agents.duplicacy_agent import DuplicacyAgent
from agents.enrichment_agent import EnrichmentAgent
from agents.report_agent import ReportAgent
from agents.storage_agent import StorageAgent
from agents.validation_agent import ValidationAgent
from quality.knowledge import FactorTable, KnowledgeBase
from quality.models import AssessedObservation, EnrichedObservation, RawRecord
from quality.store import AssessedStore
from utils.journal import Journal
from utils.logging_setup import get_logger
from utils.settings import ConfigError, load_yaml

logger = get_logger("QualityPipeline")

DEFAULT_SEQUENCE = ["EnrichmentAgent", "DuplicacyAgent", "DelayAgent", "ValidationAgent", "StorageAgent"]


def load_workflow(path: Optional[Path]) -> List[str]:
    """Ordered layer names from workflows.yaml; the order is fixed, layers can only be left out."""
    if path is None:
        return list(DEFAULT_SEQUENCE)
    sequence = list((load_yaml(path).get("pipeline") or {}).get("sequence") or [])
    unknown = [s for s in sequence if s not in DEFAULT_SEQUENCE]
    if unknown:
        raise ConfigError(f"Unknown pipeline layers {unknown}")
    for required in ("EnrichmentAgent", "DuplicacyAgent", "StorageAgent"):
        if required not in sequence:
            raise ConfigError(f"Pipeline must include {required}")
    if sequence != [s for s in DEFAULT_SEQUENCE if s in sequence]:
        raise ConfigError(f"Pipeline layers out of order: {sequence}")
    return sequence


class QualityPipeline:
    """
    Orchestrates the five quality layers over raw records.

    Streams of one node run strictly in arrival order under the node's lock;
    different nodes can be processed concurrently.
    """

    def __init__(
        self,
        knowledge_base: KnowledgeBase,
        factors: FactorTable,
        store: Optional[AssessedStore] = None,
        sequence: Optional[List[str]] = None,
        dead_letter_path: Optional[Path] = None,
        histogram_bin: float = 5.0,
        announce: bool = True,
    ):
        self.kb = knowledge_base
        self.factors = factors
        self.store = store if store is not None else AssessedStore(namespace=knowledge_base.namespace)
        self.sequence = list(sequence or DEFAULT_SEQUENCE)
        self.dead_letters = Journal(dead_letter_path)
        self.announce = announce
        self.agents = {
            'EnrichmentAgent': EnrichmentAgent("EnrichmentAgent", knowledge_base),
            'DuplicacyAgent': DuplicacyAgent("DuplicacyAgent"),
            'DelayAgent': DelayAgent("DelayAgent", factors),
            'ValidationAgent': ValidationAgent("ValidationAgent", factors),
            'StorageAgent': StorageAgent("StorageAgent", self.store),
        }
        self.reporter = ReportAgent("ReportAgent", self.store, histogram_bin)
        self.execution_log: List[Dict[str, Any]] = []
        self.stats: Counter = Counter()

        self._locks: Dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()
        self._stats_lock = threading.Lock()
        if len(self.store):
            self._restore_streams()

    def _restore_streams(self) -> None:
        """Rebuild duplicacy state from a reopened store so a restart does not re-accept old observations."""
        duplicacy = self.agents['DuplicacyAgent']
        for row in self.store.rows.values():
            state = duplicacy.state((row["node"], row["foi"], row["property"]))
            state.received[row["uri"]] = max(int(row["numOfDuplicates"]), 1)
            if "value" in row and (state.t_last is None or row["resultTime"] > state.t_last):
                state.t_last = row["resultTime"]
                state.last_uri = row["uri"]
        logger.info(f"[QualityPipeline] RESTORED | streams={len(duplicacy.states)} | rows={len(self.store)}")

    # ------------------------------------------------------------------
    def _log_stage(self, stage_name: str, status: str, data_count: int = 0, announce: bool = True) -> None:
        """
        Log pipeline stage execution.

        Args:
            stage_name: Name of the pipeline stage
            status: Execution status (started, completed, failed)
            data_count: Number of data items processed
            announce: print the stage banner (batch runs only)
        """
        if not announce:
            return
        self.execution_log.append({'stage': stage_name, 'status': status, 'data_count': data_count})
        if not self.announce:
            return
        if status == 'started':
            logger.info(f"\n{'='*60}\nStage: {stage_name}\n{'='*60}")
        elif status == 'completed':
            logger.info(f"✓ {stage_name} completed with {data_count} item(s)")
        elif status == 'failed':
            logger.info(f"✗ {stage_name} failed")

    def _dead_letter(self, stage: str, error: str, payload: Dict[str, Any]) -> None:
        self.dead_letters.append({"stage": stage, "error": error, "payload": payload})
        self._count("dead_lettered")
        logger.warning(f"[QualityPipeline] DEAD LETTER | stage={stage} | error={error}")

    def _count(self, key: str, n: int = 1) -> None:
        with self._stats_lock:
            self.stats[key] += n

    def _node_lock(self, node_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[node_id]

    # ------------------------------------------------------------------
    # stage output validation
    # ------------------------------------------------------------------
    def _validate_enrichment_output(self, data: Any) -> List[EnrichedObservation]:
        """
        Validate EnrichmentAgent output structure.

        Returns:
            List[EnrichedObservation]: observations that carry everything later layers need;
            the others are dead-lettered with the enrichment stage tag

        Raises:
            ValueError: If the output is not the expected dict
        """
        if not isinstance(data, dict):
            raise ValueError(f"EnrichmentAgent must return a dict, got {type(data).__name__}")
        missing_fields = [f for f in ('observations', 'failures') if f not in data]
        if missing_fields:
            raise ValueError(f"EnrichmentAgent output missing required fields: {missing_fields}")

        for failure in data['failures']:
            record = failure['record']
            self._dead_letter("EnrichmentAgent", failure['error'], {
                "node": record.node_id, "t_new": record.t_new, "t_rec": record.t_rec, "values": record.values,
            })

        valid = []
        for obs in data['observations']:
            if not isinstance(obs, EnrichedObservation):
                raise ValueError(f"Enriched item must be an EnrichedObservation, got {type(obs).__name__}")
            if not obs.uri or not obs.foi or not obs.prop or not isinstance(obs.t_rec, int):
                self._dead_letter("EnrichmentAgent", "observation is missing uri, foi, property or recorded time", {
                    "node": obs.node_id, "property": obs.prop, "t_new": obs.t_new,
                })
                continue
            valid.append(obs)
        return valid

    def _validate_assessment_output(self, stage: str, data: Any) -> List[AssessedObservation]:
        """
        Validate the output of an assessment layer (duplicacy, delay or validation).

        A duplicate must carry only its count; a new observation must not carry a
        count. Offending items are dead-lettered with the stage tag.

        Raises:
            ValueError: If the output is not a list of AssessedObservation
        """
        if not isinstance(data, list):
            raise ValueError(f"{stage} must return a list, got {type(data).__name__}")
        valid = []
        for item in data:
            if not isinstance(item, AssessedObservation):
                raise ValueError(f"{stage} item must be an AssessedObservation, got {type(item).__name__}")
            result = item.result
            if item.duplicate:
                problem = None
                if result.num_of_duplicates < 1:
                    problem = "duplicate without a received count"
                elif any(v is not None for v in (result.transmission_delay, result.time_delay, result.is_out_of_range)):
                    problem = "duplicate carries delay or range fields"
            else:
                problem = "new observation carries a duplicate count" if result.num_of_duplicates != 0 else None
                if problem is None and result.time_delay is not None and result.time_delay < 0:
                    problem = "negative sampling delay"
            if problem:
                self._dead_letter(stage, problem, {"uri": item.observation.uri, "node": item.observation.node_id})
                continue
            valid.append(item)
        return valid

    def _validate_storage_output(self, data: Any) -> Dict[str, int]:
        if not isinstance(data, dict):
            raise ValueError(f"StorageAgent must return a dict, got {type(data).__name__}")
        missing_fields = [f for f in ('stored', 'duplicates') if f not in data]
        if missing_fields:
            raise ValueError(f"StorageAgent output missing required fields: {missing_fields}")
        return data

    # ------------------------------------------------------------------
    def _execute(self, records: List[RawRecord], announce: bool = True) -> Dict[str, int]:
        for node_id, count in Counter(r.node_id for r in records).items():
            self.store.record_fed(node_id, count)
        self._count("fed", len(records))

        current = 'EnrichmentAgent'
        try:
            self._log_stage(current, 'started', announce=announce)
            observations = self._validate_enrichment_output(self.agents['EnrichmentAgent'].run(records))
            self._log_stage('EnrichmentAgent', 'completed', len(observations), announce=announce)

            assessed: List[AssessedObservation] = observations  # replaced by the duplicacy layer
            for stage in self.sequence[1:-1]:
                current = stage
                self._log_stage(stage, 'started', announce=announce)
                source = observations if stage == 'DuplicacyAgent' else assessed
                assessed = self._validate_assessment_output(stage, self.agents[stage].run(source))
                self._log_stage(stage, 'completed', len(assessed), announce=announce)

            current = 'StorageAgent'
            self._log_stage(current, 'started', announce=announce)
            summary = self._validate_storage_output(self.agents['StorageAgent'].run(assessed))
            self._log_stage('StorageAgent', 'completed', summary['stored'] + summary['duplicates'], announce=announce)
        except ValueError as e:
            self._log_stage(current, 'failed', announce=announce)
            for record in records:
                self._dead_letter(current, str(e), {"node": record.node_id, "t_new": record.t_new, "t_rec": record.t_rec})
            raise

        self._count("stored", summary['stored'])
        self._count("duplicates", summary['duplicates'])
        return summary

    def process(self, record: RawRecord) -> Dict[str, int]:
        """Run one raw record through every layer (live intake path)."""
        with self._node_lock(record.node_id):
            return self._execute([record], announce=False)

    def run(self, records: Iterable[RawRecord]) -> Dict[str, int]:
        """
        Execute the pipeline over a batch, stage by stage.

        Returns:
            Dict: stored / duplicates counts for the batch
        """
        records = list(records)
        nodes = sorted({r.node_id for r in records})
        with ExitStack() as stack:
            for node_id in nodes:
                stack.enter_context(self._node_lock(node_id))
            summary = self._execute(records)
        if self.announce:
            logger.info(f"\n{'='*60}\n✅ Quality pipeline completed: {summary}\n{'='*60}")
        return summary

    def report(self, node_id: str, start: Optional[int] = None, end: Optional[int] = None) -> Dict[str, Any]:
        return self.reporter.run({"node": node_id, "start": start, "end": end})

    def dead_letter_records(self) -> List[Dict[str, Any]]:
        return list(self.dead_letters.replay())


def build_pipeline(settings, campus, store_path: Optional[Path] = None, announce: bool = True) -> QualityPipeline:
    """Wire a pipeline from loaded settings."""
    kb = KnowledgeBase.load(settings.knowledge_base, campus)
    factors = FactorTable.load(settings.quality_factors)
    store = AssessedStore(store_path, namespace=kb.namespace)
    return QualityPipeline(
        kb,
        factors,
        store=store,
        sequence=load_workflow(settings.workflows),
        dead_letter_path=settings.data_path("quality", "dead_letters.jsonl") if store_path else None,
        histogram_bin=settings.quality.histogram_bin,
        announce=announce,
    )
