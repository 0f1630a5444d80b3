"""
Notification intake for the lake.

receive() acknowledges as soon as the notification is journaled and queued;
parsing and storage happen on one worker thread per tenant. Anything that
cannot be stored is written to the dead-letter journal with its full payload.
The intake journal doubles as the replay source after a crash.
"""
import queue
import threading
import time
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from lake.errors import BadEnvelope, LakeError, StoreUnavailable
from lake.lake import DataLake
from utils.journal import Journal
from utils.logging_setup import get_logger

logger = get_logger("LakeIntake")

INTAKE_JOURNAL = "intake.jsonl"
DEAD_LETTERS = "dead_letters.jsonl"


def extract_cin(body: Any) -> Optional[Dict[str, Any]]:
    """
    The m2m:cin attributes inside a notification, or None for a verification request.

    Raises:
        BadEnvelope: the body is not an m2m:sgn notification carrying a content instance
    """
    if not isinstance(body, dict) or "m2m:sgn" not in body:
        raise BadEnvelope("Body is not an m2m:sgn notification")
    sgn = body["m2m:sgn"]
    if not isinstance(sgn, dict):
        raise BadEnvelope("m2m:sgn must be an object")
    if sgn.get("vrq"):
        return None
    cin = ((sgn.get("nev") or {}).get("rep") or {}).get("m2m:cin")
    if not isinstance(cin, dict):
        raise BadEnvelope("Notification carries no m2m:cin representation")
    if not isinstance(cin.get("con"), str) or not isinstance(cin.get("lbl"), list):
        raise BadEnvelope("m2m:cin needs a string con and a label list")
    return cin


class LakeIntake:
    def __init__(
        self,
        lake: DataLake,
        data_dir: Optional[Path] = None,
        retry_interval: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.lake = lake
        base = Path(data_dir) / "lake" if data_dir else None
        self.journal = Journal(base / INTAKE_JOURNAL if base else None)
        self.dead_letters = Journal(base / DEAD_LETTERS if base else None)
        self.retry_interval = retry_interval
        self.sleep = sleep
        self.stats: Counter = Counter()

        self._stats_lock = threading.Lock()
        self._queues: Dict[str, queue.Queue] = {}
        self._workers: Dict[str, threading.Thread] = {}
        self._queues_lock = threading.Lock()
        self._closing = threading.Event()

    # ------------------------------------------------------------------
    def receive(self, body: Any) -> Dict[str, Any]:
        """Journal, route and queue one notification; returns the ack body."""
        cin = extract_cin(body)
        if cin is None:
            return {"status": 200, "verification": True}

        self.journal.append({"received_at": datetime.now(timezone.utc).isoformat(), "body": body})
        self._count("received")
        try:
            tenant = self.lake.route_tenant(cin.get("lbl"))
        except LakeError as e:
            self._dead_letter("route", e, body)
            return {"status": 200, "queued": False}

        self._queue_for(tenant).put((tenant, body, cin))
        return {"status": 200, "queued": True, "tenant": tenant}

    def replay(self, source: Optional[Journal] = None) -> Counter:
        """Re-ingest every journaled notification synchronously, in arrival order.

        source defaults to this intake's own journal; pass another to rebuild a fresh lake from it.
        """
        before = Counter(self.lake.stats)
        replayed = 0
        for record in (source if source is not None else self.journal).replay():
            body = record.get("body")
            try:
                cin = extract_cin(body)
                if cin is None:
                    continue
                self.lake.ingest(cin)
            except LakeError as e:
                self._dead_letter("replay", e, body)
            replayed += 1
        outcome = Counter(self.lake.stats)
        outcome.subtract(before)
        outcome["replayed"] = replayed
        logger.info(
            f"[LakeIntake] REPLAY | replayed={replayed} | stored={outcome['stored']} | duplicate={outcome['duplicate']}"
        )
        return outcome

    def dead_letter_records(self) -> List[Dict[str, Any]]:
        return list(self.dead_letters.replay())

    # ------------------------------------------------------------------
    def _queue_for(self, tenant: str) -> queue.Queue:
        with self._queues_lock:
            if tenant not in self._queues:
                q: queue.Queue = queue.Queue()
                worker = threading.Thread(target=self._worker, args=(q,), name=f"lake-{tenant}", daemon=True)
                self._queues[tenant] = q
                self._workers[tenant] = worker
                worker.start()
            return self._queues[tenant]

    def _worker(self, q: queue.Queue) -> None:
        while True:
            job = q.get()
            try:
                if job is None:
                    return
                self._ingest(*job)
            except Exception as e:
                logger.error(f"[LakeIntake] WORKER ERROR | error={e}")
            finally:
                q.task_done()

    def _ingest(self, tenant: str, body: Dict[str, Any], cin: Dict[str, Any]) -> None:
        while True:
            try:
                self.lake.ingest(cin, tenant=tenant)
                self._count("ingested")
                return
            except StoreUnavailable as e:
                if self._closing.is_set():
                    self._dead_letter("store", e, body)
                    return
                self._count("waiting")
                self.sleep(self.retry_interval)
            except LakeError as e:
                self._dead_letter("ingest", e, body)
                return

    def _dead_letter(self, stage: str, error: LakeError, body: Any) -> None:
        self.dead_letters.append({"stage": stage, "error": error.message, "status": error.status, "body": body})
        self._count("dead_lettered")
        logger.warning(f"[LakeIntake] DEAD LETTER | stage={stage} | error={error.message}")

    def _count(self, key: str) -> None:
        with self._stats_lock:
            self.stats[key] += 1

    # ------------------------------------------------------------------
    def flush(self) -> None:
        """Block until every queued notification has been stored or dead-lettered."""
        with self._queues_lock:
            queues = list(self._queues.values())
        for q in queues:
            q.join()

    def close(self) -> None:
        self._closing.set()
        with self._queues_lock:
            items = list(self._queues.items())
            self._queues.clear()
        for _, q in items:
            q.put(None)
        for tenant, _ in items:
            self._workers.pop(tenant).join(timeout=5.0)
