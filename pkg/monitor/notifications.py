"""
Notification dispatch for subscriptions.

Inserts never wait on subscribers: the tree listener only enqueues. Each
container has its own FIFO queue and worker thread, so delivery order is
preserved per container. A delivery counts as acknowledged on any 2xx
within the ack timeout; otherwise it is retried after each backoff step and
finally written to the dead-letter journal with the full notification.
"""
import queue
import threading
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import requests

from core.resources import Container, ContentInstance, Subscription
from core.tree import ResourceTree
from utils.journal import Journal
from utils.logging_setup import get_logger

logger = get_logger("NotificationDispatcher")

# sender(url, notification, timeout) -> HTTP status
Sender = Callable[[str, Dict[str, Any], float], int]

NET_CREATE_CHILD = 3


def http_sender(url: str, notification: Dict[str, Any], timeout: float) -> int:
    response = requests.post(
        url,
        json=notification,
        headers={"Content-Type": "application/json", "X-M2M-Origin": "/in-cse"},
        timeout=timeout,
    )
    return response.status_code


def build_notification(sub: Subscription, container: Container, cin: ContentInstance) -> Dict[str, Any]:
    return {
        "m2m:sgn": {
            "nev": {"rep": cin.representation(), "net": NET_CREATE_CHILD},
            "sur": sub.path,
            "cr": sub.creator.split(":", 1)[0],
            "src": container.path,
        }
    }


@dataclass
class DeliveryResult:
    sub: str
    nu: str
    delivered: bool
    attempts: int
    error: Optional[str] = None


@dataclass
class _Job:
    sub: str
    nu: str
    notification: Dict[str, Any]


class NotificationDispatcher:
    def __init__(
        self,
        sender: Sender = http_sender,
        retry_backoff: Sequence[float] = (1.0, 2.0, 4.0),
        ack_timeout: float = 5.0,
        dead_letter_path: Optional[Path] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.sender = sender
        self.retry_backoff = list(retry_backoff)
        self.ack_timeout = ack_timeout
        self.sleep = sleep
        self.dead_letters = Journal(dead_letter_path)
        self.stats: Counter = Counter()

        self._stats_lock = threading.Lock()
        self._queues: Dict[str, queue.Queue] = {}
        self._workers: Dict[str, threading.Thread] = {}
        self._queues_lock = threading.Lock()
        self._tree: Optional[ResourceTree] = None

    def attach(self, tree: ResourceTree) -> None:
        """Start dispatching for every insert into a subscribed container."""
        self._tree = tree
        tree.add_listener(self.on_insert)

    def on_insert(self, container: Container, cin: ContentInstance) -> None:
        for sub_ri in list(container.subscriptions):
            sub = self._tree.resolve(sub_ri) if self._tree and self._tree.exists(sub_ri) else None
            if sub is None:
                continue
            notification = build_notification(sub, container, cin)
            for nu in sub.nu:
                self._queue_for(container.ri).put(_Job(sub=sub.path, nu=nu, notification=notification))
                self._count("queued")

    def dispatch(self, container: Container, cin: ContentInstance, subs: List[Subscription]) -> List[DeliveryResult]:
        """Deliver synchronously to the given subscriptions; used by tests and the CLI."""
        results = []
        for sub in subs:
            notification = build_notification(sub, container, cin)
            for nu in sub.nu:
                results.append(self._deliver(_Job(sub=sub.path, nu=nu, notification=notification)))
        return results

    # ------------------------------------------------------------------
    def _queue_for(self, key: str) -> queue.Queue:
        with self._queues_lock:
            if key not in self._queues:
                q: queue.Queue = queue.Queue()
                worker = threading.Thread(target=self._worker, args=(q,), name=f"notify-{key}", daemon=True)
                self._queues[key] = q
                self._workers[key] = worker
                worker.start()
            return self._queues[key]

    def _worker(self, q: queue.Queue) -> None:
        while True:
            job = q.get()
            try:
                if job is None:
                    return
                self._deliver(job)
            except Exception as e:
                logger.error(f"[NotificationDispatcher] WORKER ERROR | error={e}")
            finally:
                q.task_done()

    def _deliver(self, job: _Job) -> DeliveryResult:
        attempts = 0
        error = None
        for attempt in range(len(self.retry_backoff) + 1):
            if attempt:
                self._count("retried")
                self.sleep(self.retry_backoff[attempt - 1])
            attempts += 1
            try:
                status = self.sender(job.nu, job.notification, self.ack_timeout)
                if 200 <= status < 300:
                    self._count("delivered")
                    logger.debug(f"[NotificationDispatcher] DELIVERED | sub={job.sub} | nu={job.nu} | attempts={attempts}")
                    return DeliveryResult(job.sub, job.nu, True, attempts)
                error = f"status {status}"
            except Exception as e:
                error = str(e) or type(e).__name__

        self.dead_letters.append({
            "sub": job.sub,
            "nu": job.nu,
            "attempts": attempts,
            "error": error,
            "notification": job.notification,
        })
        self._count("dead_lettered")
        logger.warning(f"[NotificationDispatcher] DEAD LETTER | sub={job.sub} | nu={job.nu} | attempts={attempts} | error={error}")
        return DeliveryResult(job.sub, job.nu, False, attempts, error)

    def _count(self, key: str) -> None:
        with self._stats_lock:
            self.stats[key] += 1

    # ------------------------------------------------------------------
    def flush(self) -> None:
        """Block until every queued notification has been delivered or dead-lettered."""
        with self._queues_lock:
            queues = list(self._queues.values())
        for q in queues:
            q.join()

    def close(self) -> None:
        with self._queues_lock:
            items = list(self._queues.items())
            self._queues.clear()
        for key, q in items:
            q.put(None)
        for key, _ in items:
            self._workers.pop(key).join(timeout=self.ack_timeout * (len(self.retry_backoff) + 1) + sum(self.retry_backoff))
