import json
import os
import threading
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from utils.logging_setup import get_logger

logger = get_logger("Journal")


class Journal:
    """Append-only line-delimited JSON journal.

    With path=None records are kept in memory only, which is what the unit
    tests and throwaway trees use. Records are written with sorted keys so two
    journals holding the same records are byte-identical.
    """

    def __init__(self, path: Optional[Path] = None, fsync: bool = False):
        self.path = Path(path) if path else None
        self.fsync = fsync
        self._lock = threading.Lock()
        self._memory: List[str] = []
        self._appended = 0
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch(exist_ok=True)

    @staticmethod
    def encode(record: Dict[str, Any]) -> str:
        return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def append(self, record: Dict[str, Any]) -> int:
        """Append one record; returns the number of records appended since open."""
        line = self.encode(record)
        with self._lock:
            if self.path is None:
                self._memory.append(line)
            else:
                with open(self.path, 'a', encoding='utf-8') as f:
                    f.write(line + "\n")
                    if self.fsync:
                        f.flush()
                        os.fsync(f.fileno())
            self._appended += 1
            return self._appended

    def replay(self) -> Iterator[Dict[str, Any]]:
        """Yield every stored record in append order, skipping corrupt lines."""
        if self.path is None:
            lines = list(self._memory)
        else:
            with open(self.path, 'r', encoding='utf-8') as f:
                lines = f.read().splitlines()

        for line_num, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                logger.warning(f"[Journal] SKIP | path={self.path} | line={line_num} | reason=corrupt record")

    def truncate(self) -> None:
        with self._lock:
            if self.path is None:
                self._memory.clear()
            else:
                open(self.path, 'w').close()
            self._appended = 0

    def __len__(self) -> int:
        return sum(1 for _ in self.replay())
