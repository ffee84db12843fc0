"""Solver statistics tracking: factorizations, solves and achieved residuals per label."""

import json
import logging
import threading
from collections import defaultdict
from pathlib import Path
from typing import Dict, Optional

logger = logging.getLogger(__name__)


class SolveStatsTracker:
    """
    Thread-safe singleton class to track linear-solver usage.

    Counts are kept per label ("saddle", "step", "resolvent", ...). Nothing is
    written to disk until a stats file is attached with `set_stats_file`.
    """
    _instance: Optional['SolveStatsTracker'] = None
    _lock = threading.Lock()

    def __new__(cls):
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        self._stats_file: Optional[Path] = None
        self._factorizations: Dict[str, int] = defaultdict(int)
        self._solves: Dict[str, int] = defaultdict(int)
        self._max_residual: Dict[str, float] = defaultdict(float)
        self._failures: Dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()
        self._initialized = True

    def set_stats_file(self, path: Path) -> None:
        """Attach the JSON file that `save_stats` writes to."""
        self._stats_file = Path(path)
        self._stats_file.parent.mkdir(parents=True, exist_ok=True)

    def save_stats(self) -> None:
        """Save statistics to the attached JSON file (atomic replace)."""
        if self._stats_file is None:
            return
        try:
            data = self.snapshot()
            temp_file = self._stats_file.with_suffix('.tmp')
            with open(temp_file, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=2, sort_keys=True)
            temp_file.replace(self._stats_file)
        except (IOError, OSError) as e:
            logger.warning("Could not save solver stats to %s: %s", self._stats_file, e)

    def track_factorization(self, label: str) -> None:
        with self._lock:
            self._factorizations[label] += 1

    def track_solve(self, label: str, residual: float) -> None:
        """
        Record one solve and its achieved backward error.

        Args:
            label: Solve family the call belongs to
            residual: Achieved relative residual
        """
        with self._lock:
            self._solves[label] += 1
            if residual > self._max_residual[label]:
                self._max_residual[label] = float(residual)

    def track_failure(self, label: str) -> None:
        with self._lock:
            self._failures[label] += 1

    def get_solve_count(self, label: str) -> int:
        with self._lock:
            return self._solves.get(label, 0)

    def get_factorization_count(self, label: str) -> int:
        with self._lock:
            return self._factorizations.get(label, 0)

    def get_max_residual(self, label: str) -> float:
        with self._lock:
            return self._max_residual.get(label, 0.0)

    def snapshot(self) -> Dict[str, Dict]:
        """All statistics as plain dictionaries, labels sorted."""
        with self._lock:
            return {
                'factorizations': dict(sorted(self._factorizations.items())),
                'solves': dict(sorted(self._solves.items())),
                'max_residual': dict(sorted(self._max_residual.items())),
                'failures': dict(sorted(self._failures.items())),
            }

    def reset_stats(self) -> None:
        with self._lock:
            self._factorizations.clear()
            self._solves.clear()
            self._max_residual.clear()
            self._failures.clear()


def get_tracker() -> SolveStatsTracker:
    """Get the global solver statistics tracker instance."""
    return SolveStatsTracker()
