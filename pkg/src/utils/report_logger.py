"""Report logging: write check and study reports to JSON or markdown files in the output directory."""

import json
import logging
import threading
from pathlib import Path
from typing import Any, Optional

import numpy as np

logger = logging.getLogger(__name__)


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars/arrays (and nested containers of them) to JSON-friendly values."""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    return str(value)


class ReportLogger:
    """
    Thread-safe singleton class to log verification and study reports.
    - Dicts and lists are saved as {name}.json (overwritten atomically)
    - Anything else is appended to {name}.md
    """
    _instance: Optional['ReportLogger'] = None
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

        self._output_dir: Optional[Path] = None
        self._lock = threading.Lock()
        self._initialized = True

    def set_output_dir(self, path: Path) -> None:
        self._output_dir = Path(path)
        self._output_dir.mkdir(parents=True, exist_ok=True)

    @property
    def output_dir(self) -> Optional[Path]:
        return self._output_dir

    def _sanitize_filename(self, name: str) -> str:
        """
        Sanitize a report name to create a valid filename.

        Args:
            name: The report name, e.g. "verify:adjoint"

        Returns:
            Filename-safe string
        """
        sanitized = name
        for char in '<>:"/\\|?* ':
            sanitized = sanitized.replace(char, '_')
        sanitized = sanitized.strip('._')
        return sanitized or "report"

    def log_report(self, name: str, report: Any) -> Optional[Path]:
        """
        Write one report; returns the file written, or None when no output
        directory is attached or the write failed.
        """
        if self._output_dir is None:
            return None
        filename = self._sanitize_filename(name)
        try:
            if isinstance(report, (dict, list)):
                target = self._output_dir / f"{filename}.json"
                payload = {"report": name, "data": to_builtin(report)}
                temp_file = target.with_suffix('.tmp')
                with self._lock:
                    with open(temp_file, 'w', encoding='utf-8') as f:
                        json.dump(payload, f, indent=2, ensure_ascii=False)
                    temp_file.replace(target)
            else:
                target = self._output_dir / f"{filename}.md"
                with self._lock:
                    with open(target, 'a', encoding='utf-8') as f:
                        f.write(f"## Report: {name}\n\n```\n{report}\n```\n\n---\n\n")
        except (IOError, OSError) as e:
            logger.warning("Could not write report %s: %s", name, e)
            return None
        return target


def get_report_logger() -> ReportLogger:
    """Get the global report logger instance."""
    return ReportLogger()
