"""Environment-driven knobs (loaded from .env by the CLI)."""

import os
from typing import Optional


def _read_flag(name: str, default: str = "true") -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes")


def get_dense_cap() -> int:
    """Largest reduced state size the operator lab will treat densely (default 3000)."""
    value = os.getenv("BIOT_STOKES_DENSE_CAP", "3000").strip()
    try:
        cap = int(value)
    except ValueError:
        return 3000
    return cap if cap > 0 else 3000


def get_study_timeout_seconds() -> Optional[float]:
    """Read the per-job study timeout (in seconds) from env (defaults to 600s)."""
    value = os.getenv("STUDY_TIMEOUT_SECONDS", "600").strip()
    if not value:
        return None
    try:
        timeout = float(value)
    except ValueError:
        return 600.0
    return timeout if timeout > 0 else None


def log_step_timings() -> bool:
    return _read_flag("LOG_STEP_TIMINGS")


def get_log_level() -> str:
    return os.getenv("BIOT_STOKES_LOG_LEVEL", "WARNING").strip().upper() or "WARNING"
