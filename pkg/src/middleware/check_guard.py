"""Timing, timeout and error capture around verification checks and study jobs."""

import asyncio
import logging
import time
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, Optional

from src.errors import BiotStokesError
from src.settings import get_study_timeout_seconds, log_step_timings

logger = logging.getLogger(__name__)


def log_timing(kind: str, label: str, duration: float, status: str) -> None:
    """Emit a simple timing line for observability."""
    if not log_step_timings():
        return
    logger.info("[%s:%s] %s after %.2fs", kind, label or "unknown", status, duration)


@contextmanager
def timed(kind: str, label: str) -> Iterator[None]:
    """Log `[kind:label] completed/failed after X.XXs` around a block."""
    start_time = time.perf_counter()
    try:
        yield
    except BaseException:
        log_timing(kind, label, time.perf_counter() - start_time, "failed")
        raise
    log_timing(kind, label, time.perf_counter() - start_time, "completed")


def failure_record(name: str, exc: BaseException, duration: Optional[float] = None) -> Dict[str, Any]:
    """Convert an exception into a machine-readable failure payload."""
    record: Dict[str, Any] = {
        "check": name,
        "error": "property" if isinstance(exc, AssertionError) else "exception",
        "error_type": type(exc).__name__,
        "detail": str(exc),
    }
    if duration is not None:
        record["duration"] = round(duration, 3)
    return record


def run_check(name: str, check: Callable[..., Any], *args, **kwargs) -> Dict[str, Any]:
    """
    Run one verification check, capturing failures instead of raising.

    Args:
        name: Check name used in logs and in the payload
        check: Callable returning a JSON-friendly result
        *args, **kwargs: Forwarded to `check`

    Returns:
        {"check", "passed", "result"} on success, otherwise a failure record
        with "passed" set to False.
    """
    start_time = time.perf_counter()
    try:
        result = check(*args, **kwargs)
    except (BiotStokesError, AssertionError) as exc:
        duration = time.perf_counter() - start_time
        log_timing("check", name, duration, "failed")
        return {**failure_record(name, exc), "passed": False}
    except Exception as exc:
        duration = time.perf_counter() - start_time
        log_timing("check", name, duration, "failed")
        logger.exception("check %s raised unexpectedly", name)
        return {**failure_record(name, exc), "passed": False}
    log_timing("check", name, time.perf_counter() - start_time, "completed")
    return {"check": name, "passed": True, "result": result}


async def guard_job(name: str, job: Callable[..., Any], *args, **kwargs) -> Dict[str, Any]:
    """
    Run a blocking study job in a worker thread with the study timeout.

    Timeout comes from STUDY_TIMEOUT_SECONDS (default 600s). The job itself is
    not interrupted on timeout; its result is discarded.
    """
    timeout = get_study_timeout_seconds()
    start_time = time.perf_counter()
    try:
        coro = asyncio.to_thread(job, *args, **kwargs)
        if timeout is not None:
            result = await asyncio.wait_for(coro, timeout=timeout)
        else:
            result = await coro
    except asyncio.TimeoutError:
        duration = time.perf_counter() - start_time
        log_timing("job", name, duration, "timed out")
        return {
            "check": name,
            "passed": False,
            "error": "timeout",
            "error_type": "TimeoutError",
            "detail": f"job `{name}` did not finish within {timeout:.0f} seconds",
        }
    except Exception as exc:
        duration = time.perf_counter() - start_time
        log_timing("job", name, duration, "failed")
        return {**failure_record(name, exc), "passed": False}
    log_timing("job", name, time.perf_counter() - start_time, "completed")
    return {"check": name, "passed": True, "result": result}


async def gather_jobs(jobs: Dict[str, Callable[[], Any]]) -> Dict[str, Dict[str, Any]]:
    """Run named zero-argument jobs concurrently; results keyed like the input."""
    names = list(jobs)
    outcomes = await asyncio.gather(*(guard_job(name, jobs[name]) for name in names))
    return dict(zip(names, outcomes))


def run_jobs(jobs: Dict[str, Callable[[], Any]]) -> Dict[str, Dict[str, Any]]:
    """Synchronous entry to `gather_jobs`."""
    return asyncio.run(gather_jobs(jobs))
