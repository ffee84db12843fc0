"""Middleware for check timing, timeouts and error capture."""

from src.middleware.check_guard import guard_job, run_check, run_jobs, timed

__all__ = ["guard_job", "run_check", "run_jobs", "timed"]
