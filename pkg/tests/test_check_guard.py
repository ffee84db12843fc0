import time

import pytest

from src.errors import DegenerateStorage
from src.middleware.check_guard import failure_record, run_check, run_jobs, timed


class TestRunCheck:
    def test_success(self):
        outcome = run_check("double", lambda x: 2 * x, 21)
        assert outcome == {"check": "double", "passed": True, "result": 42}

    def test_property_failure(self):
        def check():
            raise AssertionError("energy increased")

        outcome = run_check("monotone", check)
        assert outcome["passed"] is False
        assert outcome["error"] == "property"
        assert outcome["error_type"] == "AssertionError"
        assert outcome["detail"] == "energy increased"

    def test_domain_error(self):
        def check():
            raise DegenerateStorage("c0 = 0")

        outcome = run_check("generator", check)
        assert outcome["error"] == "exception"
        assert outcome["error_type"] == "DegenerateStorage"

    def test_unexpected_error_captured(self):
        outcome = run_check("broken", lambda: 1 / 0)
        assert outcome["passed"] is False
        assert outcome["error_type"] == "ZeroDivisionError"


def test_failure_record_duration():
    record = failure_record("x", ValueError("bad"), duration=1.23456)
    assert record["duration"] == 1.235
    assert record["check"] == "x"


def test_timed_reraises():
    with pytest.raises(KeyError):
        with timed("step", "unit"):
            raise KeyError("missing")


class TestRunJobs:
    def test_results_keyed_by_name(self):
        outcomes = run_jobs({"a": lambda: 1, "b": lambda: 2})
        assert outcomes["a"]["result"] == 1
        assert outcomes["b"]["result"] == 2
        assert list(outcomes) == ["a", "b"]

    def test_failure_does_not_cancel_others(self):
        def bad():
            raise ValueError("level diverged")

        outcomes = run_jobs({"bad": bad, "good": lambda: "ok"})
        assert outcomes["bad"]["passed"] is False
        assert outcomes["bad"]["detail"] == "level diverged"
        assert outcomes["good"]["passed"] is True

    def test_timeout(self, monkeypatch):
        monkeypatch.setenv("STUDY_TIMEOUT_SECONDS", "0.05")
        outcomes = run_jobs({"slow": lambda: time.sleep(0.5)})
        assert outcomes["slow"]["error"] == "timeout"
