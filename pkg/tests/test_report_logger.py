import json

import numpy as np
import pytest

from src.utils.report_logger import ReportLogger, get_report_logger, to_builtin


@pytest.fixture
def report_logger(tmp_path):
    logger = get_report_logger()
    logger.set_output_dir(tmp_path)
    yield logger
    logger._output_dir = None


def test_to_builtin():
    value = {"a": np.float64(1.5), "b": np.arange(3), "c": (np.int64(2), None), "d": float("inf"), 4: object}
    converted = to_builtin(value)
    assert converted["a"] == 1.5
    assert converted["b"] == [0, 1, 2]
    assert converted["c"] == [2, None]
    assert converted["d"] == "inf"
    assert isinstance(converted["4"], str)
    json.dumps(converted)


class TestReportLogger:
    def test_singleton(self):
        assert get_report_logger() is ReportLogger()

    def test_json_report(self, report_logger, tmp_path):
        path = report_logger.log_report("verify adjoint", {"passed": True, "defect": np.float64(1e-15)})
        assert path == tmp_path / "verify_adjoint.json"
        payload = json.loads(path.read_text())
        assert payload == {"report": "verify adjoint", "data": {"passed": True, "defect": 1e-15}}

    def test_text_report_appends(self, report_logger, tmp_path):
        report_logger.log_report("notes", "first")
        report_logger.log_report("notes", "second")
        text = (tmp_path / "notes.md").read_text()
        assert text.index("first") < text.index("second")

    def test_without_output_dir(self):
        logger = get_report_logger()
        logger._output_dir = None
        assert logger.log_report("anything", {"a": 1}) is None

    def test_sanitize(self, report_logger):
        assert report_logger._sanitize_filename("study:converge/2d") == "study_converge_2d"
        assert report_logger._sanitize_filename("...") == "report"
