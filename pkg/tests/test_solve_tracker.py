import json

from src.utils.solve_tracker import SolveStatsTracker, get_tracker


class TestSolveStatsTracker:
    def test_singleton(self):
        assert get_tracker() is SolveStatsTracker()

    def test_counts_and_worst_residual(self):
        tracker = get_tracker()
        tracker.track_factorization("step")
        tracker.track_solve("step", 1e-14)
        tracker.track_solve("step", 3e-13)
        tracker.track_solve("step", 2e-15)
        assert tracker.get_solve_count("step") == 3
        assert tracker.get_factorization_count("step") == 1
        assert tracker.get_max_residual("step") == 3e-13
        assert tracker.get_solve_count("missing") == 0

    def test_snapshot_sorted(self):
        tracker = get_tracker()
        tracker.track_solve("resolvent", 0.0)
        tracker.track_solve("project", 0.0)
        tracker.track_failure("step")
        snapshot = tracker.snapshot()
        assert list(snapshot["solves"]) == ["project", "resolvent"]
        assert snapshot["failures"] == {"step": 1}

    def test_save_without_file_is_noop(self, tmp_path):
        tracker = get_tracker()
        tracker._stats_file = None
        tracker.save_stats()
        assert list(tmp_path.iterdir()) == []

    def test_save_stats(self, tmp_path):
        tracker = get_tracker()
        target = tmp_path / "out" / "solver_stats.json"
        tracker.set_stats_file(target)
        tracker.track_factorization("saddle")
        tracker.save_stats()
        data = json.loads(target.read_text())
        assert data["factorizations"] == {"saddle": 1}
        assert not target.with_suffix(".tmp").exists()
        tracker._stats_file = None

    def test_reset(self):
        tracker = get_tracker()
        tracker.track_solve("saddle", 1.0)
        tracker.reset_stats()
        assert tracker.snapshot() == {"factorizations": {}, "solves": {}, "max_residual": {}, "failures": {}}
