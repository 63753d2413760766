"""
Test cases for settings, error mapping, ordered parallel map and report writing
"""

import json

import pytest

from app.core.concurrency import parallel_map
from app.core.config import Settings
from app.core.exceptions import (
    ConvergenceError,
    DegenerateWeightError,
    InputFormatError,
    InvariantError,
    LabError,
    NumericalError,
    PreconditionError,
)
from app.schemas.reports import ErrorReport
from app.services.reports import write_report, write_text


class TestSettings:
    """Test cases for environment-driven settings"""

    def test_env_prefix(self, monkeypatch):
        monkeypatch.setenv("HARDY_LAB_LEVEL_DEPTH", "7")
        monkeypatch.setenv("HARDY_LAB_MOMENT_TOLERANCE", "1e-9")
        config = Settings()
        assert config.level_depth == 7
        assert config.moment_tolerance == 1e-9

    def test_defaults(self):
        config = Settings(_env_file=None)
        assert config.t_grid_points == 64
        assert config.type_constant == 8.0


class TestExceptions:
    """Test cases for the error hierarchy and exit codes"""

    @pytest.mark.parametrize(
        "error, code",
        [
            (LabError("x"), 1),
            (InputFormatError("x"), 2),
            (PreconditionError("x"), 3),
            (DegenerateWeightError("x"), 3),
            (NumericalError("x"), 4),
            (ConvergenceError("x"), 4),
        ],
    )
    def test_exit_codes(self, error, code):
        assert error.exit_code == code

    def test_error_report(self):
        """Context values are rendered into the stderr report"""
        error = PreconditionError("missing ball spec", radius=0.5)
        report = ErrorReport(**error.to_dict())
        assert report.error == "PreconditionError"
        assert report.context == {"radius": "0.5"}

    def test_invariant_error_is_numerical(self):
        assert isinstance(InvariantError("checks failed", failed=["moments"]), NumericalError)


class TestParallelMap:
    """Test cases for the ordered parallel map"""

    @pytest.mark.parametrize("threads", [1, 4])
    def test_preserves_order(self, threads):
        assert parallel_map(lambda v: v * v, range(20), threads) == [v * v for v in range(20)]


class TestReportWriting:
    """Test cases for atomic report writes"""

    def test_writes_json(self, tmp_path):
        report = ErrorReport(error="LabError", message="m", exit_code=1)
        path = write_report(tmp_path / "nested" / "error.json", report)
        assert json.loads(path.read_text(encoding="utf-8"))["exit_code"] == 1
        assert [p.name for p in path.parent.iterdir()] == ["error.json"]

    def test_unwritable_target(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(LabError, match="cannot write output"):
            write_text(blocker / "report.json", "{}")
