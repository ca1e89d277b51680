"""Tests for CSV appenders and the run manifest."""

import pytest

from unitlab.cli.outputs import CsvAppender, RunRecord, format_value, write_manifest
from unitlab.core.config import ExperimentConfig


class TestFormatting:
    """CSV cell formatting."""

    def test_values(self):
        """Floats, NaN, None, booleans and integers format as documented."""
        assert format_value(0.1) == "0.1"
        assert format_value(float("nan")) == "nan"
        assert format_value(None) == ""
        assert format_value(True) == "true"
        assert format_value(3) == "3"


class TestCsvAppender:
    """Append-only CSV files."""

    def test_header_written_once(self, tmp_path):
        """Comments and header are written only for a new file."""
        path = tmp_path / "out.csv"
        CsvAppender(path, ("a", "b"), comments=["# note"]).append([1, 2.5])
        CsvAppender(path, ("a", "b"), comments=["# note"]).append([3, None])
        assert path.read_text().splitlines() == ["# note", "a,b", "1,2.5", "3,"]

    def test_row_width_checked(self, tmp_path):
        """Rows must match the header width."""
        with pytest.raises(ValueError):
            CsvAppender(tmp_path / "out.csv", ("a", "b")).append([1])


class TestRunRecord:
    """Per-epoch run rows."""

    def test_row_without_alpha(self):
        """Networks without alpha leave the alpha columns empty."""
        row = RunRecord(1, "bn", 0.5, 0.9, 1.0).as_row()
        assert row[-3:] == [None, None, None]

    def test_accuracy_range(self):
        """Accuracy above 1 is rejected."""
        with pytest.raises(ValueError):
            RunRecord(1, "bn", 0.5, 1.5, 1.0)


class TestManifest:
    """The run manifest."""

    def test_contents(self, tmp_path):
        """The manifest records the config digest and versions."""
        cfg = ExperimentConfig(seed=5)
        text = write_manifest(tmp_path, cfg).read_text()
        assert f"config_sha256: {cfg.digest()}" in text
        assert "numpy: " in text and "python: " in text
