"""Append-only CSV files and the run manifest written into a run directory."""

import csv
import logging
import platform
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from ..core.config import ExperimentConfig
from ..core.constants import FileNames

logger = logging.getLogger(__name__)

RUN_COLUMNS = (
    "epoch",
    "norm",
    "train_loss",
    "test_accuracy",
    "wall_seconds",
    "alpha_min",
    "alpha_mean",
    "alpha_max",
)
MOMENTS_COLUMNS = ("variant", "epoch", "unit", "mean", "var", "skew", "kurt")
STABILITY_COLUMNS = ("variant", "unit", "mean_std", "var_std", "skew_std", "kurt_std")
EMDIST_COLUMNS = ("epoch", "layer", "estimate", "runtime_seconds")
BOUNDS_COLUMNS = ("check", "trial", "dim", "param", "lower", "exact", "upper", "passed")
ORACLE_COLUMNS = ("check", "trial", "value", "tolerance", "passed")

MOMENTS_COMMENT = "# kurtosis: non-excess (normal = 3); biased estimators; nan = undefined"


@dataclass(frozen=True)
class RunRecord:
    """One epoch of training."""

    epoch: int
    norm: str
    train_loss: float
    test_accuracy: float
    wall_seconds: float
    alpha: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not 0.0 <= self.test_accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {self.test_accuracy}")

    def as_row(self) -> list:
        alpha = self.alpha if self.alpha is not None else (None, None, None)
        return [
            self.epoch,
            self.norm,
            self.train_loss,
            self.test_accuracy,
            self.wall_seconds,
            *alpha,
        ]


def format_value(value) -> str:
    """Shortest round-trip text for floats, 'nan' for NaN, '' for missing."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if value != value else repr(value)
    return str(value)


class CsvAppender:
    """Appends rows to a CSV, writing comments and header only when the file is new."""

    def __init__(
        self, path: str | Path, columns: Sequence[str], comments: Sequence[str] = ()
    ):
        self.path = Path(path)
        self.columns = tuple(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="", encoding="utf-8") as handle:
                for comment in comments:
                    handle.write(comment + "\n")
                csv.writer(handle).writerow(self.columns)

    def append(self, row: Sequence) -> None:
        self.extend([row])

    def extend(self, rows: Iterable[Sequence]) -> None:
        with open(self.path, "a", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            for row in rows:
                if len(row) != len(self.columns):
                    raise ValueError(
                        f"{self.path.name}: row has {len(row)} values, "
                        f"expected {len(self.columns)}"
                    )
                writer.writerow([format_value(value) for value in row])


def _package_version(name: str) -> str:
    try:
        return version(name)
    except PackageNotFoundError:
        return "unknown"


def write_manifest(out_dir: str | Path, cfg: ExperimentConfig) -> Path:
    """Record the config hash and library versions of this run."""
    target = Path(out_dir) / FileNames.MANIFEST
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"mode: {cfg.mode}",
        f"seed: {cfg.seed}",
        f"config_sha256: {cfg.digest()}",
        f"unitlab: {_package_version('unitlab')}",
        f"numpy: {_package_version('numpy')}",
        f"scipy: {_package_version('scipy')}",
        f"python: {platform.python_version()}",
    ]
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"Manifest written to {target}")
    return target
