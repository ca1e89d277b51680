"""Per-unit mean, variance, skewness and kurtosis of layer outputs across epochs.

All estimators are biased (divide by n); kurtosis is non-excess (normal = 3).
Undefined standardized moments are carried as NaN with ``defined`` False.
"""

import logging
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..core.constants import Defaults
from ..core.error_handling import ContractError, DegenerateInputError, NumericError

logger = logging.getLogger(__name__)

MOMENT_NAMES = ("mean", "var", "skewness", "kurtosis")


@dataclass(frozen=True)
class MomentRecord:
    epoch: int
    unit: int
    mean: float
    var: float
    skewness: float
    kurtosis: float

    @property
    def defined(self) -> bool:
        return bool(np.isfinite(self.skewness) and np.isfinite(self.kurtosis))


@dataclass(frozen=True)
class TrajectorySummary:
    """Population standard deviation of each moment across epochs, for one unit."""

    unit: int
    mean_std: float
    var_std: float
    skewness_std: float
    kurtosis_std: float

    def std_of(self, moment: str) -> float:
        return getattr(self, f"{moment}_std")


def moments4(values) -> tuple[float, float, float, float]:
    """(mean, var, skewness, kurtosis) of a sample."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < Defaults.MOMENT_MIN_SAMPLES:
        raise DegenerateInputError(
            f"need at least {Defaults.MOMENT_MIN_SAMPLES} values, got {x.size}"
        )
    mean = float(x.mean())
    var = float(x.var())
    if var <= Defaults.MOMENT_VAR_FLOOR:
        raise DegenerateInputError(
            f"variance {var:.3g} too small for standardized moments", {"var": var}
        )
    skewness = float(stats.skew(x, bias=True))
    kurtosis = float(stats.kurtosis(x, fisher=False, bias=True))
    if kurtosis < (skewness**2 + 1.0) * (1.0 - 1e-9):
        raise NumericError(
            f"kurtosis {kurtosis} below skewness² + 1 = {skewness**2 + 1.0}"
        )
    return mean, var, skewness, kurtosis


def unit_moments(epoch: int, outputs: np.ndarray) -> list[MomentRecord]:
    """One record per column of an (n, units) output matrix."""
    records = []
    for unit in range(outputs.shape[1]):
        column = outputs[:, unit]
        try:
            mean, var, skewness, kurtosis = moments4(column)
        except DegenerateInputError as e:
            logger.warning(f"Epoch {epoch} unit {unit}: moments undefined ({e.message})")
            mean = float(column.mean()) if column.size else float("nan")
            var = float(column.var()) if column.size else float("nan")
            skewness = kurtosis = float("nan")
        records.append(MomentRecord(epoch, unit, mean, var, skewness, kurtosis))
    return records


def layer_moment_sweep(network, layer: int, inputs: np.ndarray, epoch: int) -> list[MomentRecord]:
    """Moments of every unit of ``layer`` over the full input set, in inference mode."""
    outputs = network.local(layer)(inputs)
    return unit_moments(epoch, outputs)


def trajectory_stability(records: Iterable[MomentRecord]) -> list[TrajectorySummary]:
    """Spread of each unit's moment series over epochs."""
    by_unit: dict[int, list[MomentRecord]] = defaultdict(list)
    for record in records:
        by_unit[record.unit].append(record)
    if not by_unit:
        raise DegenerateInputError("no moment records to summarize")

    summaries = []
    for unit in sorted(by_unit):
        series = by_unit[unit]
        if len({record.epoch for record in series}) < 2:
            raise DegenerateInputError(
                f"unit {unit} needs records from at least 2 epochs", {"unit": unit}
            )
        stds = {
            name: float(np.std([getattr(record, name) for record in series]))
            for name in MOMENT_NAMES
        }
        summaries.append(
            TrajectorySummary(
                unit,
                stds["mean"],
                stds["var"],
                stds["skewness"],
                stds["kurtosis"],
            )
        )
    return summaries


def median_trajectory_std(summaries: Sequence[TrajectorySummary], moment: str) -> float:
    """Median over units of one moment's trajectory spread (NaN units ignored)."""
    if moment not in MOMENT_NAMES:
        raise ContractError(f"unknown moment '{moment}'")
    return float(np.nanmedian([summary.std_of(moment) for summary in summaries]))
