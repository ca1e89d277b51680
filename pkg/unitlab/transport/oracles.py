"""Exact earth mover's distance between equal-size uniform empirical measures."""

import logging
import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..core.constants import Defaults
from ..core.error_handling import CapacityError, ContractError, DimensionError
from .models import SampleSet, as_samples

logger = logging.getLogger(__name__)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    first, second = as_samples(a), as_samples(b)
    if first.shape[0] != second.shape[0]:
        raise ContractError(
            f"sample counts differ: {first.shape[0]} vs {second.shape[0]}",
            {"n_a": first.shape[0], "n_b": second.shape[0]},
        )
    if first.shape[1] != second.shape[1]:
        raise DimensionError(f"dimensions differ: {first.shape[1]} vs {second.shape[1]}")
    return first, second


def em_exact_1d(a: SampleSet | np.ndarray, b: SampleSet | np.ndarray) -> float:
    """Mean absolute gap between the sorted samples."""
    first, second = _pair(a, b)
    if first.shape[1] != 1:
        raise DimensionError(f"em_exact_1d needs one-dimensional samples, got d={first.shape[1]}")
    return float(np.mean(np.abs(np.sort(first[:, 0]) - np.sort(second[:, 0]))))


def em_exact_assignment(
    a: SampleSet | np.ndarray,
    b: SampleSet | np.ndarray,
    max_samples: int = Defaults.ORACLE_MAX_SAMPLES,
) -> float:
    """Minimum mean Euclidean cost over all perfect matchings."""
    first, second = _pair(a, b)
    n = first.shape[0]
    if n > max_samples:
        raise CapacityError(
            f"assignment oracle is limited to {max_samples} samples, got {n}",
            {"n": n, "limit": max_samples},
        )
    cost = cdist(first, second, metric="euclidean")
    rows, cols = linear_sum_assignment(cost)
    # order-independent sum
    return math.fsum(cost[rows, cols]) / n
