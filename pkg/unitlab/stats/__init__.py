"""Higher-order moment tracking of layer outputs."""

from .moments import (
    MomentRecord,
    TrajectorySummary,
    layer_moment_sweep,
    median_trajectory_std,
    moments4,
    trajectory_stability,
    unit_moments,
)

__all__ = [
    "MomentRecord",
    "TrajectorySummary",
    "layer_moment_sweep",
    "median_trajectory_std",
    "moments4",
    "trajectory_stability",
    "unit_moments",
]
