"""Closed-form unitization maps on plain arrays.

Each function acts on the last axis, so a single vector (d,) or a batch of
row vectors (n, d) is accepted.
"""

import numpy as np

from ..core.error_handling import ContractError, DimensionError

_UNIT_TOLERANCE = 1e-12


def _rows(x) -> np.ndarray:
    array = np.asarray(x, dtype=np.float64)
    if array.ndim == 0:
        raise DimensionError("unitization needs at least one feature axis")
    return array


def _unit_vector(c, d: int) -> np.ndarray:
    if c is None:
        c = np.zeros(d)
        c[0] = 1.0
        return c
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (d,):
        raise DimensionError(f"constant vector has shape {c.shape}, expected ({d},)")
    if abs(np.linalg.norm(c) - 1.0) > _UNIT_TOLERANCE:
        raise ContractError("constant vector c must have unit norm")
    return c


def vanilla_unitize(x, c=None) -> np.ndarray:
    """x / ||x||, or the unit vector ``c`` (default e1) when x = 0."""
    x = _rows(x)
    c = _unit_vector(c, x.shape[-1])
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norm > 0.0, norm, 1.0)
    return np.where(norm > 0.0, x / safe, c)


def partial_unitize(x, alpha: float, c=None) -> np.ndarray:
    """x / (alpha ||x|| + 1 - alpha) with one alpha in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    x = _rows(x)
    c = _unit_vector(c, x.shape[-1])
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    denom = alpha * norm + (1.0 - alpha)
    # denom is zero only for alpha = 1 and x = 0
    safe = np.where(denom > 0.0, denom, 1.0)
    return np.where(denom > 0.0, x / safe, c)


def general_unitize(x, alpha) -> np.ndarray:
    """Componentwise x_i / (alpha_i (||x|| - 1) + 1); zero input maps to zero."""
    x = _rows(x)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (x.shape[-1],):
        raise DimensionError(f"alpha has shape {alpha.shape}, expected ({x.shape[-1]},)")
    if np.any(alpha < 0.0) or np.any(alpha > 1.0):
        raise ContractError("every alpha component must lie in [0, 1]")
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    denom = alpha * (norm - 1.0) + 1.0
    safe = np.where(norm > 0.0, denom, 1.0)
    return np.where(norm > 0.0, x / safe, 0.0)
