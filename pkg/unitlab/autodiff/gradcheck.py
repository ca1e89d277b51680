"""Central-difference gradient checking."""

from collections.abc import Callable

import numpy as np

from ..core.constants import Defaults
from ..core.error_handling import ContractError
from .tensor import Tape, Tensor, backward


def _scalar(output: Tensor) -> float:
    if output.size != 1:
        raise ContractError(
            f"grad_check needs a scalar-valued function, got shape {output.shape}"
        )
    return output.item()


def numeric_gradient(
    f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = Defaults.GRAD_CHECK_STEP
) -> np.ndarray:
    """Central difference estimate of df/dx, one component at a time."""
    base = np.array(x, dtype=np.float64)
    grad = np.empty_like(base)
    for i in range(base.size):
        shifted = base.copy()
        shifted.flat[i] += h
        f_plus = _scalar(f(Tensor(shifted)))
        shifted.flat[i] -= 2.0 * h
        f_minus = _scalar(f(Tensor(shifted)))
        grad.flat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def analytic_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    with Tape() as tape:
        leaf = Tensor(x, requires_grad=True)
        out = f(leaf)
        _scalar(out)
        if not out.requires_grad:
            return np.zeros_like(leaf.data)
        return backward(tape, out).wrt(leaf)


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: np.ndarray | Tensor,
    h: float = Defaults.GRAD_CHECK_STEP,
) -> float:
    """Max relative error between the taped gradient and central differences.

    The relative error of each component is |a - n| / max(|a|, |n|, 1e-8).
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    analytic = analytic_gradient(f, base)
    numeric = numeric_gradient(f, base, h)
    denom = np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), Defaults.GRAD_CHECK_FLOOR
    )
    return float(np.max(np.abs(analytic - numeric) / denom))
