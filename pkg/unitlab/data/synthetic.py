"""Seeded synthetic sample pairs for the transport checks."""

import numpy as np

from ..core.error_handling import ContractError
from ..transport.models import SampleSet


def _check_size(n: int, d: int) -> None:
    if n < 1 or d < 1:
        raise ContractError(f"need n >= 1 and d >= 1, got n={n}, d={d}")


def synth_gaussian_pair(
    n: int,
    d: int,
    shift: float,
    var_ratio: float,
    seed: int,
    paired: bool = False,
) -> tuple[SampleSet, SampleSet]:
    """Standard normal set and a second set shifted by ``shift`` and scaled by sqrt(var_ratio).

    With ``paired`` both sets reuse the same noise draw.
    """
    if var_ratio <= 0:
        raise ContractError(f"variance ratio must be positive, got {var_ratio}")
    _check_size(n, d)
    rng = np.random.default_rng(seed)
    first = rng.standard_normal((n, d))
    noise = first if paired else rng.standard_normal((n, d))
    second = shift + np.sqrt(var_ratio) * noise
    return SampleSet(first), SampleSet(second)


def synth_appendix_uniform_pair(
    c_prime: float, d: int, n: int, seed: int
) -> tuple[SampleSet, SampleSet]:
    """Uniform draws on [C'/2, C']^d and on [0, C'/4]^d."""
    if c_prime <= 0:
        raise ContractError(f"C' must be positive, got {c_prime}")
    _check_size(n, d)
    rng = np.random.default_rng(seed)
    far = rng.uniform(c_prime / 2.0, c_prime, size=(n, d))
    near = rng.uniform(0.0, c_prime / 4.0, size=(n, d))
    return SampleSet(far), SampleSet(near)
