"""Moment-based upper and lower bounds on the earth mover's distance.

Upper bounds use the first two moments of each distribution; lower bounds
compare expectations of a clipped power function, which is 1-Lipschitz.
"""

import logging
from collections.abc import Sequence

import numpy as np

from ..core.constants import Defaults, UnitizationMode
from ..core.error_handling import (
    BoundViolationError,
    ContractError,
    DimensionError,
    MissingDataError,
)
from .models import (
    BoundReport,
    LipschitzProbe,
    MomentVector,
    NoiseVector,
    SampleSet,
    as_samples,
)
from .oracles import em_exact_assignment

logger = logging.getLogger(__name__)


def thm1_terms(ma: MomentVector, mb: MomentVector) -> dict[str, float]:
    """Named summands of the two-moment upper bound."""
    if ma.d != mb.d:
        raise DimensionError(f"moment dimensions differ: {ma.d} vs {mb.d}")
    return {
        "var_a": float(ma.var.sum()),
        "var_b": float(mb.var.sum()),
        "mean_gap": float(np.sqrt(np.sum((ma.mean - mb.mean) ** 2))),
        "constant": 2.0,
    }


def upper_bound_thm1(ma: MomentVector, mb: MomentVector) -> float:
    """Σσ_a² + Σσ_b² + ||μ_a - μ_b|| + 2."""
    return float(sum(thm1_terms(ma, mb).values()))


def upper_bound_noisy(na: NoiseVector, nb: NoiseVector, d: int) -> float:
    """Upper bound for normalized outputs whose moments deviate from (0, 1) by noise."""
    if na.d != d or nb.d != d:
        raise DimensionError(f"noise vectors of size {na.d}, {nb.d} for d={d}")
    mean_gap = float(np.sqrt(np.sum((na.eps_mu - nb.eps_mu) ** 2)))
    return float(na.eps_var.sum() + nb.eps_var.sum() + 2 * d + mean_gap + 2.0)


def f_pc_eval(x, probe: LipschitzProbe) -> np.ndarray | float:
    """Clipped power probe, evaluated on a vector (d,) or on every row of (n, d)."""
    values = np.asarray(x, dtype=np.float64)
    if values.shape[-1] != probe.d:
        raise DimensionError(f"probe of dimension {probe.d} got input {values.shape}")
    c, p = probe.c, probe.p
    clipped = np.where(
        np.abs(values) <= c, values**p, np.where(values < -c, (-c) ** p, c**p)
    )
    total = clipped.sum(axis=-1) / (p * c ** (p - 1) * np.sqrt(probe.d))
    return float(total) if np.ndim(total) == 0 else total


def lower_bound_thm2(
    a: SampleSet | np.ndarray, b: SampleSet | np.ndarray, probe: LipschitzProbe
) -> float:
    """|E_a f - E_b f| for the probe f."""
    first, second = as_samples(a), as_samples(b)
    if first.shape[1] != second.shape[1]:
        raise DimensionError(f"dimensions differ: {first.shape[1]} vs {second.shape[1]}")
    return float(abs(np.mean(f_pc_eval(first, probe)) - np.mean(f_pc_eval(second, probe))))


def lower_bound_p2_noise(na: NoiseVector, nb: NoiseVector, c0: float, d: int) -> float:
    """Second-order lower bound in terms of the noise on the normalized moments."""
    if c0 <= 0:
        raise ContractError(f"support half-width C0 must be positive, got {c0}")
    if na.d != d or nb.d != d:
        raise DimensionError(f"noise vectors of size {na.d}, {nb.d} for d={d}")
    gap = np.sum(na.eps_mu**2 + na.eps_var - nb.eps_mu**2 - nb.eps_var)
    return float(abs(gap) / (2.0 * c0 * np.sqrt(d)))


def unitized_upper_bound(
    mode: UnitizationMode,
    alpha: float | Sequence[float] | np.ndarray | None = None,
    norm_means: tuple[float, float] | None = None,
) -> float:
    """Upper bound on the distance between two unitized output distributions.

    Only the smallest α matters; ``norm_means`` (E||x||, E||y||) is needed
    when it is zero.
    """
    if mode is UnitizationMode.VANILLA:
        return 2.0
    if alpha is None:
        raise ContractError(f"{mode.value} unitization bound needs alpha")

    alphas = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    if mode is UnitizationMode.SCALAR and alphas.size != 1:
        raise ContractError("scalar unitization takes a single alpha")
    if np.any(alphas < 0.0) or np.any(alphas > 1.0):
        raise ContractError("alpha must lie in [0, 1]")

    smallest = float(alphas.min())
    if smallest > 0.0:
        return 2.0 / smallest
    if norm_means is None:
        raise MissingDataError("alpha = 0 needs the expected norms of both distributions")
    spread = float(norm_means[0] + norm_means[1])
    return spread if mode is UnitizationMode.SCALAR else spread + 2.0


def unbounded_example_lower(c_prime: float, probe: LipschitzProbe) -> float:
    """Lower bound for uniform [C'/2, C']^d against uniform [0, C'/4]^d; linear in C'."""
    if c_prime <= 0:
        raise ContractError(f"C' must be positive, got {c_prime}")
    p = probe.p
    return float((2.0**-p - 4.0**-p) * np.sqrt(probe.d) * c_prime / p)


def bound_sandwich(
    a: SampleSet | np.ndarray,
    b: SampleSet | np.ndarray,
    probe: LipschitzProbe | None = None,
    moments: tuple[MomentVector, MomentVector] | None = None,
    slack: float = Defaults.SANDWICH_SLACK,
) -> BoundReport:
    """Lower bound, exact distance and upper bound for one pair of sample sets.

    Raises BoundViolationError (carrying the report) if they are out of order.
    """
    first, second = as_samples(a), as_samples(b)
    if probe is None:
        probe = LipschitzProbe.for_samples(first, second)
    if moments is None:
        moments = (MomentVector.from_samples(first), MomentVector.from_samples(second))

    terms = thm1_terms(*moments)
    report = BoundReport(
        lower=lower_bound_thm2(first, second, probe),
        upper=float(sum(terms.values())),
        exact=em_exact_assignment(first, second),
        terms=terms,
    )
    if not report.ordered(slack):
        raise BoundViolationError(
            f"bound ordering violated: lower={report.lower:.12g} "
            f"exact={report.exact:.12g} upper={report.upper:.12g}",
            {"report": report},
        )
    return report


def lipschitz_violations(
    probe: LipschitzProbe,
    v: np.ndarray,
    w: np.ndarray,
    slack: float = Defaults.LIPSCHITZ_SLACK,
) -> int:
    """Number of row pairs with |f(v) - f(w)| > ||v - w|| + slack."""
    gaps = np.abs(f_pc_eval(v, probe) - f_pc_eval(w, probe))
    distances = np.linalg.norm(np.asarray(v) - np.asarray(w), axis=-1)
    return int(np.count_nonzero(gaps > distances + slack))
