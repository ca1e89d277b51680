"""Value types shared by the transport oracles and bound calculators."""

from dataclasses import dataclass, field

import numpy as np

from ..core.error_handling import ContractError, DimensionError


@dataclass(frozen=True, eq=False)
class SampleSet:
    """n x d empirical sample tagged with the iteration it was drawn at."""

    samples: np.ndarray
    iteration_tag: int = 0

    def __post_init__(self):
        array = np.array(self.samples, dtype=np.float64)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        if array.ndim != 2:
            raise DimensionError(f"samples must be an n x d matrix, got shape {array.shape}")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ContractError("a sample set needs at least one sample and one dimension")
        if not np.all(np.isfinite(array)):
            raise ContractError("samples must be finite")
        array.setflags(write=False)
        object.__setattr__(self, "samples", array)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def moments(self) -> "MomentVector":
        return MomentVector.from_samples(self.samples)


def as_samples(value: "SampleSet | np.ndarray") -> np.ndarray:
    return value.samples if isinstance(value, SampleSet) else SampleSet(value).samples


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Per-dimension mean and (biased) variance."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        if mean.shape != var.shape or mean.ndim != 1:
            raise DimensionError(f"mean {mean.shape} and var {var.shape} must be matching vectors")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ContractError("moments must be finite")
        if np.any(var < 0.0):
            raise ContractError("variances must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_samples(cls, samples) -> "MomentVector":
        array = as_samples(samples)
        return cls(mean=array.mean(axis=0), var=array.var(axis=0))


@dataclass(frozen=True, eq=False)
class NoiseVector:
    """Deviation of normalized moments from (0, 1): mean = eps_mu, var = 1 + eps_var."""

    eps_mu: np.ndarray
    eps_var: np.ndarray

    def __post_init__(self):
        eps_mu = np.atleast_1d(np.asarray(self.eps_mu, dtype=np.float64))
        eps_var = np.atleast_1d(np.asarray(self.eps_var, dtype=np.float64))
        if eps_mu.shape != eps_var.shape or eps_mu.ndim != 1:
            raise DimensionError("eps_mu and eps_var must be matching vectors")
        if np.any(1.0 + eps_var <= 0.0):
            raise ContractError("1 + eps_var must be positive")
        object.__setattr__(self, "eps_mu", eps_mu)
        object.__setattr__(self, "eps_var", eps_var)

    @property
    def d(self) -> int:
        return self.eps_mu.shape[0]

    @classmethod
    def zeros(cls, d: int) -> "NoiseVector":
        return cls(np.zeros(d), np.zeros(d))

    @classmethod
    def from_moments(cls, moments: MomentVector) -> "NoiseVector":
        return cls(moments.mean.copy(), moments.var - 1.0)

    def to_moments(self) -> MomentVector:
        return MomentVector(self.eps_mu.copy(), 1.0 + self.eps_var)


@dataclass(frozen=True)
class LipschitzProbe:
    """Clipped power function of order ``p`` and clip ``c`` on R^d."""

    p: int
    c: float
    d: int
    c0: float | None = None

    def __post_init__(self):
        if self.p < 2:
            raise ContractError(f"probe power p must be at least 2, got {self.p}")
        if self.c <= 0:
            raise ContractError(f"probe clip C must be positive, got {self.c}")
        if self.d < 1:
            raise DimensionError(f"probe dimension must be positive, got {self.d}")
        if self.c0 is not None and self.c > self.c0:
            raise ContractError(f"probe clip C={self.c} exceeds support half-width {self.c0}")

    @classmethod
    def for_samples(cls, a, b, p: int = 2, c: float | None = None) -> "LipschitzProbe":
        """Probe with C0 the largest absolute coordinate over both sets; C defaults to C0."""
        first, second = as_samples(a), as_samples(b)
        c0 = float(max(np.abs(first).max(), np.abs(second).max()))
        if c0 == 0.0:
            c0 = 1.0
        return cls(p=p, c=c0 if c is None else c, d=first.shape[1], c0=c0)


@dataclass
class BoundReport:
    """Lower bound, optional exact or estimated distance, upper bound, and named terms."""

    lower: float
    upper: float
    exact: float | None = None
    terms: dict[str, float] = field(default_factory=dict)

    def ordered(self, slack: float = 0.0) -> bool:
        if self.lower > self.upper + slack:
            return False
        if self.exact is None:
            return True
        return self.lower <= self.exact + slack and self.exact <= self.upper + slack
