"""Trainable unitization on top of batch normalization.

For each sample the normalized x̂ is rescaled by ``p α + (1 - α)`` where
``p = 1 / sqrt(||x̂||² + eps)``, then the affine ``γ x̄ + β`` is applied.
α = 0 leaves plain batch normalization; α = 1 projects onto the sphere.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, expand, sqrt, square
from ..core.constants import Defaults, LayerMode
from ..core.error_handling import DegenerateInputError, DimensionError
from ..nn.layers import (
    BatchNormState,
    batchnorm_forward,
    conv_batchnorm_forward,
    load_state_buffers,
)

logger = logging.getLogger(__name__)


@dataclass
class UnitizationParams:
    alpha: Tensor
    gamma: Tensor
    beta: Tensor
    eps: float = Defaults.UNIT_EPS

    @classmethod
    def create(cls, features: int, eps: float = Defaults.UNIT_EPS) -> "UnitizationParams":
        if eps <= 0:
            raise DegenerateInputError(f"unitization eps must be positive, got {eps}")
        return cls(
            alpha=Tensor(np.zeros(features), requires_grad=True),
            gamma=Tensor(np.ones(features), requires_grad=True),
            beta=Tensor(np.zeros(features), requires_grad=True),
            eps=eps,
        )

    @property
    def features(self) -> int:
        return self.alpha.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        return {"alpha": self.alpha, "gamma": self.gamma, "beta": self.beta}


@dataclass
class ConvUnitizationConfig:
    """``n_hyper`` divides the per-sample squared norm together with H·W.

    Left as None it is fixed to H·W of the first input seen.
    """

    n_hyper: float | None = None
    eps: float = Defaults.UNIT_EPS


def clamp_alpha(params: UnitizationParams) -> UnitizationParams:
    """Project α into [0, 1] in place."""
    np.clip(params.alpha.data, 0.0, 1.0, out=params.alpha.data)
    return params


def _rescale(
    params: UnitizationParams, xhat: Tensor, p: Tensor, stat_shape: tuple[int, ...]
) -> Tensor:
    alpha = expand(params.alpha.reshape(stat_shape), xhat.shape)
    scale = expand(p, xhat.shape) * alpha + (1.0 - alpha)
    xbar = scale * xhat
    gamma = expand(params.gamma.reshape(stat_shape), xhat.shape)
    beta = expand(params.beta.reshape(stat_shape), xhat.shape)
    return gamma * xbar + beta


def unitization_forward(params: UnitizationParams, xhat: Tensor) -> Tensor:
    """Rescale and shift an already batch-normalized n x d input."""
    if xhat.ndim != 2 or xhat.shape[1] != params.features:
        raise DimensionError(
            f"unitization over {params.features} features got input {xhat.shape}"
        )
    squared_norm = square(xhat).sum(1, keepdims=True)
    p = 1.0 / sqrt(squared_norm + params.eps)
    return _rescale(params, xhat, p, (1, params.features))


def conv_unitize(
    config: ConvUnitizationConfig, params: UnitizationParams, xhat: Tensor
) -> Tensor:
    """Per-sample unitization of normalized N x C x H x W maps with per-channel α."""
    if xhat.ndim != 4 or xhat.shape[1] != params.features:
        raise DimensionError(
            f"conv unitization over {params.features} channels got input {xhat.shape}"
        )
    pixels = xhat.shape[2] * xhat.shape[3]
    n_hyper = pixels if config.n_hyper is None else config.n_hyper
    squared_norm = square(xhat).sum((1, 2, 3), keepdims=True) / (n_hyper * pixels)
    p = 1.0 / sqrt(squared_norm + config.eps)
    return _rescale(params, xhat, p, (1, params.features, 1, 1))


def conv_unitization_forward(
    config: ConvUnitizationConfig,
    params: UnitizationParams,
    x: Tensor,
    state: BatchNormState | None = None,
) -> Tensor:
    """Per-channel batch normalization without affine followed by ``conv_unitize``.

    Without a ``state`` the batch statistics of ``x`` are used.
    """
    if x.ndim != 4 or x.shape[1] != params.features:
        raise DimensionError(
            f"conv unitization over {params.features} channels got input {x.shape}"
        )
    if state is None:
        state = BatchNormState.create(params.features, eps=config.eps, affine=False)
    xhat, _ = conv_batchnorm_forward(state, x)
    return conv_unitize(config, params, xhat)


@dataclass
class UnitizationLayer:
    """Batch normalization (no affine) followed by ``unitization_forward``."""

    state: BatchNormState = field(repr=False)
    params: UnitizationParams = field(repr=False)

    @classmethod
    def create(
        cls,
        features: int,
        bn_eps: float = Defaults.BN_EPS,
        bn_momentum: float = Defaults.BN_MOMENTUM,
        unit_eps: float = Defaults.UNIT_EPS,
    ) -> "UnitizationLayer":
        return cls(
            state=BatchNormState.create(features, bn_eps, bn_momentum, affine=False),
            params=UnitizationParams.create(features, unit_eps),
        )

    def __call__(self, x: Tensor) -> Tensor:
        xhat, _ = batchnorm_forward(self.state, x)
        return unitization_forward(self.params, xhat)

    def parameters(self) -> dict[str, Tensor]:
        return self.params.parameters()

    def buffers(self) -> dict[str, np.ndarray]:
        return self.state.buffers()

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        load_state_buffers(self.state, buffers)

    def set_mode(self, mode: LayerMode) -> None:
        self.state.mode = mode

    def clamp(self) -> None:
        clamp_alpha(self.params)


@dataclass
class ConvUnitizationLayer:
    """Convolutional variant; ``n_hyper`` stays fixed once the first input sets it."""

    state: BatchNormState = field(repr=False)
    params: UnitizationParams = field(repr=False)
    config: ConvUnitizationConfig = field(default_factory=ConvUnitizationConfig)

    @classmethod
    def create(
        cls,
        channels: int,
        bn_eps: float = Defaults.BN_EPS,
        bn_momentum: float = Defaults.BN_MOMENTUM,
        unit_eps: float = Defaults.UNIT_EPS,
        n_hyper: float | None = None,
    ) -> "ConvUnitizationLayer":
        return cls(
            state=BatchNormState.create(channels, bn_eps, bn_momentum, affine=False),
            params=UnitizationParams.create(channels, unit_eps),
            config=ConvUnitizationConfig(n_hyper=n_hyper, eps=unit_eps),
        )

    def __call__(self, x: Tensor) -> Tensor:
        if self.config.n_hyper is None and x.ndim == 4:
            self.config.n_hyper = float(x.shape[2] * x.shape[3])
            logger.debug(f"n_hyper fixed to {self.config.n_hyper}")
        return conv_unitization_forward(self.config, self.params, x, self.state)

    def parameters(self) -> dict[str, Tensor]:
        return self.params.parameters()

    def buffers(self) -> dict[str, np.ndarray]:
        return self.state.buffers()

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        load_state_buffers(self.state, buffers)

    def set_mode(self, mode: LayerMode) -> None:
        self.state.mode = mode

    def clamp(self) -> None:
        clamp_alpha(self.params)
