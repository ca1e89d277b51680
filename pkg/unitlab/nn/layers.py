"""Dense, convolution and batch-normalization layers."""

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..autodiff import Tensor, conv2d, expand, sqrt, square
from ..core.constants import Defaults, LayerMode
from ..core.error_handling import DegenerateInputError, DimensionError

logger = logging.getLogger(__name__)


def he_init(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> Tensor:
    """Zero-mean Gaussian weights with variance 2/fan_in."""
    if fan_in <= 0:
        raise DegenerateInputError(f"fan_in must be positive, got {fan_in}")
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape), requires_grad=True)


@dataclass
class DenseLayer:
    W: Tensor  # out x in
    b: Tensor  # out

    @classmethod
    def create(
        cls, in_features: int, out_features: int, rng: np.random.Generator
    ) -> "DenseLayer":
        return cls(
            W=he_init((out_features, in_features), in_features, rng),
            b=Tensor(np.zeros(out_features), requires_grad=True),
        )

    @property
    def in_features(self) -> int:
        return self.W.shape[1]

    @property
    def out_features(self) -> int:
        return self.W.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        return {"W": self.W, "b": self.b}

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(self, x)


def dense_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    """x Wᵀ + b."""
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise DimensionError(
            f"dense layer expects (n, {layer.in_features}) input, got {x.shape}"
        )
    out = x @ layer.W.T
    return out + expand(layer.b.reshape(1, layer.out_features), out.shape)


@dataclass
class Conv2dLayer:
    kernels: Tensor  # C_out x C_in x kH x kW
    bias: Tensor  # C_out
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.stride < 1 or self.padding < 0:
            raise DimensionError(
                f"invalid stride {self.stride} / padding {self.padding}"
            )

    @classmethod
    def create(
        cls,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ) -> "Conv2dLayer":
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        return cls(
            kernels=he_init(shape, in_channels * kernel_size * kernel_size, rng),
            bias=Tensor(np.zeros(out_channels), requires_grad=True),
            stride=stride,
            padding=padding,
        )

    def parameters(self) -> dict[str, Tensor]:
        return {"kernels": self.kernels, "bias": self.bias}

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_forward(self, x)


def conv2d_forward(layer: Conv2dLayer, x: Tensor) -> Tensor:
    out = conv2d(x, layer.kernels, layer.stride, layer.padding)
    bias = layer.bias.reshape(1, layer.bias.shape[0], 1, 1)
    return out + expand(bias, out.shape)


@dataclass
class BatchNormState:
    """Per-feature (or per-channel) normalization state.

    With ``affine`` off there are no γ/β; unitization layers keep theirs
    in ``UnitizationParams``.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = Defaults.BN_MOMENTUM
    eps: float = Defaults.BN_EPS
    mode: LayerMode = LayerMode.TRAIN
    affine: bool = True

    @classmethod
    def create(
        cls,
        features: int,
        eps: float = Defaults.BN_EPS,
        momentum: float = Defaults.BN_MOMENTUM,
        affine: bool = True,
    ) -> "BatchNormState":
        if eps <= 0:
            raise DegenerateInputError(f"batch-norm eps must be positive, got {eps}")
        return cls(
            gamma=Tensor(np.ones(features), requires_grad=affine),
            beta=Tensor(np.zeros(features), requires_grad=affine),
            running_mean=np.zeros(features),
            running_var=np.ones(features),
            momentum=momentum,
            eps=eps,
            affine=affine,
        )

    @property
    def features(self) -> int:
        return self.running_mean.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        if not self.affine:
            return {}
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}


def _normalize(
    state: BatchNormState, x: Tensor, axes: tuple[int, ...], stat_shape: tuple[int, ...]
) -> tuple[Tensor, Tensor]:
    if state.mode is LayerMode.TRAIN:
        count = int(np.prod([x.shape[axis] for axis in axes]))
        if count < 2:
            raise DegenerateInputError(
                f"batch statistics need at least 2 values per feature, got {count}"
            )
        mu = x.mean(axes, keepdims=True)
        centered = x - expand(mu, x.shape)
        var = square(centered).mean(axes, keepdims=True)
        xhat = centered / expand(sqrt(var + state.eps), x.shape)

        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mu.data.reshape(-1)
        state.running_var = (1.0 - m) * state.running_var + m * var.data.reshape(-1)
    else:
        mu = Tensor(state.running_mean.reshape(stat_shape))
        scale = Tensor(np.sqrt(state.running_var + state.eps).reshape(stat_shape))
        xhat = (x - expand(mu, x.shape)) / expand(scale, x.shape)

    if not state.affine:
        return xhat, xhat
    gamma = expand(state.gamma.reshape(stat_shape), x.shape)
    beta = expand(state.beta.reshape(stat_shape), x.shape)
    return xhat, xhat * gamma + beta


def batchnorm_forward(state: BatchNormState, x: Tensor) -> tuple[Tensor, Tensor]:
    """Normalize an n x d batch; returns pre-affine x̂ and post-affine y."""
    if x.ndim != 2 or x.shape[1] != state.features:
        raise DimensionError(
            f"batch norm over {state.features} features got input {x.shape}"
        )
    return _normalize(state, x, (0,), (1, state.features))


def conv_batchnorm_forward(state: BatchNormState, x: Tensor) -> tuple[Tensor, Tensor]:
    """Per-channel normalization of N x C x H x W maps over N, H and W."""
    if x.ndim != 4 or x.shape[1] != state.features:
        raise DimensionError(
            f"conv batch norm over {state.features} channels got input {x.shape}"
        )
    return _normalize(state, x, (0, 2, 3), (1, state.features, 1, 1))


class NormLayer(Protocol):
    """What a network block needs from its normalization."""

    def __call__(self, x: Tensor) -> Tensor: ...

    def parameters(self) -> dict[str, Tensor]: ...

    def buffers(self) -> dict[str, np.ndarray]: ...

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None: ...

    def set_mode(self, mode: LayerMode) -> None: ...


@dataclass
class BatchNormLayer:
    """Batch normalization for dense (n x d) or convolutional (N x C x H x W) input."""

    state: BatchNormState = field(repr=False)

    @classmethod
    def create(
        cls,
        features: int,
        eps: float = Defaults.BN_EPS,
        momentum: float = Defaults.BN_MOMENTUM,
    ) -> "BatchNormLayer":
        return cls(BatchNormState.create(features, eps, momentum))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 4:
            return conv_batchnorm_forward(self.state, x)[1]
        return batchnorm_forward(self.state, x)[1]

    def parameters(self) -> dict[str, Tensor]:
        return self.state.parameters()

    def buffers(self) -> dict[str, np.ndarray]:
        return self.state.buffers()

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        load_state_buffers(self.state, buffers)

    def set_mode(self, mode: LayerMode) -> None:
        self.state.mode = mode


def load_state_buffers(state: BatchNormState, buffers: dict[str, np.ndarray]) -> None:
    for name in ("running_mean", "running_var"):
        value = np.asarray(buffers[name], dtype=np.float64)
        if value.shape != (state.features,):
            raise DimensionError(
                f"{name} has shape {value.shape}, expected ({state.features},)"
            )
        setattr(state, name, value.copy())
