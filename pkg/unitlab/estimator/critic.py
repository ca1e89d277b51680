"""Weight-clipped critic estimating the earth mover's distance between two snapshots.

The critic f_w maximizes mean f_w(new(x)) - mean f_w(old(x)) over inputs x.
Clipping every weight to [-c, c] keeps f_w K-Lipschitz for some unknown K,
so the estimate is on the scale K·W.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tape, Tensor, backward, no_grad, relu, sigmoid
from ..core.constants import CriticOptimizer, Defaults
from ..core.error_handling import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    TrainingDivergedError,
)
from ..core.logging_config import log_performance
from ..nn.layers import DenseLayer

logger = logging.getLogger(__name__)

LocalFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CriticConfig:
    iterations: int = Defaults.CRITIC_ITERATIONS
    batch_size: int = Defaults.CRITIC_BATCH_SIZE
    clip: float = Defaults.CRITIC_CLIP
    lr: float = Defaults.CRITIC_LR
    hidden_widths: tuple[int, ...] = Defaults.CRITIC_HIDDEN
    seed: int = 0
    sigmoid_head: bool = False
    optimizer: CriticOptimizer = CriticOptimizer.SGD

    def __post_init__(self):
        if self.clip <= 0:
            raise ContractError(f"clip bound must be positive, got {self.clip}")
        if self.iterations < 1 or self.batch_size < 1:
            raise ContractError("iterations and batch_size must be positive")
        if self.lr <= 0:
            raise ContractError(f"critic lr must be positive, got {self.lr}")
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))


class CriticNet:
    """ReLU MLP with a scalar head whose weights stay inside [-clip, clip]."""

    def __init__(self, layers: Sequence[DenseLayer], clip: float, sigmoid_head: bool = False):
        self.layers = list(layers)
        self.clip = clip
        self.sigmoid_head = sigmoid_head
        self.final_objective: float | None = None

    @classmethod
    def create(
        cls, input_dim: int, config: CriticConfig, rng: np.random.Generator
    ) -> "CriticNet":
        widths = [input_dim, *config.hidden_widths, 1]
        layers = [
            DenseLayer.create(fan_in, fan_out, rng)
            for fan_in, fan_out in zip(widths, widths[1:])
        ]
        critic = cls(layers, config.clip, config.sigmoid_head)
        critic.clip_weights()
        return critic

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_features

    def parameters(self) -> list[Tensor]:
        return [tensor for layer in self.layers for tensor in layer.parameters().values()]

    def clip_weights(self) -> None:
        for tensor in self.parameters():
            np.clip(tensor.data, -self.clip, self.clip, out=tensor.data)

    def max_abs_weight(self) -> float:
        return max(float(np.abs(tensor.data).max()) for tensor in self.parameters())

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for layer in self.layers[:-1]:
            h = relu(layer(h))
        out = self.layers[-1](h)
        if self.sigmoid_head:
            out = sigmoid(out)
        return out.reshape(out.shape[0])

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        with no_grad():
            return self(Tensor(_as_features(x))).data


@dataclass(frozen=True)
class EmEstimate:
    value: float
    std_error: float
    layer: int = -1
    iterations: tuple[int, int] = field(default=(0, 1))

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise TrainingDivergedError(f"non-finite EM estimate {self.value}")


def _as_features(values: np.ndarray) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1:
        return array.reshape(-1, 1)
    return array.reshape(array.shape[0], -1)


def _paired_features(
    f_old: LocalFunction, f_new: LocalFunction, data: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    old = _as_features(f_old(data))
    new = _as_features(f_new(data))
    if old.shape != new.shape:
        raise DimensionError(
            f"snapshot outputs differ in shape: {old.shape} vs {new.shape}"
        )
    return old, new


@log_performance
def train_critic(
    f_old: LocalFunction,
    f_new: LocalFunction,
    data: np.ndarray,
    config: CriticConfig,
    on_step: Callable[[int, CriticNet], None] | None = None,
) -> CriticNet:
    """Gradient ascent on the mean output difference, clipping after every step.

    ``on_step`` is called with the step index and the critic after each clip.
    """
    if len(data) == 0:
        raise DegenerateInputError("critic training needs at least one input")
    old, new = _paired_features(f_old, f_new, data)
    n = old.shape[0]

    rng = np.random.default_rng(config.seed)
    critic = CriticNet.create(old.shape[1], config, rng)
    params = critic.parameters()
    mean_square = [np.zeros_like(p.data) for p in params]
    batch = min(config.batch_size, n)

    objective = 0.0
    for step in range(config.iterations):
        idx = rng.integers(0, n, size=batch)
        with Tape() as tape:
            gap = critic(Tensor(new[idx])).mean() - critic(Tensor(old[idx])).mean()
            objective = gap.item()
            if not np.isfinite(objective):
                raise TrainingDivergedError(
                    f"critic objective became {objective} at step {step}", {"step": step}
                )
            grads = backward(tape, gap)

        for i, param in enumerate(params):
            grad = grads.wrt(param)
            if config.optimizer is CriticOptimizer.RMSPROP:
                mean_square[i] *= Defaults.RMSPROP_DECAY
                mean_square[i] += (1.0 - Defaults.RMSPROP_DECAY) * grad * grad
                grad = grad / (np.sqrt(mean_square[i]) + Defaults.RMSPROP_EPS)
            param.data += config.lr * grad
        critic.clip_weights()
        if on_step is not None:
            on_step(step, critic)

    critic.final_objective = objective
    logger.debug(f"Critic trained for {config.iterations} steps, objective {objective:.6g}")
    return critic


def estimate_em(
    critic: CriticNet,
    f_old: LocalFunction,
    f_new: LocalFunction,
    test_data: np.ndarray,
    layer: int = -1,
    iterations: tuple[int, int] = (0, 1),
) -> EmEstimate:
    """Mean critic difference over held-out inputs, with its standard error."""
    if len(test_data) == 0:
        raise DegenerateInputError("EM estimate needs a non-empty test set")
    old, new = _paired_features(f_old, f_new, test_data)
    diffs = critic.evaluate(new) - critic.evaluate(old)
    std_error = float(diffs.std(ddof=1) / np.sqrt(diffs.size)) if diffs.size > 1 else 0.0
    return EmEstimate(float(diffs.mean()), std_error, layer, iterations)


def average_deep_layer_distance(estimates: Sequence[EmEstimate | float]) -> float:
    if not estimates:
        raise DegenerateInputError("no layer estimates to average")
    values = [e.value if isinstance(e, EmEstimate) else float(e) for e in estimates]
    return float(np.mean(values))


def lipschitz_upper_bound(critic: CriticNet) -> float:
    """Product of the layers' spectral norms (ReLU is 1-Lipschitz, sigmoid 1/4)."""
    bound = 1.0
    for layer in critic.layers:
        bound *= float(np.linalg.norm(layer.W.data, ord=2))
    return bound * 0.25 if critic.sigmoid_head else bound
