"""SGD with (Nesterov) momentum, weight decay and a step learning-rate schedule."""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..core.error_handling import ContractError


@dataclass(frozen=True)
class SgdConfig:
    lr: float
    momentum: float = 0.0
    nesterov: bool = False
    weight_decay: float = 0.0
    milestones: tuple[int, ...] = ()
    decay_factor: float = 0.2

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be non-negative")
        if not 0.0 < self.decay_factor < 1.0:
            raise ContractError("decay_factor must lie in (0, 1)")
        steps = tuple(self.milestones)
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ContractError(f"milestones must be strictly increasing: {steps}")
        object.__setattr__(self, "milestones", steps)


@dataclass
class SgdState:
    """Velocity buffers, one per parameter, created on first use."""

    velocities: list[np.ndarray] = field(default_factory=list)


def sgd_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: SgdState,
    config: SgdConfig,
    lr: float | None = None,
) -> Sequence[Tensor]:
    """One in-place update of ``params``.

    v <- m v + g + wd θ, then θ <- θ - lr (g + wd θ + m v) with Nesterov,
    θ <- θ - lr v without.
    """
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.velocities:
        state.velocities = [np.zeros_like(p.data) for p in params]
    step_lr = config.lr if lr is None else lr

    for param, grad, velocity in zip(params, grads, state.velocities, strict=True):
        direction = grad + config.weight_decay * param.data
        velocity *= config.momentum
        velocity += direction
        if config.nesterov:
            update = direction + config.momentum * velocity
        else:
            update = velocity
        param.data -= step_lr * update
    return params


def lr_at_epoch(config: SgdConfig, epoch: int) -> float:
    """Base rate times decay_factor per milestone already reached (epochs count from 1)."""
    passed = sum(1 for milestone in config.milestones if milestone <= epoch)
    return config.lr * config.decay_factor**passed


class SgdOptimizer:
    """Holds the parameter list and its velocities across steps."""

    def __init__(self, params: Sequence[Tensor], config: SgdConfig):
        self.params = list(params)
        self.config = config
        self.state = SgdState()

    def step(self, grads: Sequence[np.ndarray], epoch: int) -> None:
        sgd_step(self.params, grads, self.state, self.config, lr_at_epoch(self.config, epoch))
