"""Critic-based earth mover's distance estimation."""

from .critic import (
    CriticConfig,
    CriticNet,
    EmEstimate,
    average_deep_layer_distance,
    estimate_em,
    lipschitz_upper_bound,
    train_critic,
)

__all__ = [
    "CriticConfig",
    "CriticNet",
    "EmEstimate",
    "average_deep_layer_distance",
    "estimate_em",
    "lipschitz_upper_bound",
    "train_critic",
]
