"""Unitization transforms and layers."""

from .layers import (
    ConvUnitizationConfig,
    ConvUnitizationLayer,
    UnitizationLayer,
    UnitizationParams,
    clamp_alpha,
    conv_unitization_forward,
    conv_unitize,
    unitization_forward,
)
from .transforms import general_unitize, partial_unitize, vanilla_unitize

__all__ = [
    "ConvUnitizationConfig",
    "ConvUnitizationLayer",
    "UnitizationLayer",
    "UnitizationParams",
    "clamp_alpha",
    "conv_unitization_forward",
    "conv_unitize",
    "general_unitize",
    "partial_unitize",
    "unitization_forward",
    "vanilla_unitize",
]
