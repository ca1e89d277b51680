"""Layers, optimizer, checkpoints and the experiment network."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    BatchNormLayer,
    BatchNormState,
    Conv2dLayer,
    DenseLayer,
    batchnorm_forward,
    conv2d_forward,
    conv_batchnorm_forward,
    dense_forward,
    he_init,
)
from .optim import SgdConfig, SgdOptimizer, SgdState, lr_at_epoch, sgd_step
from .network import LocalNetwork, Network

__all__ = [
    "BatchNormLayer",
    "BatchNormState",
    "Conv2dLayer",
    "DenseLayer",
    "LocalNetwork",
    "Network",
    "SgdConfig",
    "SgdOptimizer",
    "SgdState",
    "batchnorm_forward",
    "conv2d_forward",
    "conv_batchnorm_forward",
    "dense_forward",
    "he_init",
    "load_checkpoint",
    "lr_at_epoch",
    "save_checkpoint",
    "sgd_step",
]
