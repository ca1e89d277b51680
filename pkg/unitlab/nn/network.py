"""Classifier built from optional conv -> norm -> ReLU -> pool blocks and dense -> norm -> ReLU blocks."""

import copy
import hashlib
import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, avg_pool2d, no_grad, relu
from ..core.constants import Defaults, LayerMode, NormKind
from ..core.error_handling import ContractError, DimensionError
from .layers import BatchNormLayer, Conv2dLayer, DenseLayer, NormLayer

logger = logging.getLogger(__name__)


@dataclass
class Block:
    dense: DenseLayer
    norm: NormLayer | None
    kind: NormKind


@dataclass
class ConvBlock:
    """Same-padded convolution, normalization, ReLU, then average pooling."""

    conv: Conv2dLayer
    norm: NormLayer | None
    kind: NormKind
    pool_size: int = Defaults.POOL_SIZE


class LocalNetwork:
    """Frozen inference-mode copy of the first ``layer + 1`` dense blocks.

    Calling it maps an (n, ...) input array to the block's normalized output.
    """

    def __init__(self, network: "Network", layer: int):
        self.layer = network.resolve_layer(layer)
        self._network = copy.deepcopy(network)
        self._network.set_mode(LayerMode.INFERENCE)

    @property
    def output_dim(self) -> int:
        return self._network.blocks[self.layer].dense.out_features

    def __call__(self, x: np.ndarray) -> np.ndarray:
        with no_grad():
            return self._network.layer_output(Tensor(x), self.layer).data


def _dense_norm(
    kind: NormKind, features: int, bn_eps: float, bn_momentum: float, unit_eps: float
) -> NormLayer | None:
    from ..unitization.layers import UnitizationLayer

    if kind is NormKind.BN:
        return BatchNormLayer.create(features, bn_eps, bn_momentum)
    if kind is NormKind.UNITIZATION:
        return UnitizationLayer.create(features, bn_eps, bn_momentum, unit_eps)
    return None


def _conv_norm(
    kind: NormKind,
    channels: int,
    pixels: int,
    bn_eps: float,
    bn_momentum: float,
    unit_eps: float,
) -> NormLayer | None:
    from ..unitization.layers import ConvUnitizationLayer

    if kind is NormKind.BN:
        return BatchNormLayer.create(channels, bn_eps, bn_momentum)
    if kind is NormKind.UNITIZATION:
        return ConvUnitizationLayer.create(
            channels, bn_eps, bn_momentum, unit_eps, n_hyper=float(pixels)
        )
    return None


class Network:
    def __init__(
        self,
        blocks: Sequence[Block],
        classifier: DenseLayer,
        conv_blocks: Sequence[ConvBlock] = (),
        image_shape: tuple[int, int, int] | None = None,
    ):
        if conv_blocks and image_shape is None:
            raise ContractError("conv blocks need the (C, H, W) image shape")
        self.blocks = list(blocks)
        self.classifier = classifier
        self.conv_blocks = list(conv_blocks)
        self.image_shape = image_shape

    @classmethod
    def build(
        cls,
        input_dim: int,
        hidden_widths: Sequence[int],
        norms: Sequence[NormKind],
        num_classes: int,
        seed: int,
        bn_eps: float = Defaults.BN_EPS,
        bn_momentum: float = Defaults.BN_MOMENTUM,
        unit_eps: float = Defaults.UNIT_EPS,
        image_shape: Sequence[int] | None = None,
        conv_channels: Sequence[int] = (),
        conv_norm: NormKind = NormKind.UNITIZATION,
    ) -> "Network":
        """Weights come from ``seed`` before any normalization is built.

        Networks that differ only in ``norms`` or ``conv_norm`` therefore share
        every conv and dense weight. With ``conv_channels`` the input is read as
        ``image_shape`` = (C, H, W) images; each conv block keeps H and W and
        its pooling halves them.
        """
        if len(norms) != len(hidden_widths):
            raise ContractError(
                f"{len(norms)} norm kinds for {len(hidden_widths)} hidden layers"
            )
        rng = np.random.default_rng(seed)

        shape: tuple[int, int, int] | None = None
        convs: list[tuple[Conv2dLayer, int]] = []
        dense_in = input_dim
        if conv_channels:
            if image_shape is None or len(image_shape) != 3:
                raise ContractError("conv blocks need the (C, H, W) image shape")
            shape = (int(image_shape[0]), int(image_shape[1]), int(image_shape[2]))
            if int(np.prod(shape)) != input_dim:
                raise DimensionError(
                    f"image shape {shape} does not match {input_dim} input features"
                )
            channels, height, width = shape
            for out_channels in conv_channels:
                conv = Conv2dLayer.create(
                    channels,
                    out_channels,
                    Defaults.CONV_KERNEL,
                    rng,
                    padding=Defaults.CONV_KERNEL // 2,
                )
                convs.append((conv, height * width))
                channels = out_channels
                height //= Defaults.POOL_SIZE
                width //= Defaults.POOL_SIZE
                if height < 1 or width < 1:
                    raise DimensionError(
                        f"{len(conv_channels)} pooled conv blocks do not fit image {shape}"
                    )
            dense_in = channels * height * width

        widths = [dense_in, *hidden_widths]
        denses = [
            DenseLayer.create(fan_in, fan_out, rng)
            for fan_in, fan_out in zip(widths, widths[1:])
        ]
        classifier = DenseLayer.create(widths[-1], num_classes, rng)

        conv_blocks = [
            ConvBlock(
                conv,
                _conv_norm(
                    conv_norm, conv.kernels.shape[0], pixels, bn_eps, bn_momentum, unit_eps
                ),
                conv_norm,
            )
            for conv, pixels in convs
        ]
        blocks = [
            Block(dense, _dense_norm(kind, dense.out_features, bn_eps, bn_momentum, unit_eps), kind)
            for dense, kind in zip(denses, norms, strict=True)
        ]
        if conv_blocks:
            logger.debug(f"{len(conv_blocks)} conv blocks feed {dense_in} dense features")
        return cls(blocks, classifier, conv_blocks, shape)

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def input_dim(self) -> int:
        if self.image_shape is not None:
            return int(np.prod(self.image_shape))
        return self.blocks[0].dense.in_features

    def resolve_layer(self, layer: int) -> int:
        if not -self.depth <= layer < self.depth:
            raise DimensionError(f"layer {layer} out of range for {self.depth} blocks")
        return layer % self.depth

    def _conv_features(self, x: Tensor) -> Tensor:
        assert self.image_shape is not None
        if x.ndim == 2 and x.shape[1] == self.input_dim:
            x = x.reshape(x.shape[0], *self.image_shape)
        if x.shape[1:] != self.image_shape:
            raise DimensionError(
                f"network expects images of shape {self.image_shape}, got {x.shape[1:]}"
            )
        h = x
        for block in self.conv_blocks:
            out = block.conv(h)
            if block.norm is not None:
                out = block.norm(out)
            h = avg_pool2d(relu(out), block.pool_size)
        return h

    def _flatten(self, x: Tensor) -> Tensor:
        if self.conv_blocks:
            x = self._conv_features(x)
        if x.ndim != 2:
            x = x.reshape(x.shape[0], -1)
        expected = self.blocks[0].dense.in_features
        if x.shape[1] != expected:
            raise DimensionError(
                f"network expects {self.input_dim} input features, got {x.shape[1]}"
            )
        return x

    def _block_forward(self, block: Block, h: Tensor) -> Tensor:
        out = block.dense(h)
        return block.norm(out) if block.norm is not None else out

    def forward(self, x: Tensor) -> Tensor:
        """Class logits for a batch."""
        h = self._flatten(x)
        for block in self.blocks:
            h = relu(self._block_forward(block, h))
        return self.classifier(h)

    __call__ = forward

    def layer_output(self, x: Tensor, layer: int) -> Tensor:
        """Normalized (post-affine) output of dense block ``layer``, before its ReLU."""
        target = self.resolve_layer(layer)
        h = self._flatten(x)
        for index, block in enumerate(self.blocks):
            out = self._block_forward(block, h)
            if index == target:
                return out
            h = relu(out)
        raise AssertionError("unreachable")

    def local(self, layer: int) -> LocalNetwork:
        return LocalNetwork(self, layer)

    def _norms(self) -> Iterator[tuple[str, NormLayer]]:
        for index, conv_block in enumerate(self.conv_blocks):
            if conv_block.norm is not None:
                yield f"conv{index}.norm.", conv_block.norm
        for index, block in enumerate(self.blocks):
            if block.norm is not None:
                yield f"block{index}.norm.", block.norm

    def set_mode(self, mode: LayerMode) -> None:
        for _, norm in self._norms():
            norm.set_mode(mode)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        layers = [(f"conv{i}", b.conv, b.norm) for i, b in enumerate(self.conv_blocks)]
        layers += [(f"block{i}", b.dense, b.norm) for i, b in enumerate(self.blocks)]
        for prefix, weights, norm in layers:
            kind = "conv" if isinstance(weights, Conv2dLayer) else "dense"
            for name, tensor in weights.parameters().items():
                named.append((f"{prefix}.{kind}.{name}", tensor))
            if norm is not None:
                for name, tensor in norm.parameters().items():
                    named.append((f"{prefix}.norm.{name}", tensor))
        for name, tensor in self.classifier.parameters().items():
            named.append((f"classifier.{name}", tensor))
        return named

    def parameters(self) -> list[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        """Parameters and running statistics by dotted name."""
        state = {name: tensor.data.copy() for name, tensor in self.named_parameters()}
        for prefix, norm in self._norms():
            for name, value in norm.buffers().items():
                state[prefix + name] = value.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = sorted(set(expected) - set(state))
        unexpected = sorted(set(state) - set(expected))
        if missing or unexpected:
            raise ContractError(
                "checkpoint does not match network layout",
                {"missing": missing, "unexpected": unexpected},
            )
        for name, tensor in self.named_parameters():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise DimensionError(
                    f"'{name}' has shape {value.shape}, expected {tensor.shape}"
                )
            tensor.data[...] = value
        for prefix, norm in self._norms():
            norm.load_buffers({name: state[prefix + name] for name in norm.buffers()})

    def weight_checksum(self) -> str:
        """SHA-256 over the conv, dense and classifier weights only."""
        digest = hashlib.sha256()
        for name, tensor in self.named_parameters():
            if ".norm." not in name:
                digest.update(name.encode("utf-8"))
                digest.update(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
        return digest.hexdigest()

    def unitization_layers(self) -> list:
        conv = [b.norm for b in self.conv_blocks if b.kind is NormKind.UNITIZATION]
        dense = [b.norm for b in self.blocks if b.kind is NormKind.UNITIZATION]
        return conv + dense

    def clamp_alphas(self) -> None:
        for layer in self.unitization_layers():
            layer.clamp()

    def alpha_summary(self) -> tuple[float, float, float] | None:
        """(min, mean, max) over every unitization α, or None without such layers."""
        layers = self.unitization_layers()
        if not layers:
            return None
        alphas = np.concatenate([layer.params.alpha.data for layer in layers])
        return float(alphas.min()), float(alphas.mean()), float(alphas.max())
