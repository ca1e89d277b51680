"""Tests for the experiment network and its frozen local prefixes."""

import numpy as np
import pytest

from unitlab.autodiff import Tape, Tensor, backward, softmax_cross_entropy
from unitlab.core.constants import LayerMode, NormKind
from unitlab.core.error_handling import ContractError, DimensionError
from unitlab.nn.network import Network


def _build(norm: NormKind, seed: int = 0) -> Network:
    return Network.build(6, [5, 4], [norm, norm], num_classes=3, seed=seed)


class TestBuild:
    """Construction and paired initialization."""

    def test_shared_dense_weights_across_norms(self):
        """Every norm kind starts from the same dense weights."""
        checksums = {_build(kind).weight_checksum() for kind in NormKind}
        assert len(checksums) == 1

    def test_seed_changes_weights(self):
        """Different seeds give different weights."""
        assert _build(NormKind.BN, 0).weight_checksum() != _build(NormKind.BN, 1).weight_checksum()

    def test_alpha_starts_at_zero(self):
        """Unitization alphas start at zero."""
        assert _build(NormKind.UNITIZATION).alpha_summary() == (0.0, 0.0, 0.0)

    def test_no_alpha_without_unitization(self):
        """Networks without unitization report no alpha summary."""
        assert _build(NormKind.BN).alpha_summary() is None

    def test_norm_count_mismatch(self):
        """One norm kind is needed per hidden layer."""
        with pytest.raises(ContractError):
            Network.build(6, [5, 4], [NormKind.BN], num_classes=3, seed=0)

    def test_parameter_names(self):
        """Parameters are named by block and role."""
        names = [name for name, _ in _build(NormKind.UNITIZATION).named_parameters()]
        assert "block0.dense.W" in names
        assert "block1.norm.alpha" in names
        assert names[-1] == "classifier.b"


class TestForward:
    """Logits, layer outputs and local prefixes."""

    def test_logits_shape(self, rng):
        """Logits have one column per class."""
        network = _build(NormKind.BN)
        assert network(Tensor(rng.normal(size=(8, 6)))).shape == (8, 3)

    def test_image_input_is_flattened(self, rng):
        """Image batches are flattened for a dense network."""
        network = Network.build(4, [3], [NormKind.NONE], num_classes=2, seed=0)
        assert network(Tensor(rng.normal(size=(5, 1, 2, 2)))).shape == (5, 2)

    def test_wrong_input_width(self):
        """Inputs of the wrong width are rejected."""
        with pytest.raises(DimensionError):
            _build(NormKind.NONE)(Tensor(np.ones((2, 7))))

    def test_layer_out_of_range(self):
        """Local prefixes must name an existing block."""
        with pytest.raises(DimensionError):
            _build(NormKind.NONE).local(2)

    def test_local_network_is_frozen(self, rng):
        """A local prefix keeps its weights when the network trains on."""
        network = _build(NormKind.BN)
        x = rng.normal(size=(10, 6))
        network(Tensor(x))
        local = network.local(-1)
        before = local(x)
        for tensor in network.parameters():
            tensor.data += 1.0
        np.testing.assert_array_equal(local(x), before)
        assert local.output_dim == 4

    def test_local_uses_inference_statistics(self, rng):
        """Local prefixes use running statistics."""
        network = _build(NormKind.BN)
        network.set_mode(LayerMode.TRAIN)
        x = rng.normal(size=(10, 6))
        single = network.local(0)(x[:1])
        batch = network.local(0)(x)
        np.testing.assert_allclose(single[0], batch[0])


class TestState:
    """Saving, loading and clamping parameters."""

    def test_state_dict_round_trip(self, rng):
        """Loading a state dict reproduces the outputs."""
        source = _build(NormKind.UNITIZATION, seed=1)
        source(Tensor(rng.normal(size=(8, 6))))
        target = _build(NormKind.UNITIZATION, seed=2)
        target.load_state_dict(source.state_dict())
        x = rng.normal(size=(4, 6))
        source.set_mode(LayerMode.INFERENCE)
        target.set_mode(LayerMode.INFERENCE)
        np.testing.assert_array_equal(source(Tensor(x)).data, target(Tensor(x)).data)

    def test_layout_mismatch(self):
        """State dicts from another layout are rejected."""
        state = _build(NormKind.BN).state_dict()
        with pytest.raises(ContractError):
            _build(NormKind.UNITIZATION).load_state_dict(state)

    def test_clamp_alphas(self):
        """Alphas are clamped into [0, 1]."""
        network = _build(NormKind.UNITIZATION)
        layer = network.unitization_layers()[0]
        layer.params.alpha.data[...] = [-0.5, 0.3, 1.7, 0.9, 2.0]
        network.clamp_alphas()
        np.testing.assert_array_equal(layer.params.alpha.data, [0.0, 0.3, 1.0, 0.9, 1.0])


def _build_conv(norm: NormKind, seed: int = 0) -> Network:
    return Network.build(
        36,
        [5, 4],
        [norm, norm],
        num_classes=3,
        seed=seed,
        image_shape=(1, 6, 6),
        conv_channels=[3, 2],
        conv_norm=norm,
    )


class TestConvBlocks:
    """Conv, norm, ReLU and pooling blocks ahead of the dense layers."""

    def test_pooled_features_feed_dense_layers(self):
        """Two pooled blocks reduce 6x6 images to 2 channels of 1x1."""
        network = _build_conv(NormKind.BN)
        assert network.blocks[0].dense.in_features == 2
        assert network.input_dim == 36

    def test_images_and_flat_rows_agree(self, rng):
        """Flat rows are read as images of the configured shape."""
        network = _build_conv(NormKind.UNITIZATION)
        network.set_mode(LayerMode.INFERENCE)
        images = rng.uniform(size=(4, 1, 6, 6))
        np.testing.assert_array_equal(
            network(Tensor(images)).data, network(Tensor(images.reshape(4, 36))).data
        )

    def test_conv_unitization_layers(self):
        """Conv unitization layers get n_hyper from their block's pixel count."""
        network = _build_conv(NormKind.UNITIZATION)
        conv_layers = [block.norm for block in network.conv_blocks]
        assert [layer.config.n_hyper for layer in conv_layers] == [36.0, 9.0]
        assert len(network.unitization_layers()) == 4
        assert network.alpha_summary() == (0.0, 0.0, 0.0)

    def test_shared_weights_across_norms(self):
        """Conv and dense weights do not depend on the norm kind."""
        checksums = {_build_conv(kind).weight_checksum() for kind in NormKind}
        assert len(checksums) == 1

    def test_parameter_names(self):
        """Conv parameters and their norms are named by conv block."""
        names = [name for name, _ in _build_conv(NormKind.UNITIZATION).named_parameters()]
        assert names[:5] == [
            "conv0.conv.kernels",
            "conv0.conv.bias",
            "conv0.norm.alpha",
            "conv0.norm.gamma",
            "conv0.norm.beta",
        ]
        assert "block0.dense.W" in names

    def test_alpha_receives_gradient(self, rng):
        """Training gradients reach the conv unitization alphas."""
        network = _build_conv(NormKind.UNITIZATION)
        alpha = network.conv_blocks[0].norm.params.alpha
        alpha.data[...] = 0.5
        with Tape() as tape:
            logits = network(Tensor(rng.uniform(size=(8, 1, 6, 6))))
            grads = backward(tape, softmax_cross_entropy(logits, np.arange(8) % 3))
        assert np.any(grads.wrt(alpha) != 0.0)

    def test_state_dict_round_trip(self, rng):
        """Conv running statistics survive a state dict round trip."""
        source = _build_conv(NormKind.BN, seed=1)
        source(Tensor(rng.uniform(size=(8, 1, 6, 6))))
        state = source.state_dict()
        assert "conv1.norm.running_var" in state
        target = _build_conv(NormKind.BN, seed=2)
        target.load_state_dict(state)
        x = rng.uniform(size=(3, 36))
        source.set_mode(LayerMode.INFERENCE)
        target.set_mode(LayerMode.INFERENCE)
        np.testing.assert_array_equal(source(Tensor(x)).data, target(Tensor(x)).data)

    def test_local_prefix_on_images(self, rng):
        """Local prefixes map images to a dense block's output."""
        network = _build_conv(NormKind.UNITIZATION)
        assert network.local(-1)(rng.uniform(size=(5, 1, 6, 6))).shape == (5, 4)

    def test_image_shape_required(self):
        """Conv blocks cannot be built without an image shape."""
        with pytest.raises(ContractError):
            Network.build(36, [4], [NormKind.BN], 3, 0, conv_channels=[2])

    def test_image_shape_must_match_input(self):
        """The image shape must account for every input feature."""
        with pytest.raises(DimensionError):
            Network.build(
                30, [4], [NormKind.BN], 3, 0, image_shape=(1, 6, 6), conv_channels=[2]
            )

    def test_too_many_pooled_blocks(self):
        """Pooling may not shrink the image below one pixel."""
        with pytest.raises(DimensionError):
            Network.build(
                36, [4], [NormKind.BN], 3, 0, image_shape=(1, 6, 6), conv_channels=[2, 2, 2]
            )
