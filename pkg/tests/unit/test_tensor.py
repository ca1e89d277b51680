"""Tests for the tape-based tensor core."""

import threading

import numpy as np
import pytest

from unitlab.autodiff import (
    Tape,
    Tensor,
    avg_pool2d,
    backward,
    conv2d,
    current_tape,
    elementwise,
    expand,
    l2_norm,
    no_grad,
    reduce,
    softmax_cross_entropy,
)
from unitlab.autodiff.tensor import conv_output_extent
from unitlab.core.error_handling import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    NumericError,
)


class TestTape:
    """Recording and the reverse pass."""

    def test_product_gradient(self):
        """d(sum(x*y))/dx = y."""
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        y = Tensor([4.0, 5.0, 6.0], requires_grad=True)
        with Tape() as tape:
            out = (x * y).sum()
            grads = backward(tape, out)
        np.testing.assert_array_equal(grads.wrt(x), [4.0, 5.0, 6.0])
        np.testing.assert_array_equal(grads.wrt(y), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(x.grad, [4.0, 5.0, 6.0])

    def test_reused_tensor_accumulates(self):
        """A tensor used twice receives both contributions."""
        x = Tensor(3.0, requires_grad=True)
        with Tape() as tape:
            out = x * x + x
            grads = backward(tape, out)
        assert grads.wrt(x) == pytest.approx(7.0)

    def test_unrelated_tensor_gets_zeros(self):
        """Tensors off the graph get a zero gradient."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        other = Tensor([5.0, 5.0], requires_grad=True)
        with Tape() as tape:
            out = x.sum()
            grads = backward(tape, out)
        np.testing.assert_array_equal(grads.wrt(other), [0.0, 0.0])

    def test_non_scalar_root_rejected(self):
        """backward needs a single-value root."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            out = x * 2.0
            with pytest.raises(ContractError):
                backward(tape, out)

    def test_no_grad_suspends_recording(self):
        """Nothing is recorded inside no_grad."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            with no_grad():
                out = x * 2.0
            assert not out.requires_grad
            assert len(tape) == 0

    def test_outside_tape_nothing_recorded(self):
        """Operations without an open tape stay unrecorded."""
        x = Tensor([1.0], requires_grad=True)
        out = x + 1.0
        assert out.node_id is None
        assert current_tape() is None

    def test_tapes_are_thread_local(self):
        """A tape opened on one thread is invisible to another."""
        seen = []
        with Tape():
            worker = threading.Thread(target=lambda: seen.append(current_tape()))
            worker.start()
            worker.join()
        assert seen == [None]


class TestElementwise:
    """Elementwise operations and their contracts."""

    def test_shape_mismatch_rejected(self):
        """Unequal non-scalar shapes raise DimensionError."""
        with pytest.raises(DimensionError):
            Tensor(np.ones(3)) + Tensor(np.ones(2))

    def test_scalar_operand_gradient_summed(self):
        """A 0-d operand collects the summed gradient."""
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        s = Tensor(2.0, requires_grad=True)
        with Tape() as tape:
            out = (x * s).sum()
            grads = backward(tape, out)
        assert grads.wrt(s) == pytest.approx(6.0)
        np.testing.assert_array_equal(grads.wrt(x), np.full((2, 3), 2.0))

    def test_division_by_zero(self):
        """Exact zero denominators are rejected."""
        with pytest.raises(NumericError):
            Tensor([1.0, 2.0]) / Tensor([1.0, 0.0])

    def test_sqrt_of_negative(self):
        """sqrt of a negative value raises NumericError."""
        with pytest.raises(NumericError):
            Tensor([-1.0]).sqrt()

    def test_relu_gradient_at_zero_is_zero(self):
        """relu subgradient at 0 is 0."""
        x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
        with Tape() as tape:
            out = x.relu().sum()
            grads = backward(tape, out)
        np.testing.assert_array_equal(grads.wrt(x), [0.0, 0.0, 1.0])

    def test_dispatch_by_name(self):
        """elementwise dispatches known names only."""
        out = elementwise("square", Tensor([3.0]))
        assert out.data[0] == 9.0
        with pytest.raises(ContractError):
            elementwise("cube", Tensor([3.0]))


class TestReductions:
    """Sums, means and shape operations."""

    def test_empty_axes_return_input(self):
        """Reducing over no axes returns the input."""
        x = Tensor(np.ones((2, 2)))
        assert reduce("sum", x, ()) is x

    def test_empty_extent_rejected(self):
        """Reducing an empty extent raises."""
        with pytest.raises(DegenerateInputError):
            reduce("mean", Tensor(np.ones((0, 3))), 0)

    def test_mean_gradient(self):
        """Mean spreads 1/count to every element."""
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape() as tape:
            out = x.mean()
            grads = backward(tape, out)
        np.testing.assert_allclose(grads.wrt(x), np.full((2, 3), 1.0 / 6.0))

    def test_expand_sums_gradient_back(self):
        """expand sums the gradient over the copies."""
        b = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        with Tape() as tape:
            out = expand(b, (3, 2)).sum()
            grads = backward(tape, out)
        np.testing.assert_array_equal(grads.wrt(b), [[3.0, 3.0]])

    def test_expand_incompatible_shape(self):
        """expand only accepts broadcast-compatible targets."""
        with pytest.raises(DimensionError):
            expand(Tensor(np.ones(3)), (2, 2))

    def test_l2_norm_gradient_at_zero(self):
        """The norm gradient is 0 at the origin."""
        x = Tensor(np.zeros((1, 3)), requires_grad=True)
        with Tape() as tape:
            out = l2_norm(x).sum()
            grads = backward(tape, out)
        np.testing.assert_array_equal(grads.wrt(x), np.zeros((1, 3)))

    def test_matmul_shape_check(self):
        """Inner dimensions must agree."""
        with pytest.raises(DimensionError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


class TestStructured:
    """Cross-entropy and convolution primitives."""

    def test_cross_entropy_uniform_logits(self):
        """Uniform logits give log(classes)."""
        logits = Tensor(np.zeros((4, 10)))
        loss = softmax_cross_entropy(logits, np.arange(4))
        assert loss.item() == pytest.approx(np.log(10.0))

    def test_cross_entropy_label_shape(self):
        """One label per row."""
        with pytest.raises(DimensionError):
            softmax_cross_entropy(Tensor(np.zeros((4, 10))), np.arange(3))

    def test_conv_identity_kernel(self, rng):
        """A 1x1 unit kernel returns the input."""
        x = Tensor(rng.normal(size=(2, 1, 5, 5)))
        kernel = Tensor(np.ones((1, 1, 1, 1)))
        np.testing.assert_allclose(conv2d(x, kernel).data, x.data)

    def test_conv_output_geometry(self):
        """Output extent follows floor((in + 2 pad - k) / stride) + 1."""
        assert conv_output_extent(28, 3, 1, 1) == 28
        assert conv_output_extent(28, 3, 2, 0) == 13
        with pytest.raises(DimensionError):
            conv_output_extent(2, 5, 1, 0)

    def test_conv_channel_mismatch(self):
        """Kernel input channels must match the input."""
        with pytest.raises(DimensionError):
            conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))

    def test_avg_pool_values(self):
        """Each output is the mean of its window and odd edges are dropped."""
        x = Tensor(np.arange(25.0).reshape(1, 1, 5, 5))
        out = avg_pool2d(x, 2)
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_allclose(out.data[0, 0], [[3.0, 5.0], [13.0, 15.0]])

    def test_avg_pool_gradient_spreads_evenly(self):
        """Every pooled input gets a quarter of its window's gradient."""
        x = Tensor(np.ones((1, 2, 3, 3)), requires_grad=True)
        with Tape() as tape:
            grads = backward(tape, avg_pool2d(x, 2).sum())
        expected = np.zeros((3, 3))
        expected[:2, :2] = 0.25
        np.testing.assert_array_equal(grads.wrt(x)[0, 1], expected)

    def test_avg_pool_too_small(self):
        """A window larger than the image is rejected."""
        with pytest.raises(DimensionError):
            avg_pool2d(Tensor(np.ones((1, 1, 1, 3))), 2)


class TestScalars:
    """0-d results and Python scalar operands."""

    def test_full_reduction_is_zero_dimensional(self):
        """sum and mean over every axis give shape ()."""
        x = Tensor([1.0, 2.0])
        assert x.sum().shape == ()
        assert Tensor(np.ones((2, 3))).mean().shape == ()

    def test_python_scalar_on_matrix(self):
        """x + 1.0 and 1.0 - x work on 2-D tensors."""
        x = Tensor(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal((x + 1.0).data, x.data + 1.0)
        np.testing.assert_array_equal((1.0 - x).data, 1.0 - x.data)

    def test_backward_from_matrix_sum(self):
        """root = sum(x**2) on a matrix gives 2x."""
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
        with Tape() as tape:
            out = x.square().sum()
            grads = backward(tape, out)
        np.testing.assert_array_equal(grads.wrt(x), 2.0 * x.data)

    def test_scalar_offset_gradient(self):
        """Adding eps leaves the gradient of the tensor unchanged."""
        x = Tensor(np.ones((3, 2)), requires_grad=True)
        with Tape() as tape:
            out = (x + 1e-5).mean()
            grads = backward(tape, out)
        np.testing.assert_allclose(grads.wrt(x), np.full((3, 2), 1.0 / 6.0))


class TestDeterminism:
    """Linearity of gradients and reproducible evaluation."""

    @staticmethod
    def _grad(build, x_data):
        x = Tensor(x_data, requires_grad=True)
        with Tape() as tape:
            grads = backward(tape, build(x))
        return grads.wrt(x)

    def test_gradient_of_sum_is_sum_of_gradients(self, rng):
        """backward(f + g) equals backward(f) + backward(g)."""
        x_data = rng.normal(size=(4, 3))

        def first(x):
            return (x * x).sum()

        def second(x):
            return l2_norm(x).mean()

        combined = self._grad(lambda x: first(x) + second(x), x_data)
        separate = self._grad(first, x_data) + self._grad(second, x_data)
        np.testing.assert_allclose(combined, separate, rtol=1e-12, atol=1e-15)

    def test_forward_and_backward_bit_reproducible(self, rng):
        """Repeated evaluation gives identical bits."""
        x_data = rng.normal(size=(5, 4))

        def loss(x):
            return softmax_cross_entropy(x * 3.0, np.array([0, 1, 2, 3, 0]))

        values = [loss(Tensor(x_data)).item() for _ in range(2)]
        assert values[0] == values[1]
        np.testing.assert_array_equal(self._grad(loss, x_data), self._grad(loss, x_data))
