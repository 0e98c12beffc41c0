"""
Tests for the finite-difference gradient oracle.
"""
import unittest

import numpy as np

from depthformer.core import ops
from depthformer.core.gradcheck import finite_diff_check, relative_error
from depthformer.core.tensor import Function, Tensor, parameter


class _BrokenSquare(Function):
    """x * x with the sign of its gradient flipped."""

    def forward(self, a):
        self.a = a
        return a * a

    def backward(self, grad):
        return (-2.0 * self.a * grad,)


class TestFiniteDiffCheck(unittest.TestCase):
    """Test cases for finite_diff_check."""

    def test_linear_map(self):
        """Test f = sum, whose gradient is all ones."""
        x = parameter(np.random.default_rng(0).normal(size=(3, 4)), name="x")
        report = finite_diff_check(lambda: x.sum(), x)
        self.assertTrue(report.passed)
        self.assertLess(report.max_error, 1e-9)
        self.assertEqual(report.checked["x"], 12)

    def test_softmax_cross_entropy(self):
        """Test the oracle on softmax cross-entropy over three logits."""
        logits = parameter([1.5, -0.5, 0.25], name="logits")
        report = finite_diff_check(lambda: -ops.softmax(logits).log()[0], logits)
        self.assertTrue(report.passed)
        self.assertLess(report.max_error, 1e-6)

    def test_sign_bug_is_detected(self):
        """Test the negative control with a wrong backward pass."""
        x = parameter([0.5, -1.0, 2.0], name="x")
        report = finite_diff_check(lambda: _BrokenSquare.apply(x).sum(), x)
        self.assertFalse(report.passed)
        self.assertGreater(report.errors["x"], 1.0)

    def test_parameters_restored(self):
        """Test that perturbed entries are put back."""
        values = np.array([0.1, 0.2, 0.3])
        x = parameter(values, name="x")
        finite_diff_check(lambda: (x * x).sum(), x)
        np.testing.assert_array_equal(x.data, values)

    def test_named_mapping_and_subsampling(self):
        """Test named parameters and a cap on compared entries."""
        rng = np.random.default_rng(1)
        a = parameter(rng.normal(size=20))
        b = parameter(rng.normal(size=2))
        report = finite_diff_check(lambda: (a * a).sum() + (b * a[:2]).sum(), {"a": a, "b": b}, max_entries=5)
        self.assertTrue(report.passed)
        self.assertEqual(report.checked, {"a": 5, "b": 2})

    def test_non_finite_evaluation(self):
        """Test that a non-finite perturbed value fails the check."""
        x = parameter([5e-7], name="x")
        report = finite_diff_check(lambda: x.log().sum(), x, h=1e-6)
        self.assertFalse(report.passed)
        self.assertIsNotNone(report.failure)

    def test_rejects_non_scalar(self):
        """Test that vector-valued functions are rejected."""
        x = parameter([1.0, 2.0])
        with self.assertRaises(ValueError):
            finite_diff_check(lambda: x * 2.0, x)

    def test_rejects_non_positive_step(self):
        """Test that h must be positive."""
        x = parameter([1.0])
        with self.assertRaises(ValueError):
            finite_diff_check(lambda: x.sum(), x, h=0.0)


class TestRelativeError(unittest.TestCase):
    """Test cases for relative_error."""

    def test_floor_applies_to_tiny_gradients(self):
        """Test that near-zero gradients are compared absolutely."""
        self.assertAlmostEqual(relative_error(np.array([0.0]), np.array([1e-10]), 1e-8), 1e-2)

    def test_scaled_by_larger_magnitude(self):
        """Test scaling by the larger gradient."""
        self.assertAlmostEqual(relative_error(np.array([2.0, 1.0]), np.array([2.0, 0.0]), 1e-8), 0.5)

    def test_empty(self):
        """Test an empty comparison."""
        self.assertEqual(relative_error(np.zeros(0), np.zeros(0), 1e-8), 0.0)


if __name__ == '__main__':
    unittest.main()
