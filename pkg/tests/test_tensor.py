"""Tests for dense tensor algebra."""

import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy.stats import unitary_group

from spatiotemporal_pauli_noise.exceptions import DimensionError, NumericalValidationError
from spatiotemporal_pauli_noise.tensor import (
    devectorize,
    expm_hermitian,
    hermitian_basis,
    inverse_rft,
    is_hermitian,
    is_unitary,
    kron_all,
    partial_trace,
    real_spectrum,
    rft_transform,
    superoperator,
    vectorize,
)
from spatiotemporal_pauli_noise.utils import PAULIS


def random_operator(d, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


class VectorizeTests(SimpleTestCase):
    """Tests for column-stacking vectorisation and superoperators."""

    def test_column_stacking(self):
        """Test that columns are stacked."""
        a = np.array([[1, 2], [3, 4]])
        np.testing.assert_array_equal(vectorize(a), [1, 3, 2, 4])
        np.testing.assert_array_equal(devectorize(vectorize(a)), a)

    def test_superoperator_action(self):
        """Test vec(U X U^dag) equals the superoperator applied to vec(X)."""
        u = unitary_group.rvs(4, random_state=1)
        x = random_operator(4, 2)
        np.testing.assert_allclose(superoperator(u) @ vectorize(x), vectorize(u @ x @ u.conj().T), atol=1e-12)

    def test_rejects_non_square(self):
        """Test shape validation."""
        with self.assertRaises(DimensionError):
            vectorize(np.zeros((2, 3)))
        with self.assertRaises(DimensionError):
            devectorize(np.zeros(5))


class RftTests(SimpleTestCase):
    """Tests for reorder-fuse-transpose."""

    def test_inverse(self):
        """Test that the inverse recovers the superoperator."""
        superop = superoperator(unitary_group.rvs(4, random_state=3))
        tensor = rft_transform(superop, [2, 2])
        self.assertEqual(tensor.shape, (4, 4, 4, 4))
        np.testing.assert_allclose(inverse_rft(tensor, [2, 2]), superop)

    def test_product_channel_factorises(self):
        """Test that a product of local unitaries gives a product tensor."""
        u1 = unitary_group.rvs(2, random_state=4)
        u2 = unitary_group.rvs(2, random_state=5)
        tensor = rft_transform(superoperator(np.kron(u1, u2)), [2, 2])
        expected = np.einsum("ac,bd->abcd", superoperator(u1).T, superoperator(u2).T)
        np.testing.assert_allclose(tensor, expected, atol=1e-12)

    def test_shape_mismatch(self):
        """Test that mismatched dimensions raise."""
        with self.assertRaises(DimensionError):
            rft_transform(np.eye(16), [2, 4])


class PartialTraceTests(SimpleTestCase):
    """Tests for partial_trace."""

    def test_product_state(self):
        """Test tracing one factor of a product operator."""
        a, b = random_operator(2, 6), random_operator(3, 7)
        op = np.kron(a, b)
        np.testing.assert_allclose(partial_trace(op, [2, 3], {1}), a * np.trace(b))
        np.testing.assert_allclose(partial_trace(op, [2, 3], {0}), b * np.trace(a))
        np.testing.assert_allclose(partial_trace(op, [2, 3], {0, 1}), [[np.trace(op)]])

    def test_invalid_subsystem(self):
        """Test validation of traced indices and dimensions."""
        with self.assertRaises(DimensionError):
            partial_trace(np.eye(4), [2, 2], {2})
        with self.assertRaises(DimensionError):
            partial_trace(np.eye(4), [2, 3], {0})


class PredicateTests(SimpleTestCase):
    """Tests for Hermitian and unitary checks."""

    def test_hermitian(self):
        """Test Hermiticity check."""
        self.assertTrue(is_hermitian(PAULIS[2]))
        self.assertFalse(is_hermitian(np.array([[0, 1], [0, 0]])))

    def test_unitary(self):
        """Test unitarity check and its tolerance setting."""
        self.assertTrue(is_unitary(unitary_group.rvs(3, random_state=8)))
        almost = np.diag([1.0, 1.0 + 1e-6])
        self.assertFalse(is_unitary(almost))
        with override_settings(SPPNOISE_UNITARY_TOL=1e-3):
            self.assertTrue(is_unitary(almost))

    def test_expm_hermitian(self):
        """Test exp(-i theta/2 X) against its closed form."""
        theta = 0.7
        expected = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * PAULIS[1]
        np.testing.assert_allclose(expm_hermitian(theta / 2 * PAULIS[1]), expected, atol=1e-12)
        with self.assertRaises(NumericalValidationError):
            expm_hermitian(np.array([[0, 1], [0, 0]]))

    def test_kron_all(self):
        """Test the ordered Kronecker product."""
        np.testing.assert_allclose(kron_all(PAULIS[1], PAULIS[3]), np.kron(PAULIS[1], PAULIS[3]))


class SpectrumTests(SimpleTestCase):
    """Tests for real_spectrum and hermitian_basis."""

    def test_stochastic_matrix(self):
        """Test leading eigenpair of a stochastic matrix."""
        m = np.array([[0.9, 0.1], [0.3, 0.7]])
        spectrum = real_spectrum(m)
        np.testing.assert_allclose(spectrum.eigenvalues, [1.0, 0.6], atol=1e-12)
        self.assertAlmostEqual(float(spectrum.left @ spectrum.right), 1.0)
        np.testing.assert_allclose(spectrum.right / spectrum.right[0], [1.0, 1.0])
        np.testing.assert_allclose(spectrum.left / spectrum.left.sum(), [0.75, 0.25])
        self.assertTrue(np.isrealobj(spectrum.left))

    def test_descending_magnitude(self):
        """Test sorting by magnitude."""
        spectrum = real_spectrum(np.diag([0.1, -0.9, 0.5]))
        np.testing.assert_allclose(spectrum.eigenvalues, [-0.9, 0.5, 0.1])

    @override_settings(SPPNOISE_SPECTRUM_DIM_CAP=2)
    def test_cap(self):
        """Test the dimension cap."""
        with self.assertRaises(DimensionError):
            real_spectrum(np.eye(3))

    def test_hermitian_basis(self):
        """Test that the basis is unitary and made of Hermitian matrices."""
        basis = hermitian_basis(3)
        np.testing.assert_allclose(basis.conj().T @ basis, np.eye(9), atol=1e-12)
        for column in basis.T:
            self.assertTrue(is_hermitian(devectorize(column)))
