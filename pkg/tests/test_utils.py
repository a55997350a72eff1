"""Tests for utility functions."""

import io
import math
import os
import tempfile
from unittest.mock import patch

import numpy as np
from django.test import SimpleTestCase

from spatiotemporal_pauli_noise.exceptions import DimensionError
from spatiotemporal_pauli_noise.rng import draw_categorical, stream
from spatiotemporal_pauli_noise.utils import (
    PAULIS,
    conjugate_monomial,
    dumps_json,
    format_cell,
    pauli_basis,
    pauli_digits,
    pauli_expectations,
    pauli_index,
    pauli_label,
    pauli_matrix,
    pauli_monomial,
    qubit_count,
    render_csv,
    write_output,
)


class PauliLabelTests(SimpleTestCase):
    """Tests for Pauli label conversions."""

    def test_labels(self):
        """Test digits, labels and indices agree."""
        self.assertEqual(pauli_digits(6, 2), (1, 2))
        self.assertEqual(pauli_label(6, 2), "XY")
        self.assertEqual(pauli_index("XY"), 6)
        self.assertEqual(pauli_index("z"), 3)
        for index in range(16):
            self.assertEqual(pauli_index(pauli_label(index, 2)), index)

    def test_invalid(self):
        """Test out-of-range indices and unknown letters raise."""
        with self.assertRaises(DimensionError):
            pauli_digits(16, 2)
        with self.assertRaises(DimensionError):
            pauli_index("XA")

    def test_qubit_count(self):
        """Test dimensions must be powers of two."""
        self.assertEqual(qubit_count(8), 3)
        with self.assertRaises(DimensionError):
            qubit_count(6)


class PauliMatrixTests(SimpleTestCase):
    """Tests for dense Pauli strings."""

    def test_matrix_and_basis(self):
        """Test kron ordering and orthogonality of the basis."""
        np.testing.assert_array_equal(pauli_matrix(pauli_index("XZ"), 2), np.kron(PAULIS[1], PAULIS[3]))
        basis = pauli_basis(2)
        gram = np.einsum("aij,bij->ab", basis.conj(), basis)
        np.testing.assert_allclose(gram, 4 * np.eye(16))
        self.assertFalse(basis.flags.writeable)

    def test_monomials(self):
        """Test conjugation by monomials matches dense products."""
        matrix = stream(0, "test").normal(size=(4, 4)) + 1j
        for index in range(16):
            p = pauli_matrix(index, 2)
            perm, phase = pauli_monomial(pauli_digits(index, 2))
            np.testing.assert_allclose(conjugate_monomial(matrix, perm, phase), p @ matrix @ p.conj().T)

    def test_expectations(self):
        """Test traces against every Pauli string."""
        op = stream(1, "test").normal(size=(4, 4))
        expected = [np.trace(pauli_matrix(i, 2) @ op) for i in range(16)]
        np.testing.assert_allclose(pauli_expectations(op, 2), expected, atol=1e-12)
        with self.assertRaises(DimensionError):
            pauli_expectations(np.eye(3), 1)


class OutputTests(SimpleTestCase):
    """Tests for CSV and JSON rendering."""

    def test_format_cell(self):
        """Test special values in CSV cells."""
        self.assertEqual(format_cell(None), "not-fittable")
        self.assertEqual(format_cell(np.bool_(True)), "true")
        self.assertEqual(format_cell(math.inf), "inf")
        self.assertEqual(format_cell(float("nan")), "nan")
        self.assertEqual(format_cell(np.float64(0.25)), "0.25")
        self.assertEqual(format_cell(3), "3")

    def test_render_csv(self):
        """Test the config line and rows."""
        text = render_csv(["a", "b"], [[1, 0.5]], {"seed": np.int64(3)})
        self.assertEqual(text, '# config: {"seed": 3}\na,b\n1,0.5\n')
        self.assertEqual(render_csv(["a"], []), "a\n")

    def test_dumps_json(self):
        """Test numpy values, complex numbers and infinities."""
        text = dumps_json({"x": np.arange(2), "z": 1 + 2j, "inf": math.inf})
        self.assertIn('"inf": "inf"', text)
        self.assertIn('"z": [\n    1.0,\n    2.0\n  ]', text)

    def test_write_output(self):
        """Test writing to a file and to stdout."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "out.csv")
            write_output("a\n", path)
            with open(path, encoding="utf-8") as f:
                self.assertEqual(f.read(), "a\n")
        with patch("sys.stdout", new_callable=io.StringIO) as stdout:
            write_output("b\n")
        self.assertEqual(stdout.getvalue(), "b\n")


class StreamTests(SimpleTestCase):
    """Tests for counter-based random streams."""

    def test_reproducible_and_independent(self):
        """Test equal keys repeat and different keys differ."""
        first = stream(1, "storm", 0).random(5)
        np.testing.assert_array_equal(first, stream(1, "storm", 0).random(5))
        self.assertFalse(np.array_equal(first, stream(1, "storm", 1).random(5)))
        self.assertFalse(np.array_equal(first, stream(2, "storm", 0).random(5)))

    def test_invalid_keys(self):
        """Test a missing seed and negative key parts raise."""
        with self.assertRaises(ValueError):
            stream(None)
        with self.assertRaises(ValueError):
            stream(0, -1)

    def test_draw_categorical(self):
        """Test inverse-CDF draws including unnormalised rows."""
        cumulative = np.array([[0.2, 0.5, 1.0], [0.0, 0.0, 2.0]])
        draws = draw_categorical(cumulative, np.array([0.3, 0.1]))
        np.testing.assert_array_equal(draws, [1, 2])
        self.assertEqual(draw_categorical(np.array([0.5, 1.0]), np.array(0.9)), 1)
