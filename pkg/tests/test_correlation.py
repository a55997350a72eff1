"""Tests for transfer-operator analysis."""

import math
from itertools import product

import numpy as np
from django.test import SimpleTestCase

from spatiotemporal_pauli_noise.correlation import (
    TransferOperator,
    covariance,
    covariance_series,
    covariance_spectral,
    empirical_covariance,
    hmm_check,
    hmm_likelihood,
    hmm_sample,
    multipoint,
    observable,
    spectral_summary,
    stationary_marginals,
    stationary_mean,
    transfer_from_mps,
)
from spatiotemporal_pauli_noise.exceptions import DimensionError, NonErgodicError
from spatiotemporal_pauli_noise.rng import stream
from spatiotemporal_pauli_noise.spp import build_spp_mps, worked_hamiltonian
from spatiotemporal_pauli_noise.storm import (
    StormParams,
    analytic_covariance,
    error_profile,
    storm_hmm,
)


def storm(q1_total=0.3):
    return StormParams(0.1, 0.3, error_profile(0.0), error_profile(q1_total))


class ObservableTests(SimpleTestCase):
    """Tests for observable coercion."""

    def test_named_observables(self):
        """Test the error indicator and single-label indicators."""
        np.testing.assert_array_equal(observable("error"), [0, 1, 1, 1])
        np.testing.assert_array_equal(observable("Y"), [0, 0, 1, 0])

    def test_mapping_callable_and_vector(self):
        """Test dictionaries, callables and sequences."""
        np.testing.assert_array_equal(observable({"X": 2.0, 3: -1.0}), [0, 2, 0, -1])
        np.testing.assert_array_equal(observable(lambda x: x % 2), [0, 1, 0, 1])
        np.testing.assert_array_equal(observable([1, 2, 3, 4]), [1, 2, 3, 4])
        with self.assertRaises(DimensionError):
            observable([1, 2])


class TransferOperatorTests(SimpleTestCase):
    """Tests for TransferOperator construction."""

    def test_validation(self):
        """Test shape validation of label matrices."""
        with self.assertRaises(DimensionError):
            TransferOperator(())
        with self.assertRaises(DimensionError):
            TransferOperator((np.eye(2), np.eye(3)))
        with self.assertRaises(DimensionError):
            TransferOperator((np.ones((2, 3)),))

    def test_matrix_and_emission(self):
        """Test the summed matrix and emission operators."""
        t = storm_hmm(storm()).transfer
        self.assertEqual((t.dim, t.labels), (2, 4))
        np.testing.assert_allclose(t.matrix, [[0.9, 0.1], [0.3, 0.7]])
        np.testing.assert_allclose(t.emission([1, 1, 1, 1]).matrix, t.matrix)
        stacked = TransferOperator.from_stack(np.stack(t.kernels))
        np.testing.assert_allclose(stacked.matrix, t.matrix)

    def test_bulk_site_only(self):
        """Test that boundary sites of an MPS are rejected."""
        mps = build_spp_mps(worked_hamiltonian("heisenberg_field", 0.3, slots=3))
        with self.assertRaises(DimensionError):
            transfer_from_mps(mps, 0)
        with self.assertRaises(DimensionError):
            transfer_from_mps(mps, 3)
        t = transfer_from_mps(mps, 1)
        self.assertEqual(t.labels, 4)
        summary = spectral_summary(t)
        self.assertAlmostEqual(summary.leading.real, 1.0, places=10)
        marginals = stationary_marginals(t, summary)
        self.assertAlmostEqual(float(marginals.sum()), 1.0, places=10)
        self.assertGreaterEqual(marginals.min(), -1e-12)


class SpectralSummaryTests(SimpleTestCase):
    """Tests for spectral_summary."""

    def test_storm_spectrum(self):
        """Test gap and correlation length of the two-state chain."""
        summary = spectral_summary(storm_hmm(storm()).transfer)
        self.assertAlmostEqual(summary.lambda_star, 0.6, places=12)
        self.assertAlmostEqual(summary.gap, 0.4, places=12)
        self.assertAlmostEqual(summary.xi, -1 / math.log(0.6), places=10)
        self.assertTrue(summary.ergodic)
        self.assertAlmostEqual(float(summary.left @ summary.right), 1.0)
        document = summary.as_dict()
        self.assertEqual(document["lambda_star"], summary.lambda_star)
        self.assertEqual(len(document["eigenvalues"]), 2)

    def test_stationary_quantities(self):
        """Test stationary marginals and means."""
        params = storm()
        t = storm_hmm(params).transfer
        np.testing.assert_allclose(stationary_marginals(t), params.marginals, atol=1e-12)
        self.assertAlmostEqual(stationary_mean(t, "error"), 0.25 * 0.3, places=12)

    def test_memoryless(self):
        """Test a rank-one transfer matrix has zero correlation length."""
        kernels = tuple(np.full((2, 2), 0.5) * w for w in (0.7, 0.1, 0.1, 0.1))
        summary = spectral_summary(TransferOperator(kernels))
        self.assertAlmostEqual(summary.lambda_star, 0.0, places=12)

    def test_non_ergodic(self):
        """Test degenerate and periodic chains are flagged."""
        for matrix in (np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])):
            t = TransferOperator((matrix, np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))))
            summary = spectral_summary(t)
            self.assertFalse(summary.ergodic)
            self.assertIsNone(summary.xi)
            with self.assertRaises(NonErgodicError):
                covariance(t, "error", "error", 1)

    def test_non_normality(self):
        """Test the non-normality indicator."""
        self.assertEqual(spectral_summary(TransferOperator((np.eye(2) * 0.5,) * 2)).non_normality, 0.0)
        self.assertGreater(spectral_summary(storm_hmm(storm()).transfer).non_normality, 0.0)


class CovarianceTests(SimpleTestCase):
    """Tests for covariance evaluators."""

    def test_matches_closed_form(self):
        """Test matrix-power covariance against the storm closed form."""
        params = storm()
        t = storm_hmm(params).transfer
        for tau in range(1, 11):
            for f, g in (("error", "error"), ("X", "Z")):
                self.assertAlmostEqual(
                    covariance(t, f, g, tau), analytic_covariance(params, f, g, tau), places=12
                )

    def test_series_and_spectral_expansion(self):
        """Test repeated multiplication and eigen-expansion agree with matrix powers."""
        t = transfer_from_mps(build_spp_mps(worked_hamiltonian("heisenberg_field", 0.3, slots=3)), 1)
        summary = spectral_summary(t)
        direct = [covariance(t, "X", "error", tau, summary) for tau in range(1, 16)]
        np.testing.assert_allclose(covariance_series(t, "X", "error", 15, summary), direct, atol=1e-12)
        np.testing.assert_allclose(
            covariance_spectral(t, "X", "error", np.arange(1, 16), summary), direct, atol=1e-9
        )

    def test_lag_must_be_positive(self):
        """Test that lag zero raises."""
        with self.assertRaises(ValueError):
            covariance(storm_hmm(storm()).transfer, "error", "error", 0)

    def test_multipoint(self):
        """Test the two-point case and time ordering."""
        t = storm_hmm(storm()).transfer
        self.assertAlmostEqual(
            multipoint(t, [("error", 2), ("error", 5)]), covariance(t, "error", "error", 3), places=12
        )
        with self.assertRaises(ValueError):
            multipoint(t, [("error", 2), ("error", 2)])

    def test_empirical_covariance(self):
        """Test sampled covariance against the closed form within six standard errors."""
        params = storm()
        hmm = storm_hmm(params)
        labels = hmm_sample(hmm.kernels, params.stationary, 2000, stream(1, "test"), count=200)
        values = observable("error")[labels]
        cov, stderr = empirical_covariance(values, values, 1)
        self.assertLess(abs(cov - analytic_covariance(params, "error", "error", 1)), 6 * stderr)


class HmmTests(SimpleTestCase):
    """Tests for the hidden Markov model helpers."""

    def test_storm_is_hmm(self):
        """Test that storm label matrices pass the check."""
        check = hmm_check(storm_hmm(storm()).kernels)
        self.assertTrue(check.is_hmm)
        self.assertEqual(len(check.kernels), 4)

    def test_violations(self):
        """Test negative entries, row sums and complex parts are reported."""
        kernels = list(storm_hmm(storm()).kernels)
        kernels[1] = kernels[1] - 0.2
        kinds = {v[0] for v in hmm_check(kernels).violations}
        self.assertEqual(kinds, {"negative", "row_sum"})
        kernels = list(storm_hmm(storm()).kernels)
        kernels[0] = kernels[0] + 1e-3j
        self.assertEqual({v[0] for v in hmm_check(kernels).violations}, {"complex"})

    def test_likelihood(self):
        """Test the forward filter sums to one and reproduces the marginals."""
        params = storm()
        kernels = storm_hmm(params).kernels
        total = sum(hmm_likelihood(kernels, params.stationary, seq) for seq in product(range(4), repeat=3))
        self.assertAlmostEqual(total, 1.0, places=12)
        for x in range(4):
            self.assertAlmostEqual(hmm_likelihood(kernels, params.stationary, [x]), params.marginals[x])

    def test_sampling_marginals(self):
        """Test sampled first labels against stationary marginals."""
        params = storm()
        count = 4000
        labels = hmm_sample(storm_hmm(params).kernels, params.stationary, 3, stream(2, "test"), count=count)
        self.assertEqual(labels.shape, (count, 3))
        rate = float((labels[:, 0] != 0).mean())
        expected = 0.25 * 0.3
        self.assertLess(abs(rate - expected), 4 * math.sqrt(expected * (1 - expected) / count))
