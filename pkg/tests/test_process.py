"""Tests for process tensors and dilations."""

import json
import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy.stats import unitary_group

from spatiotemporal_pauli_noise.exceptions import DimensionError, NumericalValidationError
from spatiotemporal_pauli_noise.process import (
    SEDilation,
    apply_instruments,
    apply_instruments_dense,
    build_mpo,
    channel_choi,
    check_causality,
    check_positivity,
    dense_choi,
    dump_dilation,
    load_dilation,
    markovian_dilation,
    mpo_to_choi,
    random_dilation,
)
from spatiotemporal_pauli_noise.rng import stream
from spatiotemporal_pauli_noise.spp import worked_hamiltonian
from spatiotemporal_pauli_noise.tensor import superoperator
from spatiotemporal_pauli_noise.utils import PAULIS

SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def phase_overlap(u, v):
    return abs(np.trace(u.conj().T @ v)) / u.shape[0]


def depolarizing(p):
    """Superoperator of a single-qubit depolarizing channel."""
    return (1 - p) * np.eye(4) + p / 3 * sum(superoperator(P) for P in PAULIS[1:])


class DilationTests(SimpleTestCase):
    """Tests for SEDilation validation and serialisation."""

    def test_random_dilation(self):
        """Test dimensions and environment state of a random dilation."""
        dilation = random_dilation(2, 4, 2, stream(1, "test"), mixed=True)
        self.assertEqual((dilation.d_S, dilation.d_E, dilation.k, dilation.n), (2, 4, 2, 1))
        self.assertAlmostEqual(np.trace(dilation.env_init).real, 1.0)

    def test_rejects_non_unitary(self):
        """Test that a non-unitary step raises."""
        with self.assertRaises(NumericalValidationError):
            SEDilation(2, 2, (np.eye(4) * 1.1,), np.eye(2) / 2)

    def test_rejects_bad_shapes(self):
        """Test dimension validation."""
        with self.assertRaises(DimensionError):
            SEDilation(2, 2, (np.eye(6),), np.eye(2) / 2)
        with self.assertRaises(DimensionError):
            SEDilation(3, 1, (np.eye(3),), np.eye(1))
        with self.assertRaises(DimensionError):
            SEDilation(2, 2, (), np.eye(2) / 2)

    def test_rejects_invalid_environment(self):
        """Test that the environment state must be a density matrix."""
        with self.assertRaises(NumericalValidationError):
            SEDilation(2, 2, (np.eye(4),), np.diag([1.5, -0.5]))

    def test_json_documents(self):
        """Test dumping and loading a dilation."""
        dilation = random_dilation(2, 2, 1, stream(2, "test"))
        loaded = load_dilation(json.dumps(dump_dilation(dilation)))
        for u, v in zip(dilation.unitaries, loaded.unitaries):
            np.testing.assert_allclose(u, v)
        np.testing.assert_allclose(dilation.env_init, loaded.env_init)
        with self.assertRaises(DimensionError):
            load_dilation('{"d_S": 2}')


class WorkedUnitaryTests(SimpleTestCase):
    """Tests for the worked coupling unitaries."""

    def test_heisenberg_is_swap(self):
        """Test the Heisenberg coupling at pi/2 is SWAP up to a phase."""
        u = worked_hamiltonian("heisenberg", math.pi / 2).unitaries[0]
        self.assertAlmostEqual(phase_overlap(u, SWAP), 1.0)

    def test_heisenberg_at_pi_is_identity(self):
        """Test the Heisenberg coupling at pi is the identity up to a phase."""
        u = worked_hamiltonian("heisenberg", math.pi).unitaries[0]
        self.assertAlmostEqual(phase_overlap(u, np.eye(4)), 1.0)

    def test_crx_is_cnot_up_to_environment_phase(self):
        """Test the controlled rotation at pi/2 equals CNOT followed by S on the environment."""
        u = worked_hamiltonian("crx", math.pi / 2).unitaries[0]
        s = np.diag([1, 1j])
        np.testing.assert_allclose(u, np.kron(s, np.eye(2)) @ CNOT, atol=1e-12)


class MpoTests(SimpleTestCase):
    """Tests for the temporal MPO and its dense Choi operator."""

    def test_bond_dimensions(self):
        """Test bonds carry the environment Liouville space."""
        mpo = build_mpo(random_dilation(2, 4, 2, stream(3, "test")))
        self.assertEqual(mpo.bond_dims, [16, 16, 16, 16])
        self.assertEqual(mpo.k, 2)

    def test_choi_matches_bell_pair_oracle(self):
        """Test MPO contraction against Bell-pair inputs."""
        for seed, mixed in ((4, False), (5, True)):
            dilation = random_dilation(2, 2, 2, stream(seed, "test"), mixed=mixed)
            np.testing.assert_allclose(
                mpo_to_choi(build_mpo(dilation)).matrix, dense_choi(dilation).matrix, atol=1e-10
            )

    def test_choi_is_causal_and_positive(self):
        """Test trace, causality and positivity of a physical process."""
        choi = mpo_to_choi(build_mpo(random_dilation(2, 2, 2, stream(6, "test"))))
        self.assertAlmostEqual(np.trace(choi.matrix).real, 64.0)
        report = check_causality(choi)
        self.assertTrue(report.causal)
        self.assertEqual(len(report.per_slot), 3)
        self.assertTrue(check_positivity(choi).positive)

    def test_causal_constraint_counts(self):
        """Test each slot constrains every earlier Pauli string against non-identity inputs."""
        choi = mpo_to_choi(build_mpo(random_dilation(2, 2, 2, stream(6, "test"))))
        with self.assertLogs("spatiotemporal_pauli_noise.process", "DEBUG") as logs:
            report = check_causality(choi)
        slots = [line.split(":", 2)[2] for line in logs.output if "Slot" in line]
        expected = [f"Slot {j}: {count} causal constraints" for j, count in enumerate((3, 48, 768))]
        self.assertEqual(slots, expected)
        self.assertEqual(report.constraint_count, 3 + 48 + 768 + 1)

    def test_causality_violation_detected(self):
        """Test that signalling from the future is flagged."""
        choi = mpo_to_choi(build_mpo(worked_hamiltonian("heisenberg", 0.4, slots=0)))
        broken = choi.with_matrix(choi.matrix + 0.1 * np.kron(PAULIS[3], PAULIS[0]))
        report = check_causality(broken)
        self.assertFalse(report.causal)
        self.assertAlmostEqual(report.per_slot[0], 0.4)

    def test_negative_choi_detected(self):
        """Test that a non-positive operator is flagged."""
        choi = mpo_to_choi(build_mpo(worked_hamiltonian("heisenberg", 0.4, slots=0)))
        self.assertFalse(check_positivity(choi.matrix - 10 * np.eye(4)).positive)

    def test_unit_trace(self):
        """Test renormalisation to unit trace."""
        choi = mpo_to_choi(build_mpo(worked_hamiltonian("crx", 0.3))).unit_trace()
        self.assertAlmostEqual(np.trace(choi.matrix).real, 1.0)
        self.assertEqual(choi.expected_trace, 1.0)

    @override_settings(SPPNOISE_DENSE_DIM_CAP=64)
    def test_dense_cap(self):
        """Test the dense dimension cap."""
        with self.assertRaises(DimensionError):
            mpo_to_choi(build_mpo(random_dilation(2, 2, 2, stream(7, "test"))))

    def test_markovian_choi_factorises(self):
        """Test that fresh environments per step give a product of channel Choi operators."""
        rng = stream(8, "test")
        steps = [unitary_group.rvs(4, random_state=rng) for _ in range(2)]
        envs = [np.diag([0.7, 0.3]), np.diag([1.0, 0.0])]
        dilation = markovian_dilation(steps, envs)
        self.assertEqual(dilation.d_E, 4)
        single = [dense_choi(SEDilation(2, 2, (u,), e)).matrix for u, e in zip(steps, envs)]
        np.testing.assert_allclose(dense_choi(dilation).matrix, np.kron(*single), atol=1e-10)

    def test_channel_choi(self):
        """Test the Choi operator of channels."""
        identity = channel_choi(np.eye(4))
        self.assertAlmostEqual(np.trace(identity.matrix).real, 4.0)
        self.assertEqual(np.linalg.matrix_rank(identity.matrix), 1)
        self.assertEqual(np.linalg.matrix_rank(channel_choi(depolarizing(0.75)).matrix, tol=1e-10), 4)


class InstrumentTests(SimpleTestCase):
    """Tests for applying instruments through the MPO."""

    def test_matches_density_matrix_evolution(self):
        """Test MPO application against joint density-matrix evolution."""
        rng = stream(9, "test")
        dilation = random_dilation(2, 2, 2, rng, mixed=True)
        rho = np.array([[0.6, 0.2 - 0.1j], [0.2 + 0.1j, 0.4]])
        instruments = [superoperator(unitary_group.rvs(2, random_state=rng)), depolarizing(0.2)]
        np.testing.assert_allclose(
            apply_instruments(build_mpo(dilation), rho, instruments),
            apply_instruments_dense(dilation, rho, instruments),
            atol=1e-12,
        )

    def test_swap_exchanges_system_and_environment(self):
        """Test the SWAP-like coupling hands out the environment state."""
        rho = np.array([[1.0, 0.0], [0.0, 0.0]])
        plus = np.full((2, 2), 0.5)
        once = build_mpo(worked_hamiltonian("heisenberg", math.pi / 2, slots=0))
        np.testing.assert_allclose(apply_instruments(once, rho, []), plus, atol=1e-12)
        twice = build_mpo(worked_hamiltonian("heisenberg", math.pi / 2, slots=1))
        np.testing.assert_allclose(apply_instruments(twice, rho, [np.eye(4)]), rho, atol=1e-12)

    def test_instrument_validation(self):
        """Test instrument count, shape and complete positivity checks."""
        mpo = build_mpo(worked_hamiltonian("heisenberg", 0.3, slots=1))
        rho = np.eye(2) / 2
        with self.assertRaises(DimensionError):
            apply_instruments(mpo, rho, [])
        with self.assertRaises(DimensionError):
            apply_instruments(mpo, rho, [np.eye(9)])
        transpose = np.eye(4)[[0, 2, 1, 3]]
        with self.assertRaises(NumericalValidationError):
            apply_instruments(mpo, rho, [transpose])
