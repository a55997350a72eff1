"""Tests for reference stabilizer simulation."""

import numpy as np
from django.test import SimpleTestCase

from spatiotemporal_pauli_noise.circuit import apply_baseline_noise, build_memory_circuit, sample_frames
from spatiotemporal_pauli_noise.exceptions import DimensionError
from spatiotemporal_pauli_noise.rng import stream
from spatiotemporal_pauli_noise.tableau import sample_tableau, to_stim


class StimTranslationTests(SimpleTestCase):
    """Tests for translating memory circuits."""

    def test_counts(self):
        """Test qubits, measurements and annotations survive translation."""
        circuit = apply_baseline_noise(build_memory_circuit(3, 2), 0.01)
        translated = to_stim(circuit)
        self.assertEqual(translated.num_qubits, circuit.qubits)
        self.assertEqual(translated.num_measurements, circuit.measurements)
        self.assertEqual(translated.num_ticks, circuit.rounds)
        self.assertEqual(translated.num_detectors, 16)
        self.assertEqual(translated.num_observables, 1)

    def test_faults_become_gates(self):
        """Test injected labels appear as Pauli gates after the round tick."""
        circuit = build_memory_circuit(3, 2)
        faults = np.zeros((2, circuit.qubits), dtype=np.int8)
        faults[1, 4] = 2
        faults[0, 0] = 3
        text = str(to_stim(circuit, faults))
        self.assertIn("Y 4", text)
        self.assertIn("Z 0", text)
        self.assertNotIn("X_ERROR", text)
        self.assertLess(text.index("Z 0"), text.index("Y 4"))

    def test_fault_shape(self):
        circuit = build_memory_circuit(3, 2)
        with self.assertRaises(DimensionError):
            to_stim(circuit, np.zeros((3, circuit.qubits), dtype=np.int8))


class CircuitSimulationTests(SimpleTestCase):
    """Tests for memory circuit simulation."""

    def test_noiseless(self):
        """Test noiseless memory circuits have no events."""
        for basis in ("Z", "X"):
            detectors, observable = sample_tableau(build_memory_circuit(3, 2, basis), 20, stream(0, "test"))
            self.assertFalse(detectors.any() or observable.any())

    def test_matches_frame_for_injected_faults(self):
        """Test injected faults give the same events as frame propagation."""
        circuit = build_memory_circuit(3, 2)
        rng = stream(1, "test", "faults")
        faults = rng.integers(0, 4, size=(4, 2, circuit.qubits)).astype(np.int8)
        faults[rng.random(faults.shape) < 0.9] = 0
        frame = sample_frames(circuit, 4, stream(0, "test"), faults)
        tableau = sample_tableau(circuit, 4, stream(0, "test"), faults)
        np.testing.assert_array_equal(frame[0], tableau[0])
        np.testing.assert_array_equal(frame[1], tableau[1])

    def test_single_data_flip(self):
        """Test an X fault on the central data qubit fires two Z detectors."""
        circuit = build_memory_circuit(3, 2)
        faults = np.zeros((1, 2, circuit.qubits), dtype=np.int8)
        faults[0, 1, 4] = 1
        detectors, observable = sample_tableau(circuit, 1, stream(0, "test"), faults)
        self.assertEqual(int(detectors.sum()), 2)
        self.assertFalse(observable.any())

    def test_shapes(self):
        """Test one row per shot and one column per detector."""
        circuit = apply_baseline_noise(build_memory_circuit(3, 2), 0.01)
        detectors, observable = sample_tableau(circuit, 5, stream(0, "test"))
        self.assertEqual(detectors.shape, (5, len(circuit.detectors)))
        self.assertEqual(observable.shape, (5,))
        with self.assertRaises(DimensionError):
            sample_tableau(circuit, 2, stream(0, "test"), np.zeros((3, 2, circuit.qubits), dtype=np.int8))

    def test_noisy_rates_match_frames(self):
        """Test the mean event count agrees with frame sampling under baseline noise."""
        circuit = apply_baseline_noise(build_memory_circuit(3, 2), 0.01)
        frame, _ = sample_frames(circuit, 4000, stream(0, "test", "frame"))
        reference, _ = sample_tableau(circuit, 4000, stream(0, "test", "reference"))
        self.assertAlmostEqual(frame.sum(axis=1).mean(), reference.sum(axis=1).mean(), delta=0.15)
