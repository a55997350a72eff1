"""Tests for memory experiments."""

import numpy as np
from django.test import SimpleTestCase, override_settings

from spatiotemporal_pauli_noise.benchmark import (
    CSV_COLUMNS,
    BenchmarkConfig,
    _prepare_point,
    binomial_stderr,
    per_round_rate,
    run_memory_benchmark,
    sample_faults,
)
from spatiotemporal_pauli_noise.exceptions import InvalidParameterError


class RateTests(SimpleTestCase):
    """Tests for failure rate conversions."""

    def test_per_round_rate(self):
        """Test per-round rates invert the repeated-flip composition."""
        self.assertEqual(per_round_rate(0.0, 5), 0.0)
        self.assertAlmostEqual(per_round_rate(0.1, 1), 0.1)
        q = 0.01
        p_shot = (1 - (1 - 2 * q) ** 9) / 2
        self.assertAlmostEqual(per_round_rate(p_shot, 9), q)
        self.assertEqual(per_round_rate(0.6, 3), 0.5)

    def test_binomial_stderr(self):
        """Test the binomial standard error."""
        self.assertAlmostEqual(binomial_stderr(0.5, 100), 0.05)
        self.assertEqual(binomial_stderr(0.0, 100), 0.0)


class BenchmarkConfigTests(SimpleTestCase):
    """Tests for BenchmarkConfig."""

    def test_defaults_from_settings(self):
        """Test unset fields pick up settings."""
        config = BenchmarkConfig(distances=[3], shots=10, seed=0, grid=[2.0])
        self.assertEqual(config.batch_size, 500)
        self.assertEqual(config.p, 0.001)
        self.assertEqual(config.rounds_factor, 3)
        self.assertEqual(config.q1_budget, 0.03)
        self.assertEqual(config.distances, (3,))

    @override_settings(SPPNOISE_QEC_ROUNDS_FACTOR=1)
    def test_overridden_setting(self):
        """Test overridden settings reach the config."""
        self.assertEqual(BenchmarkConfig(distances=[3], shots=10, seed=0, noise="none").rounds_factor, 1)

    def test_validation(self):
        """Test invalid configurations raise."""
        invalid = (
            {"noise": "burst", "grid": [1.0]},
            {"shots": 0, "grid": [1.0]},
            {"seed": None, "grid": [1.0]},
            {"distances": []},
            {"noise": "iid"},
        )
        for overrides in invalid:
            values = {"distances": [3], "shots": 10, "seed": 0, **overrides}
            with self.assertRaises(InvalidParameterError):
                BenchmarkConfig(**values)

    def test_from_dict(self):
        """Test unknown keys are ignored and sequences become tuples."""
        config = BenchmarkConfig.from_dict(
            {"distances": [3, 5], "shots": 10, "seed": 1, "grid": [1, 2], "workers": 4, "n_vec": [0, 0, 1]}
        )
        self.assertEqual(config.grid, (1.0, 2.0))
        self.assertEqual(config.n_vec, (0, 0, 1))
        self.assertEqual(config.points(), [1.0, 2.0])
        self.assertEqual(config.as_dict()["distances"], (3, 5))


class MemoryBenchmarkTests(SimpleTestCase):
    """Tests for run_memory_benchmark."""

    def test_noiseless(self):
        """Test that a noiseless memory never fails."""
        config = BenchmarkConfig(distances=[3], shots=40, seed=1, noise="none", p=0.0, batch_size=15)
        report = run_memory_benchmark(config, workers=1)
        self.assertEqual(len(report.rows), 1)
        row = report.rows[0]
        self.assertEqual((row["failures"], row["rounds"], row["shots"]), (0, 9, 40))
        self.assertIsNone(row["marginal"])
        self.assertEqual(row["param"], "point")

    def test_iid_reproducible(self):
        """Test identical seeds give identical rows and a CSV with the config line."""
        config = BenchmarkConfig(distances=[3], shots=60, seed=2, noise="iid", grid=[0.01], rounds_factor=1)
        first = run_memory_benchmark(config, workers=1)
        second = run_memory_benchmark(config, workers=1)
        self.assertEqual(first.rows, second.rows)
        self.assertAlmostEqual(first.rows[0]["marginal"], 0.01)
        text = first.to_csv()
        lines = text.splitlines()
        self.assertTrue(lines[0].startswith("# config:"))
        self.assertEqual(lines[1], ",".join(CSV_COLUMNS))
        self.assertEqual(len(lines), 3)
        document = first.to_json()
        self.assertEqual(set(document), {"config", "version", "wall_time", "rows"})

    def test_storm_point(self):
        """Test storm points carry the solved marginal."""
        config = BenchmarkConfig(
            distances=[3], shots=30, seed=3, grid=[2.0], marginal=0.002, rounds_factor=1
        )
        row = run_memory_benchmark(config, workers=1).rows[0]
        self.assertAlmostEqual(row["marginal"], 0.002)
        self.assertEqual(row["param"], "xi")
        self.assertLessEqual(row["failures"], row["shots"])

    def test_fault_shapes(self):
        """Test injected fault arrays for every noise source."""
        configs = [
            BenchmarkConfig(distances=[3], shots=5, seed=4, grid=[3.0], rounds_factor=1),
            BenchmarkConfig(distances=[3], shots=5, seed=4, noise="iid", grid=[0.1], rounds_factor=1),
            BenchmarkConfig(
                distances=[3], shots=5, seed=4, noise="qca", grid=[0.2], a=0.01, b=0.2, rounds_factor=1
            ),
        ]
        for config in configs:
            point = _prepare_point(config, 0, config.grid[0], 3)
            faults = sample_faults(point, 17, 5, config.seed, 0)
            self.assertEqual(faults.shape, (5, 3, 17))
            self.assertTrue(np.all((faults >= 0) & (faults <= 3)))
            np.testing.assert_array_equal(faults, sample_faults(point, 17, 5, config.seed, 0))
        none = BenchmarkConfig(distances=[3], shots=5, seed=4, noise="none")
        self.assertIsNone(sample_faults(_prepare_point(none, 0, 0.0, 3), 17, 5, 4, 0))


class MonotonicityTests(SimpleTestCase):
    """Tests for the direction of logical failure rates across noise strength and memory."""

    shots = 2000

    def _p_round(self, **kwargs):
        config = BenchmarkConfig(distances=[3], shots=self.shots, seed=8, rounds_factor=1, **kwargs)
        row = run_memory_benchmark(config, workers=1).rows[0]
        return row["p_round"], row["stderr"]

    def _assert_non_decreasing(self, rates):
        for (lower, lower_err), (higher, higher_err) in zip(rates, rates[1:]):
            self.assertGreaterEqual(higher + 2 * (lower_err + higher_err), lower)

    def test_baseline_noise(self):
        """Test the per-round failure rate grows with the baseline circuit noise."""
        rates = [self._p_round(noise="none", p=p) for p in (0.001, 0.005, 0.02)]
        self._assert_non_decreasing(rates)
        self.assertGreater(rates[-1][0], rates[0][0])

    def test_storm_correlation_length(self):
        """Test longer storms at a fixed marginal error rate fail more often."""
        rates = [self._p_round(grid=[xi], marginal=0.01) for xi in (1.0, 5.0, 50.0)]
        self._assert_non_decreasing(rates)
        self.assertGreater(rates[-1][0], rates[0][0])
