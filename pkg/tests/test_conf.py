"""Tests for configuration module."""

from django.test import SimpleTestCase, override_settings

from spatiotemporal_pauli_noise.conf import DEFAULT_SETTINGS, get_setting


class GetSettingTests(SimpleTestCase):
    """Tests for get_setting function."""

    def test_get_default_value(self):
        """Test getting default value when setting not defined."""
        result = get_setting("NONEXISTENT_SETTING", "default_value")
        self.assertEqual(result, "default_value")

    @override_settings(SPPNOISE_WORKERS=4)
    def test_get_overridden_value(self):
        """Test getting overridden setting value."""
        self.assertEqual(get_setting("WORKERS", 1), 4)

    @override_settings(SPPNOISE_QCA_BOUNDARY="periodic")
    def test_prefix_is_required(self):
        """Test that only prefixed settings are picked up."""
        self.assertEqual(get_setting("QCA_BOUNDARY", "open"), "periodic")
        self.assertIsNone(get_setting("SECRET_KEY"))

    def test_test_settings_are_visible(self):
        """Test values from the test settings module."""
        self.assertEqual(get_setting("QEC_BATCH_SIZE", DEFAULT_SETTINGS["QEC_BATCH_SIZE"]), 500)


class DefaultSettingsTests(SimpleTestCase):
    """Tests for DEFAULT_SETTINGS dictionary."""

    def test_tolerances(self):
        """Test numerical tolerances are small and positive."""
        for name in ("HERMITIAN_TOL", "UNITARY_TOL", "CP_TOL", "CAUSALITY_TOL", "HMM_TOL"):
            self.assertGreater(DEFAULT_SETTINGS[name], 0)
            self.assertLess(DEFAULT_SETTINGS[name], 1e-6)

    def test_capacity_caps(self):
        """Test dense caps and decoder limit."""
        self.assertEqual(DEFAULT_SETTINGS["DENSE_DIM_CAP"], 4096)
        self.assertEqual(DEFAULT_SETTINGS["SPECTRUM_DIM_CAP"], 256)
        self.assertEqual(DEFAULT_SETTINGS["DECODER_EXACT_LIMIT"], 16)

    def test_experiment_defaults(self):
        """Test storm, QCA and memory experiment defaults."""
        self.assertEqual(DEFAULT_SETTINGS["STORM_Q1_BUDGET"], 0.03)
        self.assertEqual(DEFAULT_SETTINGS["STORM_MIN_XI"], 1.0)
        self.assertEqual(DEFAULT_SETTINGS["QCA_BOUNDARY"], "open")
        self.assertEqual(DEFAULT_SETTINGS["QEC_ROUNDS_FACTOR"], 3)
        self.assertEqual(DEFAULT_SETTINGS["QEC_BASELINE_P"], 0.001)
        self.assertEqual(DEFAULT_SETTINGS["WORKERS"], 1)
