import unittest
from unittest.mock import patch

from config import Config


class TestEnvironmentValidation(unittest.TestCase):

    def tearDown(self):
        # Config is a singleton; reload it from the unpatched environment
        Config()

    @patch.dict('os.environ', {'EPP_DT': '0.3'})
    def test_dt_must_divide_a_year(self):
        """A step that does not split the year evenly is rejected"""
        with self.assertRaises(ValueError) as context:
            Config()
        self.assertIn("EPP_DT", str(context.exception))

    @patch.dict('os.environ', {'EPP_INTEGRATOR': 'midpoint'})
    def test_unknown_integrator(self):
        with self.assertRaises(ValueError) as context:
            Config()
        self.assertIn("EPP_INTEGRATOR", str(context.exception))

    @patch.dict('os.environ', {'EPP_SIGMA_SITE': '0'})
    def test_non_positive_likelihood_setting(self):
        with self.assertRaises(ValueError) as context:
            Config()
        self.assertIn("sigma_site", str(context.exception))

    @patch.dict('os.environ', {'IMIS_N_PER_ITER': '-5'})
    def test_non_positive_imis_setting(self):
        with self.assertRaises(ValueError):
            Config()

    @patch.dict('os.environ', {'IMIS_MAX_ITER': '0', 'IMIS_WEIGHT_THRESHOLD': '0'})
    def test_imis_zero_iterations_allowed(self):
        """Bounds agree with the sampler's own config model"""
        from modules.sampler import ImisConfig

        config = Config()
        self.assertEqual(config.IMIS["max_iterations"], 0)
        self.assertEqual(ImisConfig().max_iterations, 0)

    @patch.dict('os.environ', {'IMIS_STOP_MAX_WEIGHT': '1.5'})
    def test_imis_stop_weight_above_one(self):
        with self.assertRaises(ValueError) as context:
            Config()
        self.assertIn("stop_max_weight", str(context.exception))

    @patch.dict('os.environ', {'THREADS': '0'})
    def test_threads_at_least_one(self):
        with self.assertRaises(ValueError) as context:
            Config()
        self.assertIn("THREADS", str(context.exception))

    @patch.dict('os.environ', {'EPP_DT': '0.25', 'EPP_INTEGRATOR': 'EULER', 'THREADS': '4'})
    def test_valid_environment(self):
        """Test valid environment variables"""
        try:
            config = Config()
            self.assertEqual(config.DYNAMICS["dt"], 0.25)
            self.assertEqual(config.DYNAMICS["integrator"], "euler")
            self.assertEqual(config.THREADS, 4)
        except Exception as e:
            self.fail(f"Config initialization failed with valid environment variables: {e}")

    def test_singleton(self):
        self.assertIs(Config(), Config())


if __name__ == "__main__":
    unittest.main()
