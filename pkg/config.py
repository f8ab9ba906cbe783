import os
import logging
from pathlib import Path
from dotenv import load_dotenv
from typing import Dict, Any

# Load environment variables from .env file
load_dotenv()

# Configure logging
logging.basicConfig(level=os.getenv("LOG_LEVEL", "INFO").upper())


def _env_float(name: str, default: str) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: str) -> int:
    return int(float(os.getenv(name, default)))


class Config:
    """Central configuration class for model, sampler and run settings."""

    _instance = None

    def __new__(cls, *args, **kwargs):
        if not cls._instance:
            cls._instance = super(Config, cls).__new__(cls, *args, **kwargs)
        return cls._instance

    def __init__(self):
        self._load_sections()

        # Validate configurations
        self._validate_dynamics_config()
        self._validate_likelihood_config()
        self._validate_imis_config()
        self._validate_pooling_config()
        self._ensure_directories()

        # Direct attributes for frequently accessed settings
        self.THREADS = self.APP["threads"]
        self.OUTPUT_DIR = self.APP["output_dir"]

    # ---------------------------------------------------------------------
    # Sections (read from the environment on every (re)initialisation)
    # ---------------------------------------------------------------------
    def _load_sections(self) -> None:
        # Compartment model integration
        self.DYNAMICS: Dict[str, Any] = {
            "dt": _env_float("EPP_DT", "0.1"),
            "integrator": os.getenv("EPP_INTEGRATOR", "rk4").lower(),
            "seed_fraction": _env_float("EPP_SEED_FRACTION", "0.0025"),
            "hiv_death_rate": _env_float("EPP_HIV_DEATH_RATE", "0.1"),
        }

        # Probit random-effects likelihood
        self.LIKELIHOOD: Dict[str, Any] = {
            "sigma_site": _env_float("EPP_SIGMA_SITE", "0.15"),
            "sigma_extra": _env_float("EPP_SIGMA_EXTRA", "0.05"),
            "continuity": _env_float("EPP_CONTINUITY", "0.5"),
        }

        # Incremental mixture importance sampling
        self.IMIS: Dict[str, Any] = {
            "n_initial": _env_int("IMIS_N_INITIAL", "10000"),
            "n_per_iter": _env_int("IMIS_N_PER_ITER", "1000"),
            "max_iterations": _env_int("IMIS_MAX_ITER", "100"),
            "stop_max_weight": _env_float("IMIS_STOP_MAX_WEIGHT", "0.05"),
            "weight_threshold": _env_float("IMIS_WEIGHT_THRESHOLD", "1e-6"),
            "n_resample": _env_int("IMIS_N_RESAMPLE", "3000"),
        }

        # Hierarchical pooling
        self.POOLING: Dict[str, Any] = {
            "n_candidates": _env_int("POOL_N_CANDIDATES", "1000000"),
            "n_draws": _env_int("POOL_N_DRAWS", "2000"),
            "min_ess": _env_float("POOL_MIN_ESS", "500"),
        }

        # Application settings
        self.APP: Dict[str, Any] = {
            "debug": os.getenv("DEBUG", "False").lower() == "true",
            "threads": _env_int("THREADS", "1"),
            "output_dir": os.getenv("OUTPUT_DIR", "output"),
            "log_dir": os.getenv("LOG_DIR", "logs"),
        }

    # ---------------------------------------------------------------------
    # Validation Methods
    # ---------------------------------------------------------------------
    def _validate_dynamics_config(self):
        """Validate integration settings."""
        dt = self.DYNAMICS["dt"]
        steps = round(1.0 / dt) if dt > 0 else 0
        if dt <= 0 or abs(steps * dt - 1.0) > 1e-9:
            logging.error("EPP_DT must be a positive fraction of a year dividing it evenly, got %s", dt)
            raise ValueError("EPP_DT must divide one year into whole steps.")
        if self.DYNAMICS["integrator"] not in ("rk4", "euler"):
            logging.error("Unknown integrator %s", self.DYNAMICS["integrator"])
            raise ValueError("EPP_INTEGRATOR must be 'rk4' or 'euler'.")
        if not 0 <= self.DYNAMICS["seed_fraction"] < 1:
            logging.error("Seed fraction out of range: %s", self.DYNAMICS["seed_fraction"])
            raise ValueError("EPP_SEED_FRACTION must lie in [0, 1).")
        if self.DYNAMICS["hiv_death_rate"] < 0:
            logging.error("Negative HIV death rate: %s", self.DYNAMICS["hiv_death_rate"])
            raise ValueError("EPP_HIV_DEATH_RATE must be non-negative.")

    def _validate_likelihood_config(self):
        """Validate likelihood variance settings."""
        for key in ("sigma_site", "sigma_extra", "continuity"):
            if self.LIKELIHOOD[key] <= 0:
                logging.error("Likelihood setting %s must be positive, got %s", key, self.LIKELIHOOD[key])
                raise ValueError(f"Likelihood setting {key} must be positive.")

    def _validate_imis_config(self):
        """Validate sampler sizes and thresholds."""
        # Bounds match modules.sampler.ImisConfig
        minimums = {"n_initial": 1, "n_per_iter": 2, "max_iterations": 0, "n_resample": 1}
        for key, low in minimums.items():
            if self.IMIS[key] < low:
                logging.error("IMIS setting %s must be at least %s, got %s", key, low, self.IMIS[key])
                raise ValueError(f"IMIS setting {key} must be at least {low}.")
        if not 0 < self.IMIS["stop_max_weight"] <= 1:
            logging.error("IMIS stop_max_weight out of range: %s", self.IMIS["stop_max_weight"])
            raise ValueError("IMIS setting stop_max_weight must lie in (0, 1].")
        if not 0 <= self.IMIS["weight_threshold"] < 1:
            logging.error("IMIS weight_threshold out of range: %s", self.IMIS["weight_threshold"])
            raise ValueError("IMIS setting weight_threshold must lie in [0, 1).")

    def _validate_pooling_config(self):
        """Validate pooling sizes."""
        for key, value in self.POOLING.items():
            if value <= 0:
                logging.error("Pooling setting %s must be positive, got %s", key, value)
                raise ValueError(f"Pooling setting {key} must be positive.")
        if self.APP["threads"] < 1:
            logging.error("THREADS must be at least 1, got %s", self.APP["threads"])
            raise ValueError("THREADS must be at least 1.")

    def _ensure_directories(self):
        """Ensure the log directory exists."""
        Path(self.APP["log_dir"]).mkdir(parents=True, exist_ok=True)

    # ---------------------------------------------------------------------
    # Logging Configuration
    # ---------------------------------------------------------------------
    def log_configuration(self):
        """Log the loaded configuration for debugging purposes."""
        logging.info("Configuration loaded successfully.")
        logging.debug(f"Dynamics Config: {self.DYNAMICS}")
        logging.debug(f"Likelihood Config: {self.LIKELIHOOD}")
        logging.debug(f"IMIS Config: {self.IMIS}")
        logging.debug(f"Pooling Config: {self.POOLING}")
        logging.debug(f"App Settings: {self.APP}")

# ---------------------------------------------------------------------
# Singleton Configuration Instance
# ---------------------------------------------------------------------
config = Config()
config.log_configuration()
