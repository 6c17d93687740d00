"""Configuration management for CgLp design and simulation campaigns."""

import copy
import os
from typing import Any, Dict, List, Optional

import yaml

from .loop_shaping import Accounting, ControllerFamily, DesignMode
from .model_core import TWO_PI
from .sim_engine import (
    NM,
    Discretization,
    FeedforwardConfig,
    NoiseConfig,
    ReferenceConfig,
    SimConfig,
)
from .stability import DEFAULT_ITERATIONS, DEFAULT_RESTARTS, Backend

VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class ConfigValidationError(Exception):
    """Raised when configuration validation fails."""

    pass


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class Config:
    """Load and validate a YAML (or JSON) campaign configuration."""

    def __init__(self, config_path: str) -> None:
        """
        Initialize Config by loading from file path.

        Args:
            config_path: Path to YAML configuration file

        Raises:
            FileNotFoundError: If config file doesn't exist
            yaml.YAMLError: If config file is malformed
            ConfigValidationError: If any value is invalid
        """
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_path, "r") as f:
            self._config: Dict[str, Any] = yaml.safe_load(f)

        if self._config is None:
            raise yaml.YAMLError("Configuration file is empty")
        if not isinstance(self._config, dict):
            raise ConfigValidationError("Configuration validation failed:\n  - root must be a mapping")

        self.validate()

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "Config":
        """Build a validated configuration from an in-memory document."""
        config = cls.__new__(cls)
        config._config = copy.deepcopy(document)
        config.validate()
        return config

    def with_overrides(self, overrides: Dict[str, Any]) -> "Config":
        """
        Copy with dotted keys replaced, e.g. ``{"application.seed": 3}``.
        ``None`` values are ignored so unset command-line flags keep file values.
        """
        document = copy.deepcopy(self._config)
        for dotted, value in overrides.items():
            if value is None:
                continue
            node = document
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node.setdefault(key, {})
            node[leaf] = value
        return Config.from_dict(document)

    def validate(self) -> bool:
        """
        Validate all configuration parameters.

        Returns:
            True if validation passes

        Raises:
            ConfigValidationError: If any validation fails with descriptive message
        """
        errors: List[str] = []

        if "campaign" not in self._config:
            errors.append("Missing required section: 'campaign'")
        else:
            errors.extend(self._validate_campaign(self._config["campaign"]))

        if "application" not in self._config:
            errors.append("Missing required section: 'application'")
        else:
            errors.extend(self._validate_application(self._config["application"]))

        for section, validator in (
            ("plant", self._validate_plant),
            ("design", self._validate_design),
            ("simulation", self._validate_simulation),
            ("stability", self._validate_stability),
        ):
            if section in self._config:
                if not isinstance(self._config[section], dict):
                    errors.append(f"{section} must be a dictionary")
                else:
                    errors.extend(validator(self._config[section]))

        if errors:
            raise ConfigValidationError(
                "Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors)
            )

        return True

    def _validate_campaign(self, campaign: Any) -> List[str]:
        """Validate campaign section."""
        errors: List[str] = []
        if not isinstance(campaign, dict):
            return ["campaign must be a dictionary"]

        families = campaign.get("families")
        valid_families = [f.value for f in ControllerFamily]
        if families is None:
            errors.append("campaign.families is required")
        elif not isinstance(families, list) or not families:
            errors.append("campaign.families must be a non-empty list")
        else:
            for family in families:
                if family not in valid_families:
                    errors.append(
                        f"campaign.families entry {family!r} must be one of: "
                        f"{', '.join(valid_families)}"
                    )

        gammas = campaign.get("gammas")
        if gammas is None:
            errors.append("campaign.gammas is required")
        elif not isinstance(gammas, list) or not gammas:
            errors.append("campaign.gammas must be a non-empty list")
        else:
            for gamma in gammas:
                if not _is_number(gamma) or not 0.0 <= gamma <= 1.0:
                    errors.append(f"campaign.gammas entry {gamma!r} must be a number in [0, 1]")

        mode = campaign.get("mode", DesignMode.TRACKING.value)
        if mode not in [m.value for m in DesignMode]:
            errors.append("campaign.mode must be one of: tracking, bandwidth")

        return errors

    def _validate_plant(self, plant: Dict[str, Any]) -> List[str]:
        """Validate plant section."""
        errors: List[str] = []
        if "builtin" in plant and "frf" in plant:
            errors.append("plant.builtin and plant.frf are mutually exclusive")
        if "builtin" in plant and not isinstance(plant["builtin"], str):
            errors.append("plant.builtin must be a string")
        if "frf" in plant and (not isinstance(plant["frf"], str) or not plant["frf"].strip()):
            errors.append("plant.frf must be a non-empty path")
        return errors

    def _validate_design(self, design: Dict[str, Any]) -> List[str]:
        """Validate design section."""
        errors: List[str] = []
        for key in ("wc_hz", "omega_high_hz"):
            if key in design and (not _is_number(design[key]) or design[key] <= 0):
                errors.append(f"design.{key} must be a number greater than 0")
        if "pm_deg" in design and (
            not _is_number(design["pm_deg"]) or not 0 < design["pm_deg"] < 90
        ):
            errors.append("design.pm_deg must be a number between 0 and 90")
        if "beta_r" in design and (not _is_number(design["beta_r"]) or design["beta_r"] < 0):
            errors.append("design.beta_r must be a number >= 0")
        if "accounting" in design and design["accounting"] not in [a.value for a in Accounting]:
            errors.append("design.accounting must be one of: leadlag-only, full-pid")
        return errors

    def _validate_simulation(self, simulation: Dict[str, Any]) -> List[str]:
        """Validate simulation section."""
        errors: List[str] = []
        for key in ("dt", "duration"):
            if key in simulation and (not _is_number(simulation[key]) or simulation[key] <= 0):
                errors.append(f"simulation.{key} must be a number greater than 0")
        if "quantization_nm" in simulation and (
            not _is_number(simulation["quantization_nm"]) or simulation["quantization_nm"] < 0
        ):
            errors.append("simulation.quantization_nm must be a number >= 0")
        if "max_pole_fraction" in simulation and (
            not _is_number(simulation["max_pole_fraction"])
            or not 0 < simulation["max_pole_fraction"] <= 1
        ):
            errors.append("simulation.max_pole_fraction must be a number in (0, 1]")
        if "discretization" in simulation and simulation["discretization"] not in [
            d.value for d in Discretization
        ]:
            errors.append("simulation.discretization must be one of: zoh, foh, tustin")

        for sub, keys in (
            ("reference", ("peak_to_peak_m", "period_s", "prefilter_corner_hz")),
            ("noise", ("amplitude_nm",)),
            ("feedforward", ("lpf_hz", "detune")),
        ):
            block = simulation.get(sub, {})
            if not isinstance(block, dict):
                errors.append(f"simulation.{sub} must be a dictionary")
                continue
            for key in keys:
                if key in block and (not _is_number(block[key]) or block[key] < 0):
                    errors.append(f"simulation.{sub}.{key} must be a number >= 0")
            if sub == "feedforward" and "enabled" in block and not isinstance(block["enabled"], bool):
                errors.append("simulation.feedforward.enabled must be a boolean")

        if not errors:
            try:
                self._build_sim_config(simulation)
            except ValueError as e:
                errors.append(f"simulation: {e}")
        return errors

    def _validate_stability(self, stability: Dict[str, Any]) -> List[str]:
        """Validate stability section."""
        errors: List[str] = []
        for key in ("iterations", "restarts"):
            if key in stability and (
                not isinstance(stability[key], int) or isinstance(stability[key], bool)
                or stability[key] <= 0
            ):
                errors.append(f"stability.{key} must be an integer greater than 0")
        if "backend" in stability and stability["backend"] not in [b.value for b in Backend]:
            errors.append("stability.backend must be one of: descent, cvxpy")
        return errors

    def _validate_application(self, application: Any) -> List[str]:
        """Validate Application configuration section."""
        errors: List[str] = []
        if not isinstance(application, dict):
            return ["application must be a dictionary"]

        if "logging" not in application:
            errors.append("application.logging is required")
        elif not isinstance(application["logging"], dict):
            errors.append("application.logging must be a dictionary")
        else:
            logging_config = application["logging"]

            if "level" not in logging_config:
                errors.append("application.logging.level is required")
            elif not isinstance(logging_config["level"], str):
                errors.append("application.logging.level must be a string")
            elif logging_config["level"].upper() not in VALID_LOG_LEVELS:
                errors.append(
                    f"application.logging.level must be one of: {', '.join(VALID_LOG_LEVELS)}"
                )

            if "format" in logging_config:
                if not isinstance(logging_config["format"], str):
                    errors.append("application.logging.format must be a string")
                elif not logging_config["format"].strip():
                    errors.append("application.logging.format cannot be empty")

        if "seed" in application and (
            not isinstance(application["seed"], int) or isinstance(application["seed"], bool)
        ):
            errors.append("application.seed must be an integer")
        if "workers" in application and (
            not isinstance(application["workers"], int) or application["workers"] <= 0
        ):
            errors.append("application.workers must be an integer greater than 0")
        if "output_dir" in application and not isinstance(application["output_dir"], str):
            errors.append("application.output_dir must be a string")

        return errors

    @staticmethod
    def _build_sim_config(simulation: Dict[str, Any]) -> SimConfig:
        reference = simulation.get("reference", {})
        noise = simulation.get("noise", {})
        feedforward = simulation.get("feedforward", {})
        return SimConfig(
            dt=float(simulation.get("dt", 1e-4)),
            duration=float(simulation.get("duration", 5.0)),
            reference=ReferenceConfig(
                peak_to_peak=float(reference.get("peak_to_peak_m", 1e-3)),
                period=float(reference.get("period_s", 0.5)),
                prefilter_corner=TWO_PI * float(reference.get("prefilter_corner_hz", 20.0)),
            ),
            noise=NoiseConfig(amplitude=float(noise.get("amplitude_nm", 5000.0)) * NM),
            feedforward=FeedforwardConfig(
                enabled=bool(feedforward.get("enabled", True)),
                lpf_corner=TWO_PI * float(feedforward.get("lpf_hz", 1000.0)),
                detune=float(feedforward.get("detune", 1.0)),
            ),
            discretization=Discretization(simulation.get("discretization", "zoh")),
            quantization=float(simulation.get("quantization_nm", 0.0)) * NM,
            max_pole_fraction=float(simulation.get("max_pole_fraction", 0.2)),
        )

    # Campaign properties
    @property
    def families(self) -> List[ControllerFamily]:
        """Get controller families."""
        return [ControllerFamily(f) for f in self._config["campaign"]["families"]]

    @property
    def gammas(self) -> List[float]:
        """Get reset factors."""
        return [float(g) for g in self._config["campaign"]["gammas"]]

    @property
    def mode(self) -> DesignMode:
        """Get design mode."""
        return DesignMode(self._config["campaign"].get("mode", DesignMode.TRACKING.value))

    # Plant properties
    @property
    def plant_builtin(self) -> str:
        return self._config.get("plant", {}).get("builtin", "spyder-1a")

    @property
    def plant_frf(self) -> Optional[str]:
        return self._config.get("plant", {}).get("frf")

    # Design properties
    @property
    def wc_hz(self) -> float:
        return float(self._config.get("design", {}).get("wc_hz", 100.0))

    @property
    def pm_deg(self) -> float:
        return float(self._config.get("design", {}).get("pm_deg", 30.0))

    @property
    def beta_r(self) -> float:
        return float(self._config.get("design", {}).get("beta_r", 1.0))

    @property
    def accounting(self) -> Accounting:
        return Accounting(self._config.get("design", {}).get("accounting", "full-pid"))

    @property
    def omega_high_hz(self) -> float:
        return float(self._config.get("design", {}).get("omega_high_hz", 10000.0))

    # Simulation properties
    @property
    def sim_config(self) -> SimConfig:
        """Get simulation settings with the noise seed taken from application.seed."""
        sim = self._build_sim_config(self._config.get("simulation", {}))
        return SimConfig(
            dt=sim.dt,
            duration=sim.duration,
            reference=sim.reference,
            noise=NoiseConfig(amplitude=sim.noise.amplitude, seed=self.seed),
            feedforward=sim.feedforward,
            discretization=sim.discretization,
            quantization=sim.quantization,
        )

    # Stability properties
    @property
    def stability_iterations(self) -> int:
        return int(self._config.get("stability", {}).get("iterations", DEFAULT_ITERATIONS))

    @property
    def stability_restarts(self) -> int:
        return int(self._config.get("stability", {}).get("restarts", DEFAULT_RESTARTS))

    @property
    def stability_backend(self) -> Backend:
        return Backend(self._config.get("stability", {}).get("backend", "descent"))

    # Application properties
    @property
    def log_level(self) -> str:
        """Get log level."""
        return self._config["application"]["logging"]["level"].upper()

    @property
    def log_format(self) -> Optional[str]:
        """Get log format string, None for the default."""
        return self._config["application"]["logging"].get("format")

    @property
    def seed(self) -> int:
        return int(self._config["application"].get("seed", 0))

    @property
    def workers(self) -> int:
        return int(self._config["application"].get("workers", 1))

    @property
    def output_dir(self) -> str:
        return self._config["application"].get("output_dir", "out")
