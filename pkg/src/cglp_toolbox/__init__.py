"""CgLp reset-control toolbox."""

from .cglp import CgLpElement, CgLpOrder, CgLpSpec, build_cglp
from .config import Config, ConfigValidationError
from .describing_function import FrequencyGrid, FrequencyResponse, df_response, df_sweep
from .loop_shaping import (
    ControllerDesign,
    ControllerFamily,
    DesignError,
    InfeasibleDesignError,
    PlantModel,
    builtin_plant,
    design_bandwidth,
    design_tracking_precision,
)
from .model_core import (
    ElementKind,
    ElementSpec,
    EvaluationError,
    ModelError,
    ResetController,
    StateSpace,
    make_element,
)
from .sim_engine import SimConfig, SimulationError, simulate
from .spectral import SpectralError, estimate_frf, first_harmonic
from .stability import Verdict, check_design, find_certificate

__version__ = "0.1.0"

__all__ = [
    "CgLpElement",
    "CgLpOrder",
    "CgLpSpec",
    "Config",
    "ConfigValidationError",
    "ControllerDesign",
    "ControllerFamily",
    "DesignError",
    "ElementKind",
    "ElementSpec",
    "EvaluationError",
    "FrequencyGrid",
    "FrequencyResponse",
    "InfeasibleDesignError",
    "ModelError",
    "PlantModel",
    "ResetController",
    "SimConfig",
    "SimulationError",
    "SpectralError",
    "StateSpace",
    "Verdict",
    "build_cglp",
    "builtin_plant",
    "check_design",
    "design_bandwidth",
    "design_tracking_precision",
    "df_response",
    "df_sweep",
    "estimate_frf",
    "find_certificate",
    "first_harmonic",
    "make_element",
    "simulate",
]
