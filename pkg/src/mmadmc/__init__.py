"""Batch MMA polymerization: simulation, local linear models, and DMC.

The package splits into a nonlinear reactor model (kinetics, integrator), a
linearization layer producing a bank of local models along the batch
trajectory (linmodel), a dynamic matrix controller with a state-space free
response (dmc), time-scheduled model switching (scheduler), and a
closed-loop harness plus YAML configuration and CLI (harness, config, cli).
"""

__version__ = "0.1.0"

from .config import default_config_path, load_config
from .dmc import (
    ControllerState,
    ControlResult,
    DmcConfig,
    DmcGain,
    build_dynamic_matrix,
    compute_gain,
    control_step,
    init_controller,
    make_gain,
    predict_free_response,
    reference_trajectory,
)
from .errors import (
    ConfigurationError,
    InvalidParameterError,
    NumericError,
    RangeError,
)
from .harness import (
    BankConfig,
    DisturbanceConfig,
    RunConfig,
    ScenarioConfig,
    SimResult,
    build_bank_for_run,
    compute_metrics,
    run,
    run_closed_loop,
    write_csv,
)
from .integrator import (
    IntegratorConfig,
    OpenLoopResult,
    rk4_step,
    simulate_open_loop,
)
from .kinetics import (
    PlantParams,
    RateSet,
    ReactorState,
    ccs_rate_constants,
    derivatives,
    mixture_volume,
    polymer_volume_fraction,
    volumetric_factor,
)
from .linmodel import (
    CELSIUS_ZERO,
    LinearModel,
    OperatingPoint,
    assemble_model,
    build_model_bank,
    linearize,
    settle_length,
    ss_to_tf,
    step_response,
    zoh_discretize,
)
from .scheduler import Schedule, active_model, switch_model

__all__ = [
    "__version__",
    "default_config_path", "load_config",
    "ControllerState", "ControlResult", "DmcConfig", "DmcGain",
    "build_dynamic_matrix", "compute_gain", "control_step",
    "init_controller", "make_gain", "predict_free_response",
    "reference_trajectory",
    "ConfigurationError", "InvalidParameterError", "NumericError",
    "RangeError",
    "BankConfig", "DisturbanceConfig", "RunConfig", "ScenarioConfig",
    "SimResult", "build_bank_for_run", "compute_metrics", "run",
    "run_closed_loop", "write_csv",
    "IntegratorConfig", "OpenLoopResult", "rk4_step", "simulate_open_loop",
    "PlantParams", "RateSet", "ReactorState", "ccs_rate_constants",
    "derivatives", "mixture_volume", "polymer_volume_fraction",
    "volumetric_factor",
    "CELSIUS_ZERO", "LinearModel", "OperatingPoint", "assemble_model",
    "build_model_bank", "linearize", "settle_length", "ss_to_tf",
    "step_response", "zoh_discretize",
    "Schedule", "active_model", "switch_model",
]
