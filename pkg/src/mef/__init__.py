"""Exact minimum-energy attitude observer on the unit quaternions.

The observer propagates the unique minimizer of a quadratic signal-energy
cost together with the gradient and Hessian of the induced value function,
expressed in the ambient coordinates of the embedding space. The package
also ships a brute-force trajectory optimizer used to verify the observer
against direct numerical optimization, a simulation harness, and a small
command line (``mef simulate|check|sweep``).
"""

from .bruteforce import (
    DiscretizedProblem,
    InfeasibleTerminalError,
    check_critical_point,
    gradient_hessian_at,
    hjb_minimizer,
    hjb_minimizer_check,
    value_at,
)
from .config import (
    DEFAULTS,
    ConfigError,
    apply_overrides,
    build_run_config,
    load_config_file,
    merge_with_defaults,
    parse_config_text,
)
from .filter import (
    FilterConfig,
    ObserverState,
    SignalSample,
    SingularPError,
    SubstepRecord,
    correction_delta,
    gradient_rate,
    hessian_rate,
    init,
    optimality_residual,
    state_estimate,
    step,
    value_rate,
)
from .liegroup import (
    GeneratorBasis,
    GroupElement,
    NotInAlgebraError,
    adjoint_coords,
    exp_group,
    quaternion_basis,
    quaternion_wedge,
    upsilon,
    upsilon_bar,
    vee,
    wedge,
)
from .quaternion import (
    BASIS,
    XI_ORIGIN,
    AttitudeScenario,
    NoiseModel,
    Quaternion,
    attitude_error_angle,
    build_sample,
    group_from_quaternion,
    measurement_matrix,
    output_jacobian,
    propagate_quaternion,
    quat_product,
    rotate_to_body,
    velocity_coords,
)
from .simulation import (
    CSV_HEADER,
    LogRecord,
    RunConfig,
    TruthEpoch,
    corrupt,
    initial_observer_hessian,
    run,
    simulate_truth,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AttitudeScenario",
    "BASIS",
    "CSV_HEADER",
    "ConfigError",
    "DEFAULTS",
    "DiscretizedProblem",
    "FilterConfig",
    "GeneratorBasis",
    "GroupElement",
    "InfeasibleTerminalError",
    "LogRecord",
    "NoiseModel",
    "NotInAlgebraError",
    "ObserverState",
    "Quaternion",
    "RunConfig",
    "SignalSample",
    "SingularPError",
    "SubstepRecord",
    "TruthEpoch",
    "XI_ORIGIN",
    "adjoint_coords",
    "apply_overrides",
    "attitude_error_angle",
    "build_run_config",
    "build_sample",
    "check_critical_point",
    "corrupt",
    "correction_delta",
    "exp_group",
    "gradient_hessian_at",
    "gradient_rate",
    "group_from_quaternion",
    "hessian_rate",
    "hjb_minimizer",
    "hjb_minimizer_check",
    "init",
    "initial_observer_hessian",
    "load_config_file",
    "measurement_matrix",
    "merge_with_defaults",
    "optimality_residual",
    "output_jacobian",
    "parse_config_text",
    "propagate_quaternion",
    "quat_product",
    "quaternion_basis",
    "quaternion_wedge",
    "rotate_to_body",
    "run",
    "simulate_truth",
    "state_estimate",
    "step",
    "upsilon",
    "upsilon_bar",
    "value_at",
    "value_rate",
    "vee",
    "velocity_coords",
    "wedge",
    "write_csv",
]
