"""Fluid-model and event-driven analysis of loss-based congestion control.

The package splits into a deterministic track (delay fluid model, fixed
points, Lyapunov convergence certificates) and a stochastic track (an
event-driven simulator whose losses follow a non-homogeneous Poisson
process), built to cross-validate each other.
"""

from .core import (
    FlowState,
    SystemParams,
    WindowFunction,
    cbrt,
    fluid_rhs,
    loss_probability,
)
from .dde import (
    HistoryBuffer,
    InitialHistory,
    IntegrationError,
    Trajectory,
    convergence_order_check,
    integrate,
)
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    build_config,
    read_config_file,
    run_experiment,
)
from .fixedpoint import (
    FixedPoint,
    SolverError,
    bracket_sign_changes,
    cubic_fixed_point,
    cubic_w_of_p,
    reno_fixed_point,
    reno_steady_state,
    solve_window_equation,
)
from .nhpl import (
    Event,
    RngStream,
    SimResult,
    SimState,
    compute_T,
    generate_poi_loss,
    inter_loss_times,
    inverse_transform_T,
    make_sim_state,
    pick_losing_flow,
    run_simulation,
    t_bdp,
)
from .protocols import (
    CUBIC,
    FROZEN,
    RENO,
    ShiftedState,
    cubic_shifted_rhs,
    from_shifted,
    loss_reset,
    shifted_window,
    to_shifted,
    window_function,
)
from .stability import (
    DiagnosticTrace,
    LyapunovParams,
    QtildeMatrix,
    basin_delta,
    convergence_bound,
    cubic_truncation_x1dot,
    expansion_coeffs,
    linearized_x2dot,
    loglog_slope,
    lyapunov_V,
    lyapunov_params,
    qtilde,
    razumikhin_mask,
    shifted_samples,
    stability_trace,
    vdot_along,
    vdot_exact,
)

__all__ = [name for name in dir() if not name.startswith("_")]
