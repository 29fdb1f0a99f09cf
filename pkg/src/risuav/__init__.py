"""RIS-assisted UAV relay planner: joint trajectory, phase and power optimization."""

from .backend import ConvexProgram, SolveResult, SolverError, solve
from .energy import (
    energy_budget,
    propulsion_power,
    propulsion_power_slack,
    straight_line_min_energy,
    trajectory_energy,
)
from .geometry import (
    ChannelSet,
    EffectiveGains,
    LinkAngles,
    RISPhaseProfile,
    build_channels,
    cascade_channel,
    effective_gains_at,
    link_angles,
    mrt_effective_gains,
    optimal_ris_phase,
    phase_profile,
    ris_phase_matrix,
    steering_vector,
)
from .link_budget import LinkCoefficients, kappa_coefficients, rates, slack_snr, snr_set
from .optimizer import (
    InfeasibleError,
    JointResult,
    PowerSchedule,
    SCAState,
    Trajectory,
    capacity_lower_bound,
    init_straight_trajectory,
    power_upper_bound,
    rate_lower_bound,
    run_joint_optimization,
    solve_power_subproblem,
    solve_trajectory_subproblem,
    velocity_lower_bound,
)
from .scenario import (
    ConfigError,
    EnergyParams,
    ScenarioConfig,
    SimControls,
    baseline_scenario,
    load_scenario,
    save_scenario,
)

__version__ = "0.1.0"
