"""Alternating convex-surrogate optimization of trajectory, RIS phases and powers.

One outer iteration = a trajectory step (powers fixed, squared-distance
slacks linearized) followed by a power step (trajectory fixed, rates
linearized in the powers), with the RIS phases always set by the
closed-form alignment policy.  A trust region on the trajectory move,
shrunk when a step fails to reduce total transmit power, keeps the
surrogates honest and the power history monotone.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .backend import ConvexProgram, SolveResult, SolverError, solve
from .energy import SpeedFloorError, straight_line_min_energy, trajectory_energy
from .geometry import RISPhaseProfile, effective_gains_at, phase_profile
from .link_budget import kappa_coefficients, rates, snr_set, surrogate_per_watt
from .scenario import EnergyParams, ScenarioConfig, SimControls

log = logging.getLogger(__name__)

LN2 = math.log(2.0)

TRUST_RETRIES = 3          # halvings of the trust radius per outer iteration
POWER_INNER_CAP = 20       # inner linearization rounds of the power step


class InfeasibleError(RuntimeError):
    """No feasible point exists (or is attainable); names the constraint family."""

    def __init__(self, family: str, message: str):
        super().__init__(message)
        self.family = family


# ---------------------------------------------------------------------------
# First-order bounds
# ---------------------------------------------------------------------------

def rate_bound_coefficients(hat_gamma, slack_j):
    """Value and (positive) slope of the rate under-estimator at ``slack_j``.

    The bounded function log2(1 + hat/slack) is convex in the slack, so its
    tangent  value - slope * (slack - slack_j)  under-estimates globally.
    """
    hat = np.asarray(hat_gamma, dtype=float)
    sj = np.asarray(slack_j, dtype=float)
    if np.any(sj <= 0):
        raise ValueError("expansion slacks must be strictly positive")
    if np.any(hat < 0):
        raise ValueError("surrogate numerators must be nonnegative")
    value = np.log2(1.0 + hat / sj)
    slope = hat / (sj * (sj + hat) * LN2)
    return value, slope


def rate_lower_bound(hat_gamma, slack, slack_j):
    """Affine global under-estimator of log2(1 + hat_gamma / slack)."""
    value, slope = rate_bound_coefficients(hat_gamma, slack_j)
    return value - slope * (np.asarray(slack, dtype=float) - slack_j)


def capacity_lower_bound(hat_gamma, mu, mu_j):
    """Backhaul variant of :func:`rate_lower_bound` (same expansion in the BS slack)."""
    return rate_lower_bound(hat_gamma, mu, mu_j)


def velocity_lower_bound(v, v_j):
    """Affine global under-estimator of the squared speed ||v||^2."""
    v = np.asarray(v, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    return (v_j * v_j).sum(axis=-1) + 2.0 * (v_j * (v - v_j)).sum(axis=-1)


def power_bound_coefficients(p_j, kappa):
    """Value and slope of the rate over-estimator in the transmit power."""
    pj = np.asarray(p_j, dtype=float)
    kap = np.asarray(kappa, dtype=float)
    if np.any(pj < 0):
        raise ValueError("expansion powers must be nonnegative")
    value = np.log2(1.0 + pj * kap)
    slope = kap / ((1.0 + pj * kap) * LN2)
    return value, slope


def power_upper_bound(p, p_j, kappa):
    """Affine global over-estimator of log2(1 + p * kappa), tight at p_j."""
    value, slope = power_bound_coefficients(p_j, kappa)
    return value + slope * (np.asarray(p, dtype=float) - p_j)


# ---------------------------------------------------------------------------
# Iterate containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """N+1 positions (start and end pinned) and the N velocities linking them."""

    z: np.ndarray        # (N+1, 2) m
    v: np.ndarray        # (N, 2) m/s
    tau: float           # s

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if z.ndim != 2 or z.shape[1] != 2 or v.shape != (z.shape[0] - 1, 2):
            raise ValueError(f"inconsistent trajectory shapes z{z.shape} v{v.shape}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "v", v)

    @property
    def n_steps(self) -> int:
        return self.v.shape[0]

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=1)

    def step_positions(self) -> np.ndarray:
        """Position occupied during each timestep (the step's arrival point)."""
        return self.z[1:]

    def path_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.z, axis=0), axis=1).sum())


@dataclass(frozen=True)
class PowerSchedule:
    p_bs: np.ndarray     # (N,) W
    p_ue: np.ndarray     # (K, 2, N) W; [:, 0] direct link, [:, 1] RIS link

    def __post_init__(self):
        p_bs = np.asarray(self.p_bs, dtype=float)
        p_ue = np.asarray(self.p_ue, dtype=float)
        if np.any(p_bs < 0) or np.any(p_ue < 0) or not (np.isfinite(p_bs).all()
                                                        and np.isfinite(p_ue).all()):
            raise ValueError("powers must be finite and nonnegative")
        object.__setattr__(self, "p_bs", p_bs)
        object.__setattr__(self, "p_ue", p_ue)

    def total(self) -> float:
        return float(self.p_bs.sum() + self.p_ue.sum())

    def link_averages(self) -> tuple[float, float]:
        """(mean direct-link power, mean RIS-link power) over UEs and steps."""
        return float(self.p_ue[:, 0, :].mean()), float(self.p_ue[:, 1, :].mean())


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    p_total: float
    max_violation: float
    trust_radius: float


@dataclass
class SCAState:
    lam: np.ndarray          # (K, 2, N) squared-distance slacks, m^2
    mu: np.ndarray           # (N,) m^2
    pi: np.ndarray           # (N,) m/s
    iteration: int = 0
    p_total_history: list[float] = field(default_factory=list)
    status: str = "running"  # running | converged | max_iter | infeasible
    trace: list[TraceRecord] = field(default_factory=list)


@dataclass
class JointResult:
    scenario: ScenarioConfig
    state: SCAState
    trajectory: Trajectory | None = None
    powers: PowerSchedule | None = None
    phases: RISPhaseProfile | None = None
    iterates: list[np.ndarray] = field(default_factory=list)   # accepted z arrays
    e_min: float | None = None
    e_max: float | None = None

    @property
    def status(self) -> str:
        return self.state.status

    @property
    def p_total(self) -> float | None:
        return self.powers.total() if self.powers is not None else None


# ---------------------------------------------------------------------------
# Geometry helpers along a trajectory
# ---------------------------------------------------------------------------

def tight_slacks(scenario: ScenarioConfig, traj: Trajectory):
    """Slacks equal to the true squared link distances at each step position."""
    pos = traj.step_positions()
    ues = np.asarray(scenario.ue_positions)
    lam1 = ((ues[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2) + scenario.uav_height ** 2
    ris = np.asarray(scenario.ris_position)
    d_ur_sq = ((ris - pos) ** 2).sum(axis=1) + (scenario.uav_height - scenario.ris_height) ** 2
    lam2 = np.broadcast_to(d_ur_sq, (scenario.n_ues, traj.n_steps)).copy()
    bs = np.asarray(scenario.bs_position)
    mu = ((bs - pos) ** 2).sum(axis=1) + (scenario.uav_height - scenario.bs_height) ** 2
    return lam1, lam2, mu


def kappa_along(scenario: ScenarioConfig, positions):
    """Per-watt SNR coefficients at every position: (N,) and (K, 2, N)."""
    positions = np.atleast_2d(positions)
    kb = np.empty(len(positions))
    ku = np.empty((scenario.n_ues, 2, len(positions)))
    for n, xy in enumerate(positions):
        coeff = kappa_coefficients(scenario, xy)
        kb[n] = coeff.kappa_bs
        ku[:, :, n] = coeff.kappa_ue
    return kb, ku


def exact_link_rates(scenario: ScenarioConfig, traj: Trajectory, powers: PowerSchedule):
    """(capacity (N,), per-link rates (K,2,N)) from the beamformed gains."""
    pos = traj.step_positions()
    cap = np.empty(traj.n_steps)
    r_ue = np.empty((scenario.n_ues, 2, traj.n_steps))
    for n, xy in enumerate(pos):
        gains = effective_gains_at(scenario, xy)
        g_bs, g_ue = snr_set(gains, powers.p_bs[n], powers.p_ue[:, :, n],
                             scenario.noise_power_w)
        c, r, _ = rates(g_bs, g_ue)
        cap[n] = c
        r_ue[:, :, n] = r
    return cap, r_ue


def constraint_violations(scenario: ScenarioConfig, params: EnergyParams,
                          traj: Trajectory, powers: PowerSchedule,
                          e_max: float) -> dict[str, float]:
    """Worst-case violation of every original constraint family (0 = satisfied).

    Rates and speeds are absolute deficits in their own units; the energy
    budget is relative to ``e_max``.
    """
    cap, r_ue = exact_link_rates(scenario, traj, powers)
    r_sum = r_ue.sum(axis=1)                      # (K, N)
    rmin = np.asarray(scenario.r_min)[:, None]
    tau = traj.tau
    speeds = traj.speeds()
    dv = np.linalg.norm(np.diff(traj.v, axis=0), axis=1) if traj.n_steps > 1 else np.zeros(0)
    kin = traj.z[1:] - traj.z[:-1] - tau * traj.v
    energy = trajectory_energy(traj.v, tau, params, floor=1e-12)
    return {
        "C1-rate": float(np.clip(rmin - r_sum, 0, None).max()),
        "C2-backhaul": float(np.clip(r_sum.sum(axis=0) - cap, 0, None).max()),
        "C4-energy": max(0.0, (energy - e_max) / e_max),
        "C5-kinematics": float(np.abs(kin).max()),
        "C6-velocity": float(np.clip(speeds - scenario.v_max, 0, None).max()),
        "C7-acceleration": float(np.clip(dv - scenario.v_acc * tau, 0, None).max()) if dv.size else 0.0,
        "C9-start": float(np.abs(traj.z[0] - scenario.uav_start).max()),
        "C10-end": float(np.abs(traj.z[-1] - scenario.uav_end).max()),
        "C15-speed-floor": float(np.clip(scenario.pi_min - speeds, 0, None).max()),
    }


def max_violation(scenario, params, traj, powers, e_max) -> float:
    return max(constraint_violations(scenario, params, traj, powers, e_max).values())


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_straight_trajectory(scenario: ScenarioConfig) -> tuple[Trajectory, SCAState]:
    """Constant-velocity straight path with all slacks tight."""
    n = scenario.n_steps
    z0 = np.asarray(scenario.uav_start)
    zf = np.asarray(scenario.uav_end)
    speed = float(np.linalg.norm(zf - z0)) / (n * scenario.timestep_s)
    if speed < scenario.pi_min:
        raise InfeasibleError("C15-speed-floor",
                              f"straight-line speed {speed:.4f} m/s below pi_min "
                              f"{scenario.pi_min} m/s; hovering is outside the model")
    if speed > scenario.v_max:
        raise InfeasibleError("C6-velocity",
                              f"straight-line speed {speed:.4f} m/s exceeds v_max "
                              f"{scenario.v_max} m/s")
    frac = np.linspace(0.0, 1.0, n + 1)[:, None]
    z = z0[None, :] + frac * (zf - z0)[None, :]
    v = np.tile((zf - z0) / (n * scenario.timestep_s), (n, 1))
    traj = Trajectory(z=z, v=v, tau=scenario.timestep_s)
    lam1, lam2, mu = tight_slacks(scenario, traj)
    state = SCAState(lam=np.stack([lam1, lam2], axis=1), mu=mu, pi=traj.speeds())
    return traj, state


# ---------------------------------------------------------------------------
# Trajectory subproblem
# ---------------------------------------------------------------------------

def _budget_tight_shortcut(scenario, params, controls, traj_j, e_max):
    """Exact answer when the budget pins the unique feasible path.

    With the energy budget at the straight-line reference, the
    constant-speed straight path is the only trajectory whose slack
    propulsion power fits the budget; if the incumbent already is that
    path, solving a zero-interior conic program would only add solver
    noise.
    """
    try:
        e_min = straight_line_min_energy(scenario, params)
    except SpeedFloorError:
        return None
    if e_max > e_min * (1.0 + controls.solver_tol):
        return None
    frac = np.linspace(0.0, 1.0, scenario.n_steps + 1)[:, None]
    straight = (np.asarray(scenario.uav_start)[None, :]
                + frac * (np.asarray(scenario.uav_end)
                          - np.asarray(scenario.uav_start))[None, :])
    if np.abs(traj_j.z - straight).max() > 1e-6:
        return None
    lam1, lam2, mu = tight_slacks(scenario, traj_j)
    slacks = {"lam": np.stack([lam1, lam2], axis=1), "mu": mu, "pi": traj_j.speeds()}
    result = SolveResult(status="optimal",
                         objective=float(lam1.sum() + lam2.sum() + mu.sum()),
                         max_residual=0.0,
                         diagnostics={"solver": "analytic", "reason": "budget-tight"})
    return Trajectory(z=traj_j.z.copy(), v=traj_j.v.copy(), tau=traj_j.tau), slacks, result


def solve_trajectory_subproblem(scenario: ScenarioConfig, params: EnergyParams,
                                controls: SimControls, traj_j: Trajectory,
                                powers: PowerSchedule, e_max: float,
                                trust_radius: float | None = None):
    """One convex trajectory step around ``traj_j`` with powers held fixed.

    Returns (trajectory, state-slacks dict, SolveResult); the first two are
    None unless the solve came back optimal.
    """
    n = scenario.n_steps
    n_ue = scenario.n_ues
    tau = scenario.timestep_s
    radius = controls.trust_radius if trust_radius is None else trust_radius

    shortcut = _budget_tight_shortcut(scenario, params, controls, traj_j, e_max)
    if shortcut is not None:
        return shortcut

    lam1_j, lam2_j, mu_j = tight_slacks(scenario, traj_j)
    per_bs, per_ue = surrogate_per_watt(scenario)
    hat_ue = per_ue[:, :, None] * powers.p_ue           # (K, 2, N)
    hat_bs = per_bs * powers.p_bs                       # (N,)
    a1, b1 = rate_bound_coefficients(hat_ue[:, 0, :], lam1_j)
    a2, b2 = rate_bound_coefficients(hat_ue[:, 1, :], lam2_j)
    ab, bb = rate_bound_coefficients(hat_bs, mu_j)

    # Normalized units keep every constraint O(1) for the conic solver:
    # squared-distance slacks in units of the area diagonal squared, speed
    # epigraphs in units of v_max, the energy row relative to the budget.
    lsq = float(np.sum(np.square(scenario.area)))       # m^2
    vmax = scenario.v_max
    induced_num = params.induced_power * params.induced_velocity

    prog = ConvexProgram("trajectory-step")
    z = prog.variable("z", (n + 1, 2))
    v = prog.variable("v", (n, 2))
    lam1 = prog.variable("lam1", (n_ue, n))       # units of lsq
    lam2 = prog.variable("lam2", (n_ue, n))
    mu = prog.variable("mu", n)
    pi = prog.variable("pi", n)
    q = prog.variable("q", n, nonneg=True)        # >= (||v||/vmax)^2
    s = prog.variable("s", n, nonneg=True)        # >= ||v||/vmax
    t_inv = prog.variable("t_inv", n)             # >= 1/pi
    t_cub = prog.variable("t_cub", n, nonneg=True)  # >= s^3

    prog.add_affine_eq(z[0], np.asarray(scenario.uav_start), "C9-start")
    prog.add_affine_eq(z[n], np.asarray(scenario.uav_end), "C10-end")
    prog.add_affine_eq(z[1:], z[:-1] + tau * v, "C5-kinematics")
    prog.add_norm_le(v, scenario.v_max, "C6-velocity")
    if n > 1:
        prog.add_norm_le(v[1:] - v[:-1], scenario.v_acc * tau, "C7-acceleration")
        prog.add_norm_le(z[1:n] - traj_j.z[1:n], radius, "trust-region")

    # Linearized per-UE rate and backhaul-capacity requirements.
    rate_lb = ((a1 - cp.multiply(b1 * lsq, lam1 - lam1_j / lsq))
               + (a2 - cp.multiply(b2 * lsq, lam2 - lam2_j / lsq)))
    cap_lb = ab - cp.multiply(bb * lsq, mu - mu_j / lsq)
    rmin = np.tile(np.asarray(scenario.r_min)[:, None], (1, n))
    prog.add_affine_le(rmin, rate_lb, "C1-rate")
    prog.add_affine_le(cp.sum(rate_lb, axis=0), cap_lb, "C2-backhaul")

    # Squared-distance slacks (full 3-D distances; height offsets are constant).
    scale = math.sqrt(lsq)
    ues = np.asarray(scenario.ue_positions)
    h_ug_sq = scenario.uav_height ** 2
    h_ur_sq = (scenario.uav_height - scenario.ris_height) ** 2
    h_bu_sq = (scenario.uav_height - scenario.bs_height) ** 2
    for k in range(n_ue):
        prog.add_sq_le((z[1:] - ues[k]) / scale, lam1[k, :] - h_ug_sq / lsq, f"C11-ue{k}")
        prog.add_sq_le((z[1:] - np.asarray(scenario.ris_position)) / scale,
                       lam2[k, :] - h_ur_sq / lsq, f"C12-ris{k}")
    prog.add_sq_le((z[1:] - np.asarray(scenario.bs_position)) / scale,
                   mu - h_bu_sq / lsq, "C13-bs")

    # Speed slack: pi^2 below the linearized squared speed, floored.
    vel_lb = 2.0 * cp.sum(cp.multiply(traj_j.v / vmax ** 2, v), axis=1) \
        - (traj_j.v ** 2).sum(axis=1) / vmax ** 2
    prog.add_sq_le(pi / vmax, vel_lb, "C14-velocity-slack")
    prog.add_affine_le(np.full(n, scenario.pi_min), pi, "C15-speed-floor")

    # Energy budget via epigraphs of the three propulsion terms.
    prog.add_sq_le(v / vmax, q, "C4-blade-epigraph")
    prog.add_norm_le(v / vmax, s, "C4-speed-epigraph")
    prog.add_ratio_le(np.ones(n), pi, t_inv, "C4-induced-epigraph")
    prog.add_cubic_le(s, t_cub, "C4-parasite-epigraph")
    blade_coeff = 3.0 * params.blade_power / (params.omega ** 2 * params.rotor_radius ** 2)
    parasite_coeff = 0.5 * (params.fuselage_drag * params.air_density
                            * params.rotor_solidity * params.rotor_disc_area)
    e_used = (tau / e_max) * (n * params.blade_power
                              + blade_coeff * vmax ** 2 * cp.sum(q)
                              + induced_num * cp.sum(t_inv)
                              + parasite_coeff * vmax ** 3 * cp.sum(t_cub))
    prog.add_affine_le(e_used, 1.0, "C4-energy")

    if controls.aux_objective == "propulsion":
        prog.minimize(tau * (blade_coeff * vmax ** 2 * cp.sum(q)
                             + induced_num * cp.sum(t_inv)
                             + parasite_coeff * vmax ** 3 * cp.sum(t_cub)) / e_max)
    else:
        # Pull the path toward the UEs, the RIS and the BS; the binding rate
        # and budget constraints push back.
        prog.minimize(cp.sum(lam1) + cp.sum(lam2) + cp.sum(mu))

    result = solve(prog, controls)
    if result.status != "optimal":
        return None, None, result

    z_new = result.values["z"]
    z_new[0] = scenario.uav_start
    z_new[-1] = scenario.uav_end
    traj = Trajectory(z=z_new, v=result.values["v"], tau=tau)
    slacks = {
        "lam": np.stack([result.values["lam1"], result.values["lam2"]], axis=1) * lsq,
        "mu": result.values["mu"] * lsq,
        "pi": result.values["pi"],
    }
    return traj, slacks, result


# ---------------------------------------------------------------------------
# Power subproblem
# ---------------------------------------------------------------------------

def _log10_required_power(rate_bits: float, kappa: float) -> float:
    """log10 of the power solving log2(1 + p*kappa) = rate_bits, overflow-free."""
    x = rate_bits * LN2
    log10_gamma = rate_bits * math.log10(2.0) if x > 50.0 else math.log10(math.expm1(x))
    return log10_gamma - math.log10(kappa)


def _attainability_guard(scenario: ScenarioConfig, controls: SimControls,
                         kappa_bs: np.ndarray, kappa_ue: np.ndarray) -> None:
    rmin = np.asarray(scenario.r_min)
    cap_log10 = math.log10(controls.max_power_w)
    # Backhaul must carry at least the aggregate requirement at every step.
    need = _log10_required_power(float(rmin.sum()), float(kappa_bs.min()))
    if need > cap_log10:
        raise InfeasibleError(
            "C2-backhaul",
            f"aggregate requirement {rmin.sum():.3g} bits/s/Hz needs ~1e{need:.0f} W "
            f"of BS power, above the {controls.max_power_w:.3g} W attainability cap")
    # Each UE needs at least (2^(r/2)-1)/best-kappa even with an ideal split.
    for k in range(scenario.n_ues):
        best = kappa_ue[k].max(axis=0)          # (N,) best link per step
        need = _log10_required_power(rmin[k] / 2.0, float(best.min()))
        if need > cap_log10:
            raise InfeasibleError(
                "C1-rate",
                f"UE {k} requirement {rmin[k]:.3g} bits/s/Hz needs >1e{need:.0f} W, "
                f"above the {controls.max_power_w:.3g} W attainability cap")


def _restore_rate_feasibility(x_ue: np.ndarray, kappa: np.ndarray,
                              rmin: np.ndarray, tie: bool) -> np.ndarray:
    """Scale each UE's link powers up until its true sum rate meets the target.

    The upward scale factor solves a 1-D concave root problem per (UE, step);
    Newton from below converges monotonically.  Entries with no power to
    scale fall back to the single-best-link closed form.
    """
    x = x_ue.copy()
    gam = x * kappa                                  # (K, 2, N) SNRs
    targets = rmin * LN2                             # nats
    short = np.log1p(gam).sum(axis=1) < targets[:, None] - 1e-15
    for k, n in zip(*np.nonzero(short)):
        target = targets[k]
        need = math.expm1(target)
        if gam[k, :, n].max() <= 0.0:
            if tie:
                # Seed below the tied solution; the Newton scale finishes it.
                x[k, :, n] = need / kappa[k, :, n].sum()
            else:
                best = int(np.argmax(kappa[k, :, n]))
                x[k, best, n] = need / kappa[k, best, n]
                continue
        a = x[k, :, n] * kappa[k, :, n]
        f = 1.0
        for _ in range(60):
            h = np.log1p(f * a).sum()
            if target - h <= 1e-14 * max(1.0, target):
                break
            slope = (a / (1.0 + f * a)).sum()
            f += (target - h) / slope
        x[k, :, n] *= f
    return x


def solve_power_subproblem(scenario: ScenarioConfig, controls: SimControls,
                           traj: Trajectory, powers_init: PowerSchedule | None = None,
                           inner_cap: int = POWER_INNER_CAP):
    """Minimize total transmit power along a fixed trajectory.

    Inner loop: rates are replaced by their affine over-estimators at the
    current iterate and the resulting LP is re-solved.  Because a tangent
    step can leave the true rates short (and, with two comparable links,
    oscillate between them), every LP solution is followed by an exact
    feasibility restoration: UE powers are scaled up to meet the rate
    targets and the BS power is set from the closed-form capacity
    requirement.  The best restored point is kept, so the returned schedule
    satisfies the exact rate and backhaul constraints to float precision.

    Returns (PowerSchedule, info dict).
    """
    n = traj.n_steps
    n_ue = scenario.n_ues
    kappa_bs, kappa_ue = kappa_along(scenario, traj.step_positions())
    _attainability_guard(scenario, controls, kappa_bs, kappa_ue)
    rmin = np.asarray(scenario.r_min)

    # Work in units of the largest closed-form power the solution can
    # actually need (each UE rides its best link), so the LP sees O(1)
    # numbers regardless of the absolute watt scale.
    best_kappa = kappa_ue.max(axis=1)                    # (K, N)
    scale_ue = ((2.0 ** rmin[:, None] - 1.0) / best_kappa).max()
    scale_bs = (2.0 ** rmin.sum() - 1.0) / kappa_bs.min()
    p_scale = max(scale_ue, scale_bs)
    kb = kappa_bs * p_scale
    ku = kappa_ue * p_scale
    # Links too weak to matter are structurally removed from the LP (their
    # true-rate contribution stays in the restoration, which uses exact SNRs).
    ku_eff = ku.copy()
    ku_eff[ku < 1e-12 * ku.max()] = 0.0

    def restore(x_ue, x_bs):
        x_ue = _restore_rate_feasibility(x_ue, ku, rmin, scenario.tie_link_powers)
        sum_rates = np.log2(1.0 + x_ue * ku).sum(axis=(0, 1))        # (N,)
        if np.max(sum_rates) * LN2 > 700.0:
            raise InfeasibleError("C2-backhaul", "aggregate rate overflows the "
                                                 "attainable backhaul range")
        x_bs_req = np.expm1(sum_rates * LN2) / kb
        return x_ue, np.maximum(x_bs, x_bs_req)

    def deficit_of(x_ue, x_bs):
        r_true = np.log2(1.0 + x_ue * ku)
        c_true = np.log2(1.0 + x_bs * kb)
        return max(float(np.clip(rmin[:, None] - r_true.sum(axis=1), 0, None).max()),
                   float(np.clip(r_true.sum(axis=(0, 1)) - c_true, 0, None).max()))

    if powers_init is None:
        x_ue = np.zeros((n_ue, 2, n))
        x_bs = np.zeros(n)
    else:
        x_ue = powers_init.p_ue / p_scale
        x_bs = powers_init.p_bs / p_scale
    x_ue, x_bs = restore(x_ue, x_bs)
    best = (x_ue, x_bs)
    p_best = float(x_bs.sum() + x_ue.sum())
    p_prev = p_best

    tie = scenario.tie_link_powers
    info = {"inner_iterations": 0, "deficit": deficit_of(*best)}
    for it in range(inner_cap):
        a_ue, b_ue = power_bound_coefficients(x_ue, ku_eff)  # (K,2,N)
        a_bs, b_bs = power_bound_coefficients(x_bs, kb)      # (N,)

        prog = ConvexProgram("power-step")
        if tie:
            xu = prog.variable("x_ue", (n_ue, n), nonneg=True)
            links = [xu, xu]
        else:
            x1 = prog.variable("x_ue1", (n_ue, n), nonneg=True)
            x2 = prog.variable("x_ue2", (n_ue, n), nonneg=True)
            links = [x1, x2]
        xb = prog.variable("x_bs", n, nonneg=True)

        over_ue = [a_ue[:, i, :] + cp.multiply(b_ue[:, i, :], links[i] - x_ue[:, i, :])
                   for i in (0, 1)]
        over_bs = a_bs + cp.multiply(b_bs, xb - x_bs)
        rmin_t = np.broadcast_to(rmin[:, None], (n_ue, n))
        prog.add_affine_le(rmin_t, over_ue[0] + over_ue[1], "C1-rate")
        prog.add_affine_le(cp.sum(over_ue[0] + over_ue[1], axis=0), over_bs, "C2-backhaul")
        if tie:
            prog.minimize(cp.sum(xb) + 2.0 * cp.sum(xu))
        else:
            prog.minimize(cp.sum(xb) + cp.sum(x1) + cp.sum(x2))

        result = solve(prog, controls)
        if result.status != "optimal":
            raise SolverError(
                f"power subproblem {result.status} at inner iteration {it}: "
                f"{result.diagnostics}")
        xb_lp = np.maximum(result.values["x_bs"], 0.0)
        if tie:
            xu_v = np.maximum(result.values["x_ue"], 0.0)
            xu_lp = np.stack([xu_v, xu_v], axis=1)
        else:
            xu_lp = np.stack([np.maximum(result.values["x_ue1"], 0.0),
                              np.maximum(result.values["x_ue2"], 0.0)], axis=1)

        x_ue, x_bs = restore(xu_lp, xb_lp)
        p_total = float(x_bs.sum() + x_ue.sum())
        if p_total < p_best:
            best = (x_ue, x_bs)
            p_best = p_total
        info["inner_iterations"] = it + 1
        rel = abs(p_prev - p_total) / max(p_total, 1e-300)
        p_prev = p_total
        if rel <= controls.convergence_tol:
            break

    x_ue, x_bs = best
    info["deficit"] = deficit_of(x_ue, x_bs)
    powers = PowerSchedule(p_bs=x_bs * p_scale, p_ue=x_ue * p_scale)
    if np.max(powers.p_bs) > controls.max_power_w or np.max(powers.p_ue) > controls.max_power_w:
        raise InfeasibleError("C1-rate", "optimal transmit power exceeds the attainability cap")
    return powers, info


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------

def run_joint_optimization(scenario: ScenarioConfig,
                           params: EnergyParams | None = None,
                           controls: SimControls | None = None) -> JointResult:
    """Alternate trajectory and power steps until the total power settles."""
    params = params or EnergyParams()
    controls = controls or SimControls()

    try:
        traj, state = init_straight_trajectory(scenario)
    except InfeasibleError as exc:
        log.warning("infeasible at initialization (%s): %s", exc.family, exc)
        state = SCAState(lam=np.zeros((scenario.n_ues, 2, 0)), mu=np.zeros(0),
                         pi=np.zeros(0), status="infeasible")
        return JointResult(scenario=scenario, state=state)

    e_min = straight_line_min_energy(scenario, params)
    e_max = scenario.energy_budget_multiplier * e_min
    result = JointResult(scenario=scenario, state=state, trajectory=traj,
                         e_min=e_min, e_max=e_max, iterates=[traj.z.copy()])

    try:
        powers, _ = solve_power_subproblem(scenario, controls, traj)
    except InfeasibleError as exc:
        log.warning("infeasible at iteration 0 (%s): %s", exc.family, exc)
        state.status = "infeasible"
        return result

    p_total = powers.total()
    state.p_total_history.append(p_total)
    viol = max_violation(scenario, params, traj, powers, e_max)
    state.trace.append(TraceRecord(0, p_total, viol, controls.trust_radius))
    result.powers = powers

    if e_max <= e_min * (1.0 + controls.solver_tol):
        # Budget equals the straight-line reference: the constant-speed
        # straight path is the only feasible trajectory, so the iteration 0
        # power solve is already the answer.
        state.status = "converged"
        result.phases = phase_profile(scenario, traj.step_positions())
        return result

    for j in range(1, controls.max_iterations + 1):
        state.iteration = j
        radius = controls.trust_radius
        accepted = None
        candidates_seen = 0
        for attempt in range(TRUST_RETRIES + 1):
            traj_cand, slacks, sol = solve_trajectory_subproblem(
                scenario, params, controls, traj, powers, e_max, trust_radius=radius)
            if traj_cand is None:
                # The previous iterate is feasible, so a non-optimal status is
                # a numerical artifact; a smaller step usually recovers.
                log.debug("trajectory step %s at radius %.3g: %s",
                          sol.status, radius, sol.diagnostics)
                radius *= 0.5
                continue
            candidates_seen += 1
            try:
                powers_cand, _ = solve_power_subproblem(
                    scenario, controls, traj_cand, powers_init=powers)
            except InfeasibleError:
                radius *= 0.5
                continue
            p_cand = powers_cand.total()
            if p_cand <= p_total * (1.0 + controls.solver_tol):
                accepted = (traj_cand, slacks, powers_cand, p_cand, radius)
                break
            radius *= 0.5

        if accepted is None:
            if candidates_seen == 0:
                # The previous iterate is a known feasible point, so an
                # across-the-board solver failure must be surfaced, not
                # passed off as convergence.
                raise SolverError(
                    f"trajectory subproblem failed at every trust radius in "
                    f"iteration {j} despite a feasible incumbent")
            # Candidates existed but none reduced total power inside the
            # smallest trust region: the alternation has converged.
            state.status = "converged"
            break

        traj, slacks, powers, p_new, radius = accepted
        state.lam = slacks["lam"]
        state.mu = slacks["mu"]
        state.pi = slacks["pi"]
        result.trajectory = traj
        result.powers = powers
        result.iterates.append(traj.z.copy())
        state.p_total_history.append(p_new)
        viol = max_violation(scenario, params, traj, powers, e_max)
        state.trace.append(TraceRecord(j, p_new, viol, radius))

        rel = (p_total - p_new) / max(p_new, 1e-300)
        p_total = p_new
        if rel <= controls.convergence_tol:
            state.status = "converged"
            break
    else:
        state.status = "max_iter"

    result.phases = phase_profile(scenario, traj.step_positions())
    final_viol = max_violation(scenario, params, traj, powers, e_max)
    if final_viol > 10.0 * controls.solver_tol:
        log.warning("returned solution violates exact constraints by %.3g "
                    "(beyond 10x solver_tol); inspect the trace", final_viol)
    return result
