import numpy as np
import pytest

from risuav.energy import straight_line_min_energy, trajectory_energy
from risuav.link_budget import kappa_coefficients, slack_snr
from risuav.optimizer import (
    InfeasibleError,
    constraint_violations,
    init_straight_trajectory,
    kappa_along,
    run_joint_optimization,
    solve_power_subproblem,
    solve_trajectory_subproblem,
    tight_slacks,
)
from risuav.scenario import EnergyParams, ScenarioConfig, SimControls

PARAMS = EnergyParams()
CTL = SimControls()


def small_scenario(**overrides):
    """Baseline geometry at a coarser time resolution for fast tests."""
    kwargs = dict(n_steps=10, timestep_s=5.0)
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


# -- initialization ----------------------------------------------------------------


def test_straight_initialization_velocities():
    sc = ScenarioConfig()
    traj, state = init_straight_trajectory(sc)
    assert np.allclose(traj.v, [10.0, 10.0])
    assert np.allclose(traj.z[0], sc.uav_start)
    assert np.allclose(traj.z[-1], sc.uav_end)
    assert np.allclose(traj.z[1:] - traj.z[:-1], traj.v * traj.tau)
    assert np.allclose(state.pi, traj.speeds())


def test_initial_slacks_make_surrogates_exact():
    sc = ScenarioConfig()
    traj, state = init_straight_trajectory(sc)
    n = 7
    xy = traj.step_positions()[n]
    coeff = kappa_coefficients(sc, xy, p_bs=1e-9, p_ue=np.full((3, 2), 1e-10))
    g_bs, g_ue = slack_snr(coeff, state.lam[:, :, n], state.mu[n])
    assert g_bs == pytest.approx(1e-9 * coeff.kappa_bs, rel=1e-12)
    assert np.allclose(g_ue, 1e-10 * coeff.kappa_ue, rtol=1e-12)


def test_degenerate_endpoints_rejected():
    sc = ScenarioConfig(uav_start=(100.0, 100.0), uav_end=(100.0, 100.0))
    with pytest.raises(InfeasibleError):
        init_straight_trajectory(sc)


# -- power subproblem --------------------------------------------------------------


def test_power_single_link_closed_form():
    # RIS pushed out of relevance: the direct link carries everything and the
    # optimum has the textbook closed form per step.
    sc = small_scenario(ue_positions=((250.0, 250.0),), ris_position=(1e7, 1e7),
                        r_min=(0.4,))
    traj, _ = init_straight_trajectory(sc)
    powers, info = solve_power_subproblem(sc, CTL, traj)
    kb, ku = kappa_along(sc, traj.step_positions())
    expected = (2.0**0.4 - 1.0) / ku[0, 0, :]
    assert np.allclose(powers.p_ue[0, 0, :], expected, rtol=1e-6)
    assert np.all(powers.p_ue[0, 1, :] <= 1e-15)
    assert np.allclose(powers.p_bs, (2.0**0.4 - 1.0) / kb, rtol=1e-6)
    assert info["deficit"] <= CTL.solver_tol


def test_power_vanishes_with_rate_requirement():
    sc = small_scenario(r_min=(1e-9,))
    traj, _ = init_straight_trajectory(sc)
    powers, _ = solve_power_subproblem(sc, CTL, traj)
    assert powers.total() <= 1e-16


def test_power_prefers_much_better_ris_link():
    sc = small_scenario(ue_positions=((250.0, 240.0),), ris_position=(250.0, 260.0))
    traj, _ = init_straight_trajectory(sc)
    powers, _ = solve_power_subproblem(sc, CTL, traj)
    kb, ku = kappa_along(sc, traj.step_positions())
    r_direct = np.log2(1 + powers.p_ue[0, 0, :] * ku[0, 0, :])
    r_ris = np.log2(1 + powers.p_ue[0, 1, :] * ku[0, 1, :])
    assert np.all(r_ris > r_direct)
    assert r_ris.mean() == pytest.approx(sc.r_min[0], rel=1e-6)


def test_power_result_exactly_feasible():
    sc = small_scenario()
    traj, _ = init_straight_trajectory(sc)
    powers, info = solve_power_subproblem(sc, CTL, traj)
    e_max = 2 * straight_line_min_energy(sc, PARAMS)
    viol = constraint_violations(sc, PARAMS, traj, powers, e_max)
    assert viol["C1-rate"] <= 1e-9
    assert viol["C2-backhaul"] <= 1e-9


def test_power_respects_tie_flag():
    sc = small_scenario(tie_link_powers=True)
    traj, _ = init_straight_trajectory(sc)
    powers, _ = solve_power_subproblem(sc, CTL, traj)
    assert np.allclose(powers.p_ue[:, 0, :], powers.p_ue[:, 1, :])
    e_max = 2 * straight_line_min_energy(sc, PARAMS)
    assert constraint_violations(sc, PARAMS, traj, powers, e_max)["C1-rate"] <= 1e-9


def test_power_attainability_guard():
    sc = small_scenario(r_min=(60.0,))
    traj, _ = init_straight_trajectory(sc)
    with pytest.raises(InfeasibleError) as err:
        solve_power_subproblem(sc, CTL, traj)
    assert "backhaul" in err.value.family or "rate" in err.value.family


# -- trajectory subproblem ---------------------------------------------------------


def run_one_power_then_trajectory(sc):
    traj, _ = init_straight_trajectory(sc)
    powers, _ = solve_power_subproblem(sc, CTL, traj)
    e_max = sc.energy_budget_multiplier * straight_line_min_energy(sc, PARAMS)
    new_traj, slacks, res = solve_trajectory_subproblem(sc, PARAMS, CTL, traj, powers,
                                                        e_max)
    return traj, powers, new_traj, slacks, res, e_max


def test_trajectory_step_improves_pull_objective():
    sc = small_scenario()
    traj, powers, new_traj, slacks, res, e_max = run_one_power_then_trajectory(sc)
    assert res.status == "optimal"
    lam1_0, lam2_0, mu_0 = tight_slacks(sc, traj)
    lam1_1, lam2_1, mu_1 = tight_slacks(sc, new_traj)
    obj0 = lam1_0.sum() + lam2_0.sum() + mu_0.sum()
    obj1 = lam1_1.sum() + lam2_1.sum() + mu_1.sum()
    assert obj1 <= obj0 * (1 + 1e-9)


def test_trajectory_step_with_negligible_rate_keeps_straight_line_optimal():
    # With no rate pull-back the returned path must beat (or match) the
    # straight line on the auxiliary objective among feasible paths.
    sc = small_scenario(r_min=(1e-9,))
    traj, powers, new_traj, slacks, res, e_max = run_one_power_then_trajectory(sc)
    assert res.status == "optimal"
    lam1_s, lam2_s, mu_s = tight_slacks(sc, traj)
    lam1_n, lam2_n, mu_n = tight_slacks(sc, new_traj)
    assert (lam1_n.sum() + lam2_n.sum() + mu_n.sum()
            <= lam1_s.sum() + lam2_s.sum() + mu_s.sum())


def test_trajectory_step_respects_kinematics_and_energy():
    sc = small_scenario()
    traj, powers, new_traj, slacks, res, e_max = run_one_power_then_trajectory(sc)
    tau = sc.timestep_s
    assert np.abs(new_traj.z[1:] - new_traj.z[:-1] - tau * new_traj.v).max() <= 1e-5
    assert new_traj.speeds().max() <= sc.v_max * (1 + 1e-6)
    dv = np.linalg.norm(np.diff(new_traj.v, axis=0), axis=1)
    assert dv.max() <= sc.v_acc * tau * (1 + 1e-6)
    assert trajectory_energy(new_traj.v, tau, PARAMS, floor=1e-9) <= e_max * (1 + 1e-6)
    # Slack consistency: returned slacks upper-bound the true squared distances.
    lam1, lam2, mu = tight_slacks(sc, new_traj)
    assert np.all(slacks["lam"][:, 0, :] >= lam1 * (1 - 1e-6))
    assert np.all(slacks["mu"] >= mu * (1 - 1e-6))


def test_trajectory_step_survives_independent_reevaluation():
    # Re-derive every constraint family of the real subproblem from the
    # returned variables with plain numpy (no solver, no cvxpy).
    sc = small_scenario()
    traj, powers, new_traj, slacks, res, e_max = run_one_power_then_trajectory(sc)
    assert res.status == "optimal"
    tol = 10 * CTL.solver_tol
    n, tau = sc.n_steps, sc.timestep_s
    z, v = new_traj.z, new_traj.v
    lam, mu, pi = slacks["lam"], slacks["mu"], slacks["pi"]

    # Kinematics, endpoints, speed and acceleration cones.
    assert np.abs(z[1:] - z[:-1] - tau * v).max() <= tol * max(1, np.abs(z).max())
    assert np.allclose(z[0], sc.uav_start) and np.allclose(z[-1], sc.uav_end)
    assert new_traj.speeds().max() <= sc.v_max * (1 + tol)
    assert np.linalg.norm(np.diff(v, axis=0), axis=1).max() <= sc.v_acc * tau * (1 + tol)

    # Squared-distance slack cones (full 3-D distances).  Tolerance follows
    # the solver's accuracy model: absolute in units of the problem scale.
    lsq = float(np.sum(np.square(sc.area)))
    lam1_true, lam2_true, mu_true = tight_slacks(sc, new_traj)
    assert np.all(lam1_true <= slacks["lam"][:, 0, :] + tol * lsq)
    assert np.all(lam2_true <= slacks["lam"][:, 1, :] + tol * lsq)
    assert np.all(mu_true <= mu + tol * lsq)

    # Linearized rate and backhaul constraints at the returned slacks.
    from risuav.link_budget import surrogate_per_watt
    from risuav.optimizer import capacity_lower_bound, rate_lower_bound
    lam1_j, lam2_j, mu_j = tight_slacks(sc, traj)
    per_bs, per_ue = surrogate_per_watt(sc)
    lb = (rate_lower_bound(per_ue[:, 0, None] * powers.p_ue[:, 0, :],
                           slacks["lam"][:, 0, :], lam1_j)
          + rate_lower_bound(per_ue[:, 1, None] * powers.p_ue[:, 1, :],
                             slacks["lam"][:, 1, :], lam2_j))
    assert np.all(lb >= np.asarray(sc.r_min)[:, None] - tol)
    cap = capacity_lower_bound(per_bs * powers.p_bs, mu, mu_j)
    assert np.all(lb.sum(axis=0) <= cap + tol)

    # Speed slack and the budget with the slack-divided induced term.
    vel_lb = (traj.v**2).sum(axis=1) + 2 * (traj.v * (v - traj.v)).sum(axis=1)
    assert np.all(pi**2 <= vel_lb * (1 + tol) + tol)
    assert np.all(pi >= sc.pi_min - tol)
    from risuav.energy import propulsion_power_slack
    speeds = new_traj.speeds()
    e_slack = sum(propulsion_power_slack(s_, p_, PARAMS, floor=sc.pi_min / 2)
                  for s_, p_ in zip(speeds, pi)) * tau
    assert e_slack <= e_max * (1 + tol)


def test_trajectory_step_budget_tight_returns_exact_straight_line():
    sc = small_scenario(energy_budget_multiplier=1.0)
    traj, _ = init_straight_trajectory(sc)
    powers, _ = solve_power_subproblem(sc, CTL, traj)
    e_min = straight_line_min_energy(sc, PARAMS)
    new_traj, slacks, res = solve_trajectory_subproblem(sc, PARAMS, CTL, traj, powers,
                                                        e_min)
    assert res.status == "optimal"
    assert np.array_equal(new_traj.z, traj.z)
    lam1, lam2, mu = tight_slacks(sc, traj)
    assert np.array_equal(slacks["lam"][:, 0, :], lam1)
    assert np.array_equal(slacks["mu"], mu)


def test_trajectory_step_trust_region():
    sc = small_scenario()
    traj, _ = init_straight_trajectory(sc)
    powers, _ = solve_power_subproblem(sc, CTL, traj)
    e_max = sc.energy_budget_multiplier * straight_line_min_energy(sc, PARAMS)
    new_traj, _, res = solve_trajectory_subproblem(sc, PARAMS, CTL, traj, powers,
                                                   e_max, trust_radius=2.0)
    assert res.status == "optimal"
    moves = np.linalg.norm(new_traj.z - traj.z, axis=1)
    assert moves.max() <= 2.0 * (1 + 1e-6)


# -- joint loop --------------------------------------------------------------------


def test_joint_run_converges_and_is_feasible():
    sc = small_scenario()
    res = run_joint_optimization(sc, PARAMS, CTL)
    assert res.status == "converged"
    hist = np.array(res.state.p_total_history)
    assert np.all(np.diff(hist) <= hist[:-1] * CTL.solver_tol)
    viol = constraint_violations(sc, PARAMS, res.trajectory, res.powers, res.e_max)
    assert max(viol.values()) <= 1e-6
    assert res.phases is not None
    assert res.phases.phi.shape == (10, 10, 3, sc.n_steps)
    # Trace mirrors the history.
    assert [t.p_total for t in res.state.trace] == pytest.approx(hist.tolist())


def test_joint_run_budget_tight_pins_straight_line():
    sc = small_scenario(energy_budget_multiplier=1.0)
    res = run_joint_optimization(sc, PARAMS, CTL)
    assert res.status == "converged"
    traj0, _ = init_straight_trajectory(sc)
    assert np.abs(res.trajectory.z - traj0.z).max() <= 1e-9


def test_joint_run_infeasible_status():
    sc = small_scenario(r_min=(60.0,))
    res = run_joint_optimization(sc, PARAMS, CTL)
    assert res.status == "infeasible"
    assert res.powers is None


def test_joint_run_infeasible_at_initialization():
    sc = small_scenario(uav_start=(50.0, 50.0), uav_end=(50.0, 50.0))
    res = run_joint_optimization(sc, PARAMS, CTL)
    assert res.status == "infeasible"
    assert res.trajectory is None and res.powers is None


def test_joint_run_deterministic():
    sc = small_scenario()
    r1 = run_joint_optimization(sc, PARAMS, CTL)
    r2 = run_joint_optimization(sc, PARAMS, CTL)
    assert np.array_equal(r1.trajectory.z, r2.trajectory.z)
    assert np.array_equal(r1.powers.p_bs, r2.powers.p_bs)
    assert np.array_equal(r1.powers.p_ue, r2.powers.p_ue)
    assert r1.state.p_total_history == r2.state.p_total_history


def test_joint_run_scaling_invariance():
    # Scaling noise power rescales every optimal power but leaves SNRs, and
    # therefore the optimal trajectory, unchanged.
    sc = small_scenario()
    res1 = run_joint_optimization(sc, PARAMS, CTL)
    sc2 = small_scenario(noise_dbm=sc.noise_dbm + 10.0)
    res2 = run_joint_optimization(sc2, PARAMS, CTL)
    # Identical up to solver precision (centimeters on a 700 m path).
    assert np.abs(res1.trajectory.z - res2.trajectory.z).max() <= 0.05
    assert res2.p_total == pytest.approx(10.0 * res1.p_total, rel=1e-4)


def test_joint_run_rate_requirement_ordering():
    totals = []
    for r in (0.157, 0.457):
        res = run_joint_optimization(small_scenario(r_min=(r,)), PARAMS, CTL)
        assert res.status == "converged"
        totals.append(res.p_total)
    assert totals[0] < totals[1]


def test_joint_run_bends_toward_ue_cluster():
    # The optimized path leaves the straight line on the UE-centroid side.
    sc = small_scenario()
    res = run_joint_optimization(sc, PARAMS, CTL)
    z = res.trajectory.z
    z0, zf = z[0], z[-1]
    d = (zf - z0) / np.linalg.norm(zf - z0)
    signed = (z - z0)[:, 0] * d[1] - (z - z0)[:, 1] * d[0]
    centroid = np.mean(np.asarray(sc.ue_positions), axis=0) - z0
    centroid_side = np.sign(centroid[0] * d[1] - centroid[1] * d[0])
    toward = centroid_side * signed
    assert toward.max() > 1.0          # visible bend toward the cluster
    assert toward.min() > -0.5         # and essentially none away from it


def test_joint_run_propulsion_objective_variant():
    ctl = SimControls(aux_objective="propulsion")
    sc = small_scenario()
    res = run_joint_optimization(sc, PARAMS, ctl)
    assert res.status in ("converged", "max_iter")
    viol = constraint_violations(sc, PARAMS, res.trajectory, res.powers, res.e_max)
    assert max(viol.values()) <= 1e-6
    hist = np.array(res.state.p_total_history)
    assert np.all(np.diff(hist) <= hist[:-1] * ctl.solver_tol)
