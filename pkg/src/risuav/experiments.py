"""Batch experiment drivers: single runs and parameter sweeps with CSV outputs.

Every CSV is written atomically with a fixed numeric format ('.' decimal,
12 significant digits), so identical configurations and seeds produce
byte-identical files.  SVG rendering lives in :mod:`risuav.plotting` and
consumes only these CSVs.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .energy import propulsion_power, trajectory_energy
from .optimizer import JointResult, run_joint_optimization
from .scenario import EnergyParams, ScenarioConfig, SimControls, load_scenario

log = logging.getLogger(__name__)

FLOAT_FMT = "%.12g"


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FMT % float(value)


def write_csv(path, header, rows) -> None:
    """Write rows atomically with deterministic formatting."""
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def _trajectory_rows(result: JointResult, params: EnergyParams):
    traj = result.trajectory
    # Row 0 is the fixed start point; kinematic and power columns are zero
    # by convention (no step has been flown yet).
    rows = [(0, traj.z[0, 0], traj.z[0, 1], 0.0, 0.0, 0.0, 0.0)]
    speeds = traj.speeds()
    for n in range(traj.n_steps):
        rows.append((n + 1, traj.z[n + 1, 0], traj.z[n + 1, 1],
                     traj.v[n, 0], traj.v[n, 1], speeds[n],
                     propulsion_power(speeds[n], params, floor=1e-12)))
    return rows


def _power_rows(result: JointResult):
    powers = result.powers
    n_ue = powers.p_ue.shape[0]
    header = ["n", "p_bs"]
    for k in range(n_ue):
        header += [f"p_ue{k}_direct", f"p_ue{k}_ris"]
    rows = []
    for n in range(powers.p_bs.shape[0]):
        row = [n + 1, powers.p_bs[n]]
        for k in range(n_ue):
            row += [powers.p_ue[k, 0, n], powers.p_ue[k, 1, n]]
        rows.append(row)
    return header, rows


def _layout_rows(scenario: ScenarioConfig):
    rows = [("bs", *scenario.bs_position), ("ris", *scenario.ris_position),
            ("start", *scenario.uav_start), ("end", *scenario.uav_end)]
    rows += [(f"ue{k}", *p) for k, p in enumerate(scenario.ue_positions)]
    return rows


def write_run_outputs(out_dir, result: JointResult, params: EnergyParams) -> None:
    """All per-run CSVs plus the iterate-overlay SVG."""
    os.makedirs(out_dir, exist_ok=True)
    scenario = result.scenario
    state = result.state

    energy = None
    if result.trajectory is not None and result.powers is not None:
        energy = trajectory_energy(result.trajectory.v, result.trajectory.tau,
                                   params, floor=1e-12)
    write_csv(os.path.join(out_dir, "summary.csv"),
              ["status", "p_total", "energy_j", "iterations"],
              [(state.status, result.p_total, energy, state.iteration)])
    write_csv(os.path.join(out_dir, "iterations.csv"),
              ["iteration", "p_total", "violation"],
              [(t.iteration, t.p_total, t.max_violation) for t in state.trace])
    if result.trajectory is None or result.powers is None:
        return

    write_csv(os.path.join(out_dir, "trajectory.csv"),
              ["n", "x", "y", "vx", "vy", "speed", "propulsion_w"],
              _trajectory_rows(result, params))
    header, rows = _power_rows(result)
    write_csv(os.path.join(out_dir, "power.csv"), header, rows)
    write_csv(os.path.join(out_dir, "layout.csv"), ["node", "x", "y"],
              _layout_rows(scenario))
    iter_rows = []
    for j, z in enumerate(result.iterates):
        iter_rows += [(j, n, z[n, 0], z[n, 1]) for n in range(z.shape[0])]
    write_csv(os.path.join(out_dir, "trajectory_iterates.csv"),
              ["iteration", "n", "x", "y"], iter_rows)

    from . import plotting
    plotting.render_iterates_svg(os.path.join(out_dir, "trajectory.svg"),
                                 os.path.join(out_dir, "trajectory_iterates.csv"),
                                 os.path.join(out_dir, "layout.csv"))


def run_scenario(scenario: ScenarioConfig, params: EnergyParams,
                 controls: SimControls, out_dir) -> JointResult:
    """Optimize one scenario and write its result files."""
    result = run_joint_optimization(scenario, params, controls)
    write_run_outputs(out_dir, result, params)
    return result


def run_scenario_file(config_path, out_dir) -> JointResult:
    """CLI entry: load, validate, then run (no partial outputs on bad input)."""
    scenario, params, controls = load_scenario(config_path)
    return run_scenario(scenario, params, controls, out_dir)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Cell:
    """One sweep cell; runs in a worker process and returns summary data."""
    key: tuple
    scenario: ScenarioConfig
    params: EnergyParams
    controls: SimControls
    out_dir: str | None = None


def _run_cell(cell: _Cell):
    result = run_joint_optimization(cell.scenario, cell.params, cell.controls)
    if cell.out_dir is not None:
        write_run_outputs(cell.out_dir, result, cell.params)
    feasible = result.status in ("converged", "max_iter") and result.powers is not None
    avg_los = avg_ris = p_total = path_len = energy = None
    if feasible:
        avg_los, avg_ris = result.powers.link_averages()
        p_total = result.p_total
        path_len = result.trajectory.path_length()
        energy = trajectory_energy(result.trajectory.v, result.trajectory.tau,
                                   cell.params, floor=1e-12)
    return {
        "key": cell.key,
        "status": result.status,
        "avg_p_los": avg_los,
        "avg_p_ris": avg_ris,
        "p_total": p_total,
        "path_length": path_len,
        "energy_j": energy,
    }


def _run_cells(cells, jobs: int):
    if jobs <= 1:
        results = [_run_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    return {r["key"]: r for r in results}


def _ue_layout(base: ScenarioConfig, k: int, seed: int):
    """UE positions for a K-user cell: the configured set when K matches,
    otherwise a seeded uniform draw recorded in the sweep output."""
    if k == base.n_ues:
        return base.ue_positions
    rng = np.random.default_rng([seed, k])
    margin = 0.05 * min(base.area)
    xs = rng.uniform(margin, base.area[0] - margin, size=k)
    ys = rng.uniform(margin, base.area[1] - margin, size=k)
    return tuple((float(x), float(y)) for x, y in zip(xs, ys))


def sweep_users_rates(base: ScenarioConfig, params: EnergyParams,
                      controls: SimControls, k_list, r_list, out_dir,
                      jobs: int = 1) -> None:
    """Grid over user counts and rate requirements.

    Writes avg_power_by_link.csv (at the base scenario's rate requirement),
    total_power.csv over the full grid, the UE placements used for each K,
    and per-K trajectory overlays across the rate grid.
    """
    os.makedirs(out_dir, exist_ok=True)
    seed = controls.rng_seed
    base_rate = base.r_min[0]
    rates = sorted(set(float(r) for r in r_list) | {base_rate})

    layouts = {k: _ue_layout(base, k, seed) for k in k_list}
    write_csv(os.path.join(out_dir, "ue_positions.csv"), ["k_users", "ue", "x", "y"],
              [(k, i, p[0], p[1]) for k in k_list for i, p in enumerate(layouts[k])])

    cells = []
    for k in k_list:
        for r in rates:
            cell_dir = os.path.join(out_dir, f"k{k}_r{_fmt(r)}")
            cells.append(_Cell(key=(k, r),
                               scenario=replace(base, ue_positions=layouts[k],
                                                r_min=(r,) * k),
                               params=params, controls=controls, out_dir=cell_dir))
    results = _run_cells(cells, jobs)

    write_csv(os.path.join(out_dir, "avg_power_by_link.csv"),
              ["k_users", "avg_p_los", "avg_p_ris", "status"],
              [(k, results[(k, base_rate)]["avg_p_los"],
                results[(k, base_rate)]["avg_p_ris"],
                results[(k, base_rate)]["status"]) for k in k_list])
    write_csv(os.path.join(out_dir, "total_power.csv"),
              ["k_users", "r_min", "p_total", "status"],
              [(k, r, results[(k, r)]["p_total"], results[(k, r)]["status"])
               for k in k_list for r in rates])

    from . import plotting
    for k in k_list:
        entries = []
        for r in rates:
            cell_dir = os.path.join(out_dir, f"k{k}_r{_fmt(r)}")
            traj_csv = os.path.join(cell_dir, "trajectory.csv")
            if os.path.exists(traj_csv):
                entries.append((f"r_min={_fmt(r)}", traj_csv))
        if entries:
            plotting.render_overlay_svg(
                os.path.join(out_dir, f"trajectories_k{k}.svg"), entries,
                os.path.join(out_dir, f"k{k}_r{_fmt(rates[0])}", "layout.csv"))


def sweep_ris_positions(base: ScenarioConfig, params: EnergyParams,
                        controls: SimControls, ris_list, out_dir,
                        draws: int = 50, jobs: int = 1) -> None:
    """Per-candidate-position trajectories plus link-power statistics over
    randomized per-UE rate requirements (uniform in [0.01, 0.757], seeded,
    identical draws across positions)."""
    os.makedirs(out_dir, exist_ok=True)
    seed = controls.rng_seed
    k = base.n_ues
    draw_rates = [tuple(np.random.default_rng([seed, d]).uniform(0.01, 0.757, size=k))
                  for d in range(draws)]

    cells = []
    for i, ris in enumerate(ris_list):
        ris = (float(ris[0]), float(ris[1]))
        cells.append(_Cell(key=(i, -1), scenario=replace(base, ris_position=ris),
                           params=params, controls=controls,
                           out_dir=os.path.join(out_dir, f"position{i}")))
        for d, rvec in enumerate(draw_rates):
            cells.append(_Cell(key=(i, d),
                               scenario=replace(base, ris_position=ris, r_min=rvec),
                               params=params, controls=controls))
    results = _run_cells(cells, jobs)

    rows = []
    for i, ris in enumerate(ris_list):
        for d in range(draws):
            r = results[(i, d)]
            rows.append((i, float(ris[0]), float(ris[1]), d,
                         r["avg_p_los"], r["avg_p_ris"], r["status"]))
    write_csv(os.path.join(out_dir, "link_power_draws.csv"),
              ["position", "ris_x", "ris_y", "draw", "avg_p_los", "avg_p_ris", "status"],
              rows)


def sweep_energy_budget(base: ScenarioConfig, params: EnergyParams,
                        controls: SimControls, multipliers, out_dir,
                        jobs: int = 1) -> None:
    """Trajectory and path-length response to the flight-energy budget."""
    os.makedirs(out_dir, exist_ok=True)
    cells = [_Cell(key=(float(m),),
                   scenario=replace(base, energy_budget_multiplier=float(m)),
                   params=params, controls=controls,
                   out_dir=os.path.join(out_dir, f"multiplier{_fmt(m)}"))
             for m in multipliers]
    results = _run_cells(cells, jobs)
    write_csv(os.path.join(out_dir, "path_length.csv"),
              ["multiplier", "path_length_m", "energy_j", "status"],
              [(m, results[(float(m),)]["path_length"],
                results[(float(m),)]["energy_j"],
                results[(float(m),)]["status"]) for m in multipliers])
