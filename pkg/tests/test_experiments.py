import csv
import math
import os

import numpy as np
import pytest

from risuav import experiments
from risuav.cli import main as cli_main
from risuav.scenario import EnergyParams, ScenarioConfig, SimControls, save_scenario

PARAMS = EnergyParams()
CTL = SimControls()


def small_scenario(**overrides):
    kwargs = dict(n_steps=8, timestep_s=6.25)
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = experiments.run_scenario(small_scenario(), PARAMS, CTL, out)
    return out, result


def test_run_writes_all_outputs(run_dir):
    out, result = run_dir
    for name in ("trajectory.csv", "power.csv", "iterations.csv", "summary.csv",
                 "layout.csv", "trajectory_iterates.csv", "trajectory.svg"):
        assert (out / name).exists(), name
    assert result.status == "converged"


def test_summary_and_iterations_consistent(run_dir):
    out, result = run_dir
    summary = read_csv(out / "summary.csv")[0]
    assert summary["status"] == "converged"
    iters = read_csv(out / "iterations.csv")
    p_hist = [float(r["p_total"]) for r in iters]
    assert p_hist == pytest.approx(result.state.p_total_history)
    # History nonincreasing within the relative solver tolerance.
    for a, b in zip(p_hist, p_hist[1:]):
        assert b <= a * (1 + CTL.solver_tol)
    assert float(summary["p_total"]) == pytest.approx(p_hist[-1], rel=1e-11)


def test_power_csv_rederives_p_total(run_dir):
    out, result = run_dir
    rows = read_csv(out / "power.csv")
    total = 0.0
    for row in rows:
        total += sum(float(v) for k, v in row.items() if k != "n")
    recorded = float(read_csv(out / "summary.csv")[0]["p_total"])
    assert total == pytest.approx(recorded, rel=1e-9)


def test_trajectory_csv_layout(run_dir):
    out, result = run_dir
    rows = read_csv(out / "trajectory.csv")
    assert len(rows) == result.trajectory.n_steps + 1
    assert float(rows[0]["x"]) == pytest.approx(0.0)
    assert float(rows[-1]["x"]) == pytest.approx(500.0)
    # Kinematic consistency inside the file.
    tau = result.trajectory.tau
    for prev, cur in zip(rows[:-1], rows[1:]):
        assert float(cur["x"]) == pytest.approx(
            float(prev["x"]) + tau * float(cur["vx"]), abs=1e-4)
    # Propulsion column re-derives the recorded energy.
    energy = sum(float(r["propulsion_w"]) for r in rows[1:]) * tau
    assert energy == pytest.approx(float(read_csv(out / "summary.csv")[0]["energy_j"]),
                                   rel=1e-9)


def test_svg_is_pure_function_of_csvs(run_dir):
    out, _ = run_dir
    from risuav import plotting
    first = (out / "trajectory.svg").read_bytes()
    plotting.render_iterates_svg(out / "roundtrip.svg", out / "trajectory_iterates.csv",
                                 out / "layout.csv")
    assert (out / "roundtrip.svg").read_bytes() == first


def test_budget_tight_run_stays_straight(tmp_path):
    sc = small_scenario(energy_budget_multiplier=1.0)
    result = experiments.run_scenario(sc, PARAMS, CTL, tmp_path)
    rows = read_csv(tmp_path / "trajectory.csv")
    start = np.asarray(sc.uav_start)
    end = np.asarray(sc.uav_end)
    for i, row in enumerate(rows):
        expect = start + (end - start) * i / (len(rows) - 1)
        assert float(row["x"]) == pytest.approx(expect[0], abs=1e-6)
        assert float(row["y"]) == pytest.approx(expect[1], abs=1e-6)
    straight = float(np.linalg.norm(end - start))
    length = sum(math.dist((float(a["x"]), float(a["y"])), (float(b["x"]), float(b["y"])))
                 for a, b in zip(rows[:-1], rows[1:]))
    assert length == pytest.approx(straight, rel=1e-3)


def test_infeasible_run_writes_status(tmp_path):
    sc = small_scenario(r_min=(60.0,))
    result = experiments.run_scenario(sc, PARAMS, CTL, tmp_path)
    assert result.status == "infeasible"
    assert read_csv(tmp_path / "summary.csv")[0]["status"] == "infeasible"


def test_deterministic_csvs(tmp_path):
    sc = small_scenario()
    experiments.run_scenario(sc, PARAMS, CTL, tmp_path / "a")
    experiments.run_scenario(sc, PARAMS, CTL, tmp_path / "b")
    for name in ("trajectory.csv", "power.csv", "iterations.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# -- sweeps ------------------------------------------------------------------------


def test_sweep_users_rates(tmp_path):
    base = small_scenario()
    experiments.sweep_users_rates(base, PARAMS, CTL, [2, 3], [0.157, 0.457], tmp_path)
    placements = read_csv(tmp_path / "ue_positions.csv")
    # K=3 keeps the configured UEs; K=2 is a seeded draw, recorded here.
    k3 = [(float(r["x"]), float(r["y"])) for r in placements if r["k_users"] == "3"]
    assert tuple(k3) == base.ue_positions
    assert len([r for r in placements if r["k_users"] == "2"]) == 2

    totals = read_csv(tmp_path / "total_power.csv")
    by_cell = {(r["k_users"], r["r_min"]): r for r in totals}
    for k in ("2", "3"):
        lo = float(by_cell[(k, "0.157")]["p_total"])
        hi = float(by_cell[(k, "0.457")]["p_total"])
        assert lo < hi
    avg = {r["k_users"]: r for r in read_csv(tmp_path / "avg_power_by_link.csv")}
    # The configured three-user layout keeps the RIS link cheap to serve.
    assert float(avg["3"]["avg_p_ris"]) < float(avg["3"]["avg_p_los"])
    assert float(avg["2"]["avg_p_ris"]) >= 0.0
    assert (tmp_path / "trajectories_k3.svg").exists()


def test_sweep_records_infeasible_cell_and_continues(tmp_path):
    base = small_scenario()
    experiments.sweep_users_rates(base, PARAMS, CTL, [3], [0.257, 60.0], tmp_path)
    rows = {r["r_min"]: r for r in read_csv(tmp_path / "total_power.csv")}
    assert rows["60"]["status"] == "infeasible"
    assert rows["60"]["p_total"] == ""
    assert rows["0.257"]["status"] == "converged"
    assert float(rows["0.257"]["p_total"]) > 0


def test_sweep_parallel_jobs_matches_serial(tmp_path):
    base = small_scenario()
    experiments.sweep_energy_budget(base, PARAMS, CTL, [1.0, 1.5], tmp_path / "serial",
                                    jobs=1)
    experiments.sweep_energy_budget(base, PARAMS, CTL, [1.0, 1.5], tmp_path / "par",
                                    jobs=2)
    assert ((tmp_path / "serial" / "path_length.csv").read_bytes()
            == (tmp_path / "par" / "path_length.csv").read_bytes())


def test_sweep_energy_budget(tmp_path):
    base = small_scenario()
    experiments.sweep_energy_budget(base, PARAMS, CTL, [1.0, 1.5], tmp_path)
    rows = read_csv(tmp_path / "path_length.csv")
    lengths = [float(r["path_length_m"]) for r in rows]
    straight = math.dist(base.uav_start, base.uav_end)
    assert lengths[0] == pytest.approx(straight, rel=1e-3)
    assert lengths[1] >= lengths[0] * (1 - 1e-3)
    energies = [float(r["energy_j"]) for r in rows]
    for mult, energy in zip((1.0, 1.5), energies):
        assert energy <= mult * 6075.75 * (1 + 1e-3)


def test_sweep_ris_positions_deterministic(tmp_path):
    base = small_scenario(ue_positions=((100.0, 400.0), (400.0, 100.0)))
    positions = [(250.0, 250.0), (20.0, 480.0)]
    experiments.sweep_ris_positions(base, PARAMS, CTL, positions, tmp_path / "a",
                                    draws=2)
    experiments.sweep_ris_positions(base, PARAMS, CTL, positions, tmp_path / "b",
                                    draws=2)
    data_a = (tmp_path / "a" / "link_power_draws.csv").read_bytes()
    data_b = (tmp_path / "b" / "link_power_draws.csv").read_bytes()
    assert data_a == data_b
    rows = read_csv(tmp_path / "a" / "link_power_draws.csv")
    assert len(rows) == 4  # 2 positions x 2 draws
    assert all(r["status"] == "converged" for r in rows)
    assert (tmp_path / "a" / "position0" / "trajectory.csv").exists()


# -- CLI ---------------------------------------------------------------------------


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "scenario.toml"
    save_scenario(path, small_scenario(), PARAMS, CTL)
    return path


def test_cli_run_success(config_file, tmp_path):
    rc = cli_main(["run", "--config", str(config_file), "--out", str(tmp_path / "out")])
    assert rc == 0
    assert (tmp_path / "out" / "summary.csv").exists()


def test_cli_run_infeasible_exit_code(tmp_path):
    path = tmp_path / "bad.toml"
    save_scenario(path, small_scenario(r_min=(60.0,)), PARAMS, CTL)
    rc = cli_main(["run", "--config", str(path), "--out", str(tmp_path / "out")])
    assert rc == 1


def test_cli_malformed_config_no_partial_outputs(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[scenario]\nv_max = -3.0\n")
    out = tmp_path / "out"
    rc = cli_main(["run", "--config", str(path), "--out", str(out)])
    assert rc == 2
    assert not out.exists()


def test_cli_sweep_energy(config_file, tmp_path):
    rc = cli_main(["sweep-energy", "--config", str(config_file),
                   "--out", str(tmp_path / "sweep"), "--multipliers", "1.0,1.5"])
    assert rc == 0
    assert (tmp_path / "sweep" / "path_length.csv").exists()


def test_cli_iteration_and_tolerance_overrides(config_file, tmp_path):
    rc = cli_main(["run", "--config", str(config_file), "--out", str(tmp_path / "one"),
                   "--max-iter", "1", "--tol", "1e-9"])
    assert rc == 0
    row = read_csv(tmp_path / "one" / "summary.csv")[0]
    assert int(row["iterations"]) <= 1


def test_cli_seed_override_changes_draws(config_file, tmp_path):
    for seed, tag in ((1, "s1"), (2, "s2"), (1, "s1b")):
        rc = cli_main(["sweep-ris", "--config", str(config_file),
                       "--out", str(tmp_path / tag), "--ris", "250,250",
                       "--draws", "2", "--seed", str(seed)])
        assert rc == 0
    a = (tmp_path / "s1" / "link_power_draws.csv").read_bytes()
    b = (tmp_path / "s2" / "link_power_draws.csv").read_bytes()
    c = (tmp_path / "s1b" / "link_power_draws.csv").read_bytes()
    assert a != b
    assert a == c
