"""Command-line driver for single runs and the evaluation sweeps.

Exit codes: 0 success, 1 infeasible, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import experiments
from .backend import SolverError
from .scenario import ConfigError, load_scenario

log = logging.getLogger("risuav")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")


def _pairs(text: str) -> list[tuple[float, float]]:
    pairs = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = [p for p in chunk.split(",") if p.strip()]
        if len(parts) != 2:
            raise ConfigError(f"expected 'x,y' pairs separated by ';', got {text!r}")
        pairs.append((float(parts[0]), float(parts[1])))
    if not pairs:
        raise ConfigError("no coordinate pairs given")
    return pairs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risuav",
        description="Joint UAV-trajectory / RIS-phase / transmit-power optimization")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario TOML file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    common.add_argument("--max-iter", type=int, default=None,
                        help="override the outer iteration cap")
    common.add_argument("--tol", type=float, default=None,
                        help="override the convergence tolerance")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="optimize one scenario")

    p_users = sub.add_parser("sweep-users", parents=[common],
                             help="sweep user counts and rate requirements")
    p_users.add_argument("--users", default="1,2,3,4,5",
                         help="comma-separated user counts")
    p_users.add_argument("--rates", default="0.057,0.257,0.557,0.757",
                         help="comma-separated rate requirements, bits/s/Hz")

    p_ris = sub.add_parser("sweep-ris", parents=[common],
                           help="sweep candidate RIS positions")
    p_ris.add_argument("--ris", required=True,
                       help="candidate positions as 'x,y;x,y;...'")
    p_ris.add_argument("--draws", type=int, default=50,
                       help="randomized rate-requirement draws per position")

    p_energy = sub.add_parser("sweep-energy", parents=[common],
                              help="sweep the flight-energy budget multiplier")
    p_energy.add_argument("--multipliers", default="1.0,1.2,1.5,2.0",
                          help="comma-separated budget multipliers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario, params, controls = load_scenario(args.config)
        if args.seed is not None:
            controls = replace(controls, rng_seed=args.seed)
        if args.max_iter is not None:
            controls = replace(controls, max_iterations=args.max_iter)
        if args.tol is not None:
            controls = replace(controls, convergence_tol=args.tol)

        if args.command == "run":
            result = experiments.run_scenario(scenario, params, controls, args.out)
            log.info("status=%s p_total=%s iterations=%d", result.status,
                     result.p_total, result.state.iteration)
            return 1 if result.status == "infeasible" else 0
        if args.command == "sweep-users":
            experiments.sweep_users_rates(scenario, params, controls,
                                          _ints(args.users), _floats(args.rates),
                                          args.out, jobs=args.jobs)
            return 0
        if args.command == "sweep-ris":
            experiments.sweep_ris_positions(scenario, params, controls,
                                            _pairs(args.ris), args.out,
                                            draws=args.draws, jobs=args.jobs)
            return 0
        if args.command == "sweep-energy":
            experiments.sweep_energy_budget(scenario, params, controls,
                                            _floats(args.multipliers), args.out,
                                            jobs=args.jobs)
            return 0
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
