"""Declarative convex-program container and solver adapter.

Subproblems are expressed through a fixed constraint-family vocabulary
(affine equality/inequality, squared-norm <= affine, second-order cone,
positive ratio c/x <= t, cubic x**3 <= t).  The reciprocal and cubic
families are mapped to conic form here, never by callers.  Solutions are
re-checked against the original constraint list and downgraded to a
numerical failure when residuals exceed the requested tolerance; solver
infeasibility claims are reported as-is for the caller to vet against any
known feasible point.

Residuals are scale-normalized: a constraint's violation is divided by
max(1, magnitude of its sides), so the feasibility tolerance means the same
thing for unit-scale rate constraints and squared-distance slacks alike.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .scenario import SimControls

_SOLVER_ORDER = ("CLARABEL", "ECOS", "SCS")


class SolverError(RuntimeError):
    """Solver failed to produce a usable certificate."""


@dataclass
class _TaggedConstraint:
    family: str
    label: str
    constraint: cp.constraints.constraint.Constraint


@dataclass
class SolveResult:
    status: str                      # optimal | infeasible | numerical_failure
    values: dict[str, np.ndarray] = field(default_factory=dict)
    objective: float | None = None
    max_residual: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def worst_constraint(self) -> str | None:
        return self.diagnostics.get("worst_constraint")


class ConvexProgram:
    """Named variables, an affine objective and tagged conic constraints."""

    def __init__(self, name: str = "program"):
        self.name = name
        self._vars: dict[str, cp.Variable] = {}
        self._constraints: list[_TaggedConstraint] = []
        self._objective: cp.expressions.expression.Expression | None = None

    def variable(self, name: str, shape=(), nonneg: bool = False) -> cp.Variable:
        if name in self._vars:
            raise ValueError(f"variable {name!r} already declared")
        var = cp.Variable(shape, name=name, nonneg=nonneg)
        self._vars[name] = var
        return var

    def minimize(self, expr) -> None:
        if not cp.Expression.cast_to_const(expr).is_affine():
            raise ValueError("objective must be affine")
        self._objective = expr

    def _add(self, family: str, label: str, constraint) -> None:
        self._constraints.append(_TaggedConstraint(family, label, constraint))

    def add_affine_eq(self, lhs, rhs, label: str) -> None:
        expr = lhs - rhs
        if not expr.is_affine():
            raise ValueError(f"{label}: equality sides must be affine")
        self._add("affine_eq", label, expr == 0)

    def add_affine_le(self, lhs, rhs, label: str) -> None:
        expr = cp.Expression.cast_to_const(lhs) - rhs
        if not expr.is_affine():
            raise ValueError(f"{label}: inequality sides must be affine")
        self._add("affine_le", label, expr <= 0)

    def add_sq_le(self, vec, rhs, label: str) -> None:
        """Rowwise ||vec||^2 <= rhs (squared distance below a slack)."""
        vec = cp.Expression.cast_to_const(vec)
        if not vec.is_affine():
            raise ValueError(f"{label}: squared term must be affine inside")
        sq = cp.sum(cp.square(vec), axis=1) if vec.ndim == 2 else cp.square(vec)
        self._add("sq_le_affine", label, sq <= rhs)

    def add_norm_le(self, vec, rhs, label: str) -> None:
        """Rowwise ||vec|| <= rhs (second-order cone)."""
        vec = cp.Expression.cast_to_const(vec)
        if not vec.is_affine():
            raise ValueError(f"{label}: cone argument must be affine")
        nrm = cp.norm(vec, 2, axis=1) if vec.ndim == 2 else cp.abs(vec)
        self._add("soc", label, nrm <= rhs)

    def add_ratio_le(self, numerator, x, t, label: str) -> None:
        """Elementwise numerator / x <= t for x > 0 (conic via inv_pos)."""
        num = np.asarray(numerator, dtype=float)
        if np.any(num <= 0):
            raise ValueError(f"{label}: ratio numerators must be positive")
        self._add("ratio_le", label, cp.multiply(num, cp.inv_pos(x)) <= t)

    def add_cubic_le(self, x, t, label: str) -> None:
        """Elementwise x**3 <= t for x >= 0 (conic power decomposition)."""
        self._add("cubic_le", label, cp.power(x, 3) <= t)
        self._add("affine_le", label + "/nonneg", -x <= 0)

    # -- inspection ---------------------------------------------------------------

    def constraint_labels(self) -> list[tuple[str, str]]:
        return [(c.family, c.label) for c in self._constraints]

    def tagged_violations(self) -> list[tuple[str, float]]:
        """Per-constraint violation at the loaded values, relative to the constraint scale.

        Each raw violation is divided by max(1, |lhs|, |rhs|) so that
        squared-distance constraints with large magnitudes are judged on the
        same footing as unit-scale ones.
        """
        out = []
        for c in self._constraints:
            raw = float(np.max(c.constraint.violation()))
            scale = 1.0
            for side in c.constraint.args:
                val = side.value
                if val is not None:
                    scale = max(scale, float(np.max(np.abs(val))))
            out.append((c.label, raw / scale))
        return out

    def dump(self) -> str:
        """Plain-text rendering: one line per variable and per tagged constraint."""
        lines = [f"program {self.name}", "variables:"]
        for name, var in self._vars.items():
            lines.append(f"  {name} shape={tuple(np.atleast_1d(var.shape))} nonneg={var.is_nonneg()}")
        lines.append(f"objective: minimize {self._objective}")
        lines.append("constraints:")
        for c in self._constraints:
            lines.append(f"  [{c.family}] {c.label}: {c.constraint}")
        return "\n".join(lines)


def _pick_solver(preference: str) -> str:
    installed = cp.installed_solvers()
    if preference != "auto":
        if preference.upper() not in installed:
            raise SolverError(f"requested solver {preference!r} is not installed")
        return preference.upper()
    for name in _SOLVER_ORDER:
        if name in installed:
            return name
    raise SolverError(f"no supported conic solver installed (have {installed})")


def solve(program: ConvexProgram, controls: SimControls) -> SolveResult:
    """Solve the program; deterministic for identical inputs and solver."""
    if program._objective is None:
        raise ValueError("program has no objective")
    problem = cp.Problem(cp.Minimize(program._objective),
                         [c.constraint for c in program._constraints])
    solver = _pick_solver(controls.solver)
    try:
        with warnings.catch_warnings():
            # Inaccurate-solution warnings are handled through the status below.
            warnings.simplefilter("ignore", UserWarning)
            problem.solve(solver=solver, verbose=False)
    except cp.error.SolverError as exc:
        return SolveResult(status="numerical_failure",
                           diagnostics={"solver": solver, "error": str(exc)})

    diagnostics = {"solver": solver, "solver_status": problem.status}
    stats = problem.solver_stats
    if stats is not None:
        diagnostics["iterations"] = stats.num_iters
        diagnostics["solve_time"] = stats.solve_time

    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SolveResult(status="infeasible", diagnostics=diagnostics)
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return SolveResult(status="numerical_failure", diagnostics=diagnostics)

    values = {name: np.array(var.value) for name, var in program._vars.items()}
    violations = program.tagged_violations()
    max_residual = max((v for _, v in violations), default=0.0)
    worst = max(violations, key=lambda item: item[1], default=(None, 0.0))[0]
    diagnostics["worst_constraint"] = worst
    status = "optimal"
    if max_residual > controls.solver_tol or problem.status == cp.OPTIMAL_INACCURATE:
        if max_residual > controls.solver_tol:
            status = "numerical_failure"
    return SolveResult(status=status, values=values, objective=float(problem.value),
                       max_residual=max_residual, diagnostics=diagnostics)
