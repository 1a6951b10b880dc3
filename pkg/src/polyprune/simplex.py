"""Dense two-phase primal simplex with stall-guarded pivoting.

Problems are stated over non-negative variables x:

    minimize    c . x
    subject to  A_eq x  = b_eq
                A_ub x <= b_ub
                x >= 0

Phase 1 minimizes the sum of artificial variables to find a basic
feasible point; a phase-1 optimum above the feasibility tolerance
means the problem is infeasible and that objective value is reported.
Phase 2 then minimizes the real objective.  The entering column is
the most negative reduced cost (lowest index on ties) while the
objective keeps improving (ratio ties broken by the largest pivot
element); after STALL_LIMIT consecutive degenerate pivots the rule
falls back to Bland's (lowest eligible index entering, lowest basic
index leaving) until progress resumes.  A non-terminating run would
need an all-degenerate tail, which would put the solver permanently
under Bland's rule and its no-cycling guarantee, so termination is
assured and every choice is a deterministic function of the tableau.
Every
feasible return is re-substituted into the original constraints and
rejected if any violation exceeds the tolerance.

Problems and outcomes serialize to a plain-text form, one constraint
per line, via :func:`format_problem` and :func:`format_outcome`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
COST_TOL = 1e-10
FEAS_TOL = 1e-9
CAP_FACTOR = 50
STALL_LIMIT = 30


class SimplexError(RuntimeError):
    """Numerical failure inside the solver (cap hit, bad solution)."""


@dataclass
class LinearProgram:
    """min objective . x  s.t.  a_eq x = b_eq, a_ub x <= b_ub, x >= 0."""

    objective: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.atleast_1d(np.asarray(self.objective, dtype=np.float64))
        for name in ("a_eq", "a_ub"):
            mat = getattr(self, name)
            if mat is not None:
                setattr(self, name, np.atleast_2d(np.asarray(mat, dtype=np.float64)))
        for name in ("b_eq", "b_ub"):
            vec = getattr(self, name)
            if vec is not None:
                setattr(self, name, np.atleast_1d(np.asarray(vec, dtype=np.float64)))
        n = self.n_variables
        if n == 0:
            raise ValueError("problem has no variables")
        if (self.a_eq is None) != (self.b_eq is None):
            raise ValueError("a_eq and b_eq must be given together")
        if (self.a_ub is None) != (self.b_ub is None):
            raise ValueError("a_ub and b_ub must be given together")
        if self.a_eq is not None:
            if self.a_eq.shape[1] != n or self.b_eq.shape[0] != self.a_eq.shape[0]:
                raise ValueError("equality block shapes disagree")
        if self.a_ub is not None:
            if self.a_ub.shape[1] != n or self.b_ub.shape[0] != self.a_ub.shape[0]:
                raise ValueError("inequality block shapes disagree")
        if self.n_constraints == 0:
            raise ValueError("problem has no constraints")

    @property
    def n_variables(self) -> int:
        return self.objective.shape[0]

    @property
    def n_constraints(self) -> int:
        rows = 0
        if self.a_eq is not None:
            rows += self.a_eq.shape[0]
        if self.a_ub is not None:
            rows += self.a_ub.shape[0]
        return rows


@dataclass
class LpOutcome:
    """Solver verdict.

    status is "optimal", "infeasible", or "unbounded".  For feasible
    problems ``x`` holds the minimizer over the original variables,
    ``max_violation`` the largest constraint violation found by
    re-substitution.  ``phase1_objective`` is the minimized artificial
    mass: 0 (up to tolerance) when feasible, the positive
    infeasibility certificate otherwise.
    """

    status: str
    phase1_objective: float
    x: np.ndarray | None = None
    objective_value: float | None = None
    basis: np.ndarray | None = None
    max_violation: float | None = None

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


def _pivot_step(T, basis, n_cols, bland):
    """One pivot.  Returns 'optimal', 'unbounded', or 'pivoted'."""
    cost = T[-1, :n_cols]
    if bland:
        eligible = np.flatnonzero(cost < -COST_TOL)
        if eligible.size == 0:
            return "optimal"
        j = int(eligible[0])
    else:
        j = int(np.argmin(cost))
        if cost[j] >= -COST_TOL:
            return "optimal"

    col = T[:-1, j]
    rows = np.flatnonzero(col > PIVOT_TOL)
    if rows.size == 0:
        return "unbounded"
    ratios = T[rows, -1] / col[rows]
    rmin = ratios.min()
    ties = rows[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
    if bland:
        r = int(ties[np.argmin(basis[ties])])
    else:
        r = int(ties[np.argmax(col[ties])])

    T[r] /= T[r, j]
    other = T[:, j].copy()
    other[r] = 0.0
    T -= np.outer(other, T[r])
    # The outer-product update leaves roundoff dust in the pivot
    # column; pin it to its exact unit form.
    T[:, j] = 0.0
    T[r, j] = 1.0
    basis[r] = j
    return "pivoted"


def _run_simplex(T, basis, n_cols, budget):
    """Pivot until optimal/unbounded.  Returns (verdict, pivots used)."""
    used = 0
    bland = False
    stalled = 0
    while True:
        before = T[-1, -1]
        verdict = _pivot_step(T, basis, n_cols, bland)
        if verdict != "pivoted":
            return verdict, used
        used += 1
        if used > budget:
            raise SimplexError(
                f"iteration cap exceeded after {used} pivots; "
                "numerical pathology suspected"
            )
        if T[-1, -1] > before + 1e-12 * (1.0 + abs(before)):
            stalled = 0
            bland = False
        else:
            stalled += 1
            if stalled >= STALL_LIMIT:
                bland = True


def solve(lp: LinearProgram, feas_tol: float = FEAS_TOL) -> LpOutcome:
    """Solve a linear program with the two-phase tableau simplex."""
    n = lp.n_variables
    a_rows = []
    b_vals = []
    n_eq = 0
    if lp.a_eq is not None:
        a_rows.append(lp.a_eq)
        b_vals.append(lp.b_eq)
        n_eq = lp.a_eq.shape[0]
    n_ub = 0
    if lp.a_ub is not None:
        a_rows.append(lp.a_ub)
        b_vals.append(lp.b_ub)
        n_ub = lp.a_ub.shape[0]
    A = np.vstack(a_rows)
    b = np.concatenate(b_vals).copy()
    n_rows = A.shape[0]

    # Standard form: append one slack per inequality row.
    slack = np.zeros((n_rows, n_ub))
    for i in range(n_ub):
        slack[n_eq + i, i] = 1.0
    A = np.hstack([A, slack])

    # Normalize to b >= 0; negated inequality rows lose their slack as
    # a usable starting basic variable.
    neg = b < 0
    A[neg] *= -1.0
    b[neg] = -b[neg]

    slack_basic = [
        n + i for i in range(n_ub) if not neg[n_eq + i]
    ]
    art_rows = [r for r in range(n_rows) if not (r >= n_eq and not neg[r])]
    n_struct = A.shape[1]
    n_art = len(art_rows)
    n_all = n_struct + n_art
    budget = CAP_FACTOR * (n_rows + n_all)

    basis = np.empty(n_rows, dtype=np.int64)
    for i in range(n_ub):
        if not neg[n_eq + i]:
            basis[n_eq + i] = n + i
    art = np.zeros((n_rows, n_art))
    for a_idx, r in enumerate(art_rows):
        art[r, a_idx] = 1.0
        basis[r] = n_struct + a_idx

    T = np.zeros((n_rows + 1, n_all + 1))
    T[:-1, :n_struct] = A
    T[:-1, n_struct:n_all] = art
    T[:-1, -1] = b
    # Phase-1 reduced costs: unit cost on artificials, then zero out
    # the basic columns.
    T[-1, n_struct:n_all] = 1.0
    for r in art_rows:
        T[-1] -= T[r]

    verdict, used = _run_simplex(T, basis, n_all, budget)
    if verdict == "unbounded":
        raise SimplexError("phase 1 reported unbounded; tableau corrupt")
    phase1 = max(0.0, -float(T[-1, -1]))
    if phase1 > feas_tol:
        return LpOutcome(status="infeasible", phase1_objective=phase1)

    # Drive any artificial still in the basis out of it, or drop its
    # row as redundant.
    keep = np.ones(n_rows, dtype=bool)
    for r in range(n_rows):
        if basis[r] < n_struct:
            continue
        row = T[r, :n_struct]
        pivots = np.flatnonzero(np.abs(row) > PIVOT_TOL)
        if pivots.size == 0:
            keep[r] = False
            continue
        j = int(pivots[np.argmax(np.abs(row[pivots]))])
        T[r] /= T[r, j]
        other = T[:, j].copy()
        other[r] = 0.0
        T -= np.outer(other, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        basis[r] = j

    T2 = np.hstack([T[:-1, :n_struct], T[:-1, -1:]])[keep]
    T2 = np.vstack([T2, np.zeros(n_struct + 1)])
    basis = basis[keep]

    c_full = np.concatenate([lp.objective, np.zeros(n_ub)])
    T2[-1, :n_struct] = c_full
    for r in range(T2.shape[0] - 1):
        T2[-1] -= c_full[basis[r]] * T2[r]

    verdict, used2 = _run_simplex(T2, basis, n_struct, budget - used)
    if verdict == "unbounded":
        return LpOutcome(status="unbounded", phase1_objective=phase1)

    x_full = np.zeros(n_struct)
    x_full[basis] = T2[: len(basis), -1]
    x = x_full[:n]
    outcome = LpOutcome(
        status="optimal",
        phase1_objective=phase1,
        x=x,
        objective_value=float(lp.objective @ x),
        basis=basis.copy(),
        max_violation=_max_violation(lp, x),
    )
    if outcome.max_violation > feas_tol:
        raise SimplexError(
            f"solver returned a point violating constraints by "
            f"{outcome.max_violation:.3e} (tolerance {feas_tol:.1e})"
        )
    return outcome


def _max_violation(lp: LinearProgram, x: np.ndarray) -> float:
    worst = float(max(0.0, -(x.min() if x.size else 0.0)))
    if lp.a_eq is not None:
        worst = max(worst, float(np.abs(lp.a_eq @ x - lp.b_eq).max()))
    if lp.a_ub is not None:
        worst = max(worst, float(np.maximum(lp.a_ub @ x - lp.b_ub, 0.0).max()))
    return worst


def _row_text(coeffs, rel, rhs) -> str:
    nums = " ".join(f"{v:.17g}" for v in coeffs)
    return f"{nums} {rel} {rhs:.17g}"


def format_problem(lp: LinearProgram) -> str:
    """Plain-text form: objective line, one constraint per line, bounds."""
    lines = ["minimize " + " ".join(f"{v:.17g}" for v in lp.objective)]
    if lp.a_eq is not None:
        lines += [_row_text(row, "=", b) for row, b in zip(lp.a_eq, lp.b_eq)]
    if lp.a_ub is not None:
        lines += [_row_text(row, "<=", b) for row, b in zip(lp.a_ub, lp.b_ub)]
    lines.append("x >= 0")
    return "\n".join(lines)


def format_outcome(out: LpOutcome) -> str:
    lines = [f"status {out.status}", f"phase1_objective {out.phase1_objective:.17g}"]
    if out.objective_value is not None:
        lines.append(f"objective {out.objective_value:.17g}")
    if out.x is not None:
        lines.append("x " + " ".join(f"{v:.17g}" for v in out.x))
    if out.max_violation is not None:
        lines.append(f"max_violation {out.max_violation:.17g}")
    return "\n".join(lines)
