"""Geometry of the convex hull of neuron activation vectors.

A width-N network evaluated on m examples yields N vectors in R^m
(rows of :meth:`TwoLayerNetwork.scaled_activations`); their convex
hull is the search space of the greedy selection procedure.  This
module measures that hull (diameter, linear minimization) and decides
membership questions by feasibility linear programs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import FEAS_TOL, LinearProgram, LpOutcome, solve


def _check_vertices(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError(f"vertices must be a non-empty 2-d array, got {v.shape}")
    return v


def diameter(vertices) -> float:
    """Largest pairwise Euclidean distance between vertices.

    Exhaustive over all pairs, so O(N^2 m); fine for a few thousand
    vertices.  Use :func:`diameter_lower_bound` beyond that.
    """
    v = _check_vertices(vertices)
    best = 0.0
    for i in range(v.shape[0] - 1):
        diff = v[i + 1 :] - v[i]
        best = max(best, float((diff * diff).sum(axis=1).max()))
    return float(np.sqrt(best))


def diameter_lower_bound(vertices, n_samples: int, seed: int = 0) -> float:
    """Sampled lower bound on the diameter.

    Checks n_samples random pairs plus the farthest-from-centroid
    heuristic pair.  The result never exceeds the true diameter; it is
    a lower bound, not an estimate of it.
    """
    v = _check_vertices(vertices)
    n = v.shape[0]
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, n, size=(n_samples, 2))
    diff = v[pairs[:, 0]] - v[pairs[:, 1]]
    best = float((diff * diff).sum(axis=1).max())
    center = v.mean(axis=0)
    far = int(np.argmax(((v - center) ** 2).sum(axis=1)))
    diff = v - v[far]
    best = max(best, float((diff * diff).sum(axis=1).max()))
    return float(np.sqrt(best))


def lmo(vertices, direction) -> int:
    """Linear minimization oracle over the hull.

    Returns the index of the vertex minimizing <direction, v>; the
    minimum of a linear function over a polytope sits at a vertex.
    Ties resolve to the lowest index.
    """
    v = _check_vertices(vertices)
    direction = np.asarray(direction, dtype=np.float64).ravel()
    if direction.shape[0] != v.shape[1]:
        raise ValueError(
            f"direction has {direction.shape[0]} entries, vertices have "
            f"{v.shape[1]} coordinates"
        )
    return int(np.argmin(v @ direction))


@dataclass
class MembershipResult:
    """Outcome of a hull-membership or separability test.

    ``inside`` answers the question asked; ``alpha`` holds the convex
    weights certifying a positive answer.  ``phase1_objective`` is the
    solver's infeasibility mass: 0 when inside, positive otherwise.
    """

    inside: bool
    phase1_objective: float
    alpha: np.ndarray | None = None
    outcome: LpOutcome | None = None

    def verdict_line(self) -> str:
        word = "INSIDE" if self.inside else "OUTSIDE"
        return f"{word} phase1_objective={self.phase1_objective:.17g}"


def hull_membership(vertices, point, tol: float = FEAS_TOL) -> MembershipResult:
    """Decide whether ``point`` lies in the convex hull of the vertices.

    Solves the feasibility program over convex weights alpha:

        vertices^T alpha = point,  sum(alpha) = 1,  alpha >= 0

    with a zero objective; the point is inside exactly when the
    program is feasible at tolerance ``tol``.
    """
    v = _check_vertices(vertices)
    point = np.asarray(point, dtype=np.float64).ravel()
    n, m = v.shape
    if point.shape[0] != m:
        raise ValueError(
            f"point has {point.shape[0]} coordinates, vertices have {m}"
        )
    lp = LinearProgram(
        objective=np.zeros(n),
        a_eq=np.vstack([v.T, np.ones((1, n))]),
        b_eq=np.append(point, 1.0),
    )
    out = solve(lp, feas_tol=tol)
    return MembershipResult(
        inside=out.feasible,
        phase1_objective=out.phase1_objective,
        alpha=out.x,
        outcome=out,
    )


def classification_membership(
    phi_neg, phi_pos, margin: float = 1e-6, tol: float = FEAS_TOL
) -> MembershipResult:
    """Decide whether one convex combination of neurons separates the
    classes.

    ``phi_neg`` and ``phi_pos`` are (N, m0) and (N, m1) neuron-major
    activation blocks for the two classes.  The test asks for convex
    weights alpha with

        phi_neg^T alpha <= -margin   and   phi_pos^T alpha >= margin,

    strict signs realized through the margin.  Feasibility means a
    width-respecting subnetwork labels every example correctly.
    """
    neg = np.asarray(phi_neg, dtype=np.float64)
    pos = np.asarray(phi_pos, dtype=np.float64)
    if neg.ndim != 2 or pos.ndim != 2 or neg.shape[0] != pos.shape[0]:
        raise ValueError("activation blocks must share the neuron axis")
    if neg.shape[1] == 0 or pos.shape[1] == 0:
        raise ValueError("both classes need at least one example")
    if margin <= 0:
        raise ValueError("margin must be positive")
    n = neg.shape[0]
    a_ub = np.vstack([neg.T, -pos.T])
    b_ub = np.full(a_ub.shape[0], -margin)
    lp = LinearProgram(
        objective=np.zeros(n),
        a_eq=np.ones((1, n)),
        b_eq=np.array([1.0]),
        a_ub=a_ub,
        b_ub=b_ub,
    )
    out = solve(lp, feas_tol=tol)
    return MembershipResult(
        inside=out.feasible,
        phase1_objective=out.phase1_objective,
        alpha=out.x,
        outcome=out,
    )
