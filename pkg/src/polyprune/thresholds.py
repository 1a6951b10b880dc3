"""Closed-form loss bounds and pre-training iteration thresholds.

Quantities here tie the selection procedure to the training history.
SGD on a width-N network drives the squared residual down geometrically
with per-iteration factor (1 - c*d/m^2) in expectation (full-batch
gradient descent: (1 - c*d/m)), where c is a data- and scale-dependent
constant.  The calculators below answer two questions:

* how small is the selection loss after k steps, given the hull
  diameter and the dense network's loss (``selection_loss_bound``),
  optionally accounting for how far pre-training has already pushed
  the dense loss (``pretraining_bound``);
* how many pre-training iterations make the trained-network term as
  small as the 1/k selection terms (``sgd_threshold``/``gd_threshold``).

Conventions: ``l0`` is the unnormalized squared residual of the
freshly initialized network, ||f(X) - y||^2, with no 1/2 or 1/m
factor.  ``zeta`` is a slack factor that defaults to 1; callers with
explicit constants can derive it from :func:`zeta_factor`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _check_rate_factor(x: float) -> float:
    if not 0.0 < x < 1.0:
        raise ValueError(
            f"rate factor {x} outside (0, 1); the geometric decay model "
            "does not apply"
        )
    return x


def sgd_threshold(k: int, m: int, d: int, c: float) -> float:
    """Iterations of SGD pre-training that balance the 1/k selection
    terms: -ln(k) / ln(1 - c*d/m^2).

    Doubles exactly when k is squared, since only the numerator moves.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    x = _check_rate_factor(c * d / (m * m))
    return -math.log(k) / math.log1p(-x)


def gd_threshold(k: int, m: int, d: int, c: float) -> float:
    """Full-batch variant of :func:`sgd_threshold`: the decay factor is
    1 - c*d/m, so fewer iterations are needed for the same k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    x = _check_rate_factor(c * d / m)
    return -math.log(k) / math.log1p(-x)


def selection_loss_bound(
    k: int, first_step_loss: float, diameter: float, dense_loss: float
) -> float:
    """Upper bound on the selection objective after k full-batch steps:

        first_step_loss / k + diameter^2 / (2k) + (k-1)/k * dense_loss.

    ``dense_loss`` is the objective value of the uniform average of all
    vertices, which for a linear output head equals the dense network's
    mean halved squared error.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if first_step_loss < 0 or dense_loss < 0 or diameter < 0:
        raise ValueError("losses and diameter must be non-negative")
    return (
        first_step_loss / k
        + diameter * diameter / (2.0 * k)
        + (k - 1) / k * dense_loss
    )


@dataclass
class BoundParams:
    """Inputs of :func:`pretraining_bound`.

    ``kappa``, ``c1``, ``c2`` and ``gamma`` are symbolic knobs carried
    for reporting; they never enter the arithmetic unless a caller
    folds them into ``zeta`` explicitly.
    """

    m: int
    d: int
    k: int
    t: int
    c: float
    l0: float
    zeta: float = 1.0
    kappa: float | None = None
    c1: float | None = None
    c2: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError("m and d must be positive")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if self.l0 < 0:
            raise ValueError("l0 must be non-negative")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")


def pretraining_bound(
    params: BoundParams, first_step_loss: float, diameter: float
) -> float:
    """Expected selection loss after k steps on a network pre-trained
    for t SGD iterations:

        first_step_loss / k
        + diameter^2 / (2k)
        + (k-1) * zeta / (2*m*k) * (1 - c*d/m^2)^t * l0.

    Measured values of the first-step loss and the diameter stand in
    for their expectations.  Non-increasing in t; at
    t = sgd_threshold(k, ...) the residual term has decayed by exactly
    1/k.
    """
    if first_step_loss < 0 or diameter < 0:
        raise ValueError("losses and diameter must be non-negative")
    x = _check_rate_factor(params.c * params.d / (params.m * params.m))
    decay = (1.0 - x) ** params.t
    return (
        first_step_loss / params.k
        + diameter * diameter / (2.0 * params.k)
        + (params.k - 1)
        * params.zeta
        / (2.0 * params.m * params.k)
        * decay
        * params.l0
    )


def zeta_factor(
    kappa: float, c1: float, c2: float, m: int, d: int, n_neurons: int
) -> float:
    """Slack factor 1 / max(kappa, 1 - c1 * (c2*sqrt(m/d))^(1/(N*d))).

    Purely symbolic plumbing for callers that track the constants; the
    default everywhere else is 1.
    """
    if min(kappa, c1, c2) <= 0 or min(m, d, n_neurons) < 1:
        raise ValueError("constants and sizes must be positive")
    inner = 1.0 - c1 * (c2 * math.sqrt(m / d)) ** (1.0 / (n_neurons * d))
    denom = max(kappa, inner)
    if denom <= 0:
        raise ValueError("slack denominator is not positive")
    return 1.0 / denom


def write_bound_curves_csv(path, ks, selection_bounds, pretraining_bounds, observed):
    """Bound curves as ``k,selection_bound,pretraining_bound,observed_loss``
    rows for overlay plotting."""
    rows = list(zip(ks, selection_bounds, pretraining_bounds, observed))
    with open(path, "w", newline="") as f:
        f.write("k,selection_bound,pretraining_bound,observed_loss\n")
        for k, sb, pb, ob in rows:
            f.write(f"{k},{sb:.17g},{pb:.17g},{ob:.17g}\n")
