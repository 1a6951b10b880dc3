"""Mini-batch SGD loop, training traces, and decay-rate estimation.

The loop is deterministic given the network's ``random_state``: epoch
permutations (or with-replacement draws) are derived from the seed and
the step index alone, never from shared RNG state, so a warm-started
continuation reproduces an uninterrupted run bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_LIMIT = 1e12


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite or absurdly large during training."""


@dataclass
class TrainTrace:
    """Recorded (iteration, full-dataset loss, accuracy) checkpoints.

    Accuracy entries are NaN when the labels are not binary.
    """

    iterations: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)

    def record(self, iteration: int, loss: float, accuracy: float) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("trace iterations must strictly increase")
        self.iterations.append(int(iteration))
        self.losses.append(float(loss))
        self.accuracies.append(float(accuracy))

    @property
    def initial_loss(self) -> float:
        if not self.losses:
            raise ValueError("empty trace")
        return self.losses[0]

    def __len__(self) -> int:
        return len(self.iterations)


def _record_point(net, X, y, iteration, binary):
    loss = net.loss(X, y)
    if not math.isfinite(loss) or abs(loss) > DIVERGENCE_LIMIT:
        raise TrainingDivergedError(
            f"training diverged: loss {loss!r} at iteration {iteration}"
        )
    acc = net.accuracy(X, y) if binary else float("nan")
    net.trace_.record(iteration, loss, acc)


def _batch_indices(step, m, batch_size, sampling, seed):
    """Indices of the mini-batch used at a given step, as a pure function
    of (seed, step)."""
    if batch_size is None or batch_size >= m:
        return np.arange(m)
    if sampling == "shuffle":
        steps_per_epoch = -(-m // batch_size)
        epoch, slot = divmod(step, steps_per_epoch)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, epoch]))
        perm = rng.permutation(m)
        return perm[slot * batch_size : (slot + 1) * batch_size]
    if sampling == "replacement":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, step]))
        return rng.integers(0, m, size=batch_size)
    raise ValueError(f"unknown sampling scheme {sampling!r}")


def sgd_loop(net, X, y) -> None:
    """Run ``net.n_iter`` SGD steps in place, extending ``net.trace_``.

    Records the full-dataset loss at iteration 0 (fresh runs only),
    every ``record_every`` steps, and at the final step.
    """
    m = len(y)
    batch_size = net.batch_size
    full_batch = batch_size is None or batch_size >= m
    if not full_batch and batch_size < 1:
        raise ValueError("batch_size must be positive or None")
    lr = float(net.learning_rate)
    mu = float(net.momentum)
    wd = float(net.weight_decay)
    seed = int(net.random_state)
    binary = bool(np.isin(y, (0.0, 1.0)).all())

    if net.n_iter_total_ == 0 and len(net.trace_) == 0:
        _record_point(net, X, y, 0, binary)

    start = net.n_iter_total_
    last = start + int(net.n_iter)
    # Reuse one epoch permutation across its steps instead of rebuilding
    # it per step.
    cached_epoch, perm = -1, None
    if not full_batch and net.sampling == "shuffle":
        steps_per_epoch = -(-m // batch_size)

    for t in range(start, last):
        if full_batch:
            bx, by = X, y
        elif net.sampling == "shuffle":
            epoch, slot = divmod(t, steps_per_epoch)
            if epoch != cached_epoch:
                rng = np.random.default_rng(np.random.SeedSequence([seed, 1, epoch]))
                perm = rng.permutation(m)
                cached_epoch = epoch
            idx = perm[slot * batch_size : (slot + 1) * batch_size]
            bx, by = X[idx], y[idx]
        else:
            idx = _batch_indices(t, m, batch_size, net.sampling, seed)
            bx, by = X[idx], y[idx]

        grad_outer, grad_inner = net.loss_gradient(bx, by)
        if wd:
            grad_outer += wd * net.outer_
            grad_inner += wd * net.inner_
        if mu:
            net._velocity_outer = mu * net._velocity_outer + grad_outer
            net._velocity_inner = mu * net._velocity_inner + grad_inner
        else:
            net._velocity_outer = grad_outer
            net._velocity_inner = grad_inner
        net.outer_ = net.outer_ - lr * net._velocity_outer
        net.inner_ = net.inner_ - lr * net._velocity_inner
        net.n_iter_total_ = t + 1

        if (t + 1) % net.record_every == 0 or t + 1 == last:
            _record_point(net, X, y, t + 1, binary)


def write_trace_csv(trace: TrainTrace, path) -> None:
    """Write a trace as ``iteration,loss,accuracy`` rows, floats at
    17 significant digits so values round-trip exactly."""
    with open(path, "w", newline="") as f:
        f.write("iteration,loss,accuracy\n")
        for it, loss, acc in zip(trace.iterations, trace.losses, trace.accuracies):
            f.write(f"{it},{loss:.17g},{acc:.17g}\n")


def read_trace_csv(path) -> TrainTrace:
    trace = TrainTrace()
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["iteration", "loss", "accuracy"]:
            raise ValueError(f"{path}: unexpected trace header {header}")
        for row in reader:
            trace.record(int(row[0]), float(row[1]), float(row[2]))
    return trace


def log_linear_fit(iterations, values):
    """Least-squares line through (iteration, log value) points.

    Returns (slope, intercept, r_squared).  Values must be positive.
    """
    its = np.asarray(iterations, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if its.shape != vals.shape or its.size < 2:
        raise ValueError("need at least two aligned (iteration, value) points")
    if (vals <= 0).any():
        bad = int(np.flatnonzero(vals <= 0)[0])
        raise ValueError(
            f"nonpositive value {vals[bad]} at iteration {int(its[bad])}; "
            "log-linear fit undefined"
        )
    logs = np.log(vals)
    slope, intercept = np.polyfit(its, logs, 1)
    pred = slope * its + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_decay_rate(trace: TrainTrace, min_iteration: int = 0) -> float:
    """Per-iteration geometric decay rate of the traced loss.

    Fits log-loss against iteration by least squares over checkpoints
    at or after ``min_iteration`` and returns rho = exp(slope), clipped
    into (0, 1].  A loss behaving like L_0 * rho^t comes back as rho.
    """
    its = [i for i in trace.iterations if i >= min_iteration]
    losses = [l for i, l in zip(trace.iterations, trace.losses) if i >= min_iteration]
    if len(its) < 3:
        raise ValueError("need at least three trace checkpoints to fit a rate")
    slope, _, _ = log_linear_fit(its, losses)
    return min(math.exp(slope), 1.0)


def estimate_c(rho: float, m: int, d: int, mode: str = "sgd") -> float:
    """Back out the rate constant from a fitted decay rate.

    Inverts rho = 1 - c*d/m^2 (sgd) or rho = 1 - c*d/m (gd).
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"decay rate {rho} outside (0, 1); no usable constant")
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    if mode == "sgd":
        return (1.0 - rho) * m * m / d
    if mode == "gd":
        return (1.0 - rho) * m / d
    raise ValueError(f"unknown mode {mode!r}")
