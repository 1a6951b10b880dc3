"""Greedy forward selection of neurons, with replacement.

Selection works over the scaled activation vectors: vertex i is
neuron i's output pattern across the m examples, divided by sqrt(m),
and the target is the label vector under the same scaling.  Step k
picks the vertex whose inclusion minimizes the squared distance of the
running average to the target:

    q_k = argmin_q 0.5 * || (z_{k-1} + q) / k - y ||^2,
    z_k = z_{k-1} + q_k,    u_k = z_k / k.

Selecting a neuron twice doubles its multiplicity, which is the same
as rescaling its outer weight, so the result is a multiset: ``counts``
sums to the number of steps, not to the number of distinct neurons.

Two scans compute the candidate losses: a from-scratch evaluation per
candidate (the default, numerically transparent) and an incremental
inner-product recursion; they are required to agree to 1e-9 and a
regression test holds them to it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .network import TwoLayerNetwork, half_squared_error
from .validation import check_features_labels

SCAN_AGREEMENT_TOL = 1e-9


@dataclass
class GreedyState:
    """Running state of a selection pass.

    ``loss_history[k-1]`` is the full-dataset objective of the iterate
    after step k, even when selection itself looked at a mini-batch;
    ``u_history`` keeps every iterate so update identities can be
    audited after the fact.
    """

    n_vertices: int
    z: np.ndarray
    counts: np.ndarray
    chosen: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)
    u_history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, n_vertices: int, n_coords: int) -> "GreedyState":
        return cls(
            n_vertices=n_vertices,
            z=np.zeros(n_coords),
            counts=np.zeros(n_vertices, dtype=np.int64),
        )

    @property
    def k(self) -> int:
        return len(self.chosen)

    @property
    def u(self) -> np.ndarray:
        if self.k == 0:
            raise ValueError("no steps taken yet")
        return self.z / self.k

    @property
    def n_distinct(self) -> int:
        return int(np.count_nonzero(self.counts))


def candidate_losses(phi, y_vec, z, k_next, columns=None) -> np.ndarray:
    """Objective value 0.5*||(z + phi_i)/k_next - y||^2 for every i.

    Computed from scratch per candidate.  With ``columns`` given, the
    objective is restricted to those coordinates (mini-batch
    selection); restriction rescales every candidate equally, so the
    argmin is unchanged by the omitted sqrt(m/|columns|) factor.
    """
    if columns is not None:
        phi = phi[:, columns]
        y_vec = y_vec[columns]
        z = z[columns]
    shifted = (z - k_next * y_vec)[None, :] + phi
    return 0.5 * np.einsum("ij,ij->i", shifted, shifted) / (k_next * k_next)


class _IncrementalScan:
    """Cached inner products for the O(N) per-step candidate scan.

    Maintains <phi_i, z>, ||z||^2 and <z, y> across steps; each update
    costs one matrix-vector product.  Full-batch selection only.
    """

    def __init__(self, phi, y_vec):
        self.phi = phi
        self.sq_norms = np.einsum("ij,ij->i", phi, phi)
        self.dot_y = phi @ y_vec
        self.y_sq = float(y_vec @ y_vec)
        self.dot_z = np.zeros(phi.shape[0])
        self.z_sq = 0.0
        self.zy = 0.0

    def losses(self, k_next: int) -> np.ndarray:
        k = float(k_next)
        return (
            self.z_sq
            + 2.0 * self.dot_z
            + self.sq_norms
            - 2.0 * k * (self.zy + self.dot_y)
            + k * k * self.y_sq
        ) / (2.0 * k * k)

    def advance(self, q: int) -> None:
        self.z_sq += 2.0 * self.dot_z[q] + self.sq_norms[q]
        self.zy += self.dot_y[q]
        self.dot_z += self.phi @ self.phi[q]


def greedy_step(
    phi, y_vec, state: GreedyState, columns=None, _cache: _IncrementalScan | None = None
) -> int:
    """Take one selection step in place and return the chosen index.

    Ties in the candidate scan resolve to the lowest neuron index.
    """
    k_next = state.k + 1
    if _cache is not None:
        if columns is not None:
            raise ValueError("incremental scan cannot restrict to columns")
        losses = _cache.losses(k_next)
    else:
        losses = candidate_losses(phi, y_vec, state.z, k_next, columns)
    q = int(np.argmin(losses))
    if _cache is not None:
        _cache.advance(q)
    state.z = state.z + phi[q]
    state.counts[q] += 1
    state.chosen.append(q)
    state.u_history.append(state.z / k_next)
    state.loss_history.append(half_squared_error(state.z / k_next, y_vec))
    return q


def greedy_forward_selection(
    phi,
    y_vec,
    n_steps: int,
    selection_batch_size: int | None = None,
    seed: int = 0,
    scan: str = "direct",
) -> GreedyState:
    """Run ``n_steps`` of greedy selection over the vertex rows of phi.

    ``selection_batch_size`` switches the per-step candidate scan to a
    random sample of examples (seeded, drawn without replacement per
    step); the recorded losses still cover every example.  ``scan``
    picks the direct or incremental candidate evaluation.
    """
    phi = np.asarray(phi, dtype=np.float64)
    y_vec = np.asarray(y_vec, dtype=np.float64).ravel()
    if phi.ndim != 2 or phi.shape[1] != y_vec.shape[0]:
        raise ValueError(
            f"phi of shape {phi.shape} does not match target of length "
            f"{y_vec.shape[0]}"
        )
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if scan not in ("direct", "incremental"):
        raise ValueError(f"unknown scan {scan!r}")

    m = phi.shape[1]
    state = GreedyState.fresh(phi.shape[0], m)
    cache = None
    if scan == "incremental":
        if selection_batch_size is not None:
            raise ValueError("incremental scan requires full-batch selection")
        cache = _IncrementalScan(phi, y_vec)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    for _ in range(n_steps):
        columns = None
        if selection_batch_size is not None and selection_batch_size < m:
            columns = rng.choice(m, size=selection_batch_size, replace=False)
        greedy_step(phi, y_vec, state, columns=columns, _cache=cache)
    return state


def iterate_identity_residuals(phi, state: GreedyState) -> np.ndarray:
    """Max-norm residuals of the update identity, per step.

    Every step must satisfy u_k - u_{k-1} = (q_k - u_{k-1}) / k; the
    residual at step k is the largest coordinate of the difference
    between the two sides, computed from the recorded iterates.
    """
    if state.k < 2:
        raise ValueError("need at least two recorded iterates")
    res = np.empty(state.k - 1)
    for k in range(2, state.k + 1):
        u_prev = state.u_history[k - 2]
        u_cur = state.u_history[k - 1]
        q = phi[state.chosen[k - 1]]
        res[k - 2] = np.abs((u_cur - u_prev) - (q - u_prev) / k).max()
    return res


def scan_agreement_gap(phi, y_vec, n_steps: int) -> float:
    """Largest disagreement between the direct and incremental scans
    along one full selection run."""
    phi = np.asarray(phi, dtype=np.float64)
    y_vec = np.asarray(y_vec, dtype=np.float64).ravel()
    state = GreedyState.fresh(phi.shape[0], phi.shape[1])
    cache = _IncrementalScan(phi, y_vec)
    gap = 0.0
    for _ in range(n_steps):
        k_next = state.k + 1
        direct = candidate_losses(phi, y_vec, state.z, k_next)
        incremental = cache.losses(k_next)
        gap = max(gap, float(np.abs(direct - incremental).max()))
        greedy_step(phi, y_vec, state, _cache=cache)
    return gap


class RateFit(NamedTuple):
    """Power-law fit of the selection loss curve.

    ``exponent`` is the log-log slope of loss against step count; an
    exactly-zero loss cannot enter a log fit, so it is reported as
    exponent -inf with ``exact_fit`` set.
    """

    exponent: float
    exact_fit: bool


def rate_fit(loss_history, k_min: int = 1) -> RateFit:
    """Least-squares slope of log-loss against log-step for k >= k_min."""
    losses = np.asarray(loss_history, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise ValueError("loss_history must be a non-empty 1-d sequence")
    ks = np.arange(1, losses.size + 1)
    sel = ks >= k_min
    if sel.sum() < 2:
        raise ValueError("need at least two points at or after k_min")
    ks, losses = ks[sel], losses[sel]
    if (losses <= 0.0).any():
        return RateFit(float("-inf"), True)
    slope = np.polyfit(np.log(ks), np.log(losses), 1)[0]
    return RateFit(float(slope), False)


def selection_bound_violations(
    loss_history, diameter: float, dense_loss: float, slack: float = 1e-9
) -> np.ndarray:
    """Check every step against the per-step selection loss bound.

    Returns a boolean array, True where step k VIOLATES
    loss_history[0]/k + diameter^2/(2k) + (k-1)/k * dense_loss + slack.
    Full-batch selection satisfies the bound unconditionally.
    """
    from .thresholds import selection_loss_bound

    losses = np.asarray(loss_history, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("empty loss history")
    ks = np.arange(1, losses.size + 1)
    bounds = np.array(
        [selection_loss_bound(int(k), losses[0], diameter, dense_loss) for k in ks]
    )
    return losses > bounds + slack


class GreedyForwardSelector(BaseEstimator):
    """Estimator wrapper: fit a neuron multiset to data by greedy
    forward selection.

    Parameters
    ----------
    network : TwoLayerNetwork
        A network with weights (fitted or freshly initialized).  Never
        mutated; the selector only reads activations.
    n_select : int
        Number of selection steps (the multiset size).
    selection_batch_size : int or None
        Examples sampled per step for the candidate scan; None scans
        the full dataset.
    selection_seed : int
        Seed for the per-step example draws.
    scan : {"direct", "incremental"}
        Candidate loss evaluation strategy.

    Attributes
    ----------
    state_ : GreedyState
    counts_ : ndarray of shape (network.n_neurons,)
        Selection multiplicities, summing to n_select.
    chosen_ : list of int
    n_distinct_ : int
    loss_history_ : list of float
    """

    def __init__(
        self,
        network: TwoLayerNetwork,
        n_select: int = 200,
        selection_batch_size: int | None = None,
        selection_seed: int = 0,
        scan: str = "direct",
    ):
        self.network = network
        self.n_select = n_select
        self.selection_batch_size = selection_batch_size
        self.selection_seed = selection_seed
        self.scan = scan

    def fit(self, X, y) -> "GreedyForwardSelector":
        X, y = check_features_labels(X, y)
        phi = self.network.scaled_activations(X)
        y_vec = y / np.sqrt(len(y))
        self.state_ = greedy_forward_selection(
            phi,
            y_vec,
            n_steps=self.n_select,
            selection_batch_size=self.selection_batch_size,
            seed=self.selection_seed,
            scan=self.scan,
        )
        self.counts_ = self.state_.counts
        self.chosen_ = list(self.state_.chosen)
        self.n_distinct_ = self.state_.n_distinct
        self.loss_history_ = list(self.state_.loss_history)
        return self

    def _check_fitted(self):
        if not hasattr(self, "counts_"):
            raise NotFittedError("GreedyForwardSelector has not been fitted")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return (self.network.forward_pruned(X, self.counts_) >= 0.5).astype(
            np.float64
        )

    def score(self, X, y) -> float:
        self._check_fitted()
        return self.network.accuracy(X, y, counts=self.counts_)


def write_selection_csv(state: GreedyState, path) -> None:
    """Selection history as ``k,chosen_index,loss,distinct_count``."""
    distinct = 0
    seen = set()
    with open(path, "w", newline="") as f:
        f.write("k,chosen_index,loss,distinct_count\n")
        for k, (q, loss) in enumerate(zip(state.chosen, state.loss_history), start=1):
            if q not in seen:
                seen.add(q)
                distinct += 1
            f.write(f"{k},{q},{loss:.17g},{distinct}\n")


def write_counts_csv(counts, path) -> None:
    """Multiset export as ``index,count`` rows; zero counts omitted."""
    counts = np.asarray(counts)
    with open(path, "w", newline="") as f:
        f.write("index,count\n")
        for i in np.flatnonzero(counts):
            f.write(f"{i},{int(counts[i])}\n")


def read_counts_csv(path, n_neurons: int) -> np.ndarray:
    counts = np.zeros(n_neurons, dtype=np.int64)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["index", "count"]:
            raise ValueError(f"{path}: unexpected counts header {header}")
        for row in reader:
            counts[int(row[0])] = int(row[1])
    return counts
