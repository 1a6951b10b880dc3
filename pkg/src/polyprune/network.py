"""Width-averaged two-layer networks.

A network of width N maps an input x to

    f(x) = head( (1/N) * sum_i  b_i * act(a_i . x) )

with outer weights b in R^N, inner weight rows a_i in R^d, an inner
activation from :mod:`polyprune.activations`, and an output head that
is either the identity (regression / squared loss) or a logistic
sigmoid (binary classification / cross-entropy).  The 1/N averaging
makes the network output a convex combination of per-neuron outputs,
which is what lets pruning operate on the convex hull of the neuron
activation vectors.

Checkpoints use a flat binary format: magic ``P2LN``, u32 version,
u64 N, u64 d, one byte each for activation and head kind, then
little-endian float64 outer weights followed by the inner weight
matrix, row-major.  Weight bytes round-trip exactly.
"""

from __future__ import annotations

import struct

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .activations import get_activation
from .validation import (
    check_binary_labels,
    check_counts,
    check_features,
    check_features_labels,
)

CHECKPOINT_MAGIC = b"P2LN"
CHECKPOINT_VERSION = 1
_ACTIVATION_CODES = {"sigmoid": 0, "tanh": 1, "relu": 2}
_HEAD_CODES = {"linear": 0, "sigmoid": 1}


def _stable_sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def half_squared_error(z: np.ndarray, target: np.ndarray) -> float:
    """The squared-distance objective 0.5 * ||z - target||^2."""
    diff = np.asarray(z, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return 0.5 * float(diff @ diff)


class TwoLayerNetwork(BaseEstimator):
    """Two-layer network trained by mini-batch SGD.

    Parameters
    ----------
    n_neurons : int
        Width N of the hidden layer.
    activation : {"sigmoid", "tanh", "relu"}
        Inner activation.
    output_head : {"linear", "sigmoid"}
        Map applied to the averaged hidden output.
    criterion : {"l2", "bce"}
        Training loss: mean halved squared error, or binary
        cross-entropy (requires the sigmoid head).
    learning_rate, n_iter, batch_size, momentum, weight_decay
        SGD hyperparameters.  ``batch_size=None`` runs full-batch
        gradient descent.
    sampling : {"shuffle", "replacement"}
        Mini-batch scheme: epoch-wise shuffling without replacement,
        or an independent uniform draw per step.
    record_every : int
        Trace recording period, in iterations.
    warm_start : bool
        When True, ``fit`` continues from the current weights instead
        of re-initializing.
    random_state : int
        Seed for weight initialization and batch sampling.

    Attributes
    ----------
    outer_ : ndarray of shape (n_neurons,)
        Outer weights b.
    inner_ : ndarray of shape (n_neurons, n_features)
        Inner weight rows a_i.
    trace_ : TrainTrace
        Recorded (iteration, loss, accuracy) checkpoints.
    n_iter_total_ : int
        Iterations accumulated across warm-started fits.
    """

    def __init__(
        self,
        n_neurons: int = 256,
        activation: str = "sigmoid",
        output_head: str = "linear",
        criterion: str = "l2",
        learning_rate: float = 0.5,
        n_iter: int = 1000,
        batch_size: int | None = 1,
        momentum: float = 0.0,
        weight_decay: float = 0.0,
        sampling: str = "shuffle",
        record_every: int = 100,
        warm_start: bool = False,
        random_state: int = 0,
    ):
        self.n_neurons = n_neurons
        self.activation = activation
        self.output_head = output_head
        self.criterion = criterion
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.batch_size = batch_size
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.sampling = sampling
        self.record_every = record_every
        self.warm_start = warm_start
        self.random_state = random_state

    # ------------------------------------------------------------------
    # weights
    # ------------------------------------------------------------------

    def initialize(self, n_features: int) -> "TwoLayerNetwork":
        """Draw fresh standard-normal weights for d input features."""
        if self.n_neurons < 1:
            raise ValueError("n_neurons must be positive")
        if self.output_head not in _HEAD_CODES:
            raise ValueError(f"unknown output head {self.output_head!r}")
        if self.criterion == "bce" and self.output_head != "sigmoid":
            raise ValueError("bce criterion requires the sigmoid output head")
        if self.criterion not in ("l2", "bce"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        get_activation(self.activation)
        rng = np.random.default_rng(
            np.random.SeedSequence([int(self.random_state), 0])
        )
        self.outer_ = rng.standard_normal(self.n_neurons)
        self.inner_ = rng.standard_normal((self.n_neurons, n_features))
        self.n_features_in_ = n_features
        self.n_iter_total_ = 0
        self._velocity_outer = np.zeros_like(self.outer_)
        self._velocity_inner = np.zeros_like(self.inner_)
        from .training import TrainTrace

        self.trace_ = TrainTrace()
        return self

    def _require_weights(self):
        if not hasattr(self, "outer_"):
            raise NotFittedError(
                "this TwoLayerNetwork has no weights; call fit or initialize"
            )

    def _check_X(self, X) -> np.ndarray:
        self._require_weights()
        X = check_features(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, network expects "
                f"{self.n_features_in_}"
            )
        return X

    def copy(self) -> "TwoLayerNetwork":
        """Deep-copy the network so callers can snapshot weights safely."""
        import copy as _copy

        return _copy.deepcopy(self)

    # ------------------------------------------------------------------
    # forward paths
    # ------------------------------------------------------------------

    def neuron_outputs(self, X) -> np.ndarray:
        """Per-neuron outputs b_i * act(a_i . x_j), shape (N, m)."""
        X = self._check_X(X)
        act = get_activation(self.activation)
        return self.outer_[:, None] * act.fn(self.inner_ @ X.T)

    def neuron_activation(self, i: int, x) -> float:
        """Output of neuron i on a single input vector."""
        self._require_weights()
        if not 0 <= i < self.n_neurons:
            raise IndexError(f"neuron index {i} out of range [0, {self.n_neurons})")
        x = np.asarray(x, dtype=np.float64).ravel()
        act = get_activation(self.activation)
        return float(self.outer_[i] * act.fn(np.array([self.inner_[i] @ x]))[0])

    def decision_function(self, X) -> np.ndarray:
        """Pre-head network output: the width-averaged hidden layer."""
        X = self._check_X(X)
        act = get_activation(self.activation)
        return act.fn(X @ self.inner_.T) @ self.outer_ / self.n_neurons

    def _apply_head(self, s: np.ndarray) -> np.ndarray:
        if self.output_head == "sigmoid":
            return _stable_sigmoid(s)
        return s

    def forward(self, X) -> np.ndarray:
        """Network outputs f(x_j) for every row of X."""
        return self._apply_head(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        """Binary predictions: the head output thresholded at 0.5."""
        return (self.forward(X) >= 0.5).astype(np.float64)

    def pruned_decision_function(self, X, counts) -> np.ndarray:
        """Pre-head output of the multiset subnetwork.

        ``counts[i]`` is the multiplicity of neuron i; the subnetwork
        averages the selected neurons with those multiplicities, so a
        neuron chosen twice counts double.
        """
        counts = check_counts(counts, self.n_neurons)
        live = np.flatnonzero(counts)
        X = self._check_X(X)
        act = get_activation(self.activation)
        weights = counts[live] * self.outer_[live]
        return act.fn(X @ self.inner_[live].T) @ weights / counts.sum()

    def forward_pruned(self, X, counts) -> np.ndarray:
        """Subnetwork outputs after the head."""
        return self._apply_head(self.pruned_decision_function(X, counts))

    def scaled_activations(self, X) -> np.ndarray:
        """Neuron output vectors scaled by 1/sqrt(m), shape (N, m).

        Row i is the vertex the polytope machinery associates with
        neuron i; the matching target vector is ``y / sqrt(m)``.  The
        output head is deliberately not applied.
        """
        X = self._check_X(X)
        return self.neuron_outputs(X) / np.sqrt(X.shape[0])

    # ------------------------------------------------------------------
    # losses and gradients
    # ------------------------------------------------------------------

    def _criterion_loss(self, s: np.ndarray, y: np.ndarray, criterion: str) -> float:
        if criterion == "l2":
            r = self._apply_head(s) - y
            return 0.5 * float(r @ r) / len(y)
        if criterion == "bce":
            if self.output_head != "sigmoid":
                raise ValueError("bce criterion requires the sigmoid output head")
            # softplus(s) - y*s is the stable form of -log-likelihood
            sp = np.logaddexp(0.0, s)
            return float(np.mean(sp - y * s))
        raise ValueError(f"unknown criterion {criterion!r}")

    def loss(self, X, y, criterion: str | None = None, counts=None) -> float:
        """Mean training loss over (X, y), optionally of a subnetwork."""
        X, y = check_features_labels(X, y)
        if counts is None:
            s = self.decision_function(X)
        else:
            s = self.pruned_decision_function(X, counts)
        return self._criterion_loss(s, y, criterion or self.criterion)

    def loss_gradient(self, X, y, criterion: str | None = None):
        """Gradient of the mean loss w.r.t. (outer_, inner_).

        Returns a pair (grad_outer, grad_inner) with the same shapes as
        the weight arrays.  Weight decay is not included here; the
        optimizer adds it.
        """
        X, y = check_features_labels(X, y)
        X = self._check_X(X)
        criterion = criterion or self.criterion
        act = get_activation(self.activation)
        n, m = self.n_neurons, len(y)

        z = X @ self.inner_.T
        hidden = act.fn(z)
        s = hidden @ self.outer_ / n
        f = self._apply_head(s)
        if criterion == "l2":
            g = f - y
            if self.output_head == "sigmoid":
                g = g * f * (1.0 - f)
        elif criterion == "bce":
            if self.output_head != "sigmoid":
                raise ValueError("bce criterion requires the sigmoid output head")
            g = f - y
        else:
            raise ValueError(f"unknown criterion {criterion!r}")
        g = g / m

        grad_outer = hidden.T @ g / n
        grad_inner = ((act.deriv(z) * g[:, None]) * self.outer_[None, :]).T @ X / n
        return grad_outer, grad_inner

    def residual_norm_squared(self, X, y) -> float:
        """Unnormalized squared residual ||f(X) - y||^2 of the head output."""
        X, y = check_features_labels(X, y)
        r = self.forward(X) - y
        return float(r @ r)

    def accuracy(self, X, y, counts=None) -> float:
        """Exact-match rate of thresholded outputs against 0/1 labels."""
        X, y = check_features_labels(X, y)
        y = check_binary_labels(y)
        out = self.forward(X) if counts is None else self.forward_pruned(X, counts)
        return float(np.mean((out >= 0.5) == (y == 1.0)))

    def score(self, X, y) -> float:
        return self.accuracy(X, y)

    # ------------------------------------------------------------------
    # training
    # ------------------------------------------------------------------

    def fit(self, X, y) -> "TwoLayerNetwork":
        """Train with mini-batch SGD for ``n_iter`` iterations.

        With ``warm_start=True`` and existing weights, training resumes
        exactly where the previous fit stopped: batch order, momentum
        state, and the iteration counter all continue, so one fit of
        2k iterations equals two consecutive fits of 1k.
        """
        from .training import sgd_loop

        X, y = check_features_labels(X, y)
        if not (self.warm_start and hasattr(self, "outer_")):
            self.initialize(X.shape[1])
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"warm start with {X.shape[1]} features, network has "
                f"{self.n_features_in_}"
            )
        sgd_loop(self, X, y)
        return self

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path) -> None:
        """Write weights to the flat checkpoint format."""
        self._require_weights()
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(
                struct.pack(
                    "<IQQBB",
                    CHECKPOINT_VERSION,
                    self.n_neurons,
                    self.n_features_in_,
                    _ACTIVATION_CODES[self.activation],
                    _HEAD_CODES[self.output_head],
                )
            )
            f.write(self.outer_.astype("<f8").tobytes())
            f.write(np.ascontiguousarray(self.inner_).astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "TwoLayerNetwork":
        """Rebuild a network from a checkpoint file.

        Only architecture and weights are stored, so training
        hyperparameters come back as constructor defaults.
        """
        path = str(path)
        with open(path, "rb") as f:
            data = f.read()
        if data[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {data[:4]!r}")
        version, n, d, act_code, head_code = struct.unpack("<IQQBB", data[4:26])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        need = 26 + 8 * n + 8 * n * d
        if len(data) != need:
            raise ValueError(f"{path}: {len(data)} bytes, expected {need}")
        activations = {v: k for k, v in _ACTIVATION_CODES.items()}
        heads = {v: k for k, v in _HEAD_CODES.items()}
        if act_code not in activations or head_code not in heads:
            raise ValueError(f"{path}: unknown activation/head code")
        net = cls(
            n_neurons=n,
            activation=activations[act_code],
            output_head=heads[head_code],
        )
        net.outer_ = np.frombuffer(data, dtype="<f8", count=n, offset=26).copy()
        net.inner_ = (
            np.frombuffer(data, dtype="<f8", count=n * d, offset=26 + 8 * n)
            .reshape(n, d)
            .copy()
        )
        net.n_features_in_ = d
        net.n_iter_total_ = 0
        net._velocity_outer = np.zeros_like(net.outer_)
        net._velocity_inner = np.zeros_like(net.inner_)
        from .training import TrainTrace

        net.trace_ = TrainTrace()
        return net
