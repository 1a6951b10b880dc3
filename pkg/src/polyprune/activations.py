"""Inner activation functions and their derivative bounds.

The convergence analysis the bound calculators rely on assumes the
inner activation has first and second derivatives bounded by a common
constant.  Each registry entry records that constant: 1 covers both
derivatives of the logistic sigmoid, 2 covers tanh.  ReLU has no
second derivative at zero, so it carries no bound and is rejected by
theory-mode consumers; it remains available for purely empirical runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def _sigmoid(z):
    # Piecewise form avoids overflow in exp for large |z|.
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return _sigmoid(z) if z.ndim else float(_sigmoid(z[None])[0])


def _sigmoid_deriv(z):
    s = _sigmoid(np.asarray(z, dtype=np.float64))
    return s * (1.0 - s)


def _tanh_deriv(z):
    t = np.tanh(z)
    return 1.0 - t * t


@dataclass(frozen=True)
class Activation:
    """One inner activation: value, first derivative, derivative bound.

    ``derivative_bound`` is None when no common bound on the first two
    derivatives exists, marking the activation as unusable for bound
    verification.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    derivative_bound: float | None

    @property
    def smooth(self) -> bool:
        return self.derivative_bound is not None


ACTIVATIONS = {
    "sigmoid": Activation("sigmoid", _sigmoid, _sigmoid_deriv, 1.0),
    "tanh": Activation("tanh", np.tanh, _tanh_deriv, 2.0),
    "relu": Activation(
        "relu",
        lambda z: np.maximum(z, 0.0),
        lambda z: (z > 0).astype(np.float64),
        None,
    ),
}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None


def require_smooth(activation: str | Activation) -> Activation:
    """Fetch an activation, rejecting any without a derivative bound."""
    act = activation if isinstance(activation, Activation) else get_activation(activation)
    if not act.smooth:
        raise ValueError(
            f"activation {act.name!r} has no bounded second derivative; "
            "use sigmoid or tanh for bound verification"
        )
    return act
