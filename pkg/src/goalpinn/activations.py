"""Smooth scalar activations with closed-form derivatives up to third order.

Both activations are C-infinity, which keeps network outputs twice
continuously differentiable in space (needed for Laplacian propagation)
and three times differentiable for reverse-mode gradients of that
Laplacian with respect to the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _tanh_derivatives(x: np.ndarray, order: int) -> tuple[np.ndarray, ...]:
    t = np.tanh(x)
    if order == 0:
        return (t,)
    d1 = 1.0 - t * t
    if order == 1:
        return (t, d1)
    d2 = -2.0 * t * d1
    if order == 2:
        return (t, d1, d2)
    d3 = -2.0 * (d1 * d1 + t * d2)
    return (t, d1, d2, d3)


def _gelu_derivatives(x: np.ndarray, order: int) -> tuple[np.ndarray, ...]:
    # Exact error-function form: value = x * Phi(x) with Phi the standard
    # normal CDF.  All derivatives reduce to polynomials times the normal
    # density, so one erf and one exp evaluation serve every order.
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    value = x * cdf
    if order == 0:
        return (value,)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    d1 = cdf + x * pdf
    if order == 1:
        return (value, d1)
    d2 = pdf * (2.0 - x * x)
    if order == 2:
        return (value, d1, d2)
    d3 = pdf * (x * x * x - 4.0 * x)
    return (value, d1, d2, d3)


@dataclass(frozen=True)
class Activation:
    """A scalar activation together with its first three derivatives."""

    name: str
    derivatives: Callable[[np.ndarray, int], tuple[np.ndarray, ...]]

    def __call__(self, x):
        return self.derivatives(x, 0)[0]


ACTIVATIONS: dict[str, Activation] = {
    "tanh": Activation("tanh", _tanh_derivatives),
    "gelu": Activation("gelu", _gelu_derivatives),
}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown activation {name!r}; available: {sorted(ACTIVATIONS)}"
        ) from None


def activation_eval(kind: str, s):
    """Evaluate an activation and its first two derivatives at ``s``.

    Returns the triple (value, first derivative, second derivative).
    ``s`` may be a scalar or an array; the result matches its shape.
    """
    act = get_activation(kind)
    value, d1, d2 = act.derivatives(np.asarray(s, dtype=np.float64), 2)
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(value), float(d1), float(d2)
    return value, d1, d2
