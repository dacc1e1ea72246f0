"""Scalar fields over a domain: the common face of networks and closed forms.

Estimators and functional evaluation only need batched values, gradients
and (sometimes) Laplacians, so they accept anything with the ``Field``
interface.  ``CallableField`` wraps analytic expressions, which lets tests
and desk-scale oracles drive the same code paths as trained networks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .autodiff import JetBatch


@runtime_checkable
class Field(Protocol):
    def values(self, X: np.ndarray) -> np.ndarray: ...

    def jets(self, X: np.ndarray) -> JetBatch: ...


@dataclass
class CallableField:
    """A field given by closed-form callables on point batches (N, d)."""

    value_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
    laplacian_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def values(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value_fn(np.atleast_2d(X)), dtype=np.float64)

    def jets(self, X: np.ndarray) -> JetBatch:
        X = np.atleast_2d(X)
        grads = None if self.grad_fn is None else np.asarray(self.grad_fn(X), dtype=np.float64)
        laps = None if self.laplacian_fn is None else np.asarray(self.laplacian_fn(X), dtype=np.float64)
        return JetBatch(values=self.values(X), grads=grads, laplacians=laps)


def constant_field(c: float) -> CallableField:
    return CallableField(
        value_fn=lambda X: np.full(X.shape[0], float(c)),
        grad_fn=lambda X: np.zeros_like(X),
        laplacian_fn=lambda X: np.zeros(X.shape[0]),
    )
