"""Mixed-mode automatic differentiation for scalar networks.

Spatial derivatives are propagated forward: every layer transforms a
stacked state holding the value row block, one row block per input
coordinate for the Jacobian, and a Laplacian row block.  Affine layers act
on the whole stack with a single matrix product (the bias touches only the
value block); activations scale the Jacobian by sigma' and combine
sigma'' |grad|^2 + sigma' Lap for the Laplacian; skip connections add
stacks elementwise.

Parameter gradients are accumulated in reverse over the same stacked
graph, so d(loss)/d(theta) is exact for losses built from values, spatial
gradients and Laplacians, including gradients of the Laplacian itself.
Backward through an activation needs sigma''' because the Laplacian rule
already consumed sigma''.

All arithmetic is float64.  For a fixed platform the results are a
deterministic function of (spec, params, points): reductions use fixed
index order and BLAS products assign each output element to one summation
chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from .activations import get_activation
from .errors import NumericalError
from .network import Network, NetworkSpec, layout_for

# Channel modes: how many derivative channels the stacked state carries.
VALUE = "value"
GRAD = "grad"
JET = "jet"

_MODE_ORDER = {VALUE: 0, GRAD: 1, JET: 2}


@dataclass
class Jet2:
    """Value, spatial gradient and Laplacian of a scalar field at one point."""

    value: float
    grad: np.ndarray
    laplacian: float


@dataclass
class JetBatch:
    """Per-point jets for a batch; ``grads``/``laplacians`` may be None.

    Used both for forward results and for cotangents fed to the backward
    pass, where a ``None`` field means "no sensitivity on this channel".
    """

    values: np.ndarray | None
    grads: np.ndarray | None = None
    laplacians: np.ndarray | None = None

    def __len__(self):
        for arr in (self.values, self.grads, self.laplacians):
            if arr is not None:
                return arr.shape[0]
        return 0


def _channels(mode: str, d: int) -> int:
    if mode == VALUE:
        return 1
    if mode == GRAD:
        return 1 + d
    if mode == JET:
        return 2 + d
    raise ValueError(f"unknown channel mode {mode!r}")


@lru_cache(maxsize=None)
def _plan(spec: NetworkSpec):
    """Sequence of ('affine', k) / ('act',) / ('skip_save',) / ('skip_add',)."""
    ops = []
    if spec.architecture == "mlp":
        n_hidden = len(spec.hidden_widths)
        for k in range(n_hidden):
            ops.append(("affine", k))
            ops.append(("act",))
        ops.append(("affine", n_hidden))
    else:
        ops.append(("affine", 0))  # lift, no activation
        k = 1
        for _ in range(spec.num_blocks):
            ops.append(("skip_save",))
            ops.append(("affine", k))
            ops.append(("act",))
            ops.append(("affine", k + 1))
            ops.append(("act",))
            ops.append(("skip_add",))
            k += 2
        ops.append(("affine", k))
    return ops


def _initial_state(X: np.ndarray, mode: str) -> np.ndarray:
    P, d = X.shape
    nch = _channels(mode, d)
    S = np.zeros((nch * P, d))
    S[:P] = X
    if mode != VALUE:
        for c in range(d):
            S[(1 + c) * P : (2 + c) * P, c] = 1.0
    return S


def _forward(spec: NetworkSpec, params: np.ndarray, X: np.ndarray, mode: str,
             keep_tape: bool):
    P, d = X.shape
    layout = layout_for(spec)
    act = get_activation(spec.activation)
    # backward through an activation needs one derivative order more than
    # the forward jets carry
    order = _MODE_ORDER[mode] + (1 if keep_tape else 0)
    S = _initial_state(X, mode)
    tape = [] if keep_tape else None
    saved = []
    for op in _plan(spec):
        kind = op[0]
        if kind == "affine":
            k = op[1]
            W = layout.weight(params, k)
            b = layout.bias(params, k)
            if keep_tape:
                tape.append(("affine", k, S))
            S = S @ W.T
            S[:P] += b
        elif kind == "act":
            derivs = act.derivatives(S[:P], order)
            out = np.empty_like(S)
            out[:P] = derivs[0]
            q = None
            if mode != VALUE:
                s1 = derivs[1]
                for c in range(d):
                    lo, hi = (1 + c) * P, (2 + c) * P
                    np.multiply(s1, S[lo:hi], out=out[lo:hi])
            if mode == JET:
                J0 = S[P : 2 * P]
                q = np.multiply(J0, J0)
                for c in range(1, d):
                    Jc = S[(1 + c) * P : (2 + c) * P]
                    q += Jc * Jc
                lap_out = out[(1 + d) * P :]
                np.multiply(s1, S[(1 + d) * P :], out=lap_out)
                lap_out += derivs[2] * q
            if keep_tape:
                tape.append(("act", S, derivs, q))
            S = out
        elif kind == "skip_save":
            saved.append(S)
            if keep_tape:
                tape.append(("skip_save",))
        else:  # skip_add
            S = S + saved.pop()
            if keep_tape:
                tape.append(("skip_add",))
    return S, tape


def _jets_from_state(S: np.ndarray, P: int, d: int, mode: str) -> JetBatch:
    values = S[:P, 0].copy()
    grads = laps = None
    if mode != VALUE:
        grads = S[P : (1 + d) * P, 0].reshape(d, P).T.copy()
    if mode == JET:
        laps = S[(1 + d) * P :, 0].copy()
    return JetBatch(values=values, grads=grads, laplacians=laps)


# evaluation-only passes are processed in row chunks; the stacked per-chunk
# matrices then stay inside the cache-friendly regime of the BLAS kernels
_CHUNK_ROWS = 16384


def forward_values(spec: NetworkSpec, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], _CHUNK_ROWS):
        chunk = X[lo : lo + _CHUNK_ROWS]
        S, _ = _forward(spec, params, chunk, VALUE, keep_tape=False)
        out[lo : lo + len(chunk)] = S[:, 0]
    return out


def eval_jet_batch(spec: NetworkSpec, params: np.ndarray, X: np.ndarray,
                   mode: str = JET) -> JetBatch:
    P, d = X.shape
    chunk_rows = max(_CHUNK_ROWS // _channels(mode, d), 1)
    if P <= chunk_rows:
        S, _ = _forward(spec, params, X, mode, keep_tape=False)
        return _jets_from_state(S, P, d, mode)
    values = np.empty(P)
    grads = np.empty((P, d)) if mode != VALUE else None
    laps = np.empty(P) if mode == JET else None
    for lo in range(0, P, chunk_rows):
        chunk = X[lo : lo + chunk_rows]
        S, _ = _forward(spec, params, chunk, mode, keep_tape=False)
        part = _jets_from_state(S, len(chunk), d, mode)
        values[lo : lo + len(chunk)] = part.values
        if grads is not None:
            grads[lo : lo + len(chunk)] = part.grads
        if laps is not None:
            laps[lo : lo + len(chunk)] = part.laplacians
    return JetBatch(values=values, grads=grads, laplacians=laps)


def _stacked_cotangent(bar: JetBatch, P: int, d: int, mode: str) -> np.ndarray:
    nch = _channels(mode, d)
    C = np.zeros((nch * P, 1))
    if bar.values is not None:
        C[:P, 0] = bar.values
    if bar.grads is not None:
        if mode == VALUE:
            raise ValueError("gradient cotangents supplied for a value-only batch")
        C[P : (1 + d) * P, 0] = bar.grads.T.reshape(d * P)
    if bar.laplacians is not None:
        if mode != JET:
            raise ValueError("laplacian cotangents supplied without a laplacian channel")
        C[(1 + d) * P :, 0] = bar.laplacians
    return C


def _backward(spec: NetworkSpec, params: np.ndarray, tape, bar: JetBatch,
              P: int, d: int, mode: str, grad_out: np.ndarray) -> None:
    """Accumulate d< bar, jets >/d(params) into ``grad_out`` (flat)."""
    layout = layout_for(spec)
    C = _stacked_cotangent(bar, P, d, mode)
    skip_stack = []
    for record in reversed(tape):
        kind = record[0]
        if kind == "affine":
            _, k, S_in = record
            layout.weight(grad_out, k)[:] += C.T @ S_in
            layout.bias(grad_out, k)[:] += C[:P].sum(axis=0)
            C = C @ layout.weight(params, k)
        elif kind == "act":
            _, S_in, derivs, q = record
            s1 = derivs[1]
            s2 = derivs[2] if len(derivs) > 2 else None
            new = np.empty_like(C)
            Z_bar = new[:P]
            np.multiply(C[:P], s1, out=Z_bar)
            if mode != VALUE:
                # gradient channels: d(s1 * J_c)/dz = s2 * J_c feeds Z_bar
                dot = None
                for c in range(d):
                    lo, hi = (1 + c) * P, (2 + c) * P
                    prod = C[lo:hi] * S_in[lo:hi]
                    if dot is None:
                        dot = prod
                    else:
                        dot += prod
                    np.multiply(C[lo:hi], s1, out=new[lo:hi])
                dot *= s2
                Z_bar += dot
            if mode == JET:
                s3 = derivs[3]
                Cl = C[(1 + d) * P :]
                L_in = S_in[(1 + d) * P :]
                # laplacian rule s2*q + s1*L: cotangents into z, J and L
                tmp = s3 * q
                tmp += s2 * L_in
                tmp *= Cl
                Z_bar += tmp
                cls2 = np.multiply(Cl, s2)
                cls2 += cls2
                for c in range(d):
                    lo, hi = (1 + c) * P, (2 + c) * P
                    new[lo:hi] += cls2 * S_in[lo:hi]
                np.multiply(Cl, s1, out=new[(1 + d) * P :])
            C = new
        elif kind == "skip_add":
            skip_stack.append(C)
        else:  # skip_save
            C = C + skip_stack.pop()


class BatchLoss(Protocol):
    """A scalar loss built from network jets on fixed point batches.

    ``point_batches`` declares which points are evaluated and which jet
    channels each batch needs.  ``value`` and ``cotangents`` are smooth
    closed-form functions of the returned jets; cotangents are the exact
    partial derivatives of the loss with respect to each jet channel.
    """

    def point_batches(self) -> Sequence[tuple[np.ndarray, str]]: ...

    def value(self, jets: Sequence[JetBatch]) -> float: ...

    def cotangents(self, jets: Sequence[JetBatch]) -> Sequence[JetBatch]: ...


def _forward_all(net: Network, loss: BatchLoss, keep_tape: bool):
    jets, tapes, shapes = [], [], []
    for X, mode in loss.point_batches():
        X = np.ascontiguousarray(X, dtype=np.float64)
        S, tape = _forward(net.spec, net.params, X, mode, keep_tape)
        jets.append(_jets_from_state(S, X.shape[0], X.shape[1], mode))
        tapes.append(tape)
        shapes.append((X.shape[0], X.shape[1], mode))
    return jets, tapes, shapes


def _check_jets_finite(jets: Sequence[JetBatch]) -> None:
    for b, batch in enumerate(jets):
        for arr in (batch.values, batch.grads, batch.laplacians):
            if arr is None:
                continue
            finite = np.isfinite(arr)
            if not finite.all():
                idx = int(np.argwhere(~finite)[0][0])
                raise NumericalError(
                    f"non-finite network output in batch {b}", point_index=idx
                )


def loss_value(net: Network, loss: BatchLoss) -> float:
    jets, _, _ = _forward_all(net, loss, keep_tape=False)
    _check_jets_finite(jets)
    return float(loss.value(jets))


def loss_value_and_gradient(net: Network, loss: BatchLoss) -> tuple[float, np.ndarray]:
    """One forward pass shared by the loss value and its parameter gradient."""
    jets, tapes, shapes = _forward_all(net, loss, keep_tape=True)
    _check_jets_finite(jets)
    value = float(loss.value(jets))
    bars = loss.cotangents(jets)
    grad = np.zeros(net.layout.size)
    for tape, bar, (P, d, mode) in zip(tapes, bars, shapes):
        _backward(net.spec, net.params, tape, bar, P, d, mode, grad)
    if not np.isfinite(grad).all():
        idx = int(np.argwhere(~np.isfinite(grad))[0][0])
        raise NumericalError(f"non-finite parameter gradient at index {idx}")
    grad[net.freeze_mask] = 0.0
    return value, grad


def param_gradient(net: Network, loss: BatchLoss) -> np.ndarray:
    """Exact d(loss)/d(params); entries at frozen indices are exactly zero."""
    return loss_value_and_gradient(net, loss)[1]
