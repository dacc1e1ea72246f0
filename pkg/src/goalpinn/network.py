"""Dense scalar networks with flat parameter storage and freeze masks.

Two architectures are supported:

* ``mlp``: a plain feed-forward chain, one activation after every hidden
  affine layer and a final affine map to the scalar output.
* ``resnet``: an affine lift of the input to the hidden width, followed by
  residual blocks of two activated affine layers with an identity skip
  around each block, and a final affine output map.

Parameters live in a single flat float64 vector.  A layout table maps
(layer, weight/bias, row, col) to flat indices, so optimizers, checkpoints
and gradient checks all operate on one contiguous array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError

ARCHITECTURES = ("mlp", "resnet")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; immutable and hashable."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    architecture: str = "mlp"
    activation: str = "tanh"
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.output_dim != 1:
            raise ValueError("only scalar outputs are supported")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden_widths must be a nonempty sequence of positive ints")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.architecture == "resnet":
            if len(self.hidden_widths) % 2 != 0:
                raise ValueError("resnet needs an even number of hidden layers (two per block)")
            if len(set(self.hidden_widths)) != 1:
                raise ValueError("resnet blocks require equal hidden widths throughout")
        from .activations import get_activation

        get_activation(self.activation)

    @property
    def num_blocks(self) -> int:
        if self.architecture != "resnet":
            return 0
        return len(self.hidden_widths) // 2

    @property
    def affine_shapes(self) -> tuple[tuple[int, int], ...]:
        """(rows, cols) of every affine map, in evaluation order."""
        if self.architecture == "mlp":
            widths = (self.input_dim, *self.hidden_widths, self.output_dim)
        else:
            # one lift layer in front of the blocks
            w = self.hidden_widths[0]
            widths = (self.input_dim, w, *self.hidden_widths, self.output_dim)
        return tuple((widths[i + 1], widths[i]) for i in range(len(widths) - 1))

    @property
    def parameter_count(self) -> int:
        return sum(rows * (1 + cols) for rows, cols in self.affine_shapes)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "architecture": self.architecture,
            "activation": self.activation,
            "output_dim": self.output_dim,
        }

    @staticmethod
    def from_dict(data: dict) -> "NetworkSpec":
        return NetworkSpec(
            input_dim=int(data["input_dim"]),
            hidden_widths=tuple(data["hidden_widths"]),
            architecture=data["architecture"],
            activation=data["activation"],
            output_dim=int(data.get("output_dim", 1)),
        )


class ParameterLayout:
    """Bijection between (layer, kind, row, col) coordinates and flat indices.

    Weights are stored row-major, each layer's weight block followed by its
    bias block, layers in evaluation order.
    """

    def __init__(self, shapes: tuple[tuple[int, int], ...]):
        self.shapes = tuple(shapes)
        self._weight_offsets = []
        self._bias_offsets = []
        offset = 0
        for rows, cols in self.shapes:
            self._weight_offsets.append(offset)
            offset += rows * cols
            self._bias_offsets.append(offset)
            offset += rows
        self.size = offset

    @property
    def num_layers(self) -> int:
        return len(self.shapes)

    def weight(self, flat: np.ndarray, layer: int) -> np.ndarray:
        rows, cols = self.shapes[layer]
        start = self._weight_offsets[layer]
        return flat[start : start + rows * cols].reshape(rows, cols)

    def bias(self, flat: np.ndarray, layer: int) -> np.ndarray:
        rows, _ = self.shapes[layer]
        start = self._bias_offsets[layer]
        return flat[start : start + rows]

    def weight_slice(self, layer: int) -> slice:
        rows, cols = self.shapes[layer]
        start = self._weight_offsets[layer]
        return slice(start, start + rows * cols)

    def bias_slice(self, layer: int) -> slice:
        rows, _ = self.shapes[layer]
        start = self._bias_offsets[layer]
        return slice(start, start + rows)

    def layer_slice(self, layer: int) -> slice:
        """Flat range covering both weight and bias of one layer."""
        return slice(self._weight_offsets[layer], self.bias_slice(layer).stop)

    def flat_index(self, layer: int, kind: str, row: int, col: int = 0) -> int:
        rows, cols = self.shapes[layer]
        if kind == "weight":
            if not (0 <= row < rows and 0 <= col < cols):
                raise IndexError("weight coordinate out of range")
            return self._weight_offsets[layer] + row * cols + col
        if kind == "bias":
            if not (0 <= row < rows):
                raise IndexError("bias coordinate out of range")
            return self._bias_offsets[layer] + row
        raise ValueError("kind must be 'weight' or 'bias'")

    def pack(self, pairs) -> np.ndarray:
        flat = np.zeros(self.size)
        for layer, (w, b) in enumerate(pairs):
            self.weight(flat, layer)[:] = w
            self.bias(flat, layer)[:] = b
        return flat

    def unpack(self, flat: np.ndarray):
        return [(self.weight(flat, l), self.bias(flat, l)) for l in range(self.num_layers)]


@lru_cache(maxsize=None)
def layout_for(spec: NetworkSpec) -> ParameterLayout:
    return ParameterLayout(spec.affine_shapes)


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    layout = layout_for(spec)
    flat = np.zeros(layout.size)
    for layer, (rows, cols) in enumerate(layout.shapes):
        bound = np.sqrt(6.0 / (rows + cols))
        layout.weight(flat, layer)[:] = rng.uniform(-bound, bound, size=(rows, cols))
    return flat


@dataclass
class Network:
    """A network value: spec, flat parameters, and a freeze mask.

    Evaluation is a pure function of (spec, params, input).  Training code
    replaces ``params`` wholesale; frozen entries are never modified and
    their loss gradients are exactly zero.
    """

    spec: NetworkSpec
    params: np.ndarray
    freeze_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        layout = layout_for(self.spec)
        if self.params.shape != (layout.size,):
            raise ValueError(
                f"params length {self.params.shape} does not match layout size {layout.size}"
            )
        if self.freeze_mask is None:
            self.freeze_mask = np.zeros(layout.size, dtype=bool)
        else:
            self.freeze_mask = np.asarray(self.freeze_mask, dtype=bool)
            if self.freeze_mask.shape != (layout.size,):
                raise ValueError("freeze mask length does not match parameter count")

    @property
    def layout(self) -> ParameterLayout:
        return layout_for(self.spec)

    @property
    def trainable_count(self) -> int:
        return int((~self.freeze_mask).sum())

    def _check_points(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.spec.input_dim:
            raise DimensionMismatchError(
                f"points have dimension {X.shape[1]}, network expects {self.spec.input_dim}"
            )
        return X

    def values(self, X: np.ndarray) -> np.ndarray:
        """Forward values at a batch of points, shape (n_points,)."""
        from .autodiff import forward_values

        return forward_values(self.spec, self.params, self._check_points(X))

    def jets(self, X: np.ndarray):
        """Values, spatial gradients and Laplacians at a batch of points."""
        from .autodiff import eval_jet_batch

        return eval_jet_batch(self.spec, self.params, self._check_points(X))

    def eval(self, x) -> float:
        return float(self.values(np.atleast_2d(x))[0])

    def eval_jet(self, x):
        from .autodiff import Jet2

        batch = self.jets(np.atleast_2d(x))
        return Jet2(
            value=float(batch.values[0]),
            grad=batch.grads[0].copy(),
            laplacian=float(batch.laplacians[0]),
        )

    def with_params(self, params: np.ndarray) -> "Network":
        return Network(self.spec, params, self.freeze_mask.copy())

    def copy(self) -> "Network":
        return Network(self.spec, self.params.copy(), self.freeze_mask.copy())


def make_network(spec: NetworkSpec, seed: int) -> Network:
    return Network(spec, init_params(spec, seed))


def derive_frozen_adjoint(u_net: Network, seed: int = 0) -> Network:
    """Clone ``u_net`` with all non-final layers frozen at its parameters.

    The final affine layer is re-initialized (Glorot weights, zero bias) and
    left trainable, so the derived network spans the affine subspace of
    functions reachable by varying only the output map over the trained
    hidden features.
    """
    layout = u_net.layout
    params = u_net.params.copy()
    mask = np.ones(layout.size, dtype=bool)
    last = layout.num_layers - 1
    mask[layout.layer_slice(last)] = False
    rows, cols = layout.shapes[last]
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (rows + cols))
    layout.weight(params, last)[:] = rng.uniform(-bound, bound, size=(rows, cols))
    layout.bias(params, last)[:] = 0.0
    return Network(u_net.spec, params, mask)


def save_checkpoint(net: Network, path) -> None:
    """Write a bitwise-exact JSON checkpoint (hex-float parameter encoding)."""
    payload = {
        "spec": net.spec.to_dict(),
        "params": [float(v).hex() for v in net.params],
        "freeze_mask": [bool(v) for v in net.freeze_mask],
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> Network:
    payload = json.loads(Path(path).read_text())
    spec = NetworkSpec.from_dict(payload["spec"])
    params = np.array([float.fromhex(v) for v in payload["params"]])
    mask = np.array(payload["freeze_mask"], dtype=bool)
    return Network(spec, params, mask)
