"""Finite-difference self-verification of jets and parameter gradients.

Central differences here are an independent cross-check of the analytic
propagation rules, run over every architecture/activation pairing on small
random networks.  The comparison convention: relative error when the
reference magnitude is at least 1e-6, absolute error (tolerance 1e-8)
below that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff
from .geometry import Hyperrectangle, PointBatch
from .network import Network, NetworkSpec, make_network
from .problem import DeepRitzObjective, PinnObjective, ProblemDefinition, zero_function

JET_TOL = 1e-6
PARAM_TOL = 1e-5
ABS_TOL = 1e-8
REF_FLOOR = 1e-6


def discrepancy(value: float, reference: float) -> float:
    """Error normalized against its tolerance regime.

    Returns |value - reference| / |reference| when the reference is not
    tiny, otherwise the absolute error scaled so that the 1e-8 absolute
    tolerance corresponds to the 1e-6 relative one.
    """
    err = abs(value - reference)
    if abs(reference) < REF_FLOOR:
        return err * (JET_TOL / ABS_TOL)
    return err / abs(reference)


def fd_gradient(evaluate, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Fourth-order central differences of a scalar function of a point."""
    d = len(x)
    out = np.zeros(d)
    for c in range(d):
        e = np.zeros(d)
        e[c] = step
        out[c] = (8.0 * (evaluate(x + e) - evaluate(x - e))
                  - (evaluate(x + 2 * e) - evaluate(x - 2 * e))) / (12.0 * step)
    return out


def fd_laplacian(evaluate, x: np.ndarray, step: float = 1e-4) -> float:
    d = len(x)
    center = evaluate(x)
    total = 0.0
    for c in range(d):
        e = np.zeros(d)
        e[c] = step
        total += (-evaluate(x + 2 * e) + 16.0 * evaluate(x + e) - 30.0 * center
                  + 16.0 * evaluate(x - e) - evaluate(x - 2 * e)) / (12.0 * step**2)
    return total


def fd_param_gradient(loss_fn, params: np.ndarray, step: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(params)
    for k in range(len(params)):
        p = params.copy()
        p[k] += step
        up = loss_fn(p)
        p[k] -= 2.0 * step
        down = loss_fn(p)
        out[k] = (up - down) / (2.0 * step)
    return out


@dataclass
class GradCheckResult:
    label: str
    max_jet_discrepancy: float
    max_param_discrepancy: float

    @property
    def passed(self) -> bool:
        return (self.max_jet_discrepancy < JET_TOL
                and self.max_param_discrepancy < PARAM_TOL)


def _toy_problem(d: int) -> ProblemDefinition:
    return ProblemDefinition(
        domain=Hyperrectangle((0.0,) * d, (1.0,) * d),
        source=lambda X: np.sin(np.atleast_2d(X)).sum(axis=1),
        boundary_values=zero_function,
    )


def _jet_discrepancy(net: Network, X: np.ndarray) -> float:
    jets = net.jets(X)
    worst = 0.0
    for i, x in enumerate(X):
        fd_g = fd_gradient(net.eval, x)
        fd_l = fd_laplacian(net.eval, x)
        for c in range(len(x)):
            worst = max(worst, discrepancy(jets.grads[i, c], fd_g[c]))
        worst = max(worst, discrepancy(jets.laplacians[i], fd_l))
    return worst


def _param_discrepancy(net: Network, problem, interior, boundary) -> float:
    worst = 0.0
    for objective in (
        PinnObjective(problem, interior, boundary, lam=10.0),
        DeepRitzObjective(problem, interior, boundary, lam=10.0),
    ):
        _, grad = autodiff.loss_value_and_gradient(net, objective)

        def loss_of(params, objective=objective):
            return autodiff.loss_value(net.with_params(params), objective)

        fd = fd_param_gradient(loss_of, net.params)
        for k in range(len(grad)):
            worst = max(worst, discrepancy(grad[k], fd[k]))
    return worst


def run_gradcheck(seed: int = 0, n_points: int = 8,
                  specs: list[NetworkSpec] | None = None) -> list[GradCheckResult]:
    """Cross-check jets and parameter gradients for every architecture pair."""
    rng = np.random.default_rng(seed)
    if specs is None:
        specs = []
        for activation in ("tanh", "gelu"):
            specs.append(NetworkSpec(2, (7, 6), "mlp", activation))
            specs.append(NetworkSpec(2, (6, 6, 6, 6), "resnet", activation))
    results = []
    for spec in specs:
        net = make_network(spec, seed=int(rng.integers(0, 2**31)))
        net.params[:] *= 1.5  # push away from the near-linear init regime
        d = spec.input_dim
        X = rng.uniform(0.05, 0.95, size=(n_points, d))
        problem = _toy_problem(d)
        interior = PointBatch(rng.uniform(0.05, 0.95, size=(16, d)))
        boundary_pts = rng.uniform(0.0, 1.0, size=(8, d))
        boundary_pts[:, 0] = np.round(boundary_pts[:, 0])
        boundary = PointBatch(boundary_pts)
        results.append(GradCheckResult(
            label=f"{spec.architecture}/{spec.activation}",
            max_jet_discrepancy=_jet_discrepancy(net, X),
            max_param_discrepancy=_param_discrepancy(net, problem, interior, boundary),
        ))
    return results
