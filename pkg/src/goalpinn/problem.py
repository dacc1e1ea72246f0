"""Poisson problems, goal functionals, training losses, and benchmark cases.

All problems are of the form -Lap(u) = f in Omega with u = g on the
boundary (every shipped case has g = 0, but the losses accept general g).
Goal functionals are domain integrals J(phi) = integral of j * phi, with
density j covering constant weights, sub-region indicators, and the source
itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import autodiff
from .autodiff import JetBatch
from .errors import ConfigurationError
from .fields import Field
from .geometry import Annulus, Ball, Domain, Hyperrectangle, PointBatch, SubRegion, WholeDomain
from .network import NetworkSpec


def zero_function(X: np.ndarray) -> np.ndarray:
    return np.zeros(np.atleast_2d(X).shape[0])


def ones_function(X: np.ndarray) -> np.ndarray:
    return np.ones(np.atleast_2d(X).shape[0])


@dataclass
class ProblemDefinition:
    """-Lap(u) = source in the domain, u = boundary_values on the boundary."""

    domain: Domain
    source: Callable[[np.ndarray], np.ndarray]
    boundary_values: Callable[[np.ndarray], np.ndarray]
    exact_solution: Callable[[np.ndarray], np.ndarray] | None = None
    exact_solution_gradient: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class GoalFunctional:
    """J(phi) = integral over the domain of density * phi."""

    density: Callable[[np.ndarray], np.ndarray]
    region: SubRegion


def domain_average_goal() -> GoalFunctional:
    return GoalFunctional(density=ones_function, region=WholeDomain())


def region_average_goal(region: Ball) -> GoalFunctional:
    return GoalFunctional(density=region.indicator, region=region)


def source_weighted_goal(problem: ProblemDefinition) -> GoalFunctional:
    return GoalFunctional(density=problem.source, region=WholeDomain())


@dataclass
class CaseConfig:
    """One benchmark case: problem, goal, reference value, run defaults."""

    case_id: int
    mode: str  # "pinn" or "deep_ritz"
    problem: ProblemDefinition
    goal: GoalFunctional
    j_reference: float
    j_reference_provenance: str
    network: NetworkSpec
    epochs: int
    resample_epoch: int
    n_interior: int = 5000
    m_boundary: int = 1000
    lam: float = 100.0
    refine_n_start: int | None = None
    refine_interval: int | None = None
    refine_count: int | None = None


# ----------------------------------------------------------------------
# training losses
# ----------------------------------------------------------------------


class PinnObjective:
    """Strong-residual collocation loss with boundary penalty.

    (1/N) sum |-Lap u(x_i) - f(x_i)|^2 + (lam/M) sum |u(y_j) - g(y_j)|^2
    """

    def __init__(self, problem: ProblemDefinition, interior: PointBatch,
                 boundary: PointBatch, lam: float):
        if lam <= 0:
            raise ConfigurationError("boundary penalty lam must be positive")
        if len(interior) == 0 or len(boundary) == 0:
            raise ValueError("interior and boundary batches must be nonempty")
        self.interior = interior
        self.boundary = boundary
        self.lam = float(lam)
        self.f_interior = np.asarray(problem.source(interior.points), dtype=np.float64)
        self.g_boundary = np.asarray(problem.boundary_values(boundary.points), dtype=np.float64)

    def point_batches(self):
        return [(self.interior.points, autodiff.JET), (self.boundary.points, autodiff.VALUE)]

    def value(self, jets):
        residual = -jets[0].laplacians - self.f_interior
        mismatch = jets[1].values - self.g_boundary
        n, m = len(self.interior), len(self.boundary)
        return float(np.dot(residual, residual) / n
                     + self.lam / m * np.dot(mismatch, mismatch))

    def cotangents(self, jets):
        n, m = len(self.interior), len(self.boundary)
        bar_lap = (2.0 / n) * (jets[0].laplacians + self.f_interior)
        bar_val = (2.0 * self.lam / m) * (jets[1].values - self.g_boundary)
        return [JetBatch(values=None, laplacians=bar_lap), JetBatch(values=bar_val)]


class DeepRitzObjective:
    """Monte Carlo energy loss with boundary penalty.

    (|Omega|/N) sum [ 0.5 |grad u(x_i)|^2 - f(x_i) u(x_i) ]
      + lam (|bnd|/2M) sum |u(y_j) - g(y_j)|^2

    With ``use_importance_weights`` the interior average becomes the
    self-normalized weighted average using the batch's importance weights,
    which restores a proper domain integral under non-uniform sampling.
    """

    def __init__(self, problem: ProblemDefinition, interior: PointBatch,
                 boundary: PointBatch, lam: float, use_importance_weights: bool = False):
        if lam <= 0:
            raise ConfigurationError("boundary penalty lam must be positive")
        if len(interior) == 0 or len(boundary) == 0:
            raise ValueError("interior and boundary batches must be nonempty")
        self.interior = interior
        self.boundary = boundary
        self.lam = float(lam)
        self.volume = problem.domain.volume
        self.boundary_measure = problem.domain.boundary_measure
        self.f_interior = np.asarray(problem.source(interior.points), dtype=np.float64)
        self.g_boundary = np.asarray(problem.boundary_values(boundary.points), dtype=np.float64)
        if use_importance_weights:
            if interior.weights is None:
                raise ConfigurationError(
                    "importance-weighted loss requested but the interior batch has no weights"
                )
            w = interior.weights
            self.interior_coef = self.volume * w / w.sum()
        else:
            self.interior_coef = np.full(len(interior), self.volume / len(interior))

    def point_batches(self):
        return [(self.interior.points, autodiff.GRAD), (self.boundary.points, autodiff.VALUE)]

    def value(self, jets):
        energy = 0.5 * np.einsum("pd,pd->p", jets[0].grads, jets[0].grads) \
            - self.f_interior * jets[0].values
        mismatch = jets[1].values - self.g_boundary
        m = len(self.boundary)
        return float(np.dot(self.interior_coef, energy)
                     + self.lam * self.boundary_measure / (2.0 * m) * np.dot(mismatch, mismatch))

    def cotangents(self, jets):
        m = len(self.boundary)
        bar_grads = self.interior_coef[:, None] * jets[0].grads
        bar_vals = -self.interior_coef * self.f_interior
        bar_bnd = self.lam * self.boundary_measure / m * (jets[1].values - self.g_boundary)
        return [JetBatch(values=bar_vals, grads=bar_grads), JetBatch(values=bar_bnd)]


def make_objective(kind: str, problem: ProblemDefinition, interior: PointBatch,
                   boundary: PointBatch, lam: float,
                   use_importance_weights: bool = False):
    if kind == "pinn":
        return PinnObjective(problem, interior, boundary, lam)
    if kind == "deep_ritz":
        return DeepRitzObjective(problem, interior, boundary, lam, use_importance_weights)
    raise ConfigurationError(f"unknown loss kind {kind!r}")


def pinn_loss(u_net, interior: PointBatch, boundary: PointBatch, lam: float,
              problem: ProblemDefinition) -> float:
    return autodiff.loss_value(u_net, PinnObjective(problem, interior, boundary, lam))


def deep_ritz_loss(u_net, interior: PointBatch, boundary: PointBatch, lam: float,
                   problem: ProblemDefinition, use_importance_weights: bool = False) -> float:
    return autodiff.loss_value(
        u_net, DeepRitzObjective(problem, interior, boundary, lam, use_importance_weights)
    )


# ----------------------------------------------------------------------
# adjoint problem and functional evaluation
# ----------------------------------------------------------------------


def adjoint_problem(problem: ProblemDefinition, goal: GoalFunctional) -> ProblemDefinition:
    """The dual Poisson problem: -Lap(z) = density with z = 0 on the boundary.

    When the goal density is the primal source (and the primal boundary data
    is zero), the adjoint coincides with the primal problem, so the known
    exact solution carries over.
    """
    self_adjoint = (goal.density is problem.source
                    and problem.boundary_values is zero_function)
    return ProblemDefinition(
        domain=problem.domain,
        source=goal.density,
        boundary_values=zero_function,
        exact_solution=problem.exact_solution if self_adjoint else None,
        exact_solution_gradient=problem.exact_solution_gradient if self_adjoint else None,
    )


def functional_mc(field: Field, goal: GoalFunctional, domain: Domain,
                  points: PointBatch) -> float:
    """Monte Carlo value of J(field) from uniform points: (|Omega|/N) sum j*u."""
    if len(points) == 0:
        raise ValueError("functional evaluation needs a nonempty batch")
    j = np.asarray(goal.density(points.points), dtype=np.float64)
    v = np.asarray(field.values(points.points), dtype=np.float64)
    return float(domain.volume / len(points) * np.dot(j, v))


# ----------------------------------------------------------------------
# benchmark cases
# ----------------------------------------------------------------------


def _cosine_solution(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.cos(0.5 * np.pi * X[:, 0]) * np.cos(0.5 * np.pi * X[:, 1])


def _cosine_source(X: np.ndarray) -> np.ndarray:
    return 0.5 * np.pi**2 * _cosine_solution(X)


def _cosine_gradient(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    cx = np.cos(0.5 * np.pi * X[:, 0])
    cy = np.cos(0.5 * np.pi * X[:, 1])
    sx = np.sin(0.5 * np.pi * X[:, 0])
    sy = np.sin(0.5 * np.pi * X[:, 1])
    return -0.5 * np.pi * np.stack([sx * cy, cx * sy], axis=1)


def _sine_solution(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.sin(X[:, 0]) * np.sin(X[:, 1])


def _sine_source(X: np.ndarray) -> np.ndarray:
    return 2.0 * _sine_solution(X)


def _sine_gradient(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.stack(
        [np.cos(X[:, 0]) * np.sin(X[:, 1]), np.sin(X[:, 0]) * np.cos(X[:, 1])], axis=1
    )


_TANH10 = math.tanh(10.0)


def _shell_gamma(r: np.ndarray) -> np.ndarray:
    return 20.0 * (r - 1.5)


def _shell_solution_radial(r: np.ndarray) -> np.ndarray:
    g = _shell_gamma(r)
    return np.tanh(g) / (800.0 * _TANH10) - g / 8000.0


def _shell_solution(X: np.ndarray) -> np.ndarray:
    return _shell_solution_radial(np.linalg.norm(np.atleast_2d(X), axis=1))


def _shell_source_radial(r: np.ndarray) -> np.ndarray:
    g = _shell_gamma(r)
    sech2 = 1.0 / np.cosh(g) ** 2
    inner = -(800.0 / _TANH10) * np.tanh(g) * sech2 \
        + (4.0 / r) * ((20.0 / _TANH10) * sech2 - 2.0)
    return -inner / 800.0


def _shell_source(X: np.ndarray) -> np.ndarray:
    return _shell_source_radial(np.linalg.norm(np.atleast_2d(X), axis=1))


def _shell_gradient(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    r = np.linalg.norm(X, axis=1)
    g = _shell_gamma(r)
    du_dr = (1.0 / np.cosh(g) ** 2) / (40.0 * _TANH10) - 1.0 / 400.0
    return (du_dr / r)[:, None] * X


def _case1_problem() -> ProblemDefinition:
    return ProblemDefinition(
        domain=Hyperrectangle((-1.0, -1.0), (1.0, 1.0)),
        source=_cosine_source,
        boundary_values=zero_function,
        exact_solution=_cosine_solution,
        exact_solution_gradient=_cosine_gradient,
    )


def _case2_problem() -> ProblemDefinition:
    return ProblemDefinition(
        domain=Hyperrectangle((0.0, 0.0), (math.pi, math.pi)),
        source=_sine_source,
        boundary_values=zero_function,
        exact_solution=_sine_solution,
        exact_solution_gradient=_sine_gradient,
    )


def _case3_problem() -> ProblemDefinition:
    return ProblemDefinition(
        domain=Annulus(dim=5, r_inner=1.0, r_outer=2.0),
        source=_shell_source,
        boundary_values=zero_function,
        exact_solution=_shell_solution,
        exact_solution_gradient=_shell_gradient,
    )


def disk_average_reference(fn: Callable[[np.ndarray], np.ndarray], center, radius: float,
                           n_radial: int = 64, n_angular: int = 128) -> float:
    """Integral of ``fn`` over a disk by tensorized polar Gauss-Legendre."""
    nodes_r, weights_r = np.polynomial.legendre.leggauss(n_radial)
    nodes_a, weights_a = np.polynomial.legendre.leggauss(n_angular)
    r = 0.5 * radius * (nodes_r + 1.0)
    wr = 0.5 * radius * weights_r
    phi = math.pi * (nodes_a + 1.0)
    wa = math.pi * weights_a
    R, PHI = np.meshgrid(r, phi, indexing="ij")
    X = np.stack(
        [center[0] + R * np.cos(PHI), center[1] + R * np.sin(PHI)], axis=-1
    ).reshape(-1, 2)
    values = np.asarray(fn(X)).reshape(n_radial, n_angular)
    return float(np.einsum("i,j,ij->", wr * r, wa, values))


def radial_shell_reference(fn_radial: Callable[[np.ndarray], np.ndarray], dim: int,
                           r_inner: float, r_outer: float, n_nodes: int = 512) -> float:
    """Integral of a radial function over a spherical shell by 1-D quadrature."""
    from .geometry import unit_ball_volume

    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    r = 0.5 * (r_outer - r_inner) * (nodes + 1.0) + r_inner
    w = 0.5 * (r_outer - r_inner) * weights
    surface = dim * unit_ball_volume(dim) * r ** (dim - 1)
    return float(np.dot(w, surface * np.asarray(fn_radial(r))))


@lru_cache(maxsize=None)
def case_definitions(case_id: int) -> CaseConfig:
    """Full configuration for benchmark cases 1 through 5."""
    if case_id == 1:
        problem = _case1_problem()
        return CaseConfig(
            case_id=1,
            mode="pinn",
            problem=problem,
            goal=domain_average_goal(),
            j_reference=16.0 / math.pi**2,
            j_reference_provenance="closed form: separable cosine integral (4/pi)^2",
            network=NetworkSpec(2, (64, 64, 64, 64), "resnet", "tanh"),
            epochs=2000,
            resample_epoch=200,
        )
    if case_id == 2:
        problem = _case2_problem()
        region = Ball((0.5 * math.pi, 0.5 * math.pi), 1.0)
        return CaseConfig(
            case_id=2,
            mode="pinn",
            problem=problem,
            goal=region_average_goal(region),
            j_reference=disk_average_reference(_sine_solution, region.center, region.radius),
            j_reference_provenance="tensorized polar Gauss-Legendre over the disk (tol 1e-10)",
            network=NetworkSpec(2, (32,) * 8, "resnet", "tanh"),
            epochs=5000,
            resample_epoch=300,
            refine_n_start=200,
            refine_interval=1000,
            refine_count=500,
        )
    if case_id == 3:
        problem = _case3_problem()
        return CaseConfig(
            case_id=3,
            mode="pinn",
            problem=problem,
            goal=source_weighted_goal(problem),
            j_reference=radial_shell_reference(
                lambda r: _shell_source_radial(r) * _shell_solution_radial(r), 5, 1.0, 2.0
            ),
            j_reference_provenance="radial Gauss-Legendre with sphere-area factor (tol 1e-8)",
            network=NetworkSpec(5, (32,) * 6, "mlp", "tanh"),
            epochs=5000,
            resample_epoch=400,
        )
    if case_id == 4:
        base = case_definitions(2)
        return CaseConfig(
            case_id=4,
            mode="deep_ritz",
            problem=base.problem,
            goal=base.goal,
            j_reference=base.j_reference,
            j_reference_provenance=base.j_reference_provenance,
            network=base.network,
            epochs=5000,
            resample_epoch=400,
        )
    if case_id == 5:
        base = case_definitions(1)
        return CaseConfig(
            case_id=5,
            mode="deep_ritz",
            problem=base.problem,
            goal=base.goal,
            j_reference=base.j_reference,
            j_reference_provenance=base.j_reference_provenance,
            network=NetworkSpec(2, (32, 32, 32, 32), "resnet", "tanh"),
            epochs=1500,
            resample_epoch=400,
        )
    raise ConfigurationError(f"unknown case id {case_id}; valid cases are 1..5")


def case_table_json() -> str:
    """Human-readable summary of every case, for documentation exports."""
    rows = []
    for case_id in range(1, 6):
        case = case_definitions(case_id)
        domain = case.problem.domain
        rows.append({
            "case": case.case_id,
            "mode": case.mode,
            "domain": type(domain).__name__,
            "dim": domain.dim,
            "network": case.network.to_dict(),
            "epochs": case.epochs,
            "resample_epoch": case.resample_epoch,
            "n_interior": case.n_interior,
            "m_boundary": case.m_boundary,
            "lambda": case.lam,
            "j_reference": case.j_reference,
            "j_reference_provenance": case.j_reference_provenance,
        })
    return json.dumps(rows, indent=2)
