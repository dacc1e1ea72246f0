"""Goal-error estimators: reductions, identities, and the 1-D quadrature oracle."""

import math

import numpy as np
import pytest

from goalpinn.errors import UndefinedIndicatorIndexError
from goalpinn.estimator import (EstimatorInputs, EstimatorReport, build_report,
                                eta_localized, eta_simple, indicator_index,
                                mu_localized, mu_simple)
from goalpinn.fields import CallableField, constant_field
from goalpinn.geometry import Hyperrectangle, PointBatch, sample_boundary_uniform, \
    sample_interior_uniform, substream
from goalpinn.network import Network, NetworkSpec, layout_for, make_network
from goalpinn.problem import ProblemDefinition, case_definitions, zero_function


def _zero_network(d=2):
    spec = NetworkSpec(d, (6, 6), "mlp")
    return Network(spec, np.zeros(layout_for(spec).size))


def _inputs(rng, u, z, zp, lam=50.0, n=200, m=80, case_id=1):
    case = case_definitions(case_id)
    interior = sample_interior_uniform(case.problem.domain, n, rng)
    boundary = sample_boundary_uniform(case.problem.domain, m, rng)
    return EstimatorInputs(u_net=u, z_net=z, z_prime_net=zp, lam=lam,
                           problem=case.problem, interior=interior, boundary=boundary)


class TestPointwiseIndicators:
    def test_zero_adjoint_gives_zero(self, rng):
        case = case_definitions(1)
        X = case.problem.domain.sample_interior(20, substream(1, 1))
        u = make_network(case.network, 1)
        values = mu_simple(X, u, _zero_network(), 50.0, case.problem, "interior")
        assert np.all(values == 0.0)

    def test_zero_primal_interior_is_source_times_adjoint(self, rng):
        """With u = 0 the gradient term drops: mu = f * z pointwise."""
        case = case_definitions(1)
        X = case.problem.domain.sample_interior(20, substream(1, 2))
        z = make_network(case.network, 2)
        values = mu_simple(X, _zero_network(), z, 50.0, case.problem, "interior")
        expected = case.problem.source(X) * z.values(X)
        assert np.allclose(values, expected, rtol=1e-14)

    def test_simple_matches_hand_composition(self, rng):
        case = case_definitions(1)
        X = case.problem.domain.sample_interior(30, substream(1, 3))
        u = make_network(case.network, 3)
        z = make_network(case.network, 4)
        values = mu_simple(X, u, z, 50.0, case.problem, "interior")
        uj, zj = u.jets(X), z.jets(X)
        hand = case.problem.source(X) * zj.values - np.sum(uj.grads * zj.grads, axis=1)
        assert np.allclose(values, hand, rtol=1e-13)

    def test_boundary_branch(self, rng):
        case = case_definitions(1)
        Y = case.problem.domain.sample_boundary(25, substream(1, 4))
        u = make_network(case.network, 3)
        z = make_network(case.network, 4)
        lam = 7.0
        values = mu_simple(Y, u, z, lam, case.problem, "boundary")
        hand = -lam * u.values(Y) * z.values(Y)  # g = 0 for the shipped cases
        assert np.allclose(values, hand, rtol=1e-13)

    def test_localized_weight_annihilates(self, rng):
        case = case_definitions(1)
        X = case.problem.domain.sample_interior(20, substream(1, 5))
        u = make_network(case.network, 3)
        z = make_network(case.network, 4)
        same = Network(z.spec, z.params.copy())
        values = mu_localized(X, u, z, same, 50.0, case.problem, "interior")
        assert np.all(values == 0.0)

    def test_localized_reduces_to_simple_for_zero_zprime(self, rng):
        case = case_definitions(1)
        X = case.problem.domain.sample_interior(20, substream(1, 6))
        u = make_network(case.network, 3)
        z = make_network(case.network, 4)
        loc = mu_localized(X, u, z, _zero_network(), 50.0, case.problem, "interior")
        simple = mu_simple(X, u, z, 50.0, case.problem, "interior")
        assert np.array_equal(loc, simple)

    def test_localized_matches_hand_composition(self, rng):
        case = case_definitions(1)
        X = case.problem.domain.sample_interior(30, substream(1, 7))
        u, z, zp = (make_network(case.network, s) for s in (3, 4, 5))
        values = mu_localized(X, u, z, zp, 50.0, case.problem, "interior")
        uj, zj, pj = u.jets(X), z.jets(X), zp.jets(X)
        hand = case.problem.source(X) * (zj.values - pj.values) \
            - np.sum(uj.grads * (zj.grads - pj.grads), axis=1)
        assert np.allclose(values, hand, rtol=1e-13)


class TestIntegratedEstimators:
    def test_zero_adjoint_estimator_vanishes(self, rng):
        case = case_definitions(1)
        u = make_network(case.network, 1)
        inputs = _inputs(rng, u, _zero_network(), None)
        assert eta_simple(inputs) == 0.0

    def test_zero_primal_reduces_to_source_pairing(self, rng):
        """u = 0 and g = 0: the estimator is the plain MC value of <f, z>."""
        case = case_definitions(1)
        z = make_network(case.network, 2)
        inputs = _inputs(rng, _zero_network(), z, None)
        f = case.problem.source(inputs.interior.points)
        expected = case.problem.domain.volume / len(inputs.interior) \
            * float(np.dot(np.ones_like(f), f * z.values(inputs.interior.points)))
        # boundary term vanishes since u = 0 and g = 0
        assert eta_simple(inputs) == pytest.approx(expected, rel=1e-12)

    def test_annihilation_is_exact(self, rng):
        case = case_definitions(1)
        u = make_network(case.network, 1)
        z = make_network(case.network, 2)
        inputs = _inputs(rng, u, z, Network(z.spec, z.params.copy()))
        assert eta_localized(inputs) == 0.0

    def test_zero_zprime_matches_simple_bitwise(self, rng):
        case = case_definitions(1)
        u = make_network(case.network, 1)
        z = make_network(case.network, 2)
        inputs = _inputs(rng, u, z, _zero_network())
        assert eta_localized(inputs) == eta_simple(inputs)

    def test_report_internal_consistency(self, rng):
        """The report's localized value is the measure-weighted indicator sum."""
        case = case_definitions(1)
        u, z, zp = (make_network(case.network, s) for s in (1, 2, 5))
        inputs = _inputs(rng, u, z, zp)
        report = build_report(inputs)
        domain = case.problem.domain
        assembled = domain.volume / len(report.mu_interior) * report.mu_interior.sum() \
            + domain.boundary_measure / len(report.mu_boundary) * report.mu_boundary.sum()
        assert report.eta_localized == pytest.approx(assembled, rel=1e-12)

    def test_linearity_in_closed_form_adjoints(self, rng):
        """eta is linear in the adjoint when adjoints are function fields."""
        case = case_definitions(1)
        u = make_network(case.network, 1)

        z1 = CallableField(
            value_fn=lambda X: np.sin(X[:, 0]) * np.cos(X[:, 1]),
            grad_fn=lambda X: np.stack([np.cos(X[:, 0]) * np.cos(X[:, 1]),
                                        -np.sin(X[:, 0]) * np.sin(X[:, 1])], axis=1),
        )
        z2 = CallableField(
            value_fn=lambda X: X[:, 0] ** 2 + 0.5 * X[:, 1],
            grad_fn=lambda X: np.stack([2.0 * X[:, 0], np.full(len(X), 0.5)], axis=1),
        )
        alpha = 1.7
        combo = CallableField(
            value_fn=lambda X: alpha * z1.value_fn(X) + z2.value_fn(X),
            grad_fn=lambda X: alpha * z1.grad_fn(X) + z2.grad_fn(X),
        )
        batches = _inputs(rng, u, z1, None)
        value_combo = eta_simple(EstimatorInputs(u, combo, None, batches.lam, batches.problem,
                                                 batches.interior, batches.boundary))
        value_1 = eta_simple(EstimatorInputs(u, z1, None, batches.lam, batches.problem,
                                             batches.interior, batches.boundary))
        value_2 = eta_simple(EstimatorInputs(u, z2, None, batches.lam, batches.problem,
                                             batches.interior, batches.boundary))
        assert value_combo == pytest.approx(alpha * value_1 + value_2, rel=1e-12)


class TestIndicatorIndex:
    def _report(self, mu_int, mu_bnd, problem, lam=1.0):
        domain = problem.domain
        eta = domain.volume / len(mu_int) * mu_int.sum() \
            + domain.boundary_measure / len(mu_bnd) * mu_bnd.sum()
        absolute = domain.volume / len(mu_int) * np.abs(mu_int).sum() \
            + domain.boundary_measure / len(mu_bnd) * np.abs(mu_bnd).sum()
        return EstimatorReport(eta_simple=eta, eta_localized=eta,
                               mu_interior=mu_int, mu_boundary=mu_bnd,
                               indicator_index=absolute / abs(eta) if eta != 0 else float("nan"))

    def test_nonnegative_indicators_give_one(self):
        problem = case_definitions(1).problem
        report = self._report(np.array([0.5, 1.0, 0.25]), np.array([0.1, 0.2]), problem)
        assert indicator_index(report) == pytest.approx(1.0, rel=1e-15)

    def test_perfect_cancellation_is_undefined(self):
        problem = case_definitions(1).problem
        mu_int = np.array([1.0, -1.0])
        mu_bnd = np.array([0.0, 0.0])
        report = self._report(mu_int, mu_bnd, problem)
        with pytest.raises(UndefinedIndicatorIndexError):
            indicator_index(report)

    def test_random_reports_at_least_one(self, rng):
        """Triangle inequality: the index never drops below 1."""
        problem = case_definitions(1).problem
        for _ in range(1000):
            mu_int = rng.standard_normal(rng.integers(2, 30))
            mu_bnd = rng.standard_normal(rng.integers(2, 10))
            report = self._report(mu_int, mu_bnd, problem)
            if report.eta_localized == 0.0:
                continue
            assert indicator_index(report) >= 1.0 - 1e-12

    def test_built_report_index(self, rng):
        case = case_definitions(1)
        u, z, zp = (make_network(case.network, s) for s in (1, 2, 5))
        report = build_report(_inputs(rng, u, z, zp))
        assert indicator_index(report) >= 1.0


class TestOneDimensionalQuadratureIdentity:
    """Dense-quadrature estimator equals the true goal error for -u'' = 1.

    On (0, 1) with u = z = x(1-x)/2 and the perturbed trial
    u~ = u + eps*sin(3 pi x), the goal error J(u - u~) has the closed form
    -2 eps / (3 pi); the simple estimator evaluated with dense quadrature
    must reproduce it.
    """

    def _problem(self):
        return ProblemDefinition(
            domain=Hyperrectangle((0.0,), (1.0,)),
            source=lambda X: np.ones(len(np.atleast_2d(X))),
            boundary_values=zero_function,
            exact_solution=lambda X: 0.5 * X[:, 0] * (1.0 - X[:, 0]),
        )

    @pytest.mark.parametrize("eps", [1e-2, 1e-3])
    def test_estimator_equals_goal_error(self, eps):
        problem = self._problem()
        z = CallableField(
            value_fn=lambda X: 0.5 * X[:, 0] * (1.0 - X[:, 0]),
            grad_fn=lambda X: (0.5 - X[:, 0])[:, None],
        )
        trial = CallableField(
            value_fn=lambda X: 0.5 * X[:, 0] * (1.0 - X[:, 0]) + eps * np.sin(3 * np.pi * X[:, 0]),
            grad_fn=lambda X: (0.5 - X[:, 0] + 3 * np.pi * eps * np.cos(3 * np.pi * X[:, 0]))[:, None],
        )
        nodes, weights = np.polynomial.legendre.leggauss(200)
        X = (0.5 * (nodes + 1.0))[:, None]
        w = 0.5 * weights
        interior = np.dot(w, mu_simple(X, trial, z, 100.0, problem, "interior"))
        endpoints = np.array([[0.0], [1.0]])
        boundary = mu_simple(endpoints, trial, z, 100.0, problem, "boundary").sum()
        estimator = float(interior + boundary)
        true_error = -2.0 * eps / (3.0 * math.pi)
        assert abs(estimator - true_error) < 1e-6
