"""Training orchestration: optimizer, epoch loop, and adaptive sampling runs.

A run is a single-threaded state machine over (network, optimizer state,
collocation points).  Uniform runs keep one fixed point set; adaptive runs
replace (resampling) or extend (refinement) the interior points at
configured event epochs, using the localized goal-error indicator as a
sampling density.  Multiple runs are fully independent and may execute
concurrently in separate processes.

Budget accounting: the primal epoch count is identical across uniform and
adaptive runs of the same configuration; adjoint and derivative-set
adjoint training costs are reported separately in the run metadata.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff
from .autodiff import loss_value_and_gradient
from .errors import ConfigurationError, DegenerateDensityError, NumericalError
from .estimator import mu_localized
from .geometry import (PointBatch, augment_points, resample_from_indicator,
                       sample_boundary_uniform, sample_interior_uniform, substream)
from .network import Network, derive_frozen_adjoint, init_params, make_network
from .problem import CaseConfig, adjoint_problem, make_objective

MODES = ("pinn", "deep_ritz")
SAMPLINGS = ("uniform", "dwr_resample", "dwr_refine")

EVENT_NONE = "none"
EVENT_RESAMPLE = "resample"
EVENT_REFINE = "refine"

TRACE_HEADER = "epoch,loss,J_estimate,J_error,eta_simple,eta_localized,points,event"

# substream identifiers; every random draw in a run is keyed by
# (master seed, stream id[, event index]) so replays are exact
_S_TRAIN_INTERIOR = 1
_S_TRAIN_BOUNDARY = 2
_S_PRIMAL_INIT = 3
_S_ADJOINT_INTERIOR = 4
_S_ADJOINT_BOUNDARY = 5
_S_ADJOINT_INIT = 6
_S_ZPRIME_INIT = 7
_S_POOL = 8
_S_RESAMPLE = 9
_S_EST_INTERIOR = 10
_S_EST_BOUNDARY = 11

# the functional evaluation batch is keyed by the case, not the run seed,
# so compared runs share the same (frozen) Monte Carlo evaluation bias
_EVAL_MASTER_SEED = 719_528


def _derive_int_seed(master_seed: int, *path: int) -> int:
    return int(substream(master_seed, *path).integers(0, 2**63 - 1))


# ----------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float

    @staticmethod
    def fresh(n_params: int, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return AdamState(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              freeze_mask: np.ndarray | None = None) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected update; frozen entries are never modified."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and optimizer state must have equal lengths")
    if not np.isfinite(grads).all():
        idx = int(np.argwhere(~np.isfinite(grads))[0][0])
        raise NumericalError(f"non-finite gradient entry at parameter {idx}")
    if freeze_mask is not None:
        grads = np.where(freeze_mask, 0.0, grads)
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if freeze_mask is not None:
        new_params[freeze_mask] = params[freeze_mask]
    return new_params, AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)


# ----------------------------------------------------------------------
# configuration and trace
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Resolved run configuration; validated on construction."""

    epochs: int
    mode: str = "pinn"
    sampling: str = "uniform"
    resample_epochs: tuple[int, ...] = ()
    refine_interval: int | None = None
    refine_count: int | None = None
    lam: float = 100.0
    n_interior: int = 5000
    m_boundary: int = 1000
    pool_factor: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    adjoint_pretrain_epochs: int = 2000
    z_prime_train_epochs: int = 500
    weighted_quadrature: bool = False
    adjoint_loss_kind: str | None = None
    trace_stride: int = 10
    est_n_interior: int = 20000
    est_m_boundary: int = 4000
    eval_points: int = 100000
    log_estimators: bool | None = None  # None: estimators iff sampling is adaptive

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.sampling not in SAMPLINGS:
            raise ConfigurationError(f"sampling must be one of {SAMPLINGS}")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be nonnegative")
        object.__setattr__(self, "resample_epochs",
                           tuple(int(e) for e in self.resample_epochs))
        if self.sampling == "dwr_resample":
            if not self.resample_epochs:
                raise ConfigurationError("dwr_resample needs at least one resample epoch")
        eps_list = self.resample_epochs
        if any(b <= a for a, b in zip(eps_list, eps_list[1:])):
            raise ConfigurationError("resample epochs must be strictly increasing")
        if eps_list and (eps_list[0] < 1 or eps_list[-1] >= self.epochs):
            raise ConfigurationError("resample epochs must lie in [1, epochs)")
        refine_given = self.refine_interval is not None or self.refine_count is not None
        if self.sampling == "dwr_refine":
            if self.refine_interval is None or self.refine_count is None:
                raise ConfigurationError("dwr_refine needs refine_interval and refine_count")
            if self.refine_interval < 1 or self.refine_count < 0:
                raise ConfigurationError("invalid refinement parameters")
        elif refine_given:
            raise ConfigurationError("refine fields are only valid with dwr_refine sampling")
        if self.lam <= 0:
            raise ConfigurationError("lam must be positive")
        if self.weighted_quadrature and self.mode != "deep_ritz":
            raise ConfigurationError("weighted quadrature applies to the deep_ritz mode only")
        if self.adjoint_loss_kind is not None and self.adjoint_loss_kind not in MODES:
            raise ConfigurationError(f"adjoint_loss_kind must be one of {MODES}")

    @property
    def effective_adjoint_loss_kind(self) -> str:
        return self.adjoint_loss_kind or self.mode

    @property
    def estimators_enabled(self) -> bool:
        if self.log_estimators is None:
            return self.sampling != "uniform"
        return self.log_estimators

    def event_epochs(self) -> tuple[int, ...]:
        if self.sampling == "dwr_resample":
            return self.resample_epochs
        if self.sampling == "dwr_refine":
            return tuple(
                e for e in range(self.refine_interval, self.epochs, self.refine_interval)
            )
        return ()

    def to_dict(self) -> dict:
        out = {
            "epochs": self.epochs, "mode": self.mode, "sampling": self.sampling,
            "resample_epochs": list(self.resample_epochs),
            "refine_interval": self.refine_interval, "refine_count": self.refine_count,
            "lam": self.lam, "n_interior": self.n_interior, "m_boundary": self.m_boundary,
            "pool_factor": self.pool_factor, "lr": self.lr, "beta1": self.beta1,
            "beta2": self.beta2, "eps": self.eps, "seed": self.seed,
            "adjoint_pretrain_epochs": self.adjoint_pretrain_epochs,
            "z_prime_train_epochs": self.z_prime_train_epochs,
            "weighted_quadrature": self.weighted_quadrature,
            "adjoint_loss_kind": self.adjoint_loss_kind,
            "trace_stride": self.trace_stride,
            "est_n_interior": self.est_n_interior, "est_m_boundary": self.est_m_boundary,
            "eval_points": self.eval_points, "log_estimators": self.log_estimators,
        }
        return out

    @staticmethod
    def from_dict(data: dict) -> "TrainConfig":
        data = dict(data)
        data["resample_epochs"] = tuple(data.get("resample_epochs", ()))
        return TrainConfig(**data)


def config_for_case(case: CaseConfig, mode: str | None = None,
                    sampling: str = "uniform", seed: int = 0, **overrides) -> TrainConfig:
    """Resolve a TrainConfig from case defaults plus explicit overrides."""
    base = {
        "epochs": case.epochs,
        "mode": mode or case.mode,
        "sampling": sampling,
        "lam": case.lam,
        "n_interior": case.n_interior,
        "m_boundary": case.m_boundary,
        "seed": seed,
    }
    if sampling == "dwr_resample":
        base["resample_epochs"] = (case.resample_epoch,)
    if sampling == "dwr_refine" and case.refine_n_start is not None:
        base["n_interior"] = case.refine_n_start
        base["refine_interval"] = case.refine_interval
        base["refine_count"] = case.refine_count
    base.update(overrides)
    return TrainConfig(**base)


class Trace:
    """Per-epoch log with a fixed CSV column contract."""

    def __init__(self):
        self.epochs: list[int] = []
        self.losses: list[float] = []
        self.j_estimates: list[float] = []
        self.j_errors: list[float] = []
        self.eta_simples: list[float] = []
        self.eta_localizeds: list[float] = []
        self.points: list[int] = []
        self.events: list[str] = []

    def __len__(self) -> int:
        return len(self.epochs)

    def add_row(self, epoch: int, loss: float, j_estimate: float, j_error: float,
                eta_simple: float, eta_localized: float, points: int, event: str) -> None:
        self.epochs.append(int(epoch))
        self.losses.append(float(loss))
        self.j_estimates.append(float(j_estimate))
        self.j_errors.append(float(j_error))
        self.eta_simples.append(float(eta_simple))
        self.eta_localizeds.append(float(eta_localized))
        self.points.append(int(points))
        self.events.append(str(event))

    def column(self, name: str) -> np.ndarray:
        mapping = {
            "epoch": self.epochs, "loss": self.losses, "J_estimate": self.j_estimates,
            "J_error": self.j_errors, "eta_simple": self.eta_simples,
            "eta_localized": self.eta_localizeds, "points": self.points,
        }
        if name == "event":
            return np.array(self.events)
        return np.array(mapping[name])

    def event_rows(self) -> list[int]:
        return [e for e, ev in zip(self.epochs, self.events) if ev != EVENT_NONE]

    def final_j_error(self) -> float:
        finite = [v for v in self.j_errors if math.isfinite(v)]
        if not finite:
            return float("nan")
        return finite[-1]

    def to_csv(self, path) -> None:
        lines = [TRACE_HEADER]
        for i in range(len(self)):
            lines.append(",".join([
                str(self.epochs[i]),
                repr(self.losses[i]),
                repr(self.j_estimates[i]),
                repr(self.j_errors[i]),
                repr(self.eta_simples[i]),
                repr(self.eta_localizeds[i]),
                str(self.points[i]),
                self.events[i],
            ]))
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def from_csv(path) -> "Trace":
        text = Path(path).read_text().strip().splitlines()
        if not text or text[0] != TRACE_HEADER:
            raise ValueError(f"unexpected trace header in {path}")
        trace = Trace()
        for line in text[1:]:
            cells = line.split(",")
            trace.add_row(int(cells[0]), float(cells[1]), float(cells[2]), float(cells[3]),
                          float(cells[4]), float(cells[5]), int(cells[6]), cells[7])
        return trace


@dataclass
class RunResult:
    u_net: Network
    z_net: Network | None
    z_prime_net: Network | None
    trace: Trace
    event_checkpoints: dict[int, dict[str, Network]]
    metadata: dict


# ----------------------------------------------------------------------
# epoch loop
# ----------------------------------------------------------------------


def train_epochs(net: Network, loss_kind: str, problem, interior: PointBatch,
                 boundary: PointBatch, config: TrainConfig, epochs: int,
                 state: AdamState | None = None,
                 use_importance_weights: bool = False,
                 on_epoch: Callable[[int, float], None] | None = None,
                 epoch_offset: int = 0) -> tuple[Network, AdamState, list[float]]:
    """Full-batch optimization on fixed points for a given number of epochs.

    Returns the updated network, the optimizer state, and the per-epoch
    loss values.  ``epochs = 0`` returns the inputs unchanged.
    """
    if state is None:
        state = AdamState.fresh(net.layout.size, config.lr, config.beta1,
                                config.beta2, config.eps)
    if epochs == 0:
        return net, state, []
    objective = make_objective(loss_kind, problem, interior, boundary, config.lam,
                               use_importance_weights)
    losses = []
    for local in range(epochs):
        try:
            value, grad = loss_value_and_gradient(net, objective)
            new_params, state = adam_step(net.params, grad, state, net.freeze_mask)
        except NumericalError as err:
            err.epoch = epoch_offset + local + 1
            raise
        net = net.with_params(new_params)
        losses.append(value)
        if on_epoch is not None:
            on_epoch(epoch_offset + local + 1, value)
    return net, state, losses


# ----------------------------------------------------------------------
# run drivers
# ----------------------------------------------------------------------


class _Run:
    """Shared machinery for uniform, resampling, and refinement runs."""

    def __init__(self, case: CaseConfig, config: TrainConfig):
        self.case = case
        self.config = config
        self.problem = case.problem
        self.adjoint = adjoint_problem(case.problem, case.goal)
        self.trace = Trace()
        seed = config.seed
        domain = self.problem.domain

        self.interior = sample_interior_uniform(
            domain, config.n_interior, substream(seed, _S_TRAIN_INTERIOR))
        self.boundary = sample_boundary_uniform(
            domain, config.m_boundary, substream(seed, _S_TRAIN_BOUNDARY))

        eval_rng = substream(_EVAL_MASTER_SEED, case.case_id, config.eval_points)
        self.eval_batch = sample_interior_uniform(domain, config.eval_points, eval_rng)
        self.eval_density = np.asarray(case.goal.density(self.eval_batch.points))

        self.z_net: Network | None = None
        self.z_prime: Network | None = None
        self._u_current: Network | None = None
        self.metadata = {
            "case_id": case.case_id,
            "mode": config.mode,
            "sampling": config.sampling,
            "primal_epochs": config.epochs,
            "adjoint_pretrain_epochs": 0,
            "z_prime_epochs": 0,
            "events": [],
        }
        self._est = None
        if config.estimators_enabled:
            self._est_interior = sample_interior_uniform(
                domain, config.est_n_interior, substream(seed, _S_EST_INTERIOR))
            self._est_boundary = sample_boundary_uniform(
                domain, config.est_m_boundary, substream(seed, _S_EST_BOUNDARY))
            self._est_f = np.asarray(self.problem.source(self._est_interior.points))
            self._est_g = np.asarray(self.problem.boundary_values(self._est_boundary.points))
            self._z_cache = None
            self._zp_cache = None

    # -- functional and estimator evaluation ---------------------------

    def j_estimate(self, net: Network) -> float:
        values = net.values(self.eval_batch.points)
        scale = self.problem.domain.volume / len(self.eval_batch)
        return float(scale * np.dot(self.eval_density, values))

    def _adjoint_cache(self, net: Network):
        jets = autodiff.eval_jet_batch(net.spec, net.params,
                                       self._est_interior.points, autodiff.GRAD)
        boundary_values = net.values(self._est_boundary.points)
        return jets, boundary_values

    def _eta_from_weight(self, u_jets, u_bnd, w_values, w_grads, w_bnd) -> float:
        mu_int = self._est_f * w_values - np.einsum("pd,pd->p", u_jets.grads, w_grads)
        mu_bnd = -self.config.lam * (u_bnd - self._est_g) * w_bnd
        domain = self.problem.domain
        return float(domain.volume / len(mu_int) * mu_int.sum()
                     + domain.boundary_measure / len(mu_bnd) * mu_bnd.sum())

    def estimates(self, u_net: Network) -> tuple[float, float]:
        """(simple, localized) estimator values on the dedicated batches."""
        if not self.config.estimators_enabled or self.z_net is None:
            return float("nan"), float("nan")
        if self._z_cache is None:
            self._z_cache = self._adjoint_cache(self.z_net)
        z_jets, z_bnd = self._z_cache
        u_jets = autodiff.eval_jet_batch(u_net.spec, u_net.params,
                                         self._est_interior.points, autodiff.GRAD)
        u_bnd = u_net.values(self._est_boundary.points)
        simple = self._eta_from_weight(u_jets, u_bnd, z_jets.values, z_jets.grads, z_bnd)
        if self.z_prime is None:
            return simple, float("nan")
        if self._zp_cache is None:
            self._zp_cache = self._adjoint_cache(self.z_prime)
        zp_jets, zp_bnd = self._zp_cache
        localized = self._eta_from_weight(
            u_jets, u_bnd,
            z_jets.values - zp_jets.values, z_jets.grads - zp_jets.grads,
            z_bnd - zp_bnd,
        )
        return simple, localized

    # -- training phases ------------------------------------------------

    def pretrain_adjoint(self) -> None:
        config = self.config
        seed = config.seed
        z0 = make_network(self.case.network, _derive_int_seed(seed, _S_ADJOINT_INIT))
        self._adj_interior = sample_interior_uniform(
            self.problem.domain, config.n_interior, substream(seed, _S_ADJOINT_INTERIOR))
        self._adj_boundary = sample_boundary_uniform(
            self.problem.domain, config.m_boundary, substream(seed, _S_ADJOINT_BOUNDARY))
        self.z_net, _, _ = train_epochs(
            z0, config.effective_adjoint_loss_kind, self.adjoint,
            self._adj_interior, self._adj_boundary, config,
            config.adjoint_pretrain_epochs)
        self.metadata["adjoint_pretrain_epochs"] = config.adjoint_pretrain_epochs
        self._z_cache = None

    def train_z_prime(self, u_net: Network, event_index: int) -> None:
        config = self.config
        z0 = derive_frozen_adjoint(
            u_net, _derive_int_seed(config.seed, _S_ZPRIME_INIT, event_index))
        self.z_prime, _, _ = train_epochs(
            z0, config.effective_adjoint_loss_kind, self.adjoint,
            self._adj_interior, self._adj_boundary, config,
            config.z_prime_train_epochs)
        self.metadata["z_prime_epochs"] += config.z_prime_train_epochs
        self._zp_cache = None

    def sample_from_indicator(self, u_net: Network, event_index: int,
                              count: int) -> PointBatch:
        """Draw ``count`` interior points from the localized indicator density."""
        config = self.config
        pool_rng = substream(config.seed, _S_POOL, event_index)
        pool = sample_interior_uniform(
            self.problem.domain, config.pool_factor * config.n_interior, pool_rng)
        values = mu_localized(pool.points, u_net, self.z_net, self.z_prime,
                              config.lam, self.problem, "interior")
        draw_rng = substream(config.seed, _S_RESAMPLE, event_index)
        try:
            return resample_from_indicator(pool, values, count, draw_rng)
        except DegenerateDensityError as err:
            warnings.warn(f"indicator density degenerate ({err}); falling back to uniform")
            idx = draw_rng.choice(len(pool), size=count, replace=False)
            return PointBatch(pool.points[idx].copy())

    # -- logging ---------------------------------------------------------

    def should_log(self, epoch: int, events: tuple[int, ...]) -> bool:
        return (epoch % self.config.trace_stride == 0 or epoch in events
                or epoch == self.config.epochs)

    def log_epoch(self, epoch: int, loss: float, u_net: Network,
                  events: tuple[int, ...], event: str = EVENT_NONE) -> None:
        if self.should_log(epoch, events):
            j_est = self.j_estimate(u_net)
            j_err = self.case.j_reference - j_est
            eta_s, eta_l = self.estimates(u_net)
        else:
            j_est = j_err = eta_s = eta_l = float("nan")
        self.trace.add_row(epoch, loss, j_est, j_err, eta_s, eta_l,
                           len(self.interior), event)

    def snapshot(self) -> dict[str, Network]:
        out = {}
        if self._u_current is not None:
            out["primal"] = self._u_current.copy()
        if self.z_net is not None:
            out["adjoint"] = self.z_net.copy()
        if self.z_prime is not None:
            out["zprime"] = self.z_prime.copy()
        return out

    # -- main loop ---------------------------------------------------------

    def execute(self) -> RunResult:
        config = self.config
        # the adjoint is needed for adaptive sampling even when estimator
        # logging is switched off
        if config.estimators_enabled or config.sampling != "uniform":
            self.pretrain_adjoint()
        u_net = make_network(self.case.network,
                             _derive_int_seed(config.seed, _S_PRIMAL_INIT))
        self._u_current = u_net
        state = AdamState.fresh(u_net.layout.size, config.lr, config.beta1,
                                config.beta2, config.eps)
        events = config.event_epochs()
        event_checkpoints: dict[int, dict[str, Network]] = {}
        use_weights = False
        objective = make_objective(config.mode, self.problem, self.interior,
                                   self.boundary, config.lam, use_weights)
        try:
            for epoch in range(1, config.epochs + 1):
                try:
                    value, grad = loss_value_and_gradient(u_net, objective)
                    new_params, state = adam_step(u_net.params, grad, state,
                                                  u_net.freeze_mask)
                except NumericalError as err:
                    err.epoch = epoch
                    raise
                u_net = u_net.with_params(new_params)
                self._u_current = u_net
                if epoch in events:
                    event_index = events.index(epoch)
                    self.train_z_prime(u_net, event_index)
                    if config.sampling == "dwr_resample":
                        self.interior = self.sample_from_indicator(
                            u_net, event_index, config.n_interior)
                        event_label = EVENT_RESAMPLE
                    else:
                        extra = self.sample_from_indicator(
                            u_net, event_index, config.refine_count)
                        self.interior = augment_points(self.interior, extra)
                        event_label = EVENT_REFINE
                    use_weights = config.weighted_quadrature
                    objective = make_objective(config.mode, self.problem,
                                               self.interior, self.boundary,
                                               config.lam, use_weights)
                    self.log_epoch(epoch, value, u_net, events, event_label)
                    event_checkpoints[epoch] = self.snapshot()
                    self.metadata["events"].append(
                        {"epoch": epoch, "kind": event_label,
                         "points": len(self.interior)})
                else:
                    self.log_epoch(epoch, value, u_net, events)
        except NumericalError as err:
            err.trace = self.trace
            raise
        return RunResult(
            u_net=u_net,
            z_net=self.z_net,
            z_prime_net=self.z_prime,
            trace=self.trace,
            event_checkpoints=event_checkpoints,
            metadata=self.metadata,
        )


def baseline_run(case: CaseConfig, config: TrainConfig) -> RunResult:
    """Uniform sampling for the whole budget; single fixed point set."""
    if config.sampling != "uniform":
        raise ConfigurationError("baseline_run requires sampling='uniform'")
    return _Run(case, config).execute()


def algorithm1_run(case: CaseConfig, config: TrainConfig) -> RunResult:
    """Adaptive training: pretrained adjoint, frozen derivative-set adjoint
    at each event, interior points replaced from the indicator density."""
    if config.sampling != "dwr_resample":
        raise ConfigurationError("algorithm1_run requires sampling='dwr_resample'")
    return _Run(case, config).execute()


def refine_run(case: CaseConfig, config: TrainConfig) -> RunResult:
    """Adaptive refinement: indicator-sampled points appended at each event."""
    if config.sampling != "dwr_refine":
        raise ConfigurationError("refine_run requires sampling='dwr_refine'")
    return _Run(case, config).execute()


def run_for_config(case: CaseConfig, config: TrainConfig) -> RunResult:
    return {
        "uniform": baseline_run,
        "dwr_resample": algorithm1_run,
        "dwr_refine": refine_run,
    }[config.sampling](case, config)
