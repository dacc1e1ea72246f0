"""Goal-oriented adaptive collocation sampling for PINN and Deep Ritz solvers.

The package trains neural-network approximations of Poisson problems,
estimates the error in a prescribed goal functional with a fully
network-based dual-weighted estimator, and uses the localized estimator as
an importance density for placing collocation points during training.
"""

__version__ = "0.1.0"

import os as _os

# The dense kernels here are small-matrix dgemms; BLAS thread pools lose
# more to synchronization than they gain at these shapes.  Parallelism
# happens at the process level (run fan-out) instead.  Respected only if
# numpy has not been imported yet; override by setting the variables.
_os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
_os.environ.setdefault("OMP_NUM_THREADS", "1")

from .activations import activation_eval, get_activation
from .adaptive import (AdamState, RunResult, Trace, TrainConfig, adam_step,
                       algorithm1_run, baseline_run, config_for_case, refine_run,
                       run_for_config, train_epochs)
from .autodiff import (Jet2, JetBatch, eval_jet_batch, forward_values, loss_value,
                       loss_value_and_gradient, param_gradient)
from .estimator import (EstimatorInputs, EstimatorReport, build_report, eta_localized,
                        eta_simple, indicator_index, mu_localized, mu_simple)
from .fields import CallableField, Field, constant_field
from .geometry import (Annulus, Ball, Domain, Hyperrectangle, PointBatch, SubRegion,
                       WholeDomain, augment_points, measures, resample_from_indicator,
                       sample_boundary_uniform, sample_interior_uniform, substream)
from .network import (Network, NetworkSpec, ParameterLayout, derive_frozen_adjoint,
                      init_params, layout_for, load_checkpoint, make_network,
                      save_checkpoint)
from .problem import (CaseConfig, DeepRitzObjective, GoalFunctional, PinnObjective,
                      ProblemDefinition, adjoint_problem, case_definitions,
                      case_table_json, deep_ritz_loss, functional_mc, pinn_loss)
