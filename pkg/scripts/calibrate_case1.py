"""Full-scale Case 1 calibration: snapshots for estimator accuracy analysis."""
import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from goalpinn.adaptive import AdamState, config_for_case, train_epochs, substream, _derive_int_seed, _S_PRIMAL_INIT, _S_ADJOINT_INIT, _S_ADJOINT_INTERIOR, _S_ADJOINT_BOUNDARY, _S_TRAIN_INTERIOR, _S_TRAIN_BOUNDARY
from goalpinn.geometry import sample_interior_uniform, sample_boundary_uniform
from goalpinn.network import make_network, save_checkpoint, derive_frozen_adjoint
from goalpinn.problem import adjoint_problem, case_definitions

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("/root/calib/case1")
SEED = int(sys.argv[2]) if len(sys.argv) > 2 else 1
OUT.mkdir(parents=True, exist_ok=True)

case = case_definitions(1)
config = config_for_case(case, sampling="uniform", seed=SEED)
problem = case.problem
adjoint = adjoint_problem(problem, case.goal)

t0 = time.time()
interior = sample_interior_uniform(problem.domain, config.n_interior, substream(SEED, _S_TRAIN_INTERIOR))
boundary = sample_boundary_uniform(problem.domain, config.m_boundary, substream(SEED, _S_TRAIN_BOUNDARY))
adj_int = sample_interior_uniform(problem.domain, config.n_interior, substream(SEED, _S_ADJOINT_INTERIOR))
adj_bnd = sample_boundary_uniform(problem.domain, config.m_boundary, substream(SEED, _S_ADJOINT_BOUNDARY))

z = make_network(case.network, _derive_int_seed(SEED, _S_ADJOINT_INIT))
z, _, zl = train_epochs(z, "pinn", adjoint, adj_int, adj_bnd, config, config.adjoint_pretrain_epochs)
save_checkpoint(z, OUT / "z.json")
print(f"[{time.time()-t0:7.0f}s] adjoint trained, final loss {zl[-1]:.3e}", flush=True)

u = make_network(case.network, _derive_int_seed(SEED, _S_PRIMAL_INIT))
state = AdamState.fresh(u.layout.size, config.lr)
losses = []
save_every = 250
for seg_end in range(save_every, config.epochs + 1, save_every):
    u, state, ls = train_epochs(u, "pinn", problem, interior, boundary, config,
                                save_every, state=state, epoch_offset=seg_end - save_every)
    losses.extend(ls)
    save_checkpoint(u, OUT / f"u_{seg_end:05d}.json")
    print(f"[{time.time()-t0:7.0f}s] primal epoch {seg_end}, loss {ls[-1]:.3e}", flush=True)

zp = derive_frozen_adjoint(u, 7)
zp, _, _ = train_epochs(zp, "pinn", adjoint, adj_int, adj_bnd, config, config.z_prime_train_epochs)
save_checkpoint(zp, OUT / "zp.json")
(OUT / "losses.json").write_text(json.dumps(losses))
print(f"[{time.time()-t0:7.0f}s] done", flush=True)
