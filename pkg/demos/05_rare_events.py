"""Rare-event probabilities: naive counting vs an action-guided tilt.

The event is |u(T)|_H >= 0.5 for a single damped noisy mode started at
rest.  Its exact probability is a Gaussian tail (the terminal law is
N(0, eps*G) per real component with G the mode's Gramian), so every
estimate below can be checked against truth.

As eps shrinks the event probability decays like exp(-I/eps) and naive
counting starves — at eps = 0.01 it would need ~1e45 paths for one hit.
Tilting the simulation with the minimizing control (an equal mixture of
+tilt and -tilt, weighted back by the likelihood ratio) keeps the relative
error flat with a few thousand paths, and -eps*log(p_hat) marches down
toward the minimized action I as the theory says it must.

Run:  python demos/05_rare_events.py
"""
import math

import numpy as np

from goylab import (
    ActionProblem,
    AdditiveNoise,
    CovarianceSpec,
    Forcing,
    ModelParams,
    SphereTarget,
    TerminalSphereEvent,
    TimeGrid,
    ldp_check,
    minimize_action,
)
from goylab.experiments import EnsembleSpec

G = (1.0 - math.exp(-8.0)) / 8.0

spec = EnsembleSpec(
    params=ModelParams(num_shells=1, a=0.0, b=0.0, c=0.0),
    sigma=AdditiveNoise(s=(1.0,)),
    q=CovarianceSpec.explicit((1.0,)),
    f=Forcing.zero(),
    u0=np.zeros(1, complex),
    grid=TimeGrid(0.0, 1.0, 2000),
    epsilon=0.05,
    paths=2000,
    master_seed=11,
)

best = minimize_action(ActionProblem(
    params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
    u0=spec.u0, grid=spec.grid,
    target=SphereTarget(center=(0j,), radius=0.5),
    penalty_rho=1e3, continuation_stages=6,
))
print(f"minimized exit action I = {best.action_value:.6f} "
      f"(closed form {0.25 / (2 * G):.6f})")
print()

table = ldp_check(
    TerminalSphereEvent(0.5), [0.05, 0.02, 0.01], spec,
    i_ref=best.action_value, tilt=best.v_star,
    naive_paths=2000, importance_paths=2000,
)
print(f"{'eps':>6} {'estimator':>10} {'p_hat':>12} {'95% interval':>26} "
      f"{'-eps log p':>11} {'exact p':>12}")
for row in table.rows:
    exact = math.erfc(0.5 / math.sqrt(row.epsilon * G) / math.sqrt(2.0))
    neg = f"{row.neg_eps_log_p:11.4f}" if math.isfinite(row.neg_eps_log_p) else "        inf"
    print(f"{row.epsilon:6.2f} {row.estimator:>10} {row.p_hat:12.4e} "
          f"[{row.ci_low:11.4e},{row.ci_high:11.4e}] {neg} {exact:12.4e}")
print()
print(f"importance-sampled -eps*log(p) decreasing toward I: "
      f"{table.trend_monotone}  (I = {table.i_ref:.4f})")
print("naive rows go dark once p drops below ~1/paths; the tilted rows "
      "keep tracking the exact tail")
print("(the small offset from the exact column is time-discretization bias "
      "at this demo's coarse 2000-step grid; it vanishes as the grid refines)")
