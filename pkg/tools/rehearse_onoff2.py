"""Rehearsal of the on/off desk-scale pipeline: triples -> train -> coverage.

Not part of the package; used to pick training hyperparameters.
"""
import math
import sys
import time

import numpy as np

from confsim.core import SeedSpec, UniformBoxPrior, ParamPoint
from confsim.inference import NetworkCdf, coverage, make_training_set
from confsim.nn import MlpSpec, TrainConfig, train
from confsim.onoff import OnOffParams, lambda_onoff, simulate_onoff

B = int(sys.argv[1]) if len(sys.argv) > 1 else 1_000_000
iters = int(sys.argv[2]) if len(sys.argv) > 2 else 40_000
batch = int(sys.argv[3]) if len(sys.argv) > 3 else 2048
lr = float(sys.argv[4]) if len(sys.argv) > 4 else 6e-4

prior = UniformBoxPrior((0, 0), (20, 20), ("mu", "nu"))
sim = lambda th, rng: simulate_onoff(OnOffParams(th.values[0], th.values[1]), rng)
stat = lambda d, th: lambda_onoff(d, OnOffParams(th.values[0], th.values[1]))

t0 = time.time()
ts = make_training_set(sim, stat, prior, B, SeedSpec(777))
print(f"triples: {time.time()-t0:.0f}s  n={len(ts)}  zbar={ts.targets().mean():.3f}  "
      f"lam_obs q50/q90/q99={np.percentile(ts.lambda_obs,[50,90,99]).round(2)}")

t0 = time.time()
cfg = TrainConfig(batch_size=batch, learning_rate=lr, max_iterations=iters,
                  patience_iterations=25_000, validation_fraction=0.05,
                  seed=5, eval_every=500)
model, log = train(MlpSpec((3, 12, 12, 12, 12, 12, 12, 1), "prelu", True),
                   ts.features(), ts.targets(), cfg,
                   feature_scale=np.array([10.0, 20.0, 20.0]))
best = min(l[2] for l in log)
print(f"train: {time.time()-t0:.0f}s  iters={log[-1][0]}  best_val={best:.5f}")

est = NetworkCdf(model, domain=prior)
t0 = time.time()
worst = 0.0
bad = 0
for mu in np.linspace(2, 18, 5):
    for nu in np.linspace(2, 18, 5):
        th = ParamPoint((mu, nu), ("mu", "nu"))
        rows = coverage(est, sim, stat, th, (0.68, 0.90), 2000, SeedSpec(70000 + int(mu * 100 + nu)))
        for r in rows:
            dev = abs(r.p - r.tau)
            worst = max(worst, dev)
            flag = " <-- BAD" if dev > 0.05 else ""
            if dev > 0.05:
                bad += 1
            print(f"  theta=({mu:5.2f},{nu:5.2f}) tau={r.tau:.2f} p={r.p:.3f} dev={dev:.3f}{flag}")
print(f"coverage: {time.time()-t0:.0f}s  worst |p-tau|={worst:.3f}  bad={bad}")
