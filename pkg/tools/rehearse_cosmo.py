import time
import numpy as np
from confsim.core import SeedSpec, UniformBoxPrior
from confsim.inference import NetworkCdf, GridSpec, confidence_set, make_training_set
from confsim.nn import MlpSpec, TrainConfig, train
from confsim.problems import build_problem, bundled_data_path
from confsim.cosmo import fit_chi2

prior = UniformBoxPrior((0.05, 66.0), (0.65, 76.0), ("n", "H0"))
prob = build_problem("cosmo", prior, {})
cat = prob.read_dataset(bundled_data_path("sn_moduli.csv"))

t0 = time.time()
ts = make_training_set(prob.simulate, prob.statistic, prior, 60_000, SeedSpec(31))
print(f"triples: {time.time()-t0:.0f}s zbar={ts.targets().mean():.3f} lam_obs q={np.percentile(ts.lambda_obs,[5,50,95]).round(3)}")

t0 = time.time()
cfg = TrainConfig(batch_size=50, learning_rate=1e-3, max_iterations=60_000,
                  patience_iterations=15_000, validation_fraction=0.05, seed=2, eval_every=500)
model, log = train(MlpSpec((3, 20, 20, 20, 20, 20, 1)), ts.features(), ts.targets(), cfg,
                   feature_scale=np.array([1.0, 10.0, 100.0]))
print(f"train: {time.time()-t0:.0f}s iters={log[-1][0]} best={min(l[2] for l in log):.5f}")

est = NetworkCdf(model, domain=prior)
grid = GridSpec(prior.lows, prior.highs, (60, 60), prior.names)
t0 = time.time()
cs = confidence_set(est, cat, prob.statistic, grid, (0.68, 0.8, 0.9, 0.95))
theta_fit, chi2min = fit_chi2(cat)
dx = (0.65 - 0.05) / 59; dy = (76 - 66) / 59
print(f"sets: {time.time()-t0:.0f}s best_fit={cs.best_fit.values} chi2fit=({theta_fit.n:.4f},{theta_fit.H0:.3f})")
print(f"offsets in grid spacings: {abs(cs.best_fit.values[0]-theta_fit.n)/dx:.2f}, {abs(cs.best_fit.values[1]-theta_fit.H0)/dy:.2f}")
for tau in (0.68, 0.8, 0.9, 0.95):
    print(f"tau={tau}: mask size={int(cs.masks[tau].sum())}, boundaries={len(cs.boundaries[tau])}")
