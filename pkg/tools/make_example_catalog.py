"""Generate the bundled example supernova catalog.

The shipped file mimics the public Union 2.1 compilation in shape (580
records, z from 0.015 to 1.4, magnitude errors centered near 0.22) but is
synthetic: moduli are drawn from the package's own cosmological model at an
interior parameter point.  The seed is chosen so that the best fit of the
bundled catalog lands at a chi2 per degree of freedom of about 0.98, typical
of published supernova fits.
"""
import csv
import sys

import numpy as np

from confsim.cosmo import CosmoParams, SupernovaCatalog, _mu_vector, fit_chi2

TRUE = CosmoParams(n=0.30, H0=70.0)
N_SN = 580


def build(seed: int) -> SupernovaCatalog:
    rng = np.random.default_rng(seed)
    z = np.sort(np.exp(rng.uniform(np.log(0.015), np.log(1.4), N_SN)))
    sigma = np.clip(rng.normal(0.22, 0.06, N_SN), 0.10, 0.60)
    # a handful of poorly measured objects, as in real compilations
    wide = rng.random(N_SN) < 0.03
    sigma[wide] = rng.uniform(0.45, 0.75, wide.sum())
    x = _mu_vector(z, TRUE) + sigma * rng.standard_normal(N_SN)
    return SupernovaCatalog(z, x, sigma)


def main():
    best = None
    for seed in range(1, 61):
        cat = build(seed)
        theta, chi2_min = fit_chi2(cat)
        ratio = chi2_min / (N_SN - 2)
        ok_box = 0.05 < theta.n < 0.65 and 66.0 < theta.H0 < 76.0
        print(f"seed={seed:3d} chi2/ndf={ratio:.4f} n={theta.n:.4f} H0={theta.H0:.3f} in_box={ok_box}")
        if ok_box and abs(ratio - 0.98) < 0.004:
            best = (seed, cat, theta, ratio)
            break
    if best is None:
        sys.exit("no seed matched")
    seed, cat, theta, ratio = best
    print(f"using seed {seed}: chi2/ndf={ratio:.4f}, n={theta.n:.4f}, H0={theta.H0:.3f}")
    with open("src/confsim/data/sn_moduli.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "x", "sigma"])
        for row in zip(cat.z, cat.x, cat.sigma):
            w.writerow([repr(float(v)) for v in row])


if __name__ == "__main__":
    main()
