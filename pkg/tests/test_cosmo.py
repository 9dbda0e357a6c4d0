import math

import numpy as np
import pytest
from scipy.integrate import quad

from confsim.core import SeedSpec, derive_stream
from confsim.cosmo import (
    C_KM_S,
    CosmoParams,
    SupernovaCatalog,
    age_and_rip,
    chi2,
    distance_modulus,
    fit_chi2,
    lambda_cosmo,
    omega,
    simulate_catalog,
    u_of_z,
)


def u_quadrature(z: float, theta: CosmoParams) -> float:
    # integral definition of the comoving term
    val, _ = quad(
        lambda a: 1.0 / (a * a * math.sqrt(omega(a, theta))),
        1.0 / (1.0 + z), 1.0,
        epsabs=1e-12, epsrel=1e-12, limit=300,
    )
    return val


def age_quadrature(theta: CosmoParams) -> float:
    val, _ = quad(
        lambda y: 1.0 / (y * math.sqrt(omega(y, theta))),
        0.0, 1.0,
        epsabs=1e-12, epsrel=1e-12, limit=300,
    )
    return val


def small_catalog(theta: CosmoParams, sigma=0.2, n=25) -> SupernovaCatalog:
    z = np.geomspace(0.02, 1.2, n)
    x = np.array([distance_modulus(float(zz), theta) for zz in z])
    return SupernovaCatalog(z, x, np.full(n, sigma))


def test_omega_normalized_at_one():
    for n in (0.05, 0.1, 0.3, 0.65, 2.0):
        assert omega(1.0, CosmoParams(n, 70.0)) == pytest.approx(1.0, abs=1e-15)


def test_omega_value():
    th = CosmoParams(0.3, 70.0)
    assert omega(0.5, th) == pytest.approx(math.exp(0.5**0.3 - 1.0) / 0.125, rel=1e-14)


def test_omega_dust_limit():
    # for small a the density scales like 1/a^3 up to the exp(a^n - 1) factor
    th = CosmoParams(1.0, 70.0)
    for a in (1e-3, 1e-4):
        assert omega(a, th) * a**3 == pytest.approx(math.exp(a - 1.0), rel=1e-12)
    with pytest.raises(ValueError):
        omega(0.0, th)


def test_u_zero_at_origin():
    assert u_of_z(0.0, CosmoParams(0.3, 70.0)) == 0.0


def test_u_monotone():
    th = CosmoParams(0.3, 70.0)
    assert u_of_z(1.0, th) > u_of_z(0.5, th) > 0.0


def test_u_matches_quadrature():
    th = CosmoParams(0.3, 70.0)
    assert abs(u_of_z(0.5, th) - u_quadrature(0.5, th)) <= 1e-8
    # a coarse slice of the acceptance grid
    for n in (0.05, 0.2, 0.65):
        for z in (0.1, 0.7, 1.4):
            th = CosmoParams(n, 70.0)
            assert abs(u_of_z(z, th) - u_quadrature(z, th)) <= 1e-8


def test_distance_modulus_hubble_limit():
    th = CosmoParams(0.3, 70.0)
    z = 1e-4
    approx = 5.0 * math.log10(C_KM_S * z / th.H0) + 25.0
    assert abs(distance_modulus(z, th) - approx) < 0.01


def test_distance_modulus_h0_scaling():
    z = 0.5
    mu1 = distance_modulus(z, CosmoParams(0.3, 70.0))
    mu2 = distance_modulus(z, CosmoParams(0.3, 140.0))
    assert mu1 - mu2 == pytest.approx(5.0 * math.log10(2.0), rel=1e-12)


def test_distance_modulus_consistent_with_u():
    th = CosmoParams(0.3, 70.0)
    z = 0.5
    want = 5.0 * math.log10(1.5 * C_KM_S * u_quadrature(z, th) / 70.0) + 25.0
    assert distance_modulus(z, th) == pytest.approx(want, abs=1e-7)
    with pytest.raises(ValueError):
        distance_modulus(0.0, th)


def test_chi2_zero_on_curve():
    th = CosmoParams(0.3, 70.0)
    cat = small_catalog(th)
    assert chi2(cat, th) == pytest.approx(0.0, abs=1e-16)


def test_chi2_single_pull():
    th = CosmoParams(0.3, 70.0)
    z = np.array([0.5])
    mu = distance_modulus(0.5, th)
    cat = SupernovaCatalog(z, np.array([mu + 0.4]), np.array([0.2]))
    assert chi2(cat, th) == pytest.approx(4.0, rel=1e-12)


def test_chi2_permutation_invariant():
    th = CosmoParams(0.25, 71.0)
    cat = small_catalog(CosmoParams(0.3, 70.0))
    perm = np.random.default_rng(0).permutation(len(cat))
    shuffled = SupernovaCatalog(cat.z[perm], cat.x[perm], cat.sigma[perm])
    assert chi2(cat, th) == pytest.approx(chi2(shuffled, th), rel=1e-12)


def test_lambda_cosmo_scaling():
    th = CosmoParams(0.3, 70.0)
    cat = small_catalog(th)
    assert lambda_cosmo(cat, th) == pytest.approx(0.0, abs=1e-12)
    # chi2 = N gives lambda = 1: one-sigma pulls everywhere
    shifted = SupernovaCatalog(cat.z, cat.x + cat.sigma, cat.sigma)
    assert lambda_cosmo(shifted, th) == pytest.approx(1.0, rel=1e-12)


def test_simulate_catalog_zero_noise_limit():
    th = CosmoParams(0.3, 70.0)
    cat = small_catalog(th, sigma=1e-12)
    sim = simulate_catalog(th, cat, derive_stream(SeedSpec(2), 0))
    assert np.allclose(sim.x, cat.x, atol=1e-10)
    assert np.array_equal(sim.z, cat.z)


def test_simulate_catalog_moments():
    th = CosmoParams(0.3, 70.0)
    template = small_catalog(th, sigma=0.3, n=4)
    rng = derive_stream(SeedSpec(8), 0)
    reps = np.array([simulate_catalog(th, template, rng).x for _ in range(10_000)])
    mu = np.array([distance_modulus(float(z), th) for z in template.z])
    # CLT on the mean and 10% agreement on the per-record variance
    assert np.all(np.abs(reps.mean(axis=0) - mu) < 3.0 * 0.3 / 100.0)
    assert np.all(np.abs(reps.var(axis=0) / 0.09 - 1.0) < 0.10)


def test_age_and_rip_values():
    th = CosmoParams(0.3, 70.0)
    age, rip = age_and_rip(th)
    assert abs(age - age_quadrature(th)) <= 1e-8
    assert rip > 1.0


def test_rip_ratio_decreases_with_n():
    _, rip1 = age_and_rip(CosmoParams(1.0, 70.0))
    _, rip5 = age_and_rip(CosmoParams(5.0, 70.0))
    assert 1.0 < rip5 < rip1


def test_rip_ratio_above_one_across_prior():
    for n in np.linspace(0.05, 0.65, 13):
        _, rip = age_and_rip(CosmoParams(float(n), 70.0))
        assert rip > 1.0


def test_fit_recovers_noiseless_truth():
    truth = CosmoParams(0.3, 70.0)
    cat = small_catalog(truth, sigma=1e-6, n=80)
    theta, chi2_min = fit_chi2(cat)
    assert abs(theta.n - truth.n) / truth.n < 1e-4
    assert abs(theta.H0 - truth.H0) / truth.H0 < 1e-4
    assert chi2_min < 1e-6


def test_fit_restart_stability():
    truth = CosmoParams(0.3, 70.0)
    cat = simulate_catalog(truth, small_catalog(truth, sigma=0.25, n=60),
                           derive_stream(SeedSpec(4), 0))
    _, c1 = fit_chi2(cat, seed=0)
    _, c2 = fit_chi2(cat, seed=1)
    assert abs(c1 - c2) < 1e-6
