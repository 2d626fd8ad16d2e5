import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from efnpmle.compression import counting_compress, empirical_measure, gauss_quadrature
from efnpmle.estimators import (
    DensityEstimate,
    hellinger_sq,
    likelihood_gap,
    log_likelihood,
    log_mixture_density,
    mixture_density,
    posterior_mean,
    sse_posterior_mean,
)
from efnpmle.models import DomainError, PointMass, UniformPrior, make_model, sample_mixture
from efnpmle.solver import MixingDistribution, fit_compressed

GL = make_model("gl")
SC2 = make_model("sc", {"nu": 2, "sigma2": 1.0}, 0.5)
SC3 = make_model("sc", {"nu": 3, "sigma2": 0.8}, 0.5)
PO = make_model("poisson")


def md(grid, weights):
    return MixingDistribution(np.asarray(grid, float), np.asarray(weights, float))


def test_mixture_density_examples():
    assert float(mixture_density(GL, PointMass(0.0), 0.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert float(mixture_density(GL, md([-2, 2], [0.5, 0.5]), 0.0)) == pytest.approx(norm.pdf(2), rel=1e-14)
    assert float(mixture_density(SC2, PointMass(0.0), 1.0)) == pytest.approx(math.exp(-1), rel=1e-14)


def test_mixture_density_outside_support():
    with pytest.raises(DomainError):
        mixture_density(SC2, PointMass(0.0), -1.0)
    with pytest.raises(DomainError):
        mixture_density(PO, PointMass(0.0), 2.5)


def test_uniform_prior_density_closed_form_against_quadrature():
    x = np.array([-7.0, -1.0, 0.0, 0.3, 4.0, 12.0])
    closed = mixture_density(GL, UniformPrior(-2, 2), x)
    ref = [quad(lambda t: norm.pdf(xx - t) / 4, -2, 2, epsabs=1e-15)[0] for xx in x]
    assert np.allclose(closed, ref, rtol=1e-10, atol=1e-300)
    assert np.all(closed > 0)
    # far tails stay finite in log space
    assert np.isfinite(log_mixture_density(GL, UniformPrior(-2, 2), np.array([60.0])))


def test_log_likelihood_examples():
    m = empirical_measure([0.0])
    assert log_likelihood(GL, PointMass(0.0), m) == pytest.approx(-0.9189385332046727, abs=1e-15)


def test_log_likelihood_counting_matches_per_sample_sum_exactly():
    x, _ = sample_mixture(PO, UniformPrior(-1, 2.5), 20_000, seed=8)
    g = md([-0.7, 0.1, 0.9, 2.2], [0.1, 0.4, 0.3, 0.2])
    assert log_likelihood(PO, g, counting_compress(x).measure) == log_likelihood(PO, g, x)


def test_log_likelihood_against_naive_sum():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    g = md([-1, 0.5, 2], [0.2, 0.5, 0.3])
    naive = sum(math.log(sum(wk * norm.pdf(xi - tk) for tk, wk in zip(g.grid, g.weights))) for xi in x)
    assert log_likelihood(GL, g, x) == pytest.approx(naive, abs=1e-10)
    assert log_likelihood(GL, g, empirical_measure(x)) == pytest.approx(naive, abs=1e-10)


def test_log_likelihood_no_underflow():
    val = log_likelihood(GL, PointMass(0.0), np.array([40.0]))
    assert math.isfinite(val) and val == pytest.approx(-800 - 0.5 * math.log(2 * math.pi))


def test_quadrature_measure_uses_source_sample_size():
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 5000, seed=1)
    rule = gauss_quadrature(empirical_measure(x), 20)
    g = md([-1, 1], [0.5, 0.5])
    assert rule.measure.sample_size == 5000
    # same total units as the per-sample sum; the rule is only approximate here
    assert log_likelihood(GL, g, rule.measure) == pytest.approx(log_likelihood(GL, g, x), abs=1e-2)


def test_likelihood_gap_examples():
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 10_000, seed=4)
    gf, _ = fit_compressed(GL, x, J=0)
    gc, _ = fit_compressed(GL, x, J=20)
    assert likelihood_gap(GL, gf, gf, x) == 0.0
    gap = likelihood_gap(GL, gf, gc, x)
    assert -1e-6 <= gap <= 0.5
    assert likelihood_gap(GL, gc, gf, x) == -gap


def test_posterior_mean_examples():
    xs = np.array([-3.0, 0.0, 5.0])
    assert np.all(posterior_mean(GL, PointMass(1.2), xs) == 1.2)
    assert float(posterior_mean(GL, md([-1.5, 1.5], [0.5, 0.5]), 0.0)) == pytest.approx(0.0, abs=1e-15)
    # weights proportional to exp(theta x - theta^2/2) are equal at x = 1
    assert float(posterior_mean(GL, md([0, 2], [0.5, 0.5]), 1.0)) == pytest.approx(1.0, abs=1e-15)


@given(seed=st.integers(0, 10_000), x=st.floats(-30, 30))
def test_posterior_mean_is_convex_combination(seed, x):
    rng = np.random.default_rng(seed)
    grid = np.sort(rng.uniform(-3, 3, 6))
    g = md(grid, rng.dirichlet(np.ones(6)))
    pm = float(posterior_mean(GL, g, x))
    assert grid[0] - 1e-12 <= pm <= grid[-1] + 1e-12


def test_sse_examples():
    assert sse_posterior_mean(GL, PointMass(0.7), np.array([1.0, -2.0]), np.array([0.7, 0.7])) == 0.0
    g = md([0, 2], [0.5, 0.5])
    assert sse_posterior_mean(GL, g, np.array([1.0]), np.array([0.25])) == pytest.approx(0.75**2, abs=1e-14)


def test_hellinger_identical_is_zero():
    g = md([-1, 0.5, 2], [0.2, 0.5, 0.3])
    assert hellinger_sq(GL, g, g) <= 1e-12
    assert hellinger_sq(PO, g, g) <= 1e-12


def test_hellinger_gaussian_closed_form():
    h2 = hellinger_sq(GL, PointMass(0.0), PointMass(2.0))
    assert h2 == pytest.approx(2 * (1 - math.exp(-0.5)), abs=1e-9)
    assert h2 == pytest.approx(0.7869386805747332, abs=1e-9)


def test_hellinger_poisson_against_direct_sum():
    a = md([0.0], [1.0])
    b = md([-0.5, 0.0, 0.7], [0.2, 0.3, 0.5])
    xs = np.arange(200)
    lam_b = np.exp(b.grid)
    from scipy.stats import poisson

    fa = poisson.pmf(xs, 1.0)
    fb = sum(w * poisson.pmf(xs, l) for w, l in zip(b.weights, lam_b))
    direct = math.fsum((np.sqrt(fa) - np.sqrt(fb)) ** 2)
    assert hellinger_sq(PO, a, b) == pytest.approx(direct, abs=1e-10)


def test_hellinger_sc_gamma_closed_form():
    # Bhattacharyya coefficient of two gammas with equal shape
    h, r1, r2 = 1.5, 1.5 / 0.8, 1.5 / 0.8 - 0.4
    bc = (r1 * r2) ** (h / 2) / ((r1 + r2) / 2) ** h
    assert hellinger_sq(SC3, PointMass(0.0), PointMass(0.4)) == pytest.approx(2 * (1 - bc), abs=1e-9)


@pytest.mark.parametrize("model", [GL, SC3, PO], ids=["gl", "sc", "poisson"])
@settings(max_examples=8)
@given(seed=st.integers(0, 1000))
def test_hellinger_range_and_symmetry(model, seed):
    rng = np.random.default_rng(seed)
    ga = md(np.sort(rng.uniform(-1, 0.45, 3)), rng.dirichlet(np.ones(3)))
    gb = md(np.sort(rng.uniform(-1, 0.45, 3)), rng.dirichlet(np.ones(3)))
    ab, ba = hellinger_sq(model, ga, gb), hellinger_sq(model, gb, ga)
    assert 0 <= ab <= 2
    assert abs(ab - ba) <= 1e-12


@pytest.mark.parametrize("model", [GL, SC2, SC3], ids=["gl", "sc2", "sc3"])
def test_density_integrates_to_one(model):
    rng = np.random.default_rng(1)
    for _ in range(3):
        g = md(np.sort(rng.uniform(-1, 0.45, 4)), rng.dirichlet(np.ones(4)))
        f = lambda x: float(mixture_density(model, g, np.array([x]))[0])
        lo = -np.inf if model is GL else 0
        total, _ = quad(f, lo, np.inf, epsabs=1e-11, limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_poisson_density_sums_to_one():
    g = md([-1, 0, 1.5], [0.3, 0.3, 0.4])
    assert math.fsum(mixture_density(PO, g, np.arange(100.0))) == pytest.approx(1.0, abs=1e-12)


def test_density_estimate_wrapper():
    g = md([-1, 1], [0.5, 0.5])
    est = DensityEstimate(GL, g)
    x = np.array([0.0, 2.0])
    assert np.allclose(est.density(x), mixture_density(GL, g, x))
    assert np.allclose(est.log_density(x), np.log(est.density(x)))
    assert np.allclose(est.posterior_mean(x), posterior_mean(GL, g, x))
