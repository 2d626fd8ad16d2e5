import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from efnpmle.compression import empirical_measure, moment_residuals_2d, tchakaloff_compress
from efnpmle.hetero import (
    HeteroObservation,
    fit_hetero,
    hetero_density,
    hetero_grid,
    hetero_log_likelihood,
    hetero_posterior_mean,
)
from efnpmle.models import DomainError, make_model
from efnpmle.solver import MixingDistribution, fit_npmle

GL = make_model("gl")


def md(grid, weights):
    return MixingDistribution(np.asarray(grid, float), np.asarray(weights, float))


def hetero_sample(n, seed, levels=(0.5, 1.0, 2.0)):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-2, 2, n)
    s2 = rng.choice(levels, n)
    return theta + np.sqrt(s2) * rng.standard_normal(n), s2


def test_density_examples():
    assert float(hetero_density(md([0], [1]), 0.0, 1.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert float(hetero_density(md([0], [1]), 0.0, 4.0)) == pytest.approx(math.sqrt(4 / (2 * math.pi)), rel=1e-15)
    x, tau = np.array([-1.0, 0.3, 2.5]), np.array([0.5, 1.0, 3.0])
    got = hetero_density(md([0.7], [1]), x, tau)
    assert np.allclose(got, norm.pdf(x, 0.7, 1 / np.sqrt(tau)), rtol=1e-14)
    with pytest.raises(DomainError):
        hetero_density(md([0], [1]), 0.0, 0.0)


def test_posterior_mean_examples():
    assert np.all(hetero_posterior_mean(md([0.4], [1]), np.array([-2.0, 3.0]), 1.0) == 0.4)
    assert float(hetero_posterior_mean(md([-1, 1], [0.5, 0.5]), 0.0, 2.0)) == pytest.approx(0.0, abs=1e-15)
    grid = np.linspace(-2, 2, 9)
    g = md(grid, np.full(9, 1 / 9))
    assert float(hetero_posterior_mean(g, 0.5, 1e6)) == pytest.approx(0.5, abs=1e-12)


def test_observation_band():
    obs = HeteroObservation([0.0, 1.0], [0.5, 2.0], T0=2.0)
    assert obs.tau.tolist() == [2.0, 0.5]
    with pytest.raises(DomainError):
        HeteroObservation([0.0], [20.0], T0=10.0)
    with pytest.raises(DomainError):
        HeteroObservation([0.0], [-1.0])
    with pytest.raises(DomainError):
        HeteroObservation([np.nan], [1.0])


def test_homoscedastic_reduction():
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, 3000) + rng.standard_normal(3000)
    grid = hetero_grid(x, 200)
    gh, rh = fit_hetero((x, np.ones_like(x)), J=0, grid=grid, tol=1e-10)
    m = empirical_measure(x)
    gg, rg = fit_npmle(GL, m, grid, tol=1e-10)
    base = float(np.dot(m.weights, -0.5 * m.atoms**2 - 0.5 * math.log(2 * math.pi)))
    assert rh.objective == pytest.approx(rg.objective + base, abs=1e-8)


def test_single_observation_point_mass():
    grid = np.linspace(-1, 1, 5)
    g, rep = fit_hetero(([0.3], [1.0]), J=0, grid=grid)
    assert grid[np.argmax(g.weights)] == 0.5 and g.weights.max() == pytest.approx(1, abs=1e-8)


def test_grid_respects_radius():
    x, s2 = hetero_sample(500, 1)
    g, _ = fit_hetero((x, s2), J=4, M=1.0)
    assert g.grid.min() == -1.0 and g.grid.max() == 1.0


def test_compressed_rule_properties():
    x, s2 = hetero_sample(10_000, 0)
    obs = HeteroObservation(x, s2)
    m = empirical_measure(obs.pairs())
    r = tchakaloff_compress(m, 8)
    assert len(r.measure) <= 45
    assert np.max(moment_residuals_2d(m, r.atoms, r.weights, r.affine, 8)) <= 1e-8
    rows = {tuple(a) for a in m.atoms}
    assert all(tuple(a) in rows for a in r.atoms)


@pytest.mark.xfail(strict=True, reason="degree-8 Tchakaloff rule is too coarse here; see decisions ledger")
def test_compressed_gap_at_order_eight():
    x, s2 = hetero_sample(10_000, 0)
    gf, _ = fit_hetero((x, s2), J=0)
    gc, rc = fit_hetero((x, s2), J=8)
    assert rc.n_rows <= 45
    gap = hetero_log_likelihood(gf, x, 1 / s2) - hetero_log_likelihood(gc, x, 1 / s2)
    assert gap <= 0.1


def test_gap_shrinks_with_order():
    x, s2 = hetero_sample(4000, 2)
    tau = 1 / s2
    gf, _ = fit_hetero((x, s2), J=0)
    full = hetero_log_likelihood(gf, x, tau)
    gaps = [full - hetero_log_likelihood(fit_hetero((x, s2), J=J)[0], x, tau) for J in (4, 20)]
    assert gaps[1] < gaps[0]
    assert gaps[1] >= -1e-6


@given(seed=st.integers(0, 1000))
def test_em_monotone_on_hetero(seed):
    x, s2 = hetero_sample(200, seed)
    _, rep = fit_hetero((x, s2), J=3, grid_size=40, algorithm="vem", max_em=300)
    assert rep.em_min_increment >= -1e-12
    assert rep.extra["T0"] == 10.0
