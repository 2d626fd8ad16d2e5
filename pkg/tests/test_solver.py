import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import lattice_max

from efnpmle.compression import DiscreteMeasure, empirical_measure, gauss_quadrature
from efnpmle.estimators import log_likelihood
from efnpmle.models import DomainError, UniformPrior, make_model, sample_mixture
from efnpmle.solver import (
    MixingDistribution,
    build_grid,
    dual_gap_certificate,
    fit_compressed,
    fit_npmle,
    likelihood_matrix,
    solve_mixture_weights,
)

GL = make_model("gl")
PO = make_model("poisson")


def phi(L, w, g):
    return float(np.dot(w, np.log(L @ g)))


def brute_force_max(L, w, step=1e-2):
    return lattice_max(L, w, int(round(1 / step)))


# -- grid -------------------------------------------------------------------------

def test_build_grid_data_range():
    g = build_grid(GL, [-3.0, 3.0], 300)
    assert g.shape == (300,) and g[0] == -3 and g[-1] == 3
    assert np.allclose(np.diff(g), 6 / 299)


def test_build_grid_clips_to_radius():
    g = build_grid(make_model("gl", M=1.0), [-3.0, 3.0], 5)
    assert g.tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]


def test_build_grid_explicit_sc():
    sc = make_model("sc", {"nu": 2, "sigma2": 1.0}, 0.5)
    assert build_grid(sc, [0.1, 0.2], 2, mode="explicit").tolist() == [0.1, 0.2]


def test_build_grid_support_bound_and_errors():
    g = build_grid(PO, [0.0, 7.0], 3, mode="support_bound")
    assert g == pytest.approx([-math.log(7), 0, math.log(7)])
    with pytest.raises(ValueError):
        build_grid(GL, [0, 1], 1)
    with pytest.raises(ValueError):
        build_grid(GL, [0, 1], 5, mode="nope")
    sc = make_model("sc", {"nu": 2, "sigma2": 1.0}, 0.5)
    with pytest.raises(DomainError):
        build_grid(sc, [2.0, 3.0], 5, mode="explicit")


def test_build_grid_poisson_zero_counts():
    g = build_grid(PO, np.array([0.0, 0.0, 3.0, 9.0]), 10)
    assert np.all(np.isfinite(g)) and g[-1] == pytest.approx(math.log(9))


# -- likelihood matrix ------------------------------------------------------------------

def test_likelihood_matrix_examples():
    L, s = likelihood_matrix(GL, DiscreteMeasure([1.3, -4.0], [0.5, 0.5]), [0.0])
    assert L.tolist() == [[1.0], [1.0]] and s.tolist() == [0.0, 0.0]
    L, s = likelihood_matrix(GL, DiscreteMeasure([2.0], [1.0]), [-2.0, 2.0])
    assert s.tolist() == [2.0]
    assert L[0] == pytest.approx([math.exp(-8), 1.0], rel=1e-15)


@given(seed=st.integers(0, 10_000))
def test_likelihood_matrix_recovers_log_density(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=2, size=8)
    grid = np.sort(rng.uniform(-3, 3, 5))
    g = rng.dirichlet(np.ones(5))
    L, s = likelihood_matrix(GL, DiscreteMeasure(x, np.full(8, 1 / 8)), grid)
    assert np.all((L > 0) & (L <= 1))
    m = DiscreteMeasure(x, np.full(8, 1 / 8))
    got = np.log(L @ g) + s
    direct = np.log(np.exp(np.outer(m.atoms, grid) - grid**2 / 2) @ g)
    assert np.allclose(got, direct, atol=1e-12)


# -- certificate ------------------------------------------------------------------------

def test_certificate_examples():
    assert dual_gap_certificate(np.array([[0.3], [0.9]]), [0.5, 0.5], [1.0]) == 0.0
    assert dual_gap_certificate(np.ones((4, 3)), np.full(4, 0.25), np.full(3, 1 / 3)) == 0.0
    with pytest.raises(ValueError):
        dual_gap_certificate(np.array([[1.0, 0.0], [0.0, 1.0]]), [0.5, 0.5], [1.0, 0.0])


@given(seed=st.integers(0, 10_000))
def test_certificate_bounds_true_gap(seed):
    rng = np.random.default_rng(seed)
    L = rng.uniform(0.05, 1.0, (5, 4))
    w = rng.dirichlet(np.ones(5))
    g = rng.dirichlet(np.ones(4))
    best = brute_force_max(L, w, step=1e-2)
    assert best - phi(L, w, g) <= dual_gap_certificate(L, w, g) + 1e-12


# -- fitting ------------------------------------------------------------------------------

def test_single_observation_gives_nearest_node():
    grid = np.linspace(-2, 2, 9)
    g, rep = fit_npmle(GL, DiscreteMeasure([0.61], [1.0]), grid)
    assert grid[np.argmax(g.weights)] == 0.5
    assert g.weights.max() == pytest.approx(1.0, abs=1e-8)
    assert rep.certificate_gap <= 1e-8


def test_symmetric_two_atoms():
    grid = np.array([-2.0, 0.0, 2.0])
    m = DiscreteMeasure([-2.0, 2.0], [0.5, 0.5])
    g, rep = fit_npmle(GL, m, grid, tol=1e-12)
    assert g.weights == pytest.approx([0.5, 0.0, 0.5], abs=1e-6)
    L, _ = likelihood_matrix(GL, m, grid)
    d0 = float((m.weights / (L @ g.weights)) @ L[:, 1])
    assert d0 == pytest.approx(2 / (math.exp(2) + math.exp(-6)), rel=1e-6)
    assert d0 == pytest.approx(0.271, abs=5e-4)
    # brute force at resolution 1e-3 finds nothing better
    best = lattice_max(L, m.weights, 1000)
    assert best <= phi(L, m.weights, g.weights) + rep.certificate_gap + 1e-12


def test_quadrature_weights_same_path():
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 10_000, seed=0)
    rule = gauss_quadrature(empirical_measure(x), 20)
    g, rep = fit_npmle(GL, rule.measure, build_grid(GL, x, 300), order=20)
    assert rep.n_rows == 20 and rep.order == 20
    assert rep.converged and rep.certificate_gap <= 1e-8
    L, _ = likelihood_matrix(GL, rule.measure, g.grid)
    assert dual_gap_certificate(L, rule.measure.weights, g.weights) == pytest.approx(rep.certificate_gap, abs=1e-12)


@pytest.mark.parametrize("algorithm,tol", [("em", 1e-4), ("vem", 1e-4), ("cnm", 1e-10)])
def test_algorithms_reach_same_objective(algorithm, tol):
    # plain EM has a slow tail; it only gets a tolerance it can reach
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 400, seed=3)
    m = gauss_quadrature(empirical_measure(x), 12).measure
    grid = build_grid(GL, x, 40)
    _, ref = fit_npmle(GL, m, grid, tol=1e-10)
    _, rep = fit_npmle(GL, m, grid, tol=tol, algorithm=algorithm)
    assert rep.converged
    assert 0 <= ref.objective - rep.objective + 1e-10 <= tol + 1e-10
    assert rep.em_min_increment >= -1e-12


def test_iteration_cap_reports_failure():
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 500, seed=1)
    g, rep = fit_npmle(GL, empirical_measure(x), build_grid(GL, x, 60), tol=1e-12, algorithm="em", max_em=5)
    assert not rep.converged and rep.certificate_gap > 1e-12
    assert rep.iterations["em"] == 5
    assert abs(g.weights.sum() - 1) < 1e-12


def test_fit_rejects_bad_input():
    m = DiscreteMeasure([0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        fit_npmle(GL, m, [0.0, 1.0], tol=0)
    with pytest.raises(ValueError):
        solve_mixture_weights(np.ones((2, 2)), [1.0, 0.0])
    with pytest.raises(ValueError):
        solve_mixture_weights(np.ones((2, 2)), [0.5, 0.5], algorithm="ipm")
    sc = make_model("sc", {"nu": 2, "sigma2": 1.0}, 0.5)
    with pytest.raises(DomainError):
        fit_npmle(sc, DiscreteMeasure([1.0], [1.0]), [0.5, 1.0])


@given(seed=st.integers(0, 100_000), m=st.integers(1, 10), K=st.integers(1, 6))
def test_em_monotone_and_certificate_sound(seed, m, K):
    rng = np.random.default_rng(seed)
    L = rng.uniform(1e-3, 1.0, (m, K))
    w = rng.dirichlet(np.ones(m))
    for algorithm in ("em", "vem", "cnm"):
        # the bound holds at any iterate, converged or not
        g, info = solve_mixture_weights(L, w, tol=1e-9, algorithm=algorithm, max_em=2_000)
        assert info["em_min_increment"] >= -1e-12
        assert np.all(g >= 0) and abs(g.sum() - 1) < 1e-12
        best = brute_force_max(L, w, step=0.05) if K > 1 else phi(L, w, g)
        assert best <= info["phi"] + info["gap"] + 1e-9


def test_shift_invariance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=9) * 3
    grid = np.linspace(-4, 4, 6)
    m = DiscreteMeasure(x, np.full(9, 1 / 9))
    L, s = likelihood_matrix(GL, m, grid)
    raw = L * np.exp(s)[:, None]
    g1, i1 = solve_mixture_weights(L, m.weights, tol=1e-12)
    g2, i2 = solve_mixture_weights(raw, m.weights, tol=1e-12)
    assert np.allclose(g1, g2, atol=1e-6)
    assert i2["phi"] - i1["phi"] == pytest.approx(float(np.dot(m.weights, s)), abs=1e-10)


def test_support_contained_in_radius():
    model = make_model("gl", M=1.5)
    x, _ = sample_mixture(model, UniformPrior(-1.5, 1.5), 2000, seed=2)
    g, _ = fit_compressed(model, x, J=15)
    theta, _ = g.support()
    assert np.all(np.abs(theta) <= 1.5)


def test_fit_compressed_poisson_identical_to_full():
    x, _ = sample_mixture(PO, UniformPrior(-1, 2), 5000, seed=4)
    grid = build_grid(PO, x, 100)
    gf, rf = fit_npmle(PO, empirical_measure(x), grid)
    gc, rc = fit_compressed(PO, x, J=25, grid_options={"grid_size": 100})
    assert rc.construction == "counting"
    assert np.array_equal(gf.weights, gc.weights)
    assert rf.objective == rc.objective


def test_fit_compressed_row_count_at_paper_scale():
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 100_000, seed=0)
    _, rep = fit_compressed(GL, x, J=25)
    assert rep.n_rows == 25 and rep.sample_size == 100_000
    assert {"compress", "matrix_build", "solve", "total"} <= set(rep.wall_times)


def test_fit_compressed_identity_when_order_exceeds_atoms():
    x = np.round(np.random.default_rng(1).normal(size=60), 1) + 0.05
    m = empirical_measure(x)
    grid = build_grid(GL, x, 50)
    _, rf = fit_npmle(GL, m, grid)
    _, rc = fit_compressed(GL, x, J=len(m) + 1, grid_options={"grid_size": 50})
    assert rc.construction == "identity"
    assert rc.objective == pytest.approx(rf.objective, abs=1e-10)


def test_fit_compressed_delta_sets_tolerance():
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 1000, seed=0)
    _, rep = fit_compressed(GL, x, J=10, delta_n=0.1)
    assert rep.tol == pytest.approx(0.1 / 2000)
    _, rep = fit_compressed(GL, x, J=0)
    assert rep.order == "full" and rep.n_rows == 1000


def test_compressed_fit_close_to_full():
    x, _ = sample_mixture(GL, UniformPrior(-2, 2), 10_000, seed=1)
    gf, _ = fit_compressed(GL, x, J=0)
    gc, _ = fit_compressed(GL, x, J=20)
    gap = log_likelihood(GL, gf, x) - log_likelihood(GL, gc, x)
    assert -0.5 <= gap <= 0.5


def test_mixing_distribution_validation_and_roundtrip():
    with pytest.raises(ValueError):
        MixingDistribution(np.array([0.0, 1.0]), np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        MixingDistribution(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    g = MixingDistribution(np.array([-1.0, 0.0, 2.0]), np.array([0.25, 0.0, 0.75]))
    h = MixingDistribution.from_dict(g.to_dict())
    assert np.array_equal(g.grid, h.grid) and np.array_equal(g.weights, h.weights)
    assert g.support()[0].tolist() == [-1.0, 2.0]
    assert g.mean() == pytest.approx(1.25)
    assert MixingDistribution.point_mass(0.3).support_range() == (0.3, 0.3)
