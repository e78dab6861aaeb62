import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resdens import rng
from resdens.density import Bandwidths, f1_hat_curve
from resdens.errors import ConfigError, EpsNotOnGrid, TooManyFailures
from resdens.grids import GridSpec
from resdens.montecarlo import (ModelSpec, ReplicationMatrix, SimConfig, aise, ase,
                                average_estimate, bias_variance, confidence_band, delta_moments,
                                generate_sample, replicate, residual_delta_stats,
                                true_density)
from resdens.regression import residuals

import oracles

SMALL = dict(n=60, T=12, riemann_p=20, eps_step=0.25)


def _matrix(values, grid):
    values = np.asarray(values, dtype=float)
    return ReplicationMatrix(values, np.asarray(grid, dtype=float), "f1_hat", Bandwidths(0.2, 0.2),
                             np.arange(values.shape[0]))


def test_samples_are_keyed_and_follow_the_model():
    cfg = SimConfig(**SMALL)
    a, b = generate_sample(cfg, 3), generate_sample(cfg, 3)
    assert np.array_equal(a.sample.xs, b.sample.xs) and np.array_equal(a.true_eps, b.true_eps)
    assert not np.array_equal(a.true_eps, generate_sample(cfg, 4).true_eps)
    assert not np.array_equal(a.true_eps, generate_sample(cfg, 3, rng.TUNE_GLOBAL).true_eps)
    x = a.sample.xs[:, 0]
    assert np.all((x >= -1) & (x <= 1))
    np.testing.assert_array_equal(a.sample.ys, 3 * x**2 + 2 * x + 1 + a.true_eps)


def test_error_draws_have_unit_moments():
    cfg = SimConfig(n=1000, T=100)
    e = np.concatenate([generate_sample(cfg, k).true_eps for k in range(cfg.T)])
    assert abs(e.mean()) < 0.02 and abs(e.var() - 1) < 0.03


def test_single_replication_matches_direct_call():
    cfg = SimConfig(**dict(SMALL, T=1))
    grid = cfg.eps_grid
    mat = replicate(cfg, "f1_hat", Bandwidths(0.4, 0.5), grid)
    s = generate_sample(cfg, 0).sample
    direct = f1_hat_curve(s, residuals(s, cfg.k0, 0.4), cfg.k1_scalar, 0.5, None, grid).values
    np.testing.assert_array_equal(mat.values[0], direct)


def test_rows_are_independent_of_other_rows_and_of_threads():
    bw = Bandwidths(0.5, 0.4)
    big = replicate(SimConfig(**dict(SMALL, T=12)), "f2_hat", bw, [-1.0, 0.0, 1.0])
    small = replicate(SimConfig(**dict(SMALL, T=5)), "f2_hat", bw, [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(big.values[:5], small.values)
    threaded = replicate(SimConfig(**dict(SMALL, T=12, threads=4)), "f2_hat", bw, [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(big.values, threaded.values)


def test_failure_budget():
    cfg = SimConfig(**SMALL)
    with pytest.raises(TooManyFailures):
        replicate(cfg, "f2_hat", Bandwidths(0.005, 0.3), [0.0])


def test_aise_examples():
    g = np.linspace(-5, 5, 201)
    truth = true_density(g)
    assert aise(_matrix([truth, truth], g)) == 0.0
    assert aise(_matrix([truth + 0.1], g), interval=(-5, 5), step=0.05) == pytest.approx(0.1, abs=1e-6)
    with pytest.raises(ValueError):
        aise(_matrix([truth], g), interval=(-3, 3))


@given(st.integers(0, 10**6))
def test_aise_matches_sum_then_integrate_and_pointwise_curve(seed):
    rs = np.random.default_rng(seed)
    g = np.linspace(-5, 5, 41)
    vals = rs.normal(0.2, 0.1, (7, 41))
    mat = _matrix(vals, g)
    truth = [oracles.std_normal_pdf(v) for v in g]
    per_rep = [oracles.trapezoid([(v - t) ** 2 for v, t in zip(row, truth)], 0.25) for row in vals]
    assert aise(mat) == pytest.approx(sum(per_rep) / 7, rel=1e-12)
    ase_curve = [ase(mat, eps=e) for e in g]
    assert aise(mat) == pytest.approx(np.trapezoid(ase_curve, g), rel=1e-10)


@pytest.mark.criterion(7)
def test_ase_is_bias_squared_plus_variance_on_random_matrices():
    rs = np.random.default_rng(404)
    g = np.array([-1.0, 0.0, 1.0])
    for _ in range(200):
        T = int(rs.integers(1, 150))
        mat = _matrix(rs.normal(0.3, rs.uniform(0.001, 0.5), (T, 3)), g)
        for e in g:
            b, v = bias_variance(mat, eps=e)
            assert ase(mat, eps=e) == pytest.approx(b * b + v, rel=1e-12)


def test_ase_and_bias_examples():
    g = np.array([0.0])
    t = float(true_density(0.0))
    assert ase(_matrix([[t]] * 4, g)) == 0.0
    assert ase(_matrix([[t + 0.3]], g)) == pytest.approx(0.09)
    b, v = bias_variance(_matrix([[0.5]] * 6, g))
    assert b == pytest.approx(0.5 - t) and v == 0.0
    with pytest.raises(EpsNotOnGrid):
        ase(_matrix([[t]], g), eps=0.5)


def test_confidence_band():
    col = np.arange(1, 101, dtype=float)[::-1]
    mat = _matrix(col[:, None], [0.0])
    assert confidence_band(mat, 0.05)[0] == 5.0
    rs = np.random.default_rng(1)
    mat = _matrix(rs.normal(size=(37, 9)), np.arange(9.0))
    lo, hi = confidence_band(mat, 0.05), confidence_band(mat, 0.95)
    assert np.all(lo <= hi)
    r = min(max(int(math.floor(0.05 * 37 + 0.5)), 1), 37)
    for c in range(9):
        assert lo[c] == sorted(mat.values[:, c])[r - 1]
    one = _matrix([[1.0, 2.0]], [0.0, 1.0])
    np.testing.assert_array_equal(confidence_band(one, 0.05), [1.0, 2.0])


def test_average_estimate():
    rs = np.random.default_rng(2)
    vals = rs.normal(size=(8, 5))
    mat = _matrix(vals, np.arange(5.0))
    np.testing.assert_allclose(average_estimate(_matrix(3 * vals, np.arange(5.0))),
                               3 * average_estimate(mat), rtol=1e-14)
    loop = [sum(vals[k, c] for k in range(8)) / 8 for c in range(5)]
    np.testing.assert_allclose(average_estimate(mat), loop, rtol=1e-14)


def test_delta_moment_examples():
    e = np.random.default_rng(3).normal(size=50)
    assert delta_moments(e, e, 0.0, 0.5) == (0.0, 0.0)
    assert delta_moments(e + 10, e, 0.0, 0.5) == (0.0, 0.0)
    assert delta_moments([], [], 0.0, 0.5) == (0.0, 0.0)
    m, v = delta_moments([0.1, 0.2, 5.0], [0.0, 0.0, 0.0], 0.0, 0.5)
    assert m == pytest.approx(0.1) and v == pytest.approx(np.var([0.1, 0.2, 0.0]))


def test_residual_delta_stats_pools_replications():
    cfg = SimConfig(**SMALL)
    m, v = residual_delta_stats(cfg, 0.0, 0.4, 0.5)
    pool_h, pool_e = [], []
    for k in range(cfg.T):
        sim = generate_sample(cfg, k)
        res = residuals(sim.sample, cfg.k0, 0.4)
        pool_h.append(res.eps_hat[res.valid_mask])
        pool_e.append(sim.true_eps[res.valid_mask])
    d = [(h - t) * (abs(h) <= 0.5) for h, t in zip(np.concatenate(pool_h), np.concatenate(pool_e))]
    assert m == pytest.approx(np.mean(d), rel=1e-12)
    assert v == pytest.approx(np.var(d), rel=1e-12)


def test_config_validation_names_fields():
    with pytest.raises(ConfigError) as err:
        SimConfig(eps_step=0.0)
    assert err.value.field == "eps-step"
    for kwargs, field in ((dict(n=1), "n"), (dict(eps_step=0.3), "eps-step"),
                          (dict(kernel1="gauss"), "kernel1"), (dict(eps_points=(0.01,)), "eps-points"),
                          (dict(band_levels=(0.0,)), "band-levels")):
        with pytest.raises(ConfigError) as err:
            SimConfig(**kwargs)
        assert err.value.field == field


def test_defaults_follow_the_study_protocol():
    cfg = SimConfig()
    assert (cfg.n, cfg.T, cfg.d, cfg.riemann_p, cfg.eps_half_width) == (200, 100, 1, 100, 5.0)
    assert cfg.eps_grid.count == 201
    assert cfg.global_b1 == GridSpec(0.11, 0.01, 100)
    assert cfg.pointwise_b1.value(cfg.pointwise_b1.count - 1) == pytest.approx(3.0)
    assert ModelSpec()(np.array([2.0]))[0] == 17.0
    assert ModelSpec("custom", (0.0, 1.0))(np.array([[1.0, 2.0]]))[0] == 3.0
