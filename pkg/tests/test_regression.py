import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resdens.errors import AllWindowsEmpty, DimensionMismatch, EmptyWindow
from resdens.kernels import BIWEIGHT, EPANECHNIKOV, ProductKernel
from resdens.regression import (Sample, nw_estimate, nw_fit, nw_leave_one_out, read_sample_csv,
                                residuals)

import oracles


def _sample(seed, n, d=1):
    rs = np.random.default_rng(seed)
    xs = rs.uniform(-1, 1, (n, d))
    return Sample(xs, 3 * xs[:, 0] ** 2 + 2 * xs[:, 0] + 1 + rs.normal(size=n))


def test_constant_response_is_reproduced():
    s = _sample(0, 30)
    s = Sample(s.xs, np.full(30, 7.3))
    assert nw_estimate(s, EPANECHNIKOV, 0.5, 0.1) == pytest.approx(7.3, abs=1e-14)


def test_symmetric_pair_gives_midpoint():
    s = Sample(np.array([[-0.5], [0.5]]), np.array([0.0, 1.0]))
    assert nw_estimate(s, EPANECHNIKOV, 3.0, 0.0) == pytest.approx(0.5)


def test_empty_window_raises():
    with pytest.raises(EmptyWindow):
        nw_estimate(_sample(1, 20), EPANECHNIKOV, 0.1, 10.0)


def test_leave_one_out_pair_and_singleton():
    s = Sample(np.array([[0.0], [0.2]]), np.array([1.0, 4.0]))
    assert nw_leave_one_out(s, EPANECHNIKOV, 1.0, 0) == pytest.approx(4.0)
    with pytest.raises(EmptyWindow):
        nw_leave_one_out(Sample(np.array([[0.0]]), np.array([1.0])), EPANECHNIKOV, 1.0, 0)


@given(st.integers(0, 10**6), st.integers(3, 25), st.floats(0.1, 2.0))
def test_leave_one_out_equals_refit_after_deletion(seed, n, b0):
    s = _sample(seed, n)
    i = seed % n
    xs, ys = list(s.xs[:, 0]), list(s.ys)
    ref = oracles.nw(xs, ys, b0, xs[i], skip=i)
    if ref is None:
        with pytest.raises(EmptyWindow):
            nw_leave_one_out(s, EPANECHNIKOV, b0, i)
    else:
        assert nw_leave_one_out(s, EPANECHNIKOV, b0, i) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_constant_response_gives_zero_residuals():
    s = _sample(3, 40)
    res = residuals(Sample(s.xs, np.full(40, -2.0)), EPANECHNIKOV, 3.0)
    assert np.all(res.valid_mask)
    np.testing.assert_allclose(res.eps_hat, 0.0, atol=1e-14)


@given(st.integers(0, 10**6), st.floats(0.05, 1.0), st.sampled_from([EPANECHNIKOV, BIWEIGHT]))
def test_residuals_match_per_index_oracle(seed, b0, k):
    s = _sample(seed, 20)
    ref_k = oracles.epa if k is EPANECHNIKOV else oracles.biweight
    ref = oracles.loo_residuals(list(s.xs[:, 0]), list(s.ys), b0, ref_k)
    try:
        res = residuals(s, k, b0)
    except AllWindowsEmpty:
        assert all(r is None for r in ref)
        return
    for i, r in enumerate(ref):
        assert res.valid_mask[i] == (r is not None)
        if r is not None:
            assert res.eps_hat[i] == pytest.approx(r, rel=1e-11, abs=1e-11)


def test_isolated_point_is_flagged_per_index():
    xs = np.array([[-0.9], [-0.85], [-0.8], [0.9]])
    res = residuals(Sample(xs, np.array([1.0, 2.0, 3.0, 4.0])), EPANECHNIKOV, 0.2)
    assert res.valid_mask.tolist() == [True, True, True, False]
    assert np.isnan(res.eps_hat[3])
    assert res.n_valid == 3


def test_all_windows_empty():
    xs = np.array([[-0.9], [0.0], [0.9]])
    with pytest.raises(AllWindowsEmpty):
        residuals(Sample(xs, np.zeros(3)), EPANECHNIKOV, 0.1)


def test_multivariate_residuals_match_oracle():
    s = _sample(7, 25, d=2)
    res = residuals(s, ProductKernel(EPANECHNIKOV, 2), 0.8)
    for i in range(s.n):
        num = den = 0.0
        for j in range(s.n):
            if j == i:
                continue
            w = oracles.product(oracles.epa, (s.xs[j] - s.xs[i]) / 0.8)
            num += w * s.ys[j]
            den += w
        if den == 0:
            assert not res.valid_mask[i]
        else:
            assert res.eps_hat[i] == pytest.approx(s.ys[i] - num / den, rel=1e-11)


def test_fit_validity_flags_and_dimension_checks():
    s = _sample(2, 50)
    vals, valid = nw_fit(s, EPANECHNIKOV, 0.3, np.array([[-0.5], [5.0]]))
    assert valid.tolist() == [True, False]
    with pytest.raises(DimensionMismatch):
        nw_fit(s, ProductKernel(EPANECHNIKOV, 2), 0.3, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        Sample(np.zeros((3, 1)), np.zeros(4))


@given(st.integers(0, 10**6))
def test_permutation_invariance(seed):
    s = _sample(seed, 30)
    perm = np.random.default_rng(seed + 1).permutation(30)
    a = residuals(s, EPANECHNIKOV, 0.4)
    b = residuals(s.permuted(perm), EPANECHNIKOV, 0.4)
    np.testing.assert_allclose(a.eps_hat[perm], b.eps_hat, rtol=1e-12, atol=1e-12)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,y,eps\n0.1,2.0,0.5\n-0.3,1.0,-0.2\n")
    xs, ys, extra = read_sample_csv(path)
    assert xs.tolist() == [[0.1], [-0.3]]
    assert ys.tolist() == [2.0, 1.0]
    assert extra["eps"].tolist() == [0.5, -0.2]
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_sample_csv(bad)
