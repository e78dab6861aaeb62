"""Acceptance suite: one test (or group of tests) per numbered criterion.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion. Criteria 3, 4 and 8 share the per-seed studies
through an in-module cache, so each seed is simulated once.
"""

import json
import math
import os
import subprocess
import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from resdens.bandwidth import plugin_b1
from resdens.cli import resolve_config
from resdens.density import Bandwidths
from resdens.diagnostics import ks_decision, quantile_ci
from resdens.kernels import EPANECHNIKOV
from resdens.montecarlo import replicate, true_density
from resdens.study import global_study, normality_study, pointwise_study

import oracles

ROOT = Path(__file__).resolve().parents[1]
REDUCED = ROOT / "configs" / "reduced.json"
SEEDS = [20100613 + s for s in range(10)]
THREADS = int(os.environ.get("RESDENS_THREADS", "1"))

pytestmark = pytest.mark.slow


@lru_cache(maxsize=None)
def _cfg(seed):
    return resolve_config(REDUCED, {"base_seed": seed, "threads": THREADS})


@lru_cache(maxsize=None)
def _global(seed):
    return global_study(_cfg(seed), tags=("f1_hat", "f2_hat"))


@lru_cache(maxsize=None)
def _pointwise(seed):
    return pointwise_study(_cfg(seed))


@lru_cache(maxsize=None)
def _normality(seed):
    return normality_study(_cfg(seed), _pointwise(seed))


def _count(flags):
    return sum(bool(f) for f in flags)


# -- 1: quantile intervals ----------------------------------------------------------

@pytest.mark.criterion(1)
def test_quantile_intervals(record_property):
    cases = [((-0.9719, 0.05, 100), (-1.143, -0.800)), ((0.6654, 0.95, 100), (0.5318, 0.7990))]
    worst = 0.0
    for args, want in cases:
        got = quantile_ci(*args)
        worst = max(worst, abs(got[0] - want[0]), abs(got[1] - want[1]))
    record_property("detail", f"max endpoint error {worst:.2e} (tolerance 1e-3)")
    assert worst <= 1e-3


# -- 2: KS decisions -----------------------------------------------------------------

@pytest.mark.criterion(2)
def test_ks_decisions_on_tabulated_statistics(record_property):
    values = [3.159609, 3.354464, 2.780215, 2.676096, 2.465744, 1.890398]
    decisions = [ks_decision(v, 0.05) for v in values]
    record_property("detail", f"{decisions.count('reject')}/6 rejected at alpha 0.05")
    assert decisions == ["reject"] * 6


# -- 3: global study on the reduced grid ----------------------------------------------

@pytest.mark.criterion(3)
def test_global_study_across_seeds(record_property):
    rows = []
    for seed in SEEDS:
        g = _global(seed)
        f1, f2 = g["f1_hat"], g["f2_hat"]
        rows.append((f1.aise, f2.aise, f1.bandwidths.b0, f2.bandwidths.b1))
    a1 = _count(0.0015 <= r[0] <= 0.0065 for r in rows)
    a2 = _count(0.003 <= r[1] <= 0.013 for r in rows)
    ratio = _count(r[1] / r[0] >= 1.3 for r in rows)
    b01 = _count(0.1 - 1e-12 <= r[2] <= 0.35 + 1e-12 for r in rows)
    b12 = _count(0.1 - 1e-12 <= r[3] <= 0.45 + 1e-12 for r in rows)
    median_ratio = float(np.median([r[1] / r[0] for r in rows]))
    record_property("detail", f"AISE f1 in band {a1}/10, f2 in band {a2}/10, ratio>=1.3 {ratio}/10 "
                              f"(median {median_ratio:.2f}), b0 of f1 in band {b01}/10, "
                              f"b1 of f2 in band {b12}/10")
    assert a1 >= 8 and a2 >= 8
    assert ratio >= 9
    assert b01 >= 8 and b12 >= 8


# -- 4: pointwise study ---------------------------------------------------------------

@pytest.mark.criterion(4)
def test_pointwise_direction_across_seeds(record_property):
    wins = {}
    for e in (-1.0, 0.0, 1.0):
        wins[e] = _count(_pointwise(s)[("f1_hat", e)].ase < _pointwise(s)[("f2_hat", e)].ase
                         for s in SEEDS)
    record_property("detail", "ASE(f1) < ASE(f2): " +
                    ", ".join(f"eps={e:g} {w}/10" for e, w in wins.items()))
    assert all(w >= 8 for w in wins.values())


# -- 5: convergence rate --------------------------------------------------------------

@pytest.mark.criterion(5)
def test_rmse_slope(record_property):
    ns = [100, 200, 400, 800, 1600]
    rmse = []
    for n in ns:
        cfg = resolve_config(None, {"n": n, "T": 200, "threads": THREADS})
        b1 = n ** (-1 / 5)
        b0 = n ** (-8 / (5 * 6))
        mat = replicate(cfg, "f1_hat", Bandwidths(b0, b1), [0.0])
        rmse.append(math.sqrt(np.mean((mat.values[:, 0] - float(true_density(0.0))) ** 2)))
    slope = float(np.polyfit(np.log(ns), np.log(rmse), 1)[0])
    record_property("detail", f"slope {slope:.3f} (target -0.40 +/- 0.15); RMSE " +
                    ", ".join(f"{r:.4f}" for r in rmse))
    assert abs(slope + 0.40) <= 0.15


# -- 6: plug-in bandwidth -------------------------------------------------------------

@pytest.mark.criterion(6)
def test_plugin_bandwidth(record_property):
    # integral of the squared second derivative of the standard normal density
    r = oracles.simpson(lambda u: ((u * u - 1) * oracles.std_normal_pdf(u)) ** 2, -12, 12, 40000)
    b = plugin_b1(r, EPANECHNIKOV, 1.0, 200)
    record_property("detail", f"plugin b1 {b:.5f} with curvature integral {r:.6f}")
    assert abs(b - 0.813) <= 0.005


# -- 7: property suites ---------------------------------------------------------------

PROPERTY_TESTS = [
    "tests/test_kernels.py",
    "tests/test_density.py",
    "tests/test_backend.py",
    "tests/test_montecarlo.py::test_ase_is_bias_squared_plus_variance_on_random_matrices",
    "tests/test_study.py::test_pipeline_is_byte_deterministic_across_runs_and_threads",
    "tests/test_study.py::test_cached_surface_matches_generic_grid_search",
]


@pytest.mark.criterion(7)
def test_property_suites(record_property):
    out = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                          *PROPERTY_TESTS], cwd=ROOT, capture_output=True, text=True)
    tail = [ln for ln in out.stdout.splitlines() if " passed" in ln or " failed" in ln]
    record_property("detail", "property suites: " + (tail[-1].strip() if tail else "no summary"))
    assert out.returncode == 0, out.stdout[-3000:]


# -- 8: normality study ---------------------------------------------------------------

@pytest.mark.criterion(8)
def test_normality_across_seeds(record_property):
    lil = {tag: _count(_normality(s)[(tag, 0.0)].lilliefors.p_value > 0.05 for s in SEEDS)
           for tag in ("f1_hat", "f2_hat")}
    ks = {}
    for tag in ("f1_tilde", "f2_tilde"):
        for e in (-1.0, 0.0, 1.0):
            ks[(tag, e)] = _count(_normality(s)[(tag, e)].ks_decision == "reject" for s in SEEDS)
    record_property("detail", "Lilliefors accepts at eps=0: " +
                    ", ".join(f"{t} {c}/10" for t, c in lil.items()) +
                    "; KS vs N(0,1) rejects on oracle series: " +
                    ", ".join(f"{t}({e:g}) {c}/10" for (t, e), c in ks.items()))
    assert all(c >= 8 for c in lil.values())
    assert all(c >= 8 for c in ks.values())


# -- Monte Carlo examples at the study protocol (reduced grid) ------------------------

def test_pointwise_examples_across_seeds(record_property):
    """ASE of the residual estimator at -1 and the sign of its bias at 0."""
    ase_m1 = [_pointwise(s)[("f1_hat", -1.0)].ase for s in SEEDS]
    bias0 = [_pointwise(s)[("f1_hat", 0.0)].bias for s in SEEDS]
    in_band = _count(5e-5 <= a <= 8e-4 for a in ase_m1)
    negative = _count(b < 0 for b in bias0)
    print(json.dumps({"ase_f1_minus1_in_band": in_band, "bias_f1_0_negative": negative}))
    assert in_band >= 8 and negative >= 8


def _delta_bars(seed):
    from resdens.study import delta_study
    d = delta_study(_cfg(seed), _pointwise(seed))
    return d[-1.0]["delta_bar"], d[1.0]["delta_bar"]


def test_residual_error_signs_across_seeds():
    """Residuals undershoot the errors near -1 and overshoot them near 1."""
    hits = _count(lo < 0 < hi for lo, hi in map(_delta_bars, SEEDS))
    print(json.dumps({"delta_sign_hits": hits}))
    assert hits >= 8


@pytest.mark.xfail(strict=True, reason="pooled residual error near -1 is about -0.015, "
                                       "smaller in size than the +0.03 near 1")
def test_residual_error_direction_across_seeds():
    """Pooled residual error near -1 exceeds the one near 1 in absolute value."""
    hits = _count(abs(lo) > abs(hi) for lo, hi in map(_delta_bars, SEEDS))
    print(json.dumps({"delta_direction_hits": hits}))
    assert hits >= 8
