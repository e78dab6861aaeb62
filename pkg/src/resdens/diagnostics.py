"""Normality diagnostics for standardized density estimates.

Standard normal functions, Kolmogorov-Smirnov and Lilliefors tests,
order-statistic quantiles with asymptotic confidence intervals, and Q-Q
plotting data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

from . import rng as _rng
from .errors import DegenerateData, DomainError, NonpositiveDensity, UnknownLevel
from .kernels import Kernel, kernel_functional

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Rational approximation of the normal quantile (P. J. Acklam); relative
# error 1.15e-9 before the Halley refinement step.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_pdf(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT2PI


def norm_cdf(u):
    return 0.5 * special.erfc(-np.asarray(u, dtype=float) / _SQRT2)


def _ppf_lower(p):
    # p in (0, 0.5]; returns x <= 0
    x = np.empty_like(p)
    tail = p < _P_LOW
    q = np.sqrt(-2.0 * np.log(p[tail]))
    x[tail] = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
               / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    mid = ~tail
    q = p[mid] - 0.5
    r = q * q
    x[mid] = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
              / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    # One Halley step against the erfc-based cdf.
    e = 0.5 * special.erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def norm_ppf(p):
    """Standard normal quantile, vectorised; ``p`` must lie in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("normal quantile requires probabilities strictly inside (0, 1)")
    flat = p.reshape(-1)
    out = np.empty_like(flat)
    upper = flat > 0.5
    out[~upper] = _ppf_lower(flat[~upper])
    out[upper] = -_ppf_lower(1.0 - flat[upper])
    return out.reshape(p.shape)


def std_normal(which: str, u: float) -> float:
    """Scalar standard normal ``pdf``, ``cdf`` or ``quantile``."""
    if which == "pdf":
        return math.exp(-0.5 * u * u) / _SQRT2PI
    if which == "cdf":
        return 0.5 * math.erfc(-u / _SQRT2)
    if which == "quantile":
        if not 0.0 < u < 1.0:
            raise DomainError(f"quantile undefined at p={u}")
        return float(norm_ppf(np.array([u]))[0])
    raise ValueError(f"which must be 'pdf', 'cdf' or 'quantile', got {which!r}")


def standard_normal_draws(gen: np.random.Generator, size) -> np.ndarray:
    """Normal variates by inverse-CDF transform of open-interval uniforms."""
    return norm_ppf(_rng.uniform_open(gen, size))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    scaled_statistic: float
    p_value: float
    method: str

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "scaled_statistic": self.scaled_statistic,
                "p_value": self.p_value, "method": self.method}


@dataclass(frozen=True, eq=False)
class ZSeries:
    values: np.ndarray
    eps: float
    estimator_tag: str
    b1_used: float


def _ks_sorted(xs_sorted: np.ndarray, cdf_vals: np.ndarray) -> np.ndarray:
    # works on the last axis; rows are independent samples
    T = xs_sorted.shape[-1]
    i = np.arange(1, T + 1)
    upper = np.abs(i / T - cdf_vals)
    lower = np.abs((i - 1) / T - cdf_vals)
    return np.maximum(upper.max(axis=-1), lower.max(axis=-1))


def ks_statistic(data, null_cdf) -> float:
    """Sup distance between the empirical cdf of ``data`` and ``null_cdf``."""
    xs = np.sort(np.asarray(data, dtype=float).reshape(-1))
    if xs.size == 0:
        raise ValueError("ks_statistic needs at least one observation")
    try:
        F = np.asarray(null_cdf(xs), dtype=float)
        if F.shape != xs.shape:
            raise TypeError
    except TypeError:
        F = np.array([null_cdf(v) for v in xs], dtype=float)
    return float(_ks_sorted(xs, F))


def ks_test_standard(data) -> TestResult:
    """KS test against the fully specified N(0, 1); exact finite-sample p-value."""
    data = np.asarray(data, dtype=float)
    D = ks_statistic(data, norm_cdf)
    T = data.size
    return TestResult(D, math.sqrt(T) * D, float(stats.kstwo.sf(D, T)), "ks_known_null")


@lru_cache(maxsize=32)
def _lilliefors_null(T: int, mc_reps: int, seed: int) -> np.ndarray:
    gen = _rng.stream(seed, _rng.LILLIEFORS, T)
    z = standard_normal_draws(gen, (mc_reps, T))
    z = (z - z.mean(axis=1, keepdims=True)) / z.std(axis=1, ddof=1, keepdims=True)
    z.sort(axis=1)
    null = _ks_sorted(z, norm_cdf(z))
    null.setflags(write=False)
    return null


def lilliefors(data, mc_reps: int = 2000, seed: int = 0) -> TestResult:
    """KS normality test with estimated mean and sd; Monte Carlo p-value."""
    data = np.asarray(data, dtype=float).reshape(-1)
    T = data.size
    if T < 4:
        raise ValueError("lilliefors needs at least 4 observations")
    m = data.mean()
    s = data.std(ddof=1)
    if not s > 0.0:
        raise DegenerateData("sample standard deviation is zero")
    D = ks_statistic((data - m) / s, norm_cdf)
    null = _lilliefors_null(T, int(mc_reps), int(seed))
    p = float(np.count_nonzero(null >= D) / null.size)
    return TestResult(D, math.sqrt(T) * D, p, "lilliefors_mc")


def standardize_z(estimate, truth: float, n: int, b1: float, kernel: Kernel):
    """``sqrt(n b1) (estimate - truth) / sqrt(truth * int K^2)``."""
    if not truth > 0:
        raise NonpositiveDensity(f"true density must be positive, got {truth}")
    scale = math.sqrt(n * b1) / math.sqrt(truth * kernel_functional(kernel, "l2_norm"))
    z = (np.asarray(estimate, dtype=float) - truth) * scale
    return float(z) if z.ndim == 0 else z


def order_index(alpha: float, T: int) -> int:
    """1-based order statistic index ``round(alpha*T)`` clamped to ``[1, T]``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return min(max(int(math.floor(alpha * T + 0.5)), 1), T)


def empirical_quantile(data, alpha: float) -> float:
    xs = np.sort(np.asarray(data, dtype=float).reshape(-1))
    return float(xs[order_index(alpha, xs.size) - 1])


def quantile_ci(q_hat: float, alpha: float, T: int, confidence: float = 0.95):
    """Asymptotic interval for the ``alpha`` quantile centred at ``q_hat``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    z = std_normal("quantile", (1.0 + confidence) / 2.0)
    half = z * math.sqrt(alpha * (1.0 - alpha)) / (math.sqrt(T) * std_normal("pdf", q_hat))
    return (q_hat - half, q_hat + half)


# Asymptotic critical values of sqrt(T) * D for a fully specified null.
KS_CRITICAL = {0.20: 1.07, 0.15: 1.14, 0.10: 1.22, 0.05: 1.36, 0.01: 1.63}


def ks_decision(scaled_statistic: float, alpha: float) -> str:
    for level, crit in KS_CRITICAL.items():
        if math.isclose(alpha, level):
            return "reject" if scaled_statistic > crit else "accept"
    raise UnknownLevel(f"no critical value tabulated for alpha={alpha}; "
                       f"known levels: {sorted(KS_CRITICAL)}")


def qq_points(data) -> np.ndarray:
    """``(T, 2)`` array of (theoretical, empirical) normal Q-Q coordinates."""
    xs = np.sort(np.asarray(data, dtype=float).reshape(-1))
    T = xs.size
    theo = norm_ppf((np.arange(1, T + 1) - 0.5) / T)
    return np.column_stack([theo, xs])
