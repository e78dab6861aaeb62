"""Kernel estimators of the regression error density.

Two feasible estimators are provided together with their infeasible
counterparts that use the true errors or the true regression function:

* ``f1_hat`` / ``f1_tilde``: a univariate kernel density estimate built on
  leave-one-out residuals (resp. true errors), restricted to a trimming box.
* ``f2_hat`` / ``f2_tilde``: the integral of a joint kernel density estimate
  of ``(X, Y)`` along the curve ``y = e + m(x)``, computed with a Riemann sum.

Every ``*_curve`` variant evaluates the same estimator on a whole grid of
error values and dispatches to the compiled core when ``d = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._backend import core
from .errors import DegenerateTrim, DimensionMismatch, EmptyWindow
from .grids import GridSpec, IntegrationGrid, as_integration_grid
from .kernels import Kernel, ProductKernel
from .regression import ResidualSet, Sample, as_product, nw_estimate, nw_fit

ESTIMATOR_TAGS = ("f1_hat", "f1_tilde", "f2_hat", "f2_tilde", "conditional")


@dataclass(frozen=True)
class Bandwidths:
    b0: float
    b1: float
    h: float | None = None

    def __post_init__(self):
        if self.h is None:
            object.__setattr__(self, "h", self.b1)
        for name in ("b0", "b1", "h"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"bandwidth {name} must be positive and finite, got {v}")

    def to_dict(self) -> dict:
        return {"b0": self.b0, "b1": self.b1, "h": self.h}


@dataclass(frozen=True)
class TrimSet:
    """Axis-aligned box ``[lower, upper]`` of retained covariates."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise DimensionMismatch("lower and upper must have the same length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("TrimSet requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, lo: float, hi: float, d: int = 1) -> "TrimSet":
        return cls((lo,) * d, (hi,) * d)

    def contains(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        if xs.shape[1] != len(self.lower):
            raise DimensionMismatch(f"trim set has dim {len(self.lower)}, data has {xs.shape[1]}")
        return np.all((xs >= np.array(self.lower)) & (xs <= np.array(self.upper)), axis=1)


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    eps_grid: np.ndarray
    values: np.ndarray
    estimator_tag: str
    bandwidths: Bandwidths


def _eps_array(eps):
    if isinstance(eps, GridSpec):
        return eps.values()
    return np.atleast_1d(np.asarray(eps, dtype=float))


# -- building blocks --------------------------------------------------------

def kde_values(centers, kernel: Kernel, bw: float, eps) -> np.ndarray:
    """``(1/(N bw)) sum_c K((c - e)/bw)`` for a grid or array of ``e``."""
    centers = np.ascontiguousarray(centers, dtype=float)
    if isinstance(eps, GridSpec):
        raw = core.kde_grid(centers, float(bw), kernel.kid, eps.start, eps.step, eps.count)
    else:
        raw = core.kde_points(centers, float(bw), kernel.kid, np.ascontiguousarray(_eps_array(eps)))
    return raw / (centers.shape[0] * bw)


def integral_values(sample: Sample, m_nodes, grid: IntegrationGrid, k1, k2: Kernel,
                    b1: float, h: float, eps) -> np.ndarray:
    """Riemann sum ``sum_j w_j phi_hat(x_j, e + m_j)`` for each ``e``."""
    pk1 = as_product(k1, sample.d)
    m_nodes = np.ascontiguousarray(m_nodes, dtype=float)
    scale = 1.0 / (sample.n * b1**sample.d * h)
    if sample.d == 1:
        _, xs, ys = sample._sorted
        nodes = np.ascontiguousarray(grid.nodes[:, 0])
        w = np.ascontiguousarray(grid.weights)
        if isinstance(eps, GridSpec):
            raw = core.integral_grid(xs, ys, nodes, w, m_nodes, float(b1), float(h),
                                     pk1.base.kid, k2.kid, eps.start, eps.step, eps.count)
        else:
            raw = core.integral_points(xs, ys, nodes, w, m_nodes, float(b1), float(h),
                                       pk1.base.kid, k2.kid,
                                       np.ascontiguousarray(_eps_array(eps)))
        return raw * scale
    e = _eps_array(eps)
    wx = pk1((sample.xs[None, :, :] - grid.nodes[:, None, :]) / b1) * grid.weights[:, None]
    out = np.zeros(e.shape[0])
    for j in np.flatnonzero(wx.any(axis=1)):
        c = sample.ys - m_nodes[j]
        out += wx[j] @ k2((c[:, None] - e[None, :]) / h)
    return out * scale


def _retained(xs, mask, trim: TrimSet | None):
    keep = np.asarray(mask, dtype=bool).copy()
    if trim is not None:
        keep &= trim.contains(xs)
    if not keep.any():
        raise DegenerateTrim("no valid observation inside the trimming set")
    return keep


# -- marginal and joint densities -------------------------------------------

def marginal_density(sample: Sample, k0, b0: float, x) -> float:
    """Kernel estimate of the covariate density at ``x``."""
    pk = as_product(k0, sample.d)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(pk((sample.xs - x) / b0).sum() / (sample.n * b0**sample.d))


def joint_density(sample: Sample, k1, k2: Kernel, b1: float, h: float, x, y: float) -> float:
    pk = as_product(k1, sample.d)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = pk((sample.xs - x) / b1) * k2((sample.ys - y) / h)
    return float(w.sum() / (sample.n * b1**sample.d * h))


# -- residual-based estimator -----------------------------------------------

def f1_hat(sample: Sample, resid: ResidualSet, k1: Kernel, b1: float,
           trim: TrimSet | None, eps: float) -> float:
    """Kernel density estimate at ``eps`` from the retained residuals."""
    return float(f1_hat_curve(sample, resid, k1, b1, trim, [eps]).values[0])


def f1_hat_curve(sample: Sample, resid: ResidualSet, k1: Kernel, b1: float,
                 trim: TrimSet | None, eps) -> CurveEstimate:
    keep = _retained(sample.xs, resid.valid_mask, trim)
    vals = kde_values(resid.eps_hat[keep], k1, b1, eps)
    return CurveEstimate(_eps_array(eps), vals, "f1_hat", Bandwidths(resid.b0, b1))


def f1_tilde(true_eps, xs, k1: Kernel, b1: float, trim: TrimSet | None, eps: float) -> float:
    return float(f1_tilde_curve(true_eps, xs, k1, b1, trim, [eps]).values[0])


def f1_tilde_curve(true_eps, xs, k1: Kernel, b1: float, trim: TrimSet | None,
                   eps) -> CurveEstimate:
    true_eps = np.asarray(true_eps, dtype=float)
    keep = _retained(xs, np.ones(true_eps.shape[0], dtype=bool), trim)
    vals = kde_values(true_eps[keep], k1, b1, eps)
    # b0 plays no role for the oracle; record b1 so the tuple stays valid.
    return CurveEstimate(_eps_array(eps), vals, "f1_tilde", Bandwidths(b1, b1))


# -- integral estimator -----------------------------------------------------

def nw_on_grid(sample: Sample, k0, b0: float, grid: IntegrationGrid) -> np.ndarray:
    m, valid = nw_fit(sample, k0, b0, grid.nodes)
    if not valid.all():
        bad = grid.nodes[np.flatnonzero(~valid)[0]]
        raise EmptyWindow(f"regression window empty at integration node {bad.tolist()}")
    return m


def f2_hat(sample: Sample, k0, k1, k2: Kernel, bw: Bandwidths, integration_grid,
           eps: float) -> float:
    return float(f2_hat_curve(sample, k0, k1, k2, bw, integration_grid, [eps]).values[0])


def f2_hat_curve(sample: Sample, k0, k1, k2: Kernel, bw: Bandwidths, integration_grid,
                 eps) -> CurveEstimate:
    grid = as_integration_grid(integration_grid, sample.d)
    m = nw_on_grid(sample, k0, bw.b0, grid)
    vals = integral_values(sample, m, grid, k1, k2, bw.b1, bw.h, eps)
    return CurveEstimate(_eps_array(eps), vals, "f2_hat", bw)


def f2_tilde(sample: Sample, m_true: Callable, k1, k2: Kernel, b1: float, h: float,
             integration_grid, eps: float) -> float:
    return float(f2_tilde_curve(sample, m_true, k1, k2, b1, h, integration_grid, [eps]).values[0])


def f2_tilde_curve(sample: Sample, m_true: Callable, k1, k2: Kernel, b1: float, h: float,
                   integration_grid, eps) -> CurveEstimate:
    grid = as_integration_grid(integration_grid, sample.d)
    m = true_regression_on_grid(m_true, grid)
    vals = integral_values(sample, m, grid, k1, k2, b1, h, eps)
    return CurveEstimate(_eps_array(eps), vals, "f2_tilde", Bandwidths(b1, b1, h))


def true_regression_on_grid(m_true: Callable, grid: IntegrationGrid) -> np.ndarray:
    nodes = grid.nodes
    vals = m_true(nodes if grid.d > 1 else nodes[:, 0])
    return np.asarray(vals, dtype=float).reshape(nodes.shape[0])


# -- naive conditional estimator --------------------------------------------

def conditional_density(sample: Sample, k0, k1: Kernel, h0: float, h1: float, b0: float,
                        x, eps: float) -> float:
    """Ratio of joint to marginal kernel estimates at ``(x, m_hat(x) + eps)``."""
    pk0 = as_product(k0, sample.d)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = nw_estimate(sample, pk0, b0, x)
    wx = pk0((sample.xs - x) / h0)
    den = wx.sum()
    if den == 0.0:
        raise EmptyWindow(f"no observation within h0={h0} of x={x.tolist()}")
    num = (wx * k1((sample.ys - m - eps) / h1)).sum()
    # The common 1/(n h0^d) factor cancels in the ratio.
    return float(num / (h1 * den))
