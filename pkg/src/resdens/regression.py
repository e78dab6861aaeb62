"""Nadaraya-Watson regression, its leave-one-out form and residuals."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ._backend import core
from .errors import AllWindowsEmpty, DimensionMismatch, EmptyWindow
from .kernels import Kernel, ProductKernel


@dataclass(frozen=True, eq=False)
class Sample:
    """``n`` observations ``(X_i, Y_i)`` with ``X_i`` in ``R^d``.

    ``xs`` is stored as an ``(n, d)`` float array, ``ys`` as ``(n,)``.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        if xs.ndim != 2 or xs.shape[0] != ys.shape[0]:
            raise DimensionMismatch(
                f"xs has {xs.shape[0]} rows but ys has {ys.shape[0]} entries"
            )
        if ys.shape[0] < 1:
            raise ValueError("a sample needs at least one observation")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.ys.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    @cached_property
    def _sorted(self):
        # d = 1 only: covariates sorted ascending for the windowed core loops.
        order = np.argsort(self.xs[:, 0], kind="stable")
        xs = np.ascontiguousarray(self.xs[order, 0])
        ys = np.ascontiguousarray(self.ys[order])
        return order, xs, ys

    def subset(self, keep) -> "Sample":
        keep = np.asarray(keep)
        return Sample(self.xs[keep], self.ys[keep])

    def permuted(self, perm) -> "Sample":
        return self.subset(np.asarray(perm, dtype=int))

    @classmethod
    def from_csv(cls, path) -> "Sample":
        """Read a CSV with header ``x1..xd,y`` (extra columns are ignored)."""
        xs, ys, _ = read_sample_csv(path)
        return cls(xs, ys)


def read_sample_csv(path):
    """Return ``(xs, ys, extra)`` where ``extra`` maps other columns to arrays."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    xcols = []
    d = 1
    while f"x{d}" in header:
        xcols.append(header.index(f"x{d}"))
        d += 1
    if not xcols or "y" not in header:
        raise ValueError(f"{path}: header must contain x1..xd and y, got {header}")
    data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    xs = data[:, xcols]
    ys = data[:, header.index("y")]
    used = set(xcols) | {header.index("y")}
    extra = {h: data[:, k] for k, h in enumerate(header) if k not in used}
    return xs, ys, extra


@dataclass(frozen=True, eq=False)
class ResidualSet:
    """Leave-one-out residuals; ``valid_mask[i]`` is False where the fit was undefined."""

    eps_hat: np.ndarray
    b0: float
    valid_mask: np.ndarray

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())


def as_product(k: Kernel | ProductKernel, d: int) -> ProductKernel:
    if isinstance(k, ProductKernel):
        if k.dim != d:
            raise DimensionMismatch(f"kernel dim {k.dim} != covariate dim {d}")
        return k
    return ProductKernel(k, d)


def _check_bw(name, value):
    if not (value > 0 and np.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value}")


def nw_fit(sample: Sample, k0, b0: float, points) -> tuple[np.ndarray, np.ndarray]:
    """Nadaraya-Watson fits at many points: ``(values, valid)``.

    ``values[k]`` is 0 where ``valid[k]`` is False (empty kernel window).
    """
    _check_bw("b0", b0)
    pk = as_product(k0, sample.d)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if sample.d == 1 else pts[None, :]
    if pts.shape[1] != sample.d:
        raise DimensionMismatch(f"points have dim {pts.shape[1]}, sample has {sample.d}")
    if sample.d == 1:
        _, xs, ys = sample._sorted
        return core.nw_at(xs, ys, float(b0), pk.base.kid, np.ascontiguousarray(pts[:, 0]))
    w = pk((sample.xs[None, :, :] - pts[:, None, :]) / b0)
    den = w.sum(axis=1)
    valid = den > 0.0
    m = np.zeros(pts.shape[0])
    m[valid] = (w @ sample.ys)[valid] / den[valid]
    return m, valid


def nw_estimate(sample: Sample, k0, b0: float, x) -> float:
    """Nadaraya-Watson estimate of the regression function at ``x``."""
    _check_bw("b0", b0)
    pk = as_product(k0, sample.d)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (sample.d,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({sample.d},)")
    w = pk((sample.xs - x) / b0)
    den = w.sum()
    if den == 0.0:
        raise EmptyWindow(f"no observation within bandwidth {b0} of x={x.tolist()}")
    return float(w @ sample.ys / den)


def nw_leave_one_out(sample: Sample, k0, b0: float, i: int) -> float:
    """Fit at ``X_i`` with observation ``i`` removed from both sums."""
    _check_bw("b0", b0)
    if not 0 <= i < sample.n:
        raise IndexError(f"index {i} out of range for n={sample.n}")
    pk = as_product(k0, sample.d)
    w = pk((sample.xs - sample.xs[i]) / b0)
    w[i] = 0.0
    den = w.sum()
    if den == 0.0:
        raise EmptyWindow(f"observation {i} has no neighbour within bandwidth {b0}")
    return float(w @ sample.ys / den)


def residuals(sample: Sample, k0, b0: float) -> ResidualSet:
    """Residuals ``Y_i - m_i`` from leave-one-out fits; never aborts per index."""
    _check_bw("b0", b0)
    pk = as_product(k0, sample.d)
    if sample.d == 1:
        order, xs, ys = sample._sorted
        m_sorted, v_sorted = core.nw_loo(xs, ys, float(b0), pk.base.kid)
        m = np.empty(sample.n)
        valid = np.empty(sample.n, dtype=bool)
        m[order] = m_sorted
        valid[order] = v_sorted
    else:
        w = pk((sample.xs[None, :, :] - sample.xs[:, None, :]) / b0)
        np.fill_diagonal(w, 0.0)
        den = w.sum(axis=1)
        valid = den > 0.0
        m = np.zeros(sample.n)
        m[valid] = (w @ sample.ys)[valid] / den[valid]
    if not valid.any():
        raise AllWindowsEmpty(f"every leave-one-out window is empty at b0={b0}")
    eps_hat = np.where(valid, sample.ys - m, np.nan)
    eps_hat.setflags(write=False)
    valid.setflags(write=False)
    return ResidualSet(eps_hat=eps_hat, b0=float(b0), valid_mask=valid)
