"""Risk expressions, optimal-rate bandwidths and grid search.

The rate functions return order expressions with unit constant: the
underlying results only fix bandwidths up to ``a_n ≍ b_n``. Separate
``minimize_*`` helpers numerically minimise the explicit risk expressions
for readers who want a concrete finite-``n`` value; the two are different
quantities and are labelled as such in every report.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import ESTIMATION_FAILURES, AllCellsFailed
from .grids import GridSpec
from .kernels import Kernel, kernel_functional

__all__ = [
    "RateInputs", "GridSpec", "GridSearchResult", "risk_Rn", "risk_RTn", "amse_f1",
    "amse_f2", "rate_b0_star", "rate_b1_star", "rate_h_star", "plugin_b1",
    "grid_search", "argmin_surface", "minimize_Rn_b0", "minimize_f1_total",
    "minimize_RTn_b0", "minimize_f2_total",
]


@dataclass(frozen=True)
class RateInputs:
    n: int
    d: int = 1
    b0: float | None = None
    b1: float | None = None
    h: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        for name in ("b0", "b1", "h"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")

    def need(self, *names):
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise ValueError(f"RateInputs is missing {', '.join(missing)}")
        return [getattr(self, k) for k in names]


def amse_f1(b1: float, n: int) -> float:
    return b1**4 + 1.0 / (n * b1)


def amse_f2(b1: float, h: float, n: int) -> float:
    return b1**4 + h**4 + 1.0 / (n * b1)


def risk_Rn(ri: RateInputs, include_amse: bool = False) -> float:
    """Remainder term of the residual-based estimator's pointwise error."""
    b0, b1 = ri.need("b0", "b1")
    n, d = ri.n, ri.d
    v = b0**4 + 1.0 / (n * b0**d)
    t1 = b0**4
    t2 = (1.0 / math.sqrt(n * b1**5) + math.sqrt(b0**d / b1**3)) ** 2 * v**2
    t3 = (1.0 / b1 + math.sqrt(b0**d / b1**7)) ** 2 * v**3
    out = t1 + t2 + t3
    if include_amse:
        out += amse_f1(b1, n)
    return out


def risk_RTn(ri: RateInputs, include_amse: bool = False) -> float:
    """Remainder term of the integral estimator's pointwise error."""
    b0, b1, h = ri.need("b0", "b1", "h")
    n, d = ri.n, ri.d
    v = b0**4 + 1.0 / (n * b0**d)
    big = max(b0**d, b1**d)
    t1 = b0**4
    t2 = big * (v / (n * b1**d * h**3) + 1.0 / (n * b0**d))
    t3 = big * (v**2 / (n * b1**d * h**5) + 1.0 / (n**2 * b0 ** (2 * d) * h**3))
    t4 = v**3 / h**2
    t5 = big * v**3 / h**7
    out = t1 + t2 + t3 + t4 + t5
    if include_amse:
        out += amse_f2(b1, h, n)
    return out


def _b0_branches(n, d, b):
    first = (1.0 / (n**2 * b**3)) ** (1.0 / (d + 4))
    second = (1.0 / (n**3 * b**7)) ** (1.0 / (2 * d + 4))
    return first, second


def rate_b0_star(ri: RateInputs) -> float:
    """Order of the first-step bandwidth minimising the remainder term.

    Uses ``ri.b1`` (residual-based estimator) or, when absent, ``ri.h``
    (integral estimator with ``b0 = b1``); both share the same form.
    """
    b = ri.b1 if ri.b1 is not None else ri.h
    if b is None:
        raise ValueError("rate_b0_star needs b1 (or h)")
    return max(_b0_branches(ri.n, ri.d, b))


def rate_b1_star(ri: RateInputs) -> float:
    if ri.d <= 2:
        return ri.n ** (-1.0 / 5.0)
    return ri.n ** (-3.0 / (2 * ri.d + 11))


rate_h_star = rate_b1_star


def plugin_b1(f_second_sq_integral: float, kernel: Kernel, p_trim: float, n: int) -> float:
    """AMISE-optimal second-step bandwidth for a known ``int (f'')^2``."""
    if not 0.0 < p_trim <= 1.0:
        raise ValueError(f"p_trim must lie in (0, 1], got {p_trim}")
    if not f_second_sq_integral > 0:
        raise ValueError("f_second_sq_integral must be positive")
    r = kernel_functional(kernel, "l2_norm")
    mu2 = kernel_functional(kernel, "second_moment")
    return ((r / p_trim) / (f_second_sq_integral * mu2**2)) ** 0.2 * n ** (-0.2)


# -- numeric minimisers of the explicit expressions --------------------------

def _argmin_log(fun, lo=1e-5, hi=10.0, coarse=400):
    # coarse log-grid scan followed by bounded Brent refinement
    grid = np.geomspace(lo, hi, coarse)
    vals = np.array([fun(b) for b in grid])
    k = int(np.argmin(vals))
    a = math.log(grid[max(k - 1, 0)])
    b = math.log(grid[min(k + 1, coarse - 1)])
    res = optimize.minimize_scalar(lambda t: fun(math.exp(t)), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-10})
    return math.exp(res.x)


def minimize_Rn_b0(n: int, d: int, b1: float) -> float:
    return _argmin_log(lambda b0: risk_Rn(RateInputs(n, d, b0=b0, b1=b1)))


def minimize_f1_total(n: int, d: int) -> tuple[float, float]:
    """``(b1, b0)`` minimising ``AMSE(b1) + Rn(b0*(b1), b1)`` numerically."""
    def total(b1):
        b0 = minimize_Rn_b0(n, d, b1)
        return risk_Rn(RateInputs(n, d, b0=b0, b1=b1), include_amse=True)

    b1 = _argmin_log(total, 1e-3, 10.0, coarse=120)
    return b1, minimize_Rn_b0(n, d, b1)


def minimize_RTn_b0(n: int, d: int, h: float) -> float:
    return _argmin_log(lambda b0: risk_RTn(RateInputs(n, d, b0=b0, b1=b0, h=h)))


def minimize_f2_total(n: int, d: int) -> tuple[float, float]:
    """``(h, b0)`` minimising ``AMSE(b0, h) + RTn(b0*, b0*, h)`` numerically."""
    def total(h):
        b0 = minimize_RTn_b0(n, d, h)
        return risk_RTn(RateInputs(n, d, b0=b0, b1=b0, h=h), include_amse=True)

    h = _argmin_log(total, 1e-3, 10.0, coarse=120)
    return h, minimize_RTn_b0(n, d, h)


# -- grid search ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridSearchResult:
    best_b1: float
    best_b0: float
    best_value: float
    surface: np.ndarray
    b1_grid: GridSpec
    b0_grid: GridSpec

    @property
    def best_index(self) -> tuple[int, int]:
        return (self.b1_grid.index_of(self.best_b1), self.b0_grid.index_of(self.best_b0))


def argmin_surface(surface, b1_grid: GridSpec, b0_grid: GridSpec) -> GridSearchResult:
    """Minimum of a ``(b1, b0)`` surface; ties go to the smallest b1 then b0 index."""
    s = np.array(surface, dtype=float)
    if s.shape != (b1_grid.count, b0_grid.count):
        raise ValueError(f"surface shape {s.shape} does not match grids "
                         f"({b1_grid.count}, {b0_grid.count})")
    s[np.isnan(s)] = np.inf
    if np.all(np.isinf(s)):
        raise AllCellsFailed("every grid cell failed")
    # argmin over the row-major flattening is exactly the lexicographic tie-break
    i, j = np.unravel_index(int(np.argmin(s)), s.shape)
    return GridSearchResult(b1_grid.value(i), b0_grid.value(j), float(s[i, j]), s,
                            b1_grid, b0_grid)


def _cell(objective, b1, b0):
    try:
        v = float(objective(b1, b0))
    except ESTIMATION_FAILURES:
        return math.inf
    return v if math.isfinite(v) else math.inf


def grid_search(objective: Callable[[float, float], float], b1_grid: GridSpec,
                b0_grid: GridSpec, threads: int = 1) -> GridSearchResult:
    """Exhaustive search; cells raising an estimation failure count as +inf."""
    b1s, b0s = b1_grid.values(), b0_grid.values()
    cells = [(i, j) for i in range(len(b1s)) for j in range(len(b0s))]
    surface = np.empty((len(b1s), len(b0s)))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            vals = list(ex.map(lambda c: _cell(objective, b1s[c[0]], b0s[c[1]]), cells))
    else:
        vals = [_cell(objective, b1s[i], b0s[j]) for i, j in cells]
    for (i, j), v in zip(cells, vals):
        surface[i, j] = v
    return argmin_surface(surface, b1_grid, b0_grid)
