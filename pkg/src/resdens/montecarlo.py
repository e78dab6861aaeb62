"""Simulation model, replication engine and Monte Carlo error metrics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .density import (Bandwidths, TrimSet, f1_hat_curve, f1_tilde_curve, f2_hat_curve,
                      f2_tilde_curve)
from .diagnostics import norm_pdf, order_index, standard_normal_draws
from .errors import (ESTIMATION_FAILURES, ConfigError, EpsNotOnGrid, TooManyFailures)
from .grids import GridSpec, IntegrationGrid
from .kernels import get_kernel, ProductKernel
from .regression import Sample, residuals

MONTE_CARLO_TAGS = ("f1_hat", "f1_tilde", "f2_hat", "f2_tilde")
FAILURE_BUDGET = 0.10


@dataclass(frozen=True)
class ModelSpec:
    """Regression function ``m(x) = c0 + sum_l sum_{k>=1} c_k x_l^k``.

    ``quadratic`` is the default design ``3x^2 + 2x + 1``; ``custom`` takes
    arbitrary polynomial coefficients, lowest degree first.
    """

    kind: str = "quadratic"
    coefficients: tuple = (1.0, 2.0, 3.0)

    def __post_init__(self):
        if self.kind not in ("quadratic", "custom"):
            raise ConfigError("model.kind", f"expected 'quadratic' or 'custom', got {self.kind!r}")
        coef = tuple(float(c) for c in self.coefficients)
        if self.kind == "quadratic":
            coef = (1.0, 2.0, 3.0)
        if not coef:
            raise ConfigError("model.coefficients", "at least one coefficient required")
        object.__setattr__(self, "coefficients", coef)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefficients
        if x.ndim <= 1:
            return c[0] + sum(ck * x**k for k, ck in enumerate(c) if k >= 1)
        out = np.full(x.shape[0], c[0])
        for k, ck in enumerate(c):
            if k >= 1:
                out = out + ck * (x**k).sum(axis=1)
        return out


@dataclass(frozen=True)
class SimConfig:
    n: int = 200
    T: int = 100
    d: int = 1
    base_seed: int = 20100613
    model: ModelSpec = field(default_factory=ModelSpec)
    eps_half_width: float = 5.0
    eps_step: float = 0.05
    eps_points: tuple = (-1.0, 0.0, 1.0)
    riemann_p: int = 100
    global_b1: GridSpec = GridSpec(0.11, 0.01, 100)
    global_b0: GridSpec = GridSpec(0.11, 0.01, 100)
    pointwise_b1: GridSpec = GridSpec(0.11, 0.01, 290)
    pointwise_b0: GridSpec = GridSpec(0.11, 0.01, 290)
    band_levels: tuple = (0.05, 0.95)
    mc_reps: int = 2000
    kernel0: str = "epanechnikov"
    kernel1: str = "epanechnikov"
    kernel2: str = "biweight"
    trim: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n", f"must be an integer >= 2, got {self.n}")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError("T", f"must be an integer >= 1, got {self.T}")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError("d", f"must be an integer >= 1, got {self.d}")
        if not self.eps_half_width > 0:
            raise ConfigError("eps-half-width", f"must be positive, got {self.eps_half_width}")
        if not self.eps_step > 0:
            raise ConfigError("eps-step", f"must be positive, got {self.eps_step}")
        steps = 2 * self.eps_half_width / self.eps_step
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError("eps-step", "must divide the interval [-A, A] evenly")
        if int(self.riemann_p) != self.riemann_p or self.riemann_p < 1:
            raise ConfigError("riemann-p", f"must be a positive integer, got {self.riemann_p}")
        if int(self.mc_reps) != self.mc_reps or self.mc_reps < 1:
            raise ConfigError("mc-reps", f"must be a positive integer, got {self.mc_reps}")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError("threads", f"must be a positive integer, got {self.threads}")
        for a in self.band_levels:
            if not 0 < a <= 1:
                raise ConfigError("band-levels", f"levels must lie in (0, 1], got {a}")
        for name in ("kernel0", "kernel1", "kernel2"):
            try:
                get_kernel(getattr(self, name))
            except ValueError as exc:
                raise ConfigError(name, str(exc)) from None
        for name in ("n", "T", "d", "riemann_p", "mc_reps", "threads"):
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "eps_points", tuple(float(e) for e in self.eps_points))
        object.__setattr__(self, "band_levels", tuple(float(a) for a in self.band_levels))
        grid = self.eps_grid
        for e in self.eps_points:
            if grid.index_of(e) is None:
                raise ConfigError("eps-points", f"{e} is not a node of the error grid")

    # Derived objects -------------------------------------------------------
    @property
    def eps_grid(self) -> GridSpec:
        return GridSpec.symmetric(self.eps_half_width, self.eps_step)

    @property
    def k0(self) -> ProductKernel:
        return ProductKernel(get_kernel(self.kernel0), self.d)

    @property
    def k1(self) -> ProductKernel:
        return ProductKernel(get_kernel(self.kernel1), self.d)

    @property
    def k1_scalar(self):
        return get_kernel(self.kernel1)

    @property
    def k2(self):
        return get_kernel(self.kernel2)

    @property
    def integration_grid(self) -> IntegrationGrid:
        return IntegrationGrid.uniform(-1.0, 1.0, self.riemann_p, self.d)

    @property
    def trim_set(self) -> TrimSet | None:
        if self.trim is None:
            return None
        lo, hi = self.trim
        return TrimSet.box(lo, hi, self.d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["model"] = {"kind": self.model.kind, "coefficients": list(self.model.coefficients)}
        for g in ("global_b1", "global_b0", "pointwise_b1", "pointwise_b0"):
            out[g] = getattr(self, g).to_dict()
        out["eps_points"] = list(self.eps_points)
        out["band_levels"] = list(self.band_levels)
        out["trim"] = None if self.trim is None else list(self.trim)
        return out


def true_density(eps):
    """Standard normal error density of the simulation model."""
    return norm_pdf(eps)


@dataclass(frozen=True, eq=False)
class SimSample:
    sample: Sample
    true_eps: np.ndarray
    k: int
    stream: int


def generate_sample(cfg: SimConfig, k: int, stream: int = _rng.EVAL) -> SimSample:
    """Replication ``k`` of the simulation model, fully determined by its key."""
    if not 0 <= k < cfg.T:
        raise IndexError(f"replication index {k} outside [0, {cfg.T})")
    gen = _rng.stream(cfg.base_seed, stream, k)
    xs = -1.0 + 2.0 * _rng.uniform_open(gen, (cfg.n, cfg.d))
    eps = standard_normal_draws(gen, cfg.n)
    ys = cfg.model(xs if cfg.d > 1 else xs[:, 0]) + eps
    return SimSample(Sample(xs, ys), eps, k, stream)


# -- estimators on one replication -------------------------------------------

def estimate_curve(cfg: SimConfig, sim: SimSample, tag: str, bw: Bandwidths, eps) -> np.ndarray:
    """Evaluate one estimator on one simulated sample (grid or point list)."""
    s = sim.sample
    if tag == "f1_hat":
        res = residuals(s, cfg.k0, bw.b0)
        return f1_hat_curve(s, res, cfg.k1_scalar, bw.b1, cfg.trim_set, eps).values
    if tag == "f1_tilde":
        return f1_tilde_curve(sim.true_eps, s.xs, cfg.k1_scalar, bw.b1, cfg.trim_set, eps).values
    if tag == "f2_hat":
        return f2_hat_curve(s, cfg.k0, cfg.k1, cfg.k2, bw, cfg.integration_grid, eps).values
    if tag == "f2_tilde":
        return f2_tilde_curve(s, cfg.model, cfg.k1, cfg.k2, bw.b1, bw.h,
                              cfg.integration_grid, eps).values
    raise ValueError(f"unknown estimator tag {tag!r}; expected one of {MONTE_CARLO_TAGS}")


def map_replications(fn: Callable[[int], object], T: int, threads: int = 1) -> list:
    """``[fn(k) for k in range(T)]``, optionally on a thread pool; order is kept."""
    if threads > 1 and T > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, range(T)))
    return [fn(k) for k in range(T)]


@dataclass(frozen=True, eq=False)
class ReplicationMatrix:
    """Row ``r`` holds the estimate from replication ``rows[r]``; failed ones are dropped."""

    values: np.ndarray
    eps_grid: np.ndarray
    estimator_tag: str
    bandwidths: Bandwidths
    rows: np.ndarray
    failures: int = 0

    @property
    def T(self) -> int:
        return self.values.shape[0]

    def column(self, eps: float) -> int:
        idx = np.flatnonzero(np.isclose(self.eps_grid, eps, rtol=0, atol=1e-9))
        if idx.size == 0:
            raise EpsNotOnGrid(f"eps={eps} is not an evaluation point of this matrix")
        return int(idx[0])


def replicate(cfg: SimConfig, estimator_tag: str, bw: Bandwidths, eps_grid,
              stream: int = _rng.EVAL, threads: int | None = None) -> ReplicationMatrix:
    threads = cfg.threads if threads is None else threads
    eps_vals = eps_grid.values() if isinstance(eps_grid, GridSpec) else np.asarray(eps_grid, float)

    def one(k):
        sim = generate_sample(cfg, k, stream)
        try:
            return estimate_curve(cfg, sim, estimator_tag, bw, eps_grid)
        except ESTIMATION_FAILURES:
            return None

    out = map_replications(one, cfg.T, threads)
    rows = np.array([k for k, v in enumerate(out) if v is not None], dtype=int)
    failures = cfg.T - rows.size
    if failures > FAILURE_BUDGET * cfg.T or rows.size == 0:
        raise TooManyFailures(f"{failures}/{cfg.T} replications failed for {estimator_tag} "
                              f"at {bw.to_dict()}")
    values = np.vstack([out[k] for k in rows])
    return ReplicationMatrix(values, eps_vals, estimator_tag, bw, rows, failures)


# -- metrics -----------------------------------------------------------------

def _truth_on(mat: ReplicationMatrix, truth) -> np.ndarray:
    return np.asarray(truth(mat.eps_grid), dtype=float)


def aise(mat: ReplicationMatrix, truth=true_density, interval: tuple | None = None,
         step: float | None = None) -> float:
    """Average over replications of the trapezoid-integrated squared error."""
    g = mat.eps_grid
    if interval is not None:
        lo, hi = interval
        if not (math.isclose(g[0], lo, abs_tol=1e-9) and math.isclose(g[-1], hi, abs_tol=1e-9)):
            raise ValueError(f"evaluation grid [{g[0]}, {g[-1]}] does not cover {interval}")
    if step is not None and not np.allclose(np.diff(g), step, rtol=0, atol=1e-9):
        raise ValueError(f"evaluation grid is not uniform with step {step}")
    sq = (mat.values - _truth_on(mat, truth)) ** 2
    return float(np.trapezoid(sq, g, axis=1).mean())


def ase(mat: ReplicationMatrix, truth=true_density, eps: float = 0.0) -> float:
    c = mat.column(eps)
    err = mat.values[:, c] - float(truth(np.array([mat.eps_grid[c]]))[0])
    return float(np.mean(err**2))


def bias_variance(mat: ReplicationMatrix, truth=true_density, eps: float = 0.0):
    """Empirical bias and divisor-``T`` variance of the estimates at ``eps``."""
    c = mat.column(eps)
    col = mat.values[:, c]
    mean = col.mean()
    bias = float(mean - float(truth(np.array([mat.eps_grid[c]]))[0]))
    var = float(np.mean((col - mean) ** 2))
    return bias, var


def confidence_band(mat: ReplicationMatrix, alpha: float) -> np.ndarray:
    """Columnwise order statistic of rank ``round(alpha*T)``."""
    r = order_index(alpha, mat.T)
    return np.sort(mat.values, axis=0)[r - 1]


def average_estimate(mat: ReplicationMatrix) -> np.ndarray:
    return mat.values.mean(axis=0)


def delta_moments(eps_hat, true_eps, eps: float, b1: float) -> tuple[float, float]:
    """Mean and divisor-N variance of ``(eps_hat - true_eps) * 1(|eps_hat - eps| <= b1)``."""
    eps_hat = np.asarray(eps_hat, dtype=float).reshape(-1)
    err = np.asarray(true_eps, dtype=float).reshape(-1)
    if eps_hat.size == 0:
        return 0.0, 0.0
    d = (eps_hat - err) * (np.abs(eps_hat - eps) <= b1)
    mean = float(d.mean())
    return mean, float(np.mean((d - mean) ** 2))


def residual_delta_stats(cfg: SimConfig, eps: float, b0: float, b1: float,
                         stream: int = _rng.EVAL, threads: int | None = None):
    """Pooled :func:`delta_moments` over all replications at first-step bandwidth ``b0``.

    Indices whose leave-one-out window is empty are left out of the pool.
    """
    threads = cfg.threads if threads is None else threads

    def one(k):
        sim = generate_sample(cfg, k, stream)
        try:
            res = residuals(sim.sample, cfg.k0, b0)
        except ESTIMATION_FAILURES:
            return np.empty(0), np.empty(0)
        ok = res.valid_mask
        return res.eps_hat[ok], sim.true_eps[ok]

    parts = map_replications(one, cfg.T, threads)
    return delta_moments(np.concatenate([p[0] for p in parts]),
                         np.concatenate([p[1] for p in parts]), eps, b1)


def oracle_bandwidths(tag: str, b1: float, b0: float | None = None) -> Bandwidths:
    """Bandwidth tuple for a tag; oracles ignore b0 and the integral estimators use h = b1."""
    if tag in ("f1_tilde", "f2_tilde") or b0 is None:
        return Bandwidths(b1, b1, b1)
    return Bandwidths(b0, b1, b1)

