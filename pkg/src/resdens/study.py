"""The simulation study: bandwidth surfaces, optimal-bandwidth evaluation,
pointwise error decomposition and normality diagnostics.

Tuning surfaces are computed on pools of replications disjoint from the
evaluation pool (separate random streams). Within one replication the
first-step quantities (residuals, or regression fits on the integration
nodes) depend only on ``b0`` and are computed once per ``b0`` and reused for
every ``b1``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as _rng
from .bandwidth import GridSearchResult, argmin_surface
from .density import (Bandwidths, integral_values, kde_values, nw_on_grid,
                      true_regression_on_grid)
from .diagnostics import (empirical_quantile, ks_decision, ks_test_standard, lilliefors,
                          qq_points, quantile_ci, standardize_z)
from .errors import ESTIMATION_FAILURES
from .grids import GridSpec
from .montecarlo import (FAILURE_BUDGET, MONTE_CARLO_TAGS, ReplicationMatrix, SimConfig,
                         SimSample, aise, average_estimate, bias_variance, confidence_band,
                         generate_sample, map_replications, oracle_bandwidths, replicate,
                         residual_delta_stats, true_density)
from .regression import residuals

log = logging.getLogger(__name__)

ORACLES = ("f1_tilde", "f2_tilde")


def _first_step(cfg: SimConfig, sim: SimSample, tag: str, b0: float | None):
    """b0-dependent part of an estimator, or None when it fails."""
    s = sim.sample
    try:
        if tag == "f1_hat":
            res = residuals(s, cfg.k0, b0)
            keep = res.valid_mask.copy()
            if cfg.trim_set is not None:
                keep &= cfg.trim_set.contains(s.xs)
            return res.eps_hat[keep] if keep.any() else None
        if tag == "f1_tilde":
            keep = np.ones(s.n, bool) if cfg.trim_set is None else cfg.trim_set.contains(s.xs)
            return sim.true_eps[keep] if keep.any() else None
        if tag == "f2_hat":
            return nw_on_grid(s, cfg.k0, b0, cfg.integration_grid)
        if tag == "f2_tilde":
            return true_regression_on_grid(cfg.model, cfg.integration_grid)
    except ESTIMATION_FAILURES:
        return None
    raise ValueError(f"unknown estimator tag {tag!r}")


def _second_step(cfg: SimConfig, sim: SimSample, tag: str, first, b1: float, eps):
    if tag.startswith("f1"):
        return kde_values(first, cfg.k1_scalar, b1, eps)
    return integral_values(sim.sample, first, cfg.integration_grid, cfg.k1, cfg.k2, b1, b1, eps)


def _b0_axis(tag: str, b0_grid: GridSpec) -> GridSpec:
    # oracles do not use b0: collapse the axis to one column
    return GridSpec(b0_grid.start, b0_grid.step, 1) if tag in ORACLES else b0_grid


def error_surfaces(cfg: SimConfig, tag: str, b1_grid: GridSpec, b0_grid: GridSpec, eps,
                   reduce: Callable[[np.ndarray], np.ndarray], stream: int,
                   threads: int | None = None):
    """Replication-averaged error over the ``(b1, b0)`` grid.

    ``reduce`` maps an estimate on ``eps`` to an error array of fixed shape
    ``E``; the result has shape ``(nb1, nb0) + E``. A cell where more than
    ``FAILURE_BUDGET`` of the replications fail is +inf, otherwise the mean
    runs over the successful ones.
    """
    threads = cfg.threads if threads is None else threads
    b0_axis = _b0_axis(tag, b0_grid)
    b1s, b0s = b1_grid.values(), b0_axis.values()

    def one(k):
        sim = generate_sample(cfg, k, stream)
        block = None
        for j, b0 in enumerate(b0s):
            first = _first_step(cfg, sim, tag, b0)
            for i, b1 in enumerate(b1s):
                if first is None:
                    err = None
                else:
                    err = np.asarray(reduce(_second_step(cfg, sim, tag, first, b1, eps)), float)
                if block is None and err is not None:
                    block = np.full((len(b1s), len(b0s)) + err.shape, np.nan)
                if err is not None:
                    block[i, j] = err
        return block

    total = None
    fails = None
    blocks = map_replications(one, cfg.T, threads)
    for block in blocks:  # fixed replication order keeps the fold deterministic
        if block is None:
            continue
        if total is None:
            total = np.zeros_like(block)
            fails = np.zeros(block.shape, dtype=int)
        bad = np.isnan(block)
        total += np.where(bad, 0.0, block)
        fails += bad
    if total is None:
        shape = (len(b1s), len(b0s))
        return np.full(shape, np.inf), b0_axis
    missing = sum(1 for b in blocks if b is None)
    fails = fails + missing
    ok = cfg.T - fails
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / ok
    mean[(fails > FAILURE_BUDGET * cfg.T) | (ok == 0)] = np.inf
    return mean, b0_axis


def aise_surface(cfg: SimConfig, tag: str, b1_grid: GridSpec, b0_grid: GridSpec,
                 stream: int = _rng.TUNE_GLOBAL, threads: int | None = None) -> GridSearchResult:
    grid = cfg.eps_grid
    g = grid.values()
    truth = true_density(g)

    def ise(est):
        return np.trapezoid((est - truth) ** 2, g)

    surf, b0_axis = error_surfaces(cfg, tag, b1_grid, b0_grid, grid, ise, stream, threads)
    return argmin_surface(surf, b1_grid, b0_axis)


def ase_surfaces(cfg: SimConfig, tag: str, eps_points, b1_grid: GridSpec, b0_grid: GridSpec,
                 stream: int = _rng.TUNE_POINTWISE,
                 threads: int | None = None) -> dict[float, GridSearchResult]:
    pts = np.ascontiguousarray(np.asarray(eps_points, dtype=float))
    truth = true_density(pts)
    surf, b0_axis = error_surfaces(cfg, tag, b1_grid, b0_grid, pts,
                                   lambda est: (est - truth) ** 2, stream, threads)
    return {float(e): argmin_surface(surf[..., p], b1_grid, b0_axis)
            for p, e in enumerate(pts)}


def make_objective(cfg: SimConfig, tag: str, mode: str = "aise", eps: float | None = None,
                   stream: int | None = None) -> Callable[[float, float], float]:
    """Cell objective for :func:`resdens.bandwidth.grid_search`.

    Samples and first-step quantities are cached per ``(k, b0)``, so a sweep
    over ``b1`` reuses the residuals computed for each ``b0``. By default the
    tuning pool matches :func:`aise_surface` or :func:`ase_surfaces`.
    """
    if mode not in ("aise", "ase"):
        raise ValueError(f"mode must be 'aise' or 'ase', got {mode!r}")
    if mode == "ase" and eps is None:
        raise ValueError("mode 'ase' needs an eps value")
    if stream is None:
        stream = _rng.TUNE_GLOBAL if mode == "aise" else _rng.TUNE_POINTWISE
    sims = {}
    firsts = {}
    grid = cfg.eps_grid
    g = grid.values()
    truth = true_density(g)
    pt = np.array([float(eps)]) if mode == "ase" else None

    def objective(b1, b0):
        key_b0 = None if tag in ORACLES else float(b0)
        errs = []
        for k in range(cfg.T):
            if k not in sims:
                sims[k] = generate_sample(cfg, k, stream)
            if (k, key_b0) not in firsts:
                firsts[(k, key_b0)] = _first_step(cfg, sims[k], tag, key_b0)
            first = firsts[(k, key_b0)]
            if first is None:
                continue
            if mode == "aise":
                est = _second_step(cfg, sims[k], tag, first, b1, grid)
                errs.append(np.trapezoid((est - truth) ** 2, g))
            else:
                est = _second_step(cfg, sims[k], tag, first, b1, pt)
                errs.append(float((est[0] - true_density(pt)[0]) ** 2))
        if cfg.T - len(errs) > FAILURE_BUDGET * cfg.T or not errs:
            return math.inf
        return float(sum(errs) / len(errs))

    return objective


# -- study records ---------------------------------------------------------------

@dataclass(eq=False)
class GlobalEntry:
    tag: str
    search: GridSearchResult
    bandwidths: Bandwidths
    matrix: ReplicationMatrix
    aise: float
    mean_curve: np.ndarray
    bands: dict

    def summary(self) -> dict:
        out = {"b1": self.bandwidths.b1,
               "b0": None if self.tag in ORACLES else self.bandwidths.b0,
               "aise": self.aise,
               "tuning_aise": self.search.best_value,
               "failures": self.matrix.failures}
        return out


@dataclass(eq=False)
class PointwiseEntry:
    tag: str
    eps: float
    search: GridSearchResult
    bandwidths: Bandwidths
    matrix: ReplicationMatrix
    ase: float
    bias: float
    variance: float

    @property
    def values(self) -> np.ndarray:
        return self.matrix.values[:, 0]

    def summary(self) -> dict:
        return {"b1": self.bandwidths.b1,
                "b0": None if self.tag in ORACLES else self.bandwidths.b0,
                "ase": self.ase, "bias": self.bias, "variance": self.variance,
                "tuning_ase": self.search.best_value, "failures": self.matrix.failures}


@dataclass(eq=False)
class NormalityEntry:
    tag: str
    eps: float
    z: np.ndarray
    b1: float
    lilliefors: object
    ks_standard: object
    ks_decision: str
    mean: float
    variance: float
    quantiles: dict
    intervals: dict

    def summary(self) -> dict:
        return {"b1": self.b1,
                "lilliefors": self.lilliefors.to_dict(),
                "ks_standard_normal": dict(self.ks_standard.to_dict(), decision_0_05=self.ks_decision),
                "mean": self.mean, "variance": self.variance,
                "quantiles": {f"{a:g}": q for a, q in self.quantiles.items()},
                "quantile_ci": {f"{a:g}": list(ci) for a, ci in self.intervals.items()}}


def global_study(cfg: SimConfig, tags=MONTE_CARLO_TAGS, b1_grid: GridSpec | None = None,
                 b0_grid: GridSpec | None = None) -> dict[str, GlobalEntry]:
    """Tune each estimator by AISE on the tuning pool, then evaluate on fresh samples."""
    b1_grid = b1_grid or cfg.global_b1
    b0_grid = b0_grid or cfg.global_b0
    out = {}
    for tag in tags:
        log.info("global study: AISE surface for %s (%d x %d cells)", tag,
                 b1_grid.count, 1 if tag in ORACLES else b0_grid.count)
        search = aise_surface(cfg, tag, b1_grid, b0_grid)
        bw = oracle_bandwidths(tag, search.best_b1, search.best_b0)
        mat = replicate(cfg, tag, bw, cfg.eps_grid, stream=_rng.EVAL)
        out[tag] = GlobalEntry(tag, search, bw, mat, aise(mat, true_density),
                               average_estimate(mat),
                               {a: confidence_band(mat, a) for a in cfg.band_levels})
    return out


def pointwise_study(cfg: SimConfig, tags=MONTE_CARLO_TAGS, b1_grid: GridSpec | None = None,
                    b0_grid: GridSpec | None = None) -> dict[tuple, PointwiseEntry]:
    """Tune by ASE at each error value, then evaluate bias/variance on fresh samples."""
    b1_grid = b1_grid or cfg.pointwise_b1
    b0_grid = b0_grid or cfg.pointwise_b0
    out = {}
    for tag in tags:
        log.info("pointwise study: ASE surfaces for %s", tag)
        searches = ase_surfaces(cfg, tag, cfg.eps_points, b1_grid, b0_grid)
        for e, search in searches.items():
            bw = oracle_bandwidths(tag, search.best_b1, search.best_b0)
            mat = replicate(cfg, tag, bw, [e], stream=_rng.EVAL)
            col = mat.values[:, 0]
            truth = float(true_density(e))
            b, v = bias_variance(mat, true_density, e)
            out[(tag, e)] = PointwiseEntry(tag, e, search, bw, mat,
                                           float(np.mean((col - truth) ** 2)), b, v)
    return out


def delta_study(cfg: SimConfig, pointwise: dict) -> dict[float, dict]:
    """Residual error near each error value at the residual estimator's pointwise optimum."""
    out = {}
    for e in cfg.eps_points:
        entry = pointwise.get(("f1_hat", e))
        if entry is None:
            continue
        bw = entry.bandwidths
        mean, var = residual_delta_stats(cfg, e, bw.b0, bw.b1)
        out[e] = {"delta_bar": mean, "delta_var": var, "b0": bw.b0, "b1": bw.b1}
    return out


def normality_study(cfg: SimConfig, pointwise: dict, levels=(0.05, 0.95)) -> dict[tuple, NormalityEntry]:
    out = {}
    k1 = cfg.k1_scalar
    for (tag, e), entry in pointwise.items():
        truth = float(true_density(e))
        b1 = entry.bandwidths.b1
        z = np.atleast_1d(standardize_z(entry.values, truth, cfg.n, b1, k1))
        lil = lilliefors(z, cfg.mc_reps, cfg.base_seed)
        ks = ks_test_standard(z)
        q = {a: empirical_quantile(z, a) for a in levels}
        ci = {a: quantile_ci(q[a], a, z.size) for a in levels if 0 < a < 1}
        out[(tag, e)] = NormalityEntry(tag, e, z, b1, lil, ks, ks_decision(ks.scaled_statistic, 0.05),
                                       float(z.mean()), float(np.mean((z - z.mean()) ** 2)), q, ci)
    return out


def result_config(cfg: SimConfig) -> dict:
    """Config fields that determine results (the thread count does not)."""
    out = cfg.to_dict()
    out.pop("threads")
    return out


def config_hash(cfg: SimConfig) -> str:
    payload = json.dumps(result_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(eq=False)
class McReport:
    config: SimConfig
    global_results: dict = field(default_factory=dict)
    pointwise: dict = field(default_factory=dict)
    delta: dict = field(default_factory=dict)
    normality: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def metadata(self) -> dict:
        from ._backend import BACKEND
        return {"config_hash": self.config_hash, "base_seed": self.config.base_seed,
                "streams": {"eval": _rng.EVAL, "tune_global": _rng.TUNE_GLOBAL,
                            "tune_pointwise": _rng.TUNE_POINTWISE,
                            "lilliefors": _rng.LILLIEFORS},
                "backend": BACKEND}

    def table5_1(self) -> dict:
        return {"estimators": {t: e.summary() for t, e in self.global_results.items()},
                "metadata": self.metadata()}

    def pointwise_payload(self) -> dict:
        out = {}
        for (tag, e), entry in self.pointwise.items():
            out.setdefault(f"{e:g}", {})[tag] = entry.summary()
        return {"eps": out, "metadata": self.metadata()}

    def delta_payload(self) -> dict:
        return {"eps": {f"{e:g}": v for e, v in self.delta.items()}, "metadata": self.metadata()}

    def normality_payload(self) -> dict:
        out = {}
        for (tag, e), entry in self.normality.items():
            out.setdefault(f"{e:g}", {})[tag] = entry.summary()
        return {"eps": out, "metadata": self.metadata()}


def run_simulation(cfg: SimConfig, studies=("global", "pointwise", "normality")) -> McReport:
    report = McReport(cfg)
    if "global" in studies:
        report.global_results = global_study(cfg)
    if "pointwise" in studies or "normality" in studies:
        report.pointwise = pointwise_study(cfg)
        report.delta = delta_study(cfg, report.pointwise)
    if "normality" in studies:
        report.normality = normality_study(cfg, report.pointwise)
    return report
