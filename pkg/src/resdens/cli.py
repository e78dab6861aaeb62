"""Command-line interface: ``resdens <subcommand> [options]``.

Every run writes its outputs plus a ``manifest.json`` sidecar that records
the resolved configuration and its digest. On failure a machine-readable
``error.json`` is written and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as _rng
from .bandwidth import (RateInputs, minimize_f1_total, minimize_f2_total, rate_b0_star,
                        rate_b1_star, rate_h_star, risk_Rn, risk_RTn)
from .density import (Bandwidths, conditional_density, f1_hat_curve, f1_tilde_curve,
                      f2_hat_curve, f2_tilde_curve)
from .diagnostics import ks_decision, ks_test_standard, lilliefors, qq_points
from .errors import ConfigError, ResdensError
from .grids import GridSpec, IntegrationGrid
from .kernels import get_kernel
from .montecarlo import ModelSpec, SimConfig
from .regression import Sample, read_sample_csv, residuals
from .study import aise_surface, ase_surfaces, config_hash, result_config, run_simulation

log = logging.getLogger("resdens")

ESTIMATOR_TAGS = {"f1": "f1_hat", "f1-oracle": "f1_tilde", "f2": "f2_hat", "f2-oracle": "f2_tilde"}
_GRID_FIELDS = ("global_b1", "global_b0", "pointwise_b1", "pointwise_b0")


# -- configuration ---------------------------------------------------------------

def _field_name(key: str) -> str:
    return key.replace("-", "_")


def _coerce(name: str, value):
    if name in _GRID_FIELDS:
        if isinstance(value, GridSpec):
            return value
        if not isinstance(value, dict) or set(value) - {"start", "step", "count"}:
            raise ConfigError(name.replace("_", "-"), "expected an object with start, step, count")
        try:
            return GridSpec(float(value["start"]), float(value["step"]), int(value["count"]))
        except KeyError as exc:
            raise ConfigError(name.replace("_", "-"), f"missing {exc.args[0]}") from None
        except ValueError as exc:
            raise ConfigError(name.replace("_", "-"), str(exc)) from None
    if name == "model":
        if isinstance(value, ModelSpec):
            return value
        if not isinstance(value, dict):
            raise ConfigError("model", "expected an object with kind and coefficients")
        return ModelSpec(value.get("kind", "quadratic"),
                         tuple(value.get("coefficients", (1.0, 2.0, 3.0))))
    if name in ("eps_points", "band_levels"):
        return tuple(float(v) for v in value)
    if name == "trim":
        return None if value is None else tuple(float(v) for v in value)
    return value


def resolve_config(path=None, overrides: dict | None = None) -> SimConfig:
    """Build a :class:`SimConfig` from a JSON file, then apply flag overrides.

    A run manifest is also accepted as the file: its ``config`` record is used.
    Keys may use dashes or underscores.
    """
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        raw = json.loads(text) if text.strip() else {}
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a JSON object")
        if "config" in raw and "config_hash" in raw:
            raw = raw["config"]
    merged = {_field_name(k): v for k, v in raw.items()}
    merged.update({_field_name(k): v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(unknown[0].replace("_", "-"), "unknown configuration field")
    kwargs = {k: _coerce(k, v) for k, v in merged.items()}
    try:
        return SimConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("config", str(exc)) from None


def _hash_record(record: dict) -> str:
    payload = json.dumps(record, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(payload.encode()).hexdigest()


# -- output helpers --------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _fmt(v) -> str:
    return "%.17g" % float(v)


@dataclasses.dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    base_seed: int | None
    subcommand: str
    output_paths: list
    config: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _Outputs:
    """Collects payloads in memory; nothing touches disk until :meth:`flush`."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}

    def csv(self, name: str, header, rows):
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        self.files[name] = "\n".join(lines) + "\n"

    def json(self, name: str, payload):
        self.files[name] = dumps(payload)

    def flush(self, manifest_name="manifest.json", manifest: RunManifest | None = None):
        self.root.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.root / name).write_text(text)
        if manifest is not None:
            (self.root / manifest_name).write_text(dumps(manifest.to_dict()))


def dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def _surface_rows(search):
    b1s, b0s = search.b1_grid.values(), search.b0_grid.values()
    return [(b1s[i], b0s[j], search.surface[i, j])
            for i in range(len(b1s)) for j in range(len(b0s))]


# -- subcommands -----------------------------------------------------------------

def _config_overrides(args) -> dict:
    return {"n": getattr(args, "n", None), "T": getattr(args, "T", None),
            "eps_step": getattr(args, "eps_step", None), "base_seed": args.seed,
            "threads": args.threads, "mc_reps": getattr(args, "mc_reps", None)}


def cmd_simulate(args, out: _Outputs):
    cfg = resolve_config(args.config, _config_overrides(args))
    report = run_simulation(cfg)
    out.json("table5_1.json", report.table5_1())
    for short, tag in (("f1", "f1_hat"), ("f2", "f2_hat")):
        entry = report.global_results[tag]
        out.csv(f"aise_surface_{short}.csv", ("b1", "b0", "value"), _surface_rows(entry.search))
        eps = cfg.eps_grid.values()
        truth = np.asarray([math.exp(-e * e / 2) / math.sqrt(2 * math.pi) for e in eps])
        levels = sorted(entry.bands)
        header = ["eps"] + [f"band_{a:g}" for a in levels] + ["mean", "true"]
        cols = [eps] + [entry.bands[a] for a in levels] + [entry.mean_curve, truth]
        out.csv(f"bands_{short}.csv", header, zip(*cols))
    out.json("pointwise.json", report.pointwise_payload())
    out.json("delta.json", report.delta_payload())
    out.json("normality.json", report.normality_payload())
    for (tag, e), entry in report.normality.items():
        out.csv(f"qq_{tag}_{e:g}.csv", ("theoretical", "empirical"), qq_points(entry.z))
    return result_config(cfg), cfg.base_seed


def cmd_grid_search(args, out: _Outputs):
    cfg = resolve_config(args.config, _config_overrides(args))
    tag = ESTIMATOR_TAGS[args.estimator]
    if args.mode == "aise":
        search = aise_surface(cfg, tag, cfg.global_b1, cfg.global_b0, stream=_rng.TUNE_GLOBAL)
    else:
        if args.eps is None:
            raise ConfigError("eps", "--mode ase requires --eps")
        if cfg.eps_grid.index_of(args.eps) is None:
            raise ConfigError("eps", f"{args.eps} is not a node of the error grid")
        search = ase_surfaces(cfg, tag, [args.eps], cfg.pointwise_b1, cfg.pointwise_b0)[float(args.eps)]
    out.csv("surface.csv", ("b1", "b0", "value"), _surface_rows(search))
    out.json("optimum.json", {"estimator": tag, "mode": args.mode, "eps": args.eps,
                              "b1": search.best_b1,
                              "b0": None if tag.endswith("tilde") else search.best_b0,
                              "value": search.best_value,
                              "config_hash": config_hash(cfg)})
    record = dict(result_config(cfg), mode=args.mode, eps=args.eps, estimator=tag)
    return record, cfg.base_seed


def cmd_estimate(args, out: _Outputs):
    if args.eps_step is None or not args.eps_step > 0:
        raise ConfigError("eps-step", f"must be positive, got {args.eps_step}")
    if not args.eps_max > args.eps_min:
        raise ConfigError("eps-max", "must exceed eps-min")
    if args.riemann_p < 1:
        raise ConfigError("riemann-p", f"must be a positive integer, got {args.riemann_p}")
    xs, ys, extra = read_sample_csv(args.data)
    sample = Sample(xs, ys)
    grid = GridSpec.over(args.eps_min, args.eps_max, args.eps_step)
    eps = grid.values()
    k0 = get_kernel(args.kernel0)
    k1 = get_kernel(args.kernel1)
    k2 = get_kernel(args.kernel2)
    b1 = _need(args.b1, "b1")
    ig = IntegrationGrid.uniform(-1.0, 1.0, args.riemann_p, sample.d)
    if args.estimator == "f1":
        res = residuals(sample, k0, _need(args.b0, "b0"))
        values = f1_hat_curve(sample, res, k1, b1, None, grid).values
    elif args.estimator == "f1-oracle":
        if "eps" not in extra:
            raise ConfigError("data", "the oracle residual estimator needs an 'eps' column")
        values = f1_tilde_curve(extra["eps"], sample.xs, k1, b1, None, grid).values
    elif args.estimator == "f2":
        bw = Bandwidths(_need(args.b0, "b0"), b1, args.h)
        values = f2_hat_curve(sample, k0, k1, k2, bw, ig, grid).values
    elif args.estimator == "f2-oracle":
        h = args.h if args.h is not None else b1
        values = f2_tilde_curve(sample, ModelSpec(), k1, k2, b1, h, ig, grid).values
    else:
        b0 = _need(args.b0, "b0")
        h0 = args.h0 if args.h0 is not None else b0
        h1 = args.h if args.h is not None else b1
        x = np.full(sample.d, args.x)
        values = np.array([conditional_density(sample, k0, k1, h0, h1, b0, x, e) for e in eps])
    out.csv(Path(args.out).name, ("eps", "value"), zip(eps, values))
    record = {k: v for k, v in vars(args).items() if k not in ("func", "out", "threads")}
    record["data_sha256"] = hashlib.sha256(Path(args.data).read_bytes()).hexdigest()
    return record, None


def _need(value, name):
    if value is None:
        raise ConfigError(name, "required for this estimator")
    if not value > 0:
        raise ConfigError(name, f"must be positive, got {value}")
    return value


def cmd_rates(args, out: _Outputs):
    b1 = args.b1 if args.b1 is not None else rate_b1_star(RateInputs(args.n, args.d))
    ri = RateInputs(args.n, args.d, b1=b1)
    b0 = args.b0 if args.b0 is not None else rate_b0_star(ri)
    h = args.h if args.h is not None else b1
    full = RateInputs(args.n, args.d, b0=b0, b1=b1, h=h)
    payload = {"n": args.n, "d": args.d, "b1": b1, "b0": b0, "h": h,
               "b0_star": rate_b0_star(ri),
               "b1_star": rate_b1_star(ri),
               "h_star": rate_h_star(ri),
               "Rn": risk_Rn(full), "RTn": risk_RTn(full),
               "Rn_plus_amse": risk_Rn(full, include_amse=True),
               "RTn_plus_amse": risk_RTn(full, include_amse=True)}
    if args.minimize:
        b1m, b0m = minimize_f1_total(args.n, args.d)
        hm, b0m2 = minimize_f2_total(args.n, args.d)
        payload["numeric_minimum"] = {"f1": {"b1": b1m, "b0": b0m}, "f2": {"h": hm, "b0": b0m2}}
    out.json("rates.json", payload)
    sys.stdout.write(dumps(payload))
    return {k: v for k, v in vars(args).items() if k not in ("func", "out", "threads")}, None


def cmd_normality(args, out: _Outputs):
    z = _read_series(args.input)
    lil = lilliefors(z, args.mc_reps, args.seed if args.seed is not None else 0)
    ks = ks_test_standard(z)
    payload = {"n": int(z.size),
               "lilliefors": lil.to_dict(),
               "lilliefors_decision": "reject" if lil.p_value <= args.alpha else "accept",
               "ks_standard_normal": ks.to_dict(),
               "ks_decision": ks_decision(ks.scaled_statistic, args.alpha)}
    out.json("normality.json", payload)
    out.csv("qq.csv", ("theoretical", "empirical"), qq_points(z))
    sys.stdout.write(dumps(payload))
    record = {k: v for k, v in vars(args).items() if k not in ("func", "out", "threads")}
    record["input_sha256"] = hashlib.sha256(Path(args.input).read_bytes()).hexdigest()
    return record, args.seed


def _read_series(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and r[0].strip()]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    z = np.array([float(r[0]) for r in rows], dtype=float)
    if z.size < 2:
        raise ConfigError("input", "need at least two values")
    return z


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# -- parser ----------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $RESDENS_THREADS or 1)")
    p.add_argument("--out", default=None, help="output directory (file for estimate)")
    p.add_argument("-v", "--verbose", action="store_true", help="log one line per stage")


def _sim_flags(p):
    p.add_argument("--config", default=None, help="JSON config or run manifest")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--eps-step", type=float, default=None)
    p.add_argument("--mc-reps", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resdens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="run the full simulation study")
    _common(p)
    _sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid-search", help="error surface over the bandwidth grid")
    _common(p)
    _sim_flags(p)
    p.add_argument("--mode", choices=("aise", "ase"), default="aise")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--estimator", choices=sorted(ESTIMATOR_TAGS), default="f1")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("estimate", help="estimate the error density from a data file")
    _common(p)
    p.add_argument("--estimator", choices=sorted(ESTIMATOR_TAGS) + ["conditional"], required=True)
    p.add_argument("--data", required=True, help="CSV with x1..xd,y (and eps for f1-oracle)")
    p.add_argument("--b0", type=float)
    p.add_argument("--b1", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--h0", type=float, help="marginal bandwidth for the conditional estimator")
    p.add_argument("--x", type=float, default=0.0, help="conditioning point (conditional)")
    p.add_argument("--eps-min", type=float, default=-5.0)
    p.add_argument("--eps-max", type=float, default=5.0)
    p.add_argument("--eps-step", type=float, default=0.05)
    p.add_argument("--riemann-p", type=int, default=100)
    p.add_argument("--kernel0", default="epanechnikov")
    p.add_argument("--kernel1", default="epanechnikov")
    p.add_argument("--kernel2", default="biweight")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("rates", help="optimal-rate bandwidths and risk terms")
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--b1", type=float)
    p.add_argument("--b0", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--minimize", action="store_true",
                   help="also minimise the explicit risk expressions numerically")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("normality", help="normality tests on a series of values")
    _common(p)
    p.add_argument("--input", required=True, help="CSV whose first column holds the series")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mc-reps", type=int, default=2000)
    p.set_defaults(func=cmd_normality)
    return parser


def _resolve_threads(value):
    if value is not None:
        return value
    env = os.environ.get("RESDENS_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("threads", f"RESDENS_THREADS must be an integer, got {env!r}") from None
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s", stream=sys.stderr)
    if args.subcommand == "estimate":
        if args.out is None:
            parser.error("estimate requires --out curve.csv")
        root = Path(args.out).parent
        manifest_name = Path(args.out).name + ".manifest.json"
    else:
        root = Path(args.out) if args.out is not None else None
        manifest_name = "manifest.json"
    out = _Outputs(root if root is not None else Path("."))
    try:
        args.threads = _resolve_threads(args.threads)
        record, seed = args.func(args, out)
    except (ResdensError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "subcommand": args.subcommand}
        if isinstance(exc, ConfigError):
            err["field"] = exc.field
        sys.stderr.write(f"resdens: error: {exc}\n")
        target = root if root is not None else Path(".")
        try:
            target.mkdir(parents=True, exist_ok=True)
            (target / "error.json").write_text(dumps(err))
        except OSError:
            pass
        return 2 if isinstance(exc, ConfigError) else 1
    if root is None:
        # rates and normality print to stdout; nothing to persist without --out
        return 0
    manifest = RunManifest(_hash_record(record), __version__, seed, args.subcommand,
                           sorted(out.files), record)
    out.flush(manifest_name, manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
