"""Command-line experiment runner.

Experiments are JSON objects::

    {
      "count": {"family": "discretized_weibull", "beta": 0.3},
      "severity": {"family": "exponential", "mu": 1.0},
      "x_grid": {"geometric": {"start": 10, "stop": 1e4, "points": 30}},
      "engine": "auto",
      "h": 0.015625,
      "refine": true,
      "approximations": ["heavy_n"],
      "mc": {"samples": 100000, "dependence": "independent"},
      "seed": 0
    }

Exit codes: 0 success, 2 invalid input, 3 numerical failure.  Artifacts are
written to a temporary directory and moved into place only when every
file has been produced.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .approximations import cramer_rate, foss_corrected, heavy_n_approx, heavy_x_approx
from .compound_engine import (
    TailCurve,
    _fmt,
    lattice_compound_tail,
    poisson_inversion_tail,
    refine_and_extrapolate,
)
from .conditions import classify
from .distributions import (
    DiscretizedWeibull,
    ExponentialSeverity,
    count_from_spec,
    severity_from_spec,
)
from .errors import CompoundTailsError, ContractError, DomainError, NumericError, ResourceError
from .montecarlo import DependenceSpec, simulate_conditional_tail, simulate_tail

__all__ = ["ExperimentConfig", "RatioTable", "compare", "run", "main"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
ENGINES = ("auto", "lattice", "poisson_inversion")
APPROXIMATIONS = ("heavy_n", "heavy_x", "foss", "cramer")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _parse_grid(spec) -> np.ndarray:
    if isinstance(spec, list):
        x = np.asarray(spec, dtype=float)
    elif isinstance(spec, dict) and "values" in spec:
        x = np.asarray(spec["values"], dtype=float)
    elif isinstance(spec, dict) and "geometric" in spec:
        g = spec["geometric"]
        start, stop, points = float(g["start"]), float(g["stop"]), int(g["points"])
        if not (0 < start < stop and points >= 2):
            raise ContractError("geometric grid needs 0 < start < stop and points >= 2")
        x = np.geomspace(start, stop, points)
        if g.get("integer", False):
            x = np.unique(np.round(x))
    else:
        raise ContractError("x_grid must be a list, {'values': [...]} or {'geometric': {...}}")
    if x.size == 0 or np.any(~np.isfinite(x)) or np.any(x < 0):
        raise ContractError("x grid must be finite and nonnegative")
    if np.any(np.diff(x) <= 0):
        raise ContractError("x grid must be strictly increasing")
    return x


def _parse_dependence(spec) -> DependenceSpec:
    if spec is None:
        return DependenceSpec()
    if isinstance(spec, str):
        return DependenceSpec.parse(spec)
    return DependenceSpec(spec.get("kind", "independent"), float(spec.get("strength", 0.0)))


@dataclass
class ExperimentConfig:
    count_spec: dict
    severity_spec: dict
    x_grid: np.ndarray
    dependence: DependenceSpec = field(default_factory=DependenceSpec)
    engine: str = "auto"
    h: float = 1.0 / 64.0
    refine: bool = True
    eps_N: Optional[float] = None
    sev_eps: float = 1e-16  # severity mass allowed past the lattice end
    approximations: tuple = ()
    mc: Optional[dict] = None
    seed: int = 0
    n: Optional[int] = None  # fixed claim number for the cramer curve
    tolerances: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ContractError("config must be a JSON object")
        for key in ("count", "severity", "x_grid"):
            if key not in d:
                raise ContractError(f"config is missing {key!r}")
        engine = d.get("engine", "auto")
        if engine not in ENGINES:
            raise ContractError(f"engine must be one of {ENGINES}")
        approx = tuple(d.get("approximations", ()))
        bad = [a for a in approx if a not in APPROXIMATIONS]
        if bad:
            raise ContractError(f"unknown approximations {bad}")
        h = float(d.get("h", 1.0 / 64.0))
        if not h > 0:
            raise ContractError("h must be positive")
        if not 0 < float(d.get("sev_eps", 1e-16)) <= 1e-3:
            raise ContractError("sev_eps must lie in (0, 1e-3]")
        cfg = cls(
            count_spec=dict(d["count"]),
            severity_spec=dict(d["severity"]),
            x_grid=_parse_grid(d["x_grid"]),
            dependence=_parse_dependence(d.get("dependence")),
            engine=engine,
            h=h,
            refine=bool(d.get("refine", True)),
            eps_N=d.get("eps_N"),
            sev_eps=float(d.get("sev_eps", 1e-16)),
            approximations=approx,
            mc=d.get("mc"),
            seed=int(d.get("seed", 0)),
            n=d.get("n"),
            tolerances=dict(d.get("tolerances", {})),
            outputs=dict(d.get("outputs", {})),
        )
        cfg.count()  # validates the specs
        sev = cfg.severity()
        if cfg.engine == "poisson_inversion" and not isinstance(sev, ExponentialSeverity):
            raise ContractError("poisson_inversion requires an exponential severity")
        if cfg.dependence.kind != "independent" and cfg.engine != "auto":
            raise ContractError("oracles cover the independent case only; use engine 'auto' with mc")
        return cfg

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def count(self):
        try:
            return count_from_spec(self.count_spec)
        except KeyError as exc:
            raise ContractError(f"count spec is missing parameter {exc}") from None

    def severity(self):
        try:
            return severity_from_spec(self.severity_spec)
        except KeyError as exc:
            raise ContractError(f"severity spec is missing parameter {exc}") from None


# ---------------------------------------------------------------------------
# ratio tables
# ---------------------------------------------------------------------------


@dataclass
class RatioTable:
    x: np.ndarray
    prob_ratio: np.ndarray
    log_ratio: np.ndarray
    ratio_lower: np.ndarray
    ratio_upper: np.ndarray
    ratio_se: Optional[np.ndarray] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["x", "prob_ratio", "log_ratio", "ratio_lower", "ratio_upper"]
        if self.ratio_se is not None:
            cols.append("ratio_se")
        w.writerow(cols)
        for i in range(len(self.x)):
            row = [self.x[i], self.prob_ratio[i], self.log_ratio[i], self.ratio_lower[i], self.ratio_upper[i]]
            if self.ratio_se is not None:
                row.append(self.ratio_se[i])
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def compare(curve_a: TailCurve, curve_b: TailCurve) -> RatioTable:
    """Per-x P_a/P_b, log P_a/log P_b, bracket-propagated ratio bounds and SE."""
    if curve_a.x.shape != curve_b.x.shape or not np.array_equal(curve_a.x, curve_b.x):
        raise ContractError("curves must share the same x grid")
    a, b = curve_a.log_tail, curve_b.log_tail
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.exp(a - b)
        ratio = np.where(np.isneginf(a) & np.isneginf(b), 1.0, ratio)
        log_ratio = np.where(a == b, 1.0, a / b)
        lower = np.exp(curve_a.lower() - curve_b.upper())
        upper = np.exp(curve_a.upper() - curve_b.lower())
        lower = np.where(np.isnan(lower), ratio, lower)
        upper = np.where(np.isnan(upper), ratio, upper)
        se = None
        if curve_a.stderr is not None or curve_b.stderr is not None:
            rel2 = np.zeros(a.shape)
            for c in (curve_a, curve_b):
                if c.stderr is not None:
                    rel2 = rel2 + (c.stderr / c.tail) ** 2
            se = ratio * np.sqrt(rel2)
    return RatioTable(curve_a.x, ratio, log_ratio, lower, upper, se)


# ---------------------------------------------------------------------------
# experiment pieces
# ---------------------------------------------------------------------------


def oracle_curve(cfg: ExperimentConfig) -> TailCurve:
    count, sev = cfg.count(), cfg.severity()
    engine = cfg.engine
    if engine == "auto":
        engine = "poisson_inversion" if isinstance(sev, ExponentialSeverity) else "lattice"
    if engine == "poisson_inversion":
        return poisson_inversion_tail(count, cfg.x_grid, sev.mu)
    coarse = lattice_compound_tail(count, sev, cfg.h, cfg.x_grid, cfg.eps_N, sev_eps=cfg.sev_eps)
    if not cfg.refine:
        return coarse
    fine = lattice_compound_tail(count, sev, cfg.h / 2.0, cfg.x_grid, cfg.eps_N, rigorous=False, sev_eps=cfg.sev_eps)
    return refine_and_extrapolate(coarse, fine)


def approximation_curve(cfg: ExperimentConfig, name: str) -> TailCurve:
    count, sev = cfg.count(), cfg.severity()
    if name == "heavy_n":
        return heavy_n_approx(count, sev.mu, cfg.x_grid)
    if name == "heavy_x":
        return heavy_x_approx(count.mean, sev, cfg.x_grid)
    if name == "foss":
        if not (isinstance(count, DiscretizedWeibull) and isinstance(sev, ExponentialSeverity)
                and math.isclose(sev.mu, 1.0)):
            raise ContractError("foss needs a discretized Weibull count and unit-mean exponential claims")
        return foss_corrected(count.beta, cfg.x_grid)
    if name == "cramer":
        if cfg.n is None:
            raise ContractError("the cramer curve needs a fixed claim number 'n' in the config")
        n = int(cfg.n)
        a = cfg.x_grid - n * sev.mu
        if np.any(a <= 0):
            raise ContractError("cramer curve needs x > n * mu at every grid point")
        lt = np.array([cramer_rate(n, float(ai), sev.sigma2) for ai in a])
        return TailCurve(cfg.x_grid, lt, provenance="approximation(cramer)")
    raise ContractError(f"unknown approximation {name!r}")


def mc_curve(cfg: ExperimentConfig, samples: Optional[int] = None, seed: Optional[int] = None,
             dep: Optional[DependenceSpec] = None) -> TailCurve:
    mc = dict(cfg.mc or {})
    samples = int(samples if samples is not None else mc.get("samples", 100_000))
    seed = int(seed if seed is not None else mc.get("seed", cfg.seed))
    dep = dep or (_parse_dependence(mc["dependence"]) if "dependence" in mc else cfg.dependence)
    if mc.get("conditional", False):
        if dep.kind != "independent":
            raise ContractError("the conditional estimator covers the independent case only")
        return simulate_conditional_tail(cfg.count(), cfg.severity(), cfg.x_grid, samples, seed)
    return simulate_tail(cfg.count(), cfg.severity(), dep, cfg.x_grid, samples, seed)


def _default_approximations(cfg: ExperimentConfig, predicted: str) -> tuple:
    if cfg.approximations:
        return cfg.approximations
    names = ["heavy_n"]
    if math.isfinite(cfg.count().mean):
        names.append("heavy_x")
    if predicted == "foss_window":
        names.append("foss")
    return tuple(names)


def _write_atomic(out_dir: str, files: dict) -> None:
    """Write every file to a temporary directory, then move them into place."""
    os.makedirs(out_dir, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".compound-tails-", dir=out_dir)
    try:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write_text(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".compound-tails-", dir=d)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_artifacts(cfg: ExperimentConfig) -> dict:
    """All artifacts of an experiment as {file name: text}."""
    report = classify(cfg.count(), cfg.severity())
    files = {"report.json": report.to_json()}
    oracle = None
    if cfg.dependence.kind == "independent":
        oracle = oracle_curve(cfg)
        files["oracle.csv"] = oracle.to_csv()
    tables = []
    for name in _default_approximations(cfg, report.predicted):
        try:
            approx = approximation_curve(cfg, name)
        except DomainError:
            continue  # e.g. heavy_x with an infinite count mean
        files[f"approx_{name}.csv"] = approx.to_csv()
        if oracle is not None:
            tables.append((name, compare(oracle, approx)))
    if cfg.mc is not None or cfg.dependence.kind != "independent":
        files["mc.csv"] = mc_curve(cfg).to_csv()
    if tables:
        buf = io.StringIO()
        for i, (name, table) in enumerate(tables):
            lines = table.to_csv().splitlines(keepends=True)
            if i == 0:
                buf.write("approximation," + lines[0])
            for line in lines[1:]:
                buf.write(f"{name},{line}")
        files["ratios.csv"] = buf.getvalue()
    return files


def run(config, out_dir: str = "out", seed: Optional[int] = None) -> int:
    """Run one experiment and write its artifacts; returns the exit code."""
    try:
        cfg = config if isinstance(config, ExperimentConfig) else (
            ExperimentConfig.from_dict(config) if isinstance(config, dict) else ExperimentConfig.load(config))
        if seed is not None:
            cfg.seed = int(seed)
            if cfg.mc is not None:
                cfg.mc = dict(cfg.mc, seed=int(seed))
        files = run_artifacts(cfg)
        _write_atomic(out_dir, files)
        return EXIT_OK
    except (NumericError, ResourceError) as exc:
        _err("run", exc)
        return EXIT_NUMERIC
    except (CompoundTailsError, ValueError, KeyError, TypeError, json.JSONDecodeError, OSError) as exc:
        _err("run", exc)
        return EXIT_INVALID


def _err(op: str, exc: Exception) -> None:
    print(f"compound-tails {op}: {type(exc).__name__}: {exc}", file=sys.stderr)


# ---------------------------------------------------------------------------
# argparse front end
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compound-tails", description="Tails of random sums S_N.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config and write artifacts")
    r.add_argument("config")
    r.add_argument("--out", default="out")
    r.add_argument("--seed", type=int)

    c = sub.add_parser("classify", help="emit the regime report as JSON")
    c.add_argument("config", nargs="?")
    c.add_argument("--config", dest="config_opt")
    c.add_argument("--diag", metavar="CSV", help="dump diagnostic samples (x, ratio, window_flag)")
    c.add_argument("--out")

    m = sub.add_parser("compare", help="ratio table of two tail CSVs")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--out")

    t = sub.add_parser("tail", help="oracle tail CSV")
    t.add_argument("config")
    t.add_argument("--out")

    a = sub.add_parser("approx", help="approximation tail CSV")
    a.add_argument("config")
    a.add_argument("--name", required=True, choices=APPROXIMATIONS)
    a.add_argument("--out")

    s = sub.add_parser("mc", help="Monte Carlo tail CSV")
    s.add_argument("config")
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--dep", help="independent or first_claim:<strength>")
    s.add_argument("--out")
    return p


def _diag_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["verdict", "diagnostic", "x", "ratio", "window_flag"])
    for v, d, x, r, f in report.diagnostics_rows():
        w.writerow([v, d, _fmt(x), _fmt(r), f])
    return buf.getvalue()


def _dispatch(args) -> int:
    if args.command == "run":
        return run(args.config, args.out, args.seed)
    if args.command == "compare":
        table = compare(TailCurve.from_csv(args.a), TailCurve.from_csv(args.b))
        _write_text(args.out, table.to_csv())
        return EXIT_OK
    if args.command == "classify":
        path = args.config_opt or args.config
        if path is None:
            raise ContractError("classify needs a config path")
        cfg = ExperimentConfig.load(path)
        report = classify(cfg.count(), cfg.severity())
        if args.diag:
            _write_text(args.diag, _diag_csv(report))
        _write_text(args.out, report.to_json())
        return EXIT_OK
    cfg = ExperimentConfig.load(args.config)
    if args.command == "tail":
        curve = oracle_curve(cfg)
    elif args.command == "approx":
        curve = approximation_curve(cfg, args.name)
    else:
        dep = DependenceSpec.parse(args.dep) if args.dep else None
        curve = mc_curve(cfg, args.samples, args.seed, dep)
    _write_text(args.out, curve.to_csv())
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (NumericError, ResourceError) as exc:
        _err(args.command, exc)
        return EXIT_NUMERIC
    except (CompoundTailsError, ValueError, KeyError, TypeError, json.JSONDecodeError, OSError) as exc:
        _err(args.command, exc)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
