"""Command line: single runs, parameter sweeps, closed-form tables and meeting-time estimates."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis
from .config import (FIELD_TYPES, ConfigError, ParseError, ScenarioConfig, ValidationError, _coerce, load_config,
                     tomllib)
from .engine import run
from .metrics import RunMetrics, write_csv
from .routing import Scheme

AGGREGATED = ("delivery_ratio", "avg_latency_s", "transmissions", "overhead_ratio", "extra_copies", "evictions",
              "expiries")
SWEEP_PRESETS = ("sweep-ttl", "sweep-interest")


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    parameter: str
    values: tuple
    seeds: tuple
    schemes: tuple
    # (better, worse, metric[, direction]) checked at every sweep point
    predictions: tuple = field(default=())

    def __post_init__(self):
        if self.parameter not in FIELD_TYPES or self.parameter in ("scheme", "seed"):
            raise ValidationError("parameter", f"cannot sweep {self.parameter!r}")
        if not self.values:
            raise ValidationError("values", "must not be empty")
        if not self.seeds:
            raise ValidationError("seeds", "must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds", "must be distinct")
        if not self.schemes:
            raise ValidationError("schemes", "must not be empty")
        for s in self.schemes:
            try:
                Scheme.parse(s)
            except ValueError as exc:
                raise ValidationError("schemes", str(exc)) from None
        for p in self.predictions:
            if len(p) not in (3, 4) or p[0] not in self.schemes or p[1] not in self.schemes:
                raise ValidationError("predictions", f"bad prediction {p!r}")

    def configs(self) -> list[ScenarioConfig]:
        """Every run in output order: value, then scheme, then seed."""
        return [self.base.replace(**{self.parameter: v, "scheme": s, "seed": seed})
                for v in self.values for s in self.schemes for seed in self.seeds]


def sweep_from_text(text: str, here: Path | None = None) -> SweepSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from None
    known = {"base", "parameter", "values", "seeds", "schemes", "predictions", "overrides"}
    for key in data:
        if key not in known:
            raise ParseError("unknown sweep key", key=key)
    for key in ("base", "parameter", "values", "seeds", "schemes"):
        if key not in data:
            raise ParseError("missing sweep key", key=key)
    base_ref = data["base"]
    if here is not None and (here / base_ref).exists():
        base_ref = here / base_ref
    base = load_config(base_ref)
    overrides = data.get("overrides", {})
    for k, v in overrides.items():
        if k not in FIELD_TYPES:
            raise ParseError("unknown key in overrides", key=k)
    base = base.replace(**{k: _coerce(k, v) for k, v in overrides.items()})
    parameter = data["parameter"]
    if parameter not in FIELD_TYPES:
        raise ValidationError("parameter", f"unknown config field {parameter!r}")
    values = tuple(_coerce(parameter, v) for v in data["values"])
    return SweepSpec(base, parameter, values, tuple(data["seeds"]), tuple(data["schemes"]),
                     tuple(tuple(p) for p in data.get("predictions", ())))


def load_sweep(path) -> SweepSpec:
    p = Path(path)
    if not p.exists() and str(path) in SWEEP_PRESETS:
        from .config import preset_text

        return sweep_from_text(preset_text(str(path)))
    if not p.exists():
        raise ConfigError(f"no such sweep spec: {path}")
    return sweep_from_text(p.read_text(), p.parent)


def _run_metrics(cfg: ScenarioConfig) -> RunMetrics:
    return run(cfg).metrics


def execute(configs, jobs: int = 1) -> list:
    """Metrics for each config, in input order. A failed run yields its exception."""
    if jobs <= 1 or len(configs) <= 1:
        out = []
        for cfg in configs:
            try:
                out.append(_run_metrics(cfg))
            except Exception as exc:  # reported by the caller
                out.append(exc)
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_metrics, cfg) for cfg in configs]
        out = []
        for fut in futures:
            try:
                out.append(fut.result())
            except Exception as exc:
                out.append(exc)
        return out


def _value_text(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def runs_csv(spec: SweepSpec, results) -> str:
    buf = io.StringIO()
    rows = []
    for cfg, m in zip(spec.configs(), results):
        row = m.row()
        row[spec.parameter] = _value_text(getattr(cfg, spec.parameter))
        rows.append(row)
    write_csv(rows, buf, extra_columns=(spec.parameter,))
    return buf.getvalue()


def _samples(spec: SweepSpec, results) -> dict:
    """value -> scheme -> column -> per-seed list (seed order)."""
    table: dict = {}
    for cfg, m in zip(spec.configs(), results):
        row = m.row()
        col = table.setdefault(getattr(cfg, spec.parameter), {}).setdefault(cfg.scheme, {})
        for name in AGGREGATED:
            v = row[name]
            col.setdefault(name, []).append(None if v == "" else float(v))
    return table


def aggregate_csv(spec: SweepSpec, results) -> str:
    buf = io.StringIO()
    header = [spec.parameter, "scheme", "runs"]
    for name in AGGREGATED:
        header += [f"{name}_mean", f"{name}_ci_low", f"{name}_ci_high"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for value, per_scheme in _samples(spec, results).items():
        for scheme, cols in per_scheme.items():
            row = [_value_text(value), scheme, len(spec.seeds)]
            for name in AGGREGATED:
                vals = [v for v in cols[name] if v is not None]
                if len(vals) >= 2:
                    m, lo, hi = analysis.mean_ci(vals)
                    row += [repr(m), repr(lo), repr(hi)]
                elif vals:
                    row += [repr(vals[0]), "", ""]
                else:
                    row += ["", "", ""]
            writer.writerow(row)
    return buf.getvalue()


def sweep_report(spec: SweepSpec, results) -> str:
    parts = []
    for value, per_scheme in _samples(spec, results).items():
        parts.append(f"== {spec.parameter} = {_value_text(value)}")
        preds = spec.predictions if len(spec.seeds) >= 5 else ()
        report = analysis.trend_test(per_scheme, preds)
        parts.append(report.text())
    return "\n".join(parts)


def run_sweep(spec: SweepSpec, out_dir, jobs: int = 1, err=None) -> int:
    """Run every point, write runs.csv, aggregate.csv and report.txt; 0 on success."""
    err = err or sys.stderr
    configs = spec.configs()
    results = execute(configs, jobs)
    failed = [(cfg, r) for cfg, r in zip(configs, results) if isinstance(r, Exception)]
    if failed:
        for cfg, exc in failed:
            print(f"run failed: scheme={cfg.scheme} seed={cfg.seed} {spec.parameter}={getattr(cfg, spec.parameter)}: "
                  f"{type(exc).__name__}: {exc}", file=err)
        return 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs.csv").write_text(runs_csv(spec, results))
    (out / "aggregate.csv").write_text(aggregate_csv(spec, results))
    (out / "report.txt").write_text(sweep_report(spec, results))
    return 0


def parse_params(text: str) -> analysis.AnalyticParams:
    """``K=101,L=10,EMT=1000,lambda=0.5`` or the path of a TOML file with those keys."""
    p = Path(text)
    if p.exists():
        data = tomllib.loads(p.read_text())
    else:
        data = {}
        for part in text.split(","):
            if "=" not in part:
                raise ParseError(f"expected key=value, got {part!r}")
            k, v = part.split("=", 1)
            data[k.strip()] = float(v)
    names = {"k": "K", "l": "L", "emt": "EMT", "lambda": "lam", "lam": "lam"}
    kw = {}
    for k, v in data.items():
        if k.lower() not in names:
            raise ParseError("unknown analytic parameter", key=k)
        kw[names[k.lower()]] = v
    for key in ("K", "L", "EMT"):
        if key not in kw:
            raise ParseError("missing analytic parameter", key=key)
    kw["K"], kw["L"] = int(kw["K"]), int(kw["L"])
    return analysis.AnalyticParams(**kw)


# ---------------------------------------------------------------- entry point


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.scheme:
        changes["scheme"] = args.scheme
    cfg = cfg.replace(**changes) if changes else cfg
    result = run(cfg, check_invariants=args.check)
    buf = io.StringIO()
    write_csv([result.metrics.row()], buf)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(buf.getvalue())
        (out / "events.csv").write_text(result.log.dumps())
    sys.stdout.write(buf.getvalue())
    return 0


def _cmd_sweep(args) -> int:
    spec = load_sweep(args.spec)
    if args.seed is not None:
        spec = SweepSpec(spec.base, spec.parameter, spec.values, (args.seed,), spec.schemes, spec.predictions)
    out = args.out or "sweep-out"
    status = run_sweep(spec, out, args.jobs)
    if status == 0:
        sys.stdout.write((Path(out) / "report.txt").read_text())
    return status


def _cmd_analytic(args) -> int:
    sys.stdout.write(analysis.analytic_table(parse_params(args.params)))
    return 0


def _cmd_estimate_emt(args) -> int:
    cfg = load_config(args.config)
    est = analysis.estimate_emt(cfg, args.samples, seed=0 if args.seed is None else args.seed, target=args.target)
    print(est)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geodtn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("run", help="simulate one scenario and print its metrics row")
    p.add_argument("config", help="TOML file or preset name")
    p.add_argument("--scheme", default=None)
    p.add_argument("--check", action="store_true", help="verify census invariants every step")
    common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("spec", help="sweep TOML file or preset name")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("analytic", help="print the closed-form delay/delivery table")
    p.add_argument("params", help="K=..,L=..,EMT=..[,lambda=..] or a TOML file")
    common(p)
    p.set_defaults(func=_cmd_analytic)

    p = sub.add_parser("estimate-emt", help="Monte-Carlo mean meeting time")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--target", choices=("node", "destination"), default="destination")
    common(p)
    p.set_defaults(func=_cmd_estimate_emt)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, analysis.AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
