"""Command line front end: INI configuration, experiment dispatch and CSV/JSON output.

Usage::

    rmtdeco lr --config run.ini --out results/
    rmtdeco mc --config run.ini --seed 7 --ne 128 --out results/
    rmtdeco compare results/lr.csv results/mc.csv

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dynamics import DEFAULT_MAX_DIM, InitialState, SystemConfig, Topology
from .experiments import (
    ExperimentPlan,
    RealizationError,
    TimeSeries,
    default_time_grid,
    run_average,
    run_cp_curve,
    run_self_averaging,
    run_unitality,
)
from .linres import LRPrediction, VALIDITY_GATE, concurrence_prediction, exponentiate, lr_purity, p_infinity
from .measures import cp_distance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CSV_HEADER = ("t_over_tauH", "purity_mean", "purity_stderr", "concurrence_mean", "concurrence_stderr", "n_samples")
EXPERIMENTS = ("lr", "mc", "cp", "unitality", "selfavg")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- configuration

_SCHEMA = {
    "topology": {"kind": str, "delta1": float, "delta2": float, "lambda1": float, "lambda2": float},
    "ensemble": {"beta": int, "ne": int, "ne_prime": int},
    "state": {"theta": float, "phi": float, "gamma": float, "eta": float, "phi2": float, "eta2": float},
    "grid": {"times": "floats", "points": int, "t_max": float},
    "mc": {
        "n_hamiltonians": int,
        "n_states": int,
        "seed": int,
        "workers": int,
        "max_dim": int,
        "ne_sweep": "ints",
        "t_targets": "floats",
        "n_gamma": int,
        "n_realizations": int,
    },
}
_REQUIRED = (("topology", "kind"), ("ensemble", "beta"), ("ensemble", "ne"))


@dataclass(frozen=True)
class RunConfig:
    """An :class:`ExperimentPlan` plus the sweep settings used by some subcommands."""

    plan: ExperimentPlan
    ne_sweep: tuple[int, ...] = ()
    t_targets: tuple[float, ...] = (1.0, 2.0, 3.0)
    n_gamma: int = 16
    n_realizations: int = 10


def _convert(key: str, raw: str, kind):
    try:
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if kind == "ints":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse INI text into a validated :class:`RunConfig`. Unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__", inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values: dict[str, dict] = {s: {} for s in _SCHEMA}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            values[section][key] = _convert(f"{section}.{key}", raw, _SCHEMA[section][key])
    missing = [f"{s}.{k}" for s, k in _REQUIRED if k not in values[s]]
    if missing:
        raise ConfigError(f"missing required field(s): {', '.join(missing)}")

    topo, ens, st, grid, mc = (values[s] for s in ("topology", "ensemble", "state", "grid", "mc"))
    try:
        kind = Topology(topo["kind"])
    except ValueError:
        raise ConfigError(f"topology.kind: must be one of {[t.value for t in Topology]}, got {topo['kind']!r}") from None
    if ens["beta"] not in (1, 2):
        raise ConfigError(f"ensemble.beta: must be 1 or 2, got {ens['beta']}")
    for key, lo in (("ne", 2), ("ne_prime", 2)):
        if key in ens and ens[key] < lo:
            raise ConfigError(f"ensemble.{key}: must be >= {lo}, got {ens[key]}")
    for key in ("lambda1", "lambda2"):
        if topo.get(key, 0.0) < 0:
            raise ConfigError(f"topology.{key}: must be non-negative")
    config = SystemConfig(kind, beta=ens["beta"], ne=ens["ne"], ne_prime=ens.get("ne_prime"), **{k: topo[k] for k in topo if k != "kind"})

    _check_range_key("state.theta", st.get("theta", 0.0), 0.0, math.pi / 4)
    _check_range_key("state.phi", st.get("phi", 0.0), 0.0, math.pi / 2)
    _check_range_key("state.phi2", st.get("phi2", 0.0), 0.0, math.pi / 2)
    if "gamma" in st:
        _check_range_key("state.gamma", st["gamma"], -math.pi / 2, math.pi / 2)
    if kind is Topology.ONE_QUBIT and st.get("theta", 0.0) != 0.0:
        raise ConfigError("state.theta: must be 0 for a single qubit")
    state = InitialState(**st)

    if "times" in grid:
        if "points" in grid or "t_max" in grid:
            raise ConfigError("grid.times: give either explicit times or points/t_max, not both")
        times = grid["times"]
    else:
        points = grid.get("points", 64)
        t_max = grid.get("t_max", 3.0)
        if points < 3:
            raise ConfigError(f"grid.points: must be >= 3, got {points}")
        if t_max <= 0:
            raise ConfigError(f"grid.t_max: must be positive, got {t_max}")
        times = tuple(float(x) for x in default_time_grid(points, t_max))
    if not times or times[0] != 0.0 or any(b <= a for a, b in zip(times[:-1], times[1:])):
        raise ConfigError("grid.times: must start at 0 and be strictly increasing")

    for key in ("n_hamiltonians", "n_states", "workers", "n_gamma", "n_realizations"):
        if key in mc and mc[key] < 1:
            raise ConfigError(f"mc.{key}: must be >= 1, got {mc[key]}")
    if mc.get("seed", 0) < 0:
        raise ConfigError("mc.seed: must be non-negative")
    if any(n < 2 for n in mc.get("ne_sweep", ())):
        raise ConfigError("mc.ne_sweep: every entry must be >= 2")
    plan = ExperimentPlan(
        config,
        state,
        times,
        n_hamiltonians=mc.get("n_hamiltonians", 15),
        n_states=mc.get("n_states", 15),
        seed=mc.get("seed", 0),
        workers=mc.get("workers", 1),
        max_dim=mc.get("max_dim", DEFAULT_MAX_DIM),
    )
    extras = {k: mc[k] for k in ("ne_sweep", "t_targets", "n_gamma", "n_realizations") if k in mc}
    return RunConfig(plan, **extras)


def _check_range_key(key, value, lo, hi, slack=1e-9):
    if not (lo - slack <= value <= hi + slack):
        raise ConfigError(f"{key}: {value} outside [{lo:.10g}, {hi:.10g}]")


def _fmt(x) -> str:
    return repr(float(x))


def render_config(run: RunConfig) -> str:
    """INI text that :func:`parse_config` turns back into ``run``."""
    p, c, s = run.plan, run.plan.config, run.plan.state
    lines = ["[topology]", f"kind = {c.topology.value}"]
    lines += [f"{k} = {_fmt(getattr(c, k))}" for k in ("delta1", "delta2", "lambda1", "lambda2")]
    lines += ["", "[ensemble]", f"beta = {c.beta}", f"ne = {c.ne}"]
    if c.ne_prime is not None:
        lines.append(f"ne_prime = {c.ne_prime}")
    lines += ["", "[state]"]
    for k in ("theta", "phi", "gamma", "eta", "phi2", "eta2"):
        v = getattr(s, k)
        if v is not None:
            lines.append(f"{k} = {_fmt(v)}")
    lines += ["", "[grid]", "times = " + ", ".join(_fmt(t) for t in p.times)]
    lines += [
        "",
        "[mc]",
        f"n_hamiltonians = {p.n_hamiltonians}",
        f"n_states = {p.n_states}",
        f"seed = {p.seed}",
        f"workers = {p.workers}",
        f"max_dim = {p.max_dim}",
        f"n_gamma = {run.n_gamma}",
        f"n_realizations = {run.n_realizations}",
        "t_targets = " + ", ".join(_fmt(t) for t in run.t_targets),
    ]
    if run.ne_sweep:
        lines.append("ne_sweep = " + ", ".join(str(n) for n in run.ne_sweep))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- outputs


@dataclass
class RunManifest:
    experiment: str
    parameters: dict
    seed: int
    version: str = __version__
    outputs: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"


def _plan_echo(run: RunConfig) -> dict:
    p = run.plan
    echo = {
        "config": {k: (v.value if isinstance(v, Topology) else v) for k, v in dataclasses.asdict(p.config).items()},
        "state": dataclasses.asdict(p.state),
        "times": list(p.times),
        "n_hamiltonians": p.n_hamiltonians,
        "n_states": p.n_states,
        "workers": p.workers,
        "max_dim": p.max_dim,
        "ne_sweep": list(run.ne_sweep),
        "t_targets": list(run.t_targets),
        "n_gamma": run.n_gamma,
        "n_realizations": run.n_realizations,
    }
    return echo


def _g(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def timeseries_csv(result: TimeSeries | LRPrediction, concurrence=None) -> str:
    """CSV text in the fixed time-series schema.

    LR predictions leave the error and sample-count columns empty, and the
    concurrence column too unless ``concurrence`` is given.
    """
    rows = [",".join(CSV_HEADER)]
    if isinstance(result, LRPrediction):
        for k, t in enumerate(result.times):
            c = None if concurrence is None else concurrence[k]
            rows.append(",".join([_g(t), _g(result.purity[k]), "", _g(c), "", ""]))
    else:
        for k, t in enumerate(result.times):
            cm = None if result.concurrence_mean is None else result.concurrence_mean[k]
            cs = None if result.concurrence_stderr is None else result.concurrence_stderr[k]
            rows.append(
                ",".join([_g(t), _g(result.purity_mean[k]), _g(result.purity_stderr[k]), _g(cm), _g(cs), str(result.n_samples)])
            )
    return "\n".join(rows) + "\n"


def emit_timeseries(result, csv_path, manifest: RunManifest, concurrence=None) -> tuple[Path, Path]:
    """Write the CSV and a ``.manifest.json`` next to it."""
    csv_path = Path(csv_path)
    man_path = csv_path.with_suffix(".manifest.json")
    manifest.outputs = [csv_path.name, man_path.name]
    _write_text(csv_path, timeseries_csv(result, concurrence))
    _write_text(man_path, manifest.to_json())
    return csv_path, man_path


def _emit_table(header: Sequence[str], rows, csv_path, manifest: RunManifest) -> tuple[Path, Path]:
    csv_path = Path(csv_path)
    man_path = csv_path.with_suffix(".manifest.json")
    manifest.outputs = [csv_path.name, man_path.name]
    lines = [",".join(header)] + [",".join(_g(v) if not isinstance(v, (int, np.integer)) else str(v) for v in r) for r in rows]
    _write_text(csv_path, "\n".join(lines) + "\n")
    _write_text(man_path, manifest.to_json())
    return csv_path, man_path


def read_timeseries(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    except StopIteration:
        raise ConfigError(f"{path}: empty file") from None
    if header != CSV_HEADER:
        raise ConfigError(f"{path}: unexpected header {','.join(header)}")
    cols = {}
    for i, name in enumerate(CSV_HEADER):
        cols[name] = np.array([float(r[i]) if r[i] != "" else np.nan for r in rows])
    return cols


@dataclass
class CompareReport:
    times: np.ndarray
    residual: np.ndarray
    z: np.ndarray
    max_abs_z: float
    first_invalid_time: float | None

    def render(self) -> str:
        lines = ["t_over_tauH,residual,z"]
        lines += [f"{_g(t)},{_g(r)},{_g(z)}" for t, r, z in zip(self.times, self.residual, self.z)]
        gate = "none" if self.first_invalid_time is None else _g(self.first_invalid_time)
        lines.append(f"# max|z| = {self.max_abs_z:.6g}; first t with 1-P_LR > {VALIDITY_GATE}: {gate}")
        return "\n".join(lines) + "\n"


def compare(lr_path, mc_path, t_max: float | None = None) -> CompareReport:
    """Residuals ``(MC - LR)/stderr`` on a shared time grid.

    ``max_abs_z`` covers times where linear response is valid (and
    ``t <= t_max`` if given). Grids must match exactly.
    """
    lr = read_timeseries(lr_path)
    mc = read_timeseries(mc_path)
    if len(lr["t_over_tauH"]) != len(mc["t_over_tauH"]) or not np.array_equal(lr["t_over_tauH"], mc["t_over_tauH"]):
        raise ConfigError(f"time grids of {lr_path} and {mc_path} differ")
    t = lr["t_over_tauH"]
    res = mc["purity_mean"] - lr["purity_mean"]
    se = mc["purity_stderr"]
    se = np.where(np.isnan(se), 0.0, se)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(res == 0.0, 0.0, res / se)
    decay = 1.0 - lr["purity_mean"]
    invalid = np.nonzero(decay > VALIDITY_GATE)[0]
    first = float(t[invalid[0]]) if invalid.size else None
    sel = decay <= VALIDITY_GATE
    if t_max is not None:
        sel &= t <= t_max
    max_z = float(np.max(np.abs(z[sel]))) if np.any(sel) else 0.0
    return CompareReport(t, res, z, max_z, first)


# ---------------------------------------------------------------- commands


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    plan = run.plan
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be non-negative")
        plan = replace(plan, seed=args.seed)
    if args.ne is not None:
        if args.ne < 2:
            raise ConfigError("--ne: must be >= 2")
        plan = plan.with_config(ne=args.ne)
    if args.lam is not None:
        if args.lam < 0:
            raise ConfigError("--lambda: must be non-negative")
        changes = {"lambda1": args.lam}
        if plan.config.topology in (Topology.SEPARATE, Topology.JOINT):
            changes["lambda2"] = args.lam
        plan = plan.with_config(**changes)
    return replace(run, plan=plan)


def _load(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    return _apply_overrides(parse_config(text), args)


def _cmd_lr(args, run: RunConfig):
    p = run.plan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pred = lr_purity(p.config, p.state, p.times)
    conc = None
    if args.concurrence == "LR":
        conc = concurrence_prediction(pred.purity, "LR")
    elif args.concurrence == "ELR":
        conc = concurrence_prediction(exponentiate(pred.purity, p_infinity(p.config, p.state)), "ELR")
    params = _plan_echo(run) | {"branch": pred.branch.value, "concurrence": args.concurrence}
    return emit_timeseries(pred, Path(args.out) / "lr.csv", RunManifest("lr", params, p.seed), conc)


def _cmd_mc(args, run: RunConfig):
    series = run_average(run.plan)
    return emit_timeseries(series, Path(args.out) / "mc.csv", RunManifest("mc", _plan_echo(run), run.plan.seed))


def _cmd_cp(args, run: RunConfig):
    curve = run_cp_curve(run.plan)
    series = TimeSeries(curve.times, curve.purity, curve.purity_stderr, curve.concurrence, curve.concurrence_stderr, run.plan.n_samples)
    params = _plan_echo(run) | {"cp_distance": cp_distance(curve)}
    return emit_timeseries(series, Path(args.out) / "cp.csv", RunManifest("cp", params, run.plan.seed))


def _cmd_unitality(args, run: RunConfig):
    p = run.plan
    ne_values = run.ne_sweep or (p.config.ne,)
    table = run_unitality(p.config, ne_values, run.t_targets, run.n_realizations, p.seed, p.max_dim)
    rows = []
    for i, ne in enumerate(table.ne):
        for k, t in enumerate(table.times):
            rows.append((int(ne), t, table.distance_mean[i, k], table.distance_stderr[i, k]))
    params = _plan_echo(run) | {"loglog_slope": table.slope() if len(ne_values) > 1 else None}
    header = ("ne", "t_over_tauH", "distance_mean", "distance_stderr")
    return _emit_table(header, rows, Path(args.out) / "unitality.csv", RunManifest("unitality", params, p.seed))


def _cmd_selfavg(args, run: RunConfig):
    p = run.plan
    rep = run_self_averaging(p, run.ne_sweep or None, run.n_gamma)
    rows = []
    for i, ne in enumerate(rep.ne):
        for k, t in enumerate(rep.times):
            sp = (rep.sigma_p[k], rep.sigma_p_stderr[k], rep.sigma_p_prediction[k]) if rep.sigma_p is not None else (None, None, None)
            rows.append((int(ne), t, rep.dispersion[i, k]) + sp)
    header = ("ne", "t_over_tauH", "dispersion", "sigma_p", "sigma_p_stderr", "sigma_p_lr")
    return _emit_table(header, rows, Path(args.out) / "selfavg.csv", RunManifest("selfavg", _plan_echo(run), p.seed))


_COMMANDS = {"lr": _cmd_lr, "mc": _cmd_mc, "cp": _cmd_cp, "unitality": _cmd_unitality, "selfavg": _cmd_selfavg}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmtdeco", description="Qubit decoherence in random-matrix environments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--seed", type=int, help="master seed (overrides [mc] seed)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--ne", type=int, help="environment dimension override")
        sp.add_argument("--lambda", dest="lam", type=float, help="coupling override for every coupled qubit")
        if name == "lr":
            sp.add_argument("--concurrence", choices=["LR", "ELR"], help="also emit a concurrence prediction")
    cmp_ = sub.add_parser("compare")
    cmp_.add_argument("lr_file")
    cmp_.add_argument("mc_file")
    cmp_.add_argument("--t-max", type=float, help="only include times up to this value in max|z|")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "compare":
            sys.stdout.write(compare(args.lr_file, args.mc_file, args.t_max).render())
            return EXIT_OK
        run = _load(args)
        paths = _COMMANDS[args.command](args, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RealizationError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
