"""Command-line entry point.

    randomperiodic <simulate|pullback|curves|lyapunov|verify|oracle> [--config FILE] [flags]

Configuration is merged from built-in defaults, an optional ``key=value``
file and command-line flags, in that order.  Every artifact carries the
merged configuration and its hash; results go to ``--out`` and the main JSON
report is also printed on stdout.  Exit codes: 0 success, 1 a numerical
condition failed, 2 usage or configuration error.  Errors are printed to
stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import importlib.util
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .cocycle import CocycleSystem, ConditionViolation, CylinderPoint
from .example import ExampleSystem, closed_form_series, linearization_average, radial_flow, stationary_rho
from .fixtures import FIXTURES
from .integrate import BlowUpError
from .lyapunov import ContractionFailure, estimate_contraction, lyapunov_exponent, tube_samples
from .noise import GridError, PathDomainError, generate_path, shift, to_cells
from .pullback import DEFAULT_HORIZONS, pullback_curve, pullback_point
from .winding import ExtractionConfig, build_winding_system, extract_curves_report, verify_invariance

SCHEMA_VERSION = 1
SUBCOMMANDS = ("simulate", "pullback", "curves", "lyapunov", "verify", "oracle")
EXAMPLE_TURN_STEPS = 6000  # steps per turn of the example when turns matter


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    seeds: tuple[int, ...] = ()
    dt: float | None = None
    system: str = "example"
    noise_scale: float = 1.0
    horizons: tuple[float, ...] = DEFAULT_HORIZONS
    tolerance: float = 1e-6
    t_max: float = 5.0
    rho0: float = 1.0
    s0: float = 0.0
    shift: float = 2 * math.pi
    time: float = 1000.0
    n0: int = 1
    m_max: int = 60
    cluster_gap_floor: float = 1e-2
    s_resolution: int = 256
    fiber_seed_count: int = 16
    match_tolerance: float = 1e-3
    out: str = "."

    def __post_init__(self):
        positive = ["noise_scale", "tolerance", "t_max", "time", "n0", "m_max", "cluster_gap_floor",
                    "s_resolution", "fiber_seed_count", "match_tolerance"]
        for name in positive:
            if not getattr(self, name) > 0 and not (name == "noise_scale" and self.noise_scale == 0):
                raise UsageError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.dt is not None and not self.dt > 0:
            raise UsageError(f"dt must be positive, got {self.dt!r}")
        if any(h < 0 for h in self.horizons):
            raise UsageError("horizons must be nonnegative")

    def extraction(self) -> ExtractionConfig:
        return ExtractionConfig(self.m_max, self.cluster_gap_floor, self.s_resolution,
                                self.fiber_seed_count, self.match_tolerance)

    def echo(self) -> dict:
        d = asdict(self)
        d["horizons"] = list(self.horizons)
        d["seeds"] = list(self.seeds)
        return d

    def digest(self, command: str) -> str:
        blob = json.dumps({"command": command, **self.echo()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-9"``, ``"1,4,7"`` or a mix of both."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if re.fullmatch(r"\d+-\d+", part):
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


_CONVERTERS = {
    "seeds": _parse_seeds,
    "horizons": _floats,
    "dt": lambda v: None if str(v).lower() in ("", "none", "auto") else float(v),
}


def _convert(name: str, value):
    if name in _CONVERTERS:
        return _CONVERTERS[name](value)
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return str(value)


def read_config_file(fname: str | Path) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        lines = Path(fname).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config file {fname}: {e}") from e
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{fname}:{n}: expected key=value")
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"{fname}:{n}: unknown key {key!r}")
        out[key] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="randomperiodic", description="Random periodic solutions of noisy oscillators.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file; flags override it")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(flag, dest=f.name, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            raw[f.name] = v
    try:
        values = {k: _convert(k, v) for k, v in raw.items()}
    except ValueError as e:
        raise UsageError(f"bad configuration value: {e}") from e
    return RunConfig(**values)


def resolve_system(cfg: RunConfig) -> CocycleSystem:
    if cfg.system == "example":
        return ExampleSystem(cfg.noise_scale)
    if cfg.system in FIXTURES:
        return FIXTURES[cfg.system]()
    path = Path(cfg.system)
    if path.suffix == ".py" and path.exists():
        spec = importlib.util.spec_from_file_location("user_system", path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        if hasattr(module, "make_system"):
            system = module.make_system()
        elif hasattr(module, "SYSTEM"):
            system = module.SYSTEM
        else:
            raise UsageError(f"{path} defines neither make_system() nor SYSTEM")
        if not isinstance(system, CocycleSystem):
            raise UsageError(f"{path} did not provide a CocycleSystem")
        return system
    choices = ", ".join(["example", *FIXTURES])
    raise UsageError(f"unknown system {cfg.system!r}; choose one of {choices} or a .py file")


def default_dt(cfg: RunConfig, system: CocycleSystem, turns_matter: bool) -> float:
    if cfg.dt is not None:
        return cfg.dt
    if isinstance(system, ExampleSystem):
        return 2 * math.pi / EXAMPLE_TURN_STEPS if turns_matter else 1e-3
    if system.rotation_time is not None:
        return system.rotation_time / 256
    return 1e-3


# ----------------------------------------------------------------- outputs


class Outputs:
    def __init__(self, cfg: RunConfig, command: str):
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.hash = cfg.digest(command)
        self.files: list[str] = []

    def name(self, kind: str, ext: str) -> Path:
        stem = self.command if kind == self.command else f"{self.command}_{kind}"
        return self.dir / f"{stem}_{self.hash}.{ext}"

    def csv(self, kind: str, header: list[str], rows) -> Path:
        fname = self.name(kind, "csv")
        with open(fname, "w", newline="") as fh:
            fh.write(f"# schema_version={SCHEMA_VERSION} config_hash={self.hash}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.files.append(str(fname))
        return fname

    def report(self, payload: dict) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.cfg.echo(),
            "config_hash": self.hash,
            **payload,
            "files": [Path(f).name for f in self.files],
        }
        fname = self.name("report", "json")
        text = json.dumps(_jsonable(doc), indent=2, sort_keys=False)
        fname.write_text(text + "\n")
        with open(self.dir / "run.log", "a") as log:
            stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
            log.write(f"{stamp} {self.command} {self.hash} -> {fname.name}\n")
        return doc


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# -------------------------------------------------------------- subcommands


def _initial_state(cfg: RunConfig, system: CocycleSystem) -> CylinderPoint:
    y = np.full(system.dim, cfg.rho0)
    return CylinderPoint(cfg.s0, y)


def cmd_simulate(cfg: RunConfig, out: Outputs) -> dict:
    system = resolve_system(cfg)
    dt = default_dt(cfg, system, False)
    path = system.prepare(generate_path(cfg.seed, 0.0, cfg.t_max, dt), 0.0, cfg.t_max)
    z = _initial_state(cfg, system)
    system.check_state(z.y)
    steps = math.floor(cfg.t_max / dt + 1e-9)
    s, y = np.array([z.s]), z.y[None, :]
    rows = [(0.0, float(s[0]), *y[0])]
    for k in range(steps):
        s, y = system.flow_batch(path, k * dt, (k + 1) * dt, s, y)
        rows.append(((k + 1) * dt, float(s[0]), *y[0]))
    header = ["t", "s_lift"] + [f"y_{i}" for i in range(1, system.dim + 1)]
    out.csv("trajectory", header, rows)
    out.csv("path", ["t", "W"], zip(path.times, path.W))
    return {"system": repr(system), "dt": dt, "steps": steps, "final": {"s_lift": rows[-1][1], "y": list(rows[-1][2:])}}


def cmd_pullback(cfg: RunConfig, out: Outputs) -> dict:
    system = resolve_system(cfg)
    dt = default_dt(cfg, system, False)
    path = generate_path(cfg.seed, 0.0, 0.0, dt)
    horizons = [to_cells(h, dt) * dt for h in cfg.horizons]
    z = _initial_state(cfg, system)
    rep = pullback_point(system, path, z, horizons, cfg.tolerance)
    grid = np.arange(cfg.s_resolution) / cfg.s_resolution
    sample = pullback_curve(system, path, grid, rep.horizons[-1], z.y)
    header = ["s"] + [f"y_{i}" for i in range(1, system.dim + 1)]
    out.csv("curve", header, ([s, *v] for s, v in zip(sample.s_grid, sample.values)))
    payload = {"system": repr(system), "dt": dt, "pullback": rep.as_dict()}
    if isinstance(system, ExampleSystem):
        payload["stationary_rho"] = stationary_rho(path, 30.0, system.noise_scale)
    return payload


def _extract(system, path, cfg):
    ws = build_winding_system(system, path, n0=cfg.n0)
    return ws, extract_curves_report(ws, cfg.extraction())


def _curve_rows(curves):
    for c in curves:
        for s, v in zip(c.s_grid, c.values):
            yield [s, *v, c.curve_id, c.tau]


def cmd_curves(cfg: RunConfig, out: Outputs) -> dict:
    system = resolve_system(cfg)
    dt = default_dt(cfg, system, True)
    path = generate_path(cfg.seed, 0.0, 0.0, dt)
    ws, ex = _extract(system, path, cfg)
    t_star = max(ex.taus) * ws.t1
    later = shift(ws.path, to_cells(t_star, dt) * dt)
    _, ex_later = _extract(system, later, cfg)
    check = verify_invariance(ex.curves, system, later, t_star, reference=ex_later.curves, t1=ws.t1)
    header = ["s"] + [f"y_{i}" for i in range(1, system.dim + 1)] + ["curve_id", "tau"]
    out.csv("curves", header, _curve_rows(ex.curves))
    return {
        "system": repr(system),
        "dt": dt,
        "r": ex.r,
        "taus": ex.taus,
        "t1": ws.t1,
        "period_per_curve": [c.tau * ws.t1 for c in ex.curves],
        "residuals": {
            "closure_gap": [c.closure_gap for c in ex.curves],
            "max_cluster_diameter": ex.max_cluster_diameter,
            "definition_residual": check.curve_residual,
        },
        "lipschitz_estimate": [c.lipschitz_estimate for c in ex.curves],
        "depth": ex.depth,
        "b_star": ex.b_star,
        "lambda_hat": ex.lambda_hat,
    }


def cmd_verify(cfg: RunConfig, out: Outputs) -> dict:
    system = resolve_system(cfg)
    dt = default_dt(cfg, system, True)
    t = round(cfg.shift / dt) * dt  # nearest grid time
    path = generate_path(cfg.seed, 0.0, 0.0, dt)
    ws, ex = _extract(system, path, cfg)
    _, ex_early = _extract(system, shift(ws.path, -t), cfg)
    check = verify_invariance(ex_early.curves, system, ws.path, t, reference=ex.curves, t1=ws.t1)
    payload = {
        "system": repr(system),
        "dt": dt,
        "shift": t,
        "curve_residual": check.curve_residual,
        "tau_match": check.tau_match,
        "r_match": check.r_match,
        "period": check.period,
        "r": [ex_early.r, ex.r],
        "taus": [ex_early.taus, ex.taus],
    }
    ok = check.tau_match and check.r_match and check.curve_residual <= cfg.match_tolerance
    payload["passed"] = ok
    return payload


def cmd_lyapunov(cfg: RunConfig, out: Outputs) -> dict:
    system = resolve_system(cfg)
    dt = default_dt(cfg, system, True)
    seeds = cfg.seeds or tuple(range(10))
    z = _initial_state(cfg, system)
    rows, exps = [], []
    for seed in seeds:
        path = generate_path(seed, 0.0, 0.0, dt)
        ws = build_winding_system(system, path, n0=cfg.n0)
        lam = lyapunov_exponent(ws, z, cfg.time)
        row = [seed, lam]
        if isinstance(system, ExampleSystem):
            row.append(linearization_average(ws.path, cfg.rho0, round(cfg.time / dt) * dt, system.noise_scale))
        rows.append(row)
        exps.append(lam)
    header = ["seed", "exponent"] + (["ergodic_average"] if isinstance(system, ExampleSystem) else [])
    out.csv("exponents", header, rows)
    # contraction data of the period map around the curves of the first seed
    ws, ex = _extract(system, generate_path(seeds[0], 0.0, 0.0, dt), cfg)
    radius = 0.5 * _local_gap(ex) if ex.r > 1 else 0.1
    samples = tube_samples(ex.curves, radius)
    gap = _local_gap(ex) if ex.r > 1 else cfg.cluster_gap_floor
    payload = {"system": repr(system), "dt": dt, "T": round(cfg.time / dt) * dt,
               "exponents": exps, "mean_exponent": float(np.mean(exps))}
    if isinstance(system, ExampleSystem):
        payload["ergodic_average"] = [r[2] for r in rows]
        payload["mean_ergodic_average"] = float(np.mean(payload["ergodic_average"]))
    try:
        rep = estimate_contraction(ws, samples, cfg.n0, b_star=ex.b_star, gap=gap)
    except ContractionFailure as e:
        payload["contraction"] = asdict(e.report)
        out.report(payload)
        raise
    payload["contraction"] = asdict(rep)
    return payload


def _local_gap(ex) -> float:
    vals = [c.values[0] for c in ex.curves]
    return min(float(np.linalg.norm(a - b)) for i, a in enumerate(vals) for b in vals[i + 1 :])


def cmd_oracle(cfg: RunConfig, out: Outputs) -> dict:
    system = resolve_system(cfg)
    if not isinstance(system, ExampleSystem):
        raise UsageError("oracle compares against the closed-form radius and needs --system example")
    dt = default_dt(cfg, system, False)
    path = generate_path(cfg.seed, 0.0, cfg.t_max, dt)
    if cfg.rho0 <= 0:
        raise UsageError("rho0 must be positive")
    t, closed = closed_form_series(path, cfg.t_max, cfg.rho0, system.noise_scale)
    dW = path.window(0.0, t[-1])
    numeric = np.empty_like(closed)
    numeric[0] = cfg.rho0
    x = np.array([cfg.rho0])
    for k in range(len(dW)):
        x, _ = radial_flow(x, dW[k : k + 1], dt, system.noise_scale)
        numeric[k + 1] = x[0]
    err = np.abs(closed - numeric)
    out.csv("oracle", ["t", "rho_closed", "rho_numeric", "abs_err"], zip(t, closed, numeric, err))
    return {"dt": dt, "max_abs_err": float(err.max()), "max_rel_err": float(np.max(err / closed))}


COMMANDS = {
    "simulate": cmd_simulate,
    "pullback": cmd_pullback,
    "curves": cmd_curves,
    "lyapunov": cmd_lyapunov,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
}


def _fail(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"schema_version": SCHEMA_VERSION, "error": kind,
                                 "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def run_subcommand(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"missing subcommand; choose one of {', '.join(SUBCOMMANDS)}")
        cfg = resolve_config(args)
        out = Outputs(cfg, args.command)
        payload = COMMANDS[args.command](cfg, out)
        doc = out.report(payload)
    except UsageError as e:
        return _fail("usage", e, 2)
    except (ConditionViolation, BlowUpError, FloatingPointError) as e:
        return _fail("numerical", e, 1)
    except (GridError, PathDomainError, ValueError) as e:
        return _fail("usage", e, 2)
    sys.stdout.write(json.dumps(_jsonable(doc), indent=2) + "\n")
    if args.command == "verify" and not doc.get("passed", True):
        return 1
    return 0


def main() -> None:
    sys.exit(run_subcommand())
