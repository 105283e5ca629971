"""Command-line front end.

Parameter files are line-oriented ``key = value`` text with ``#`` comments.
Model keys left out take the simulation baseline, except the four varied
parameters (hunting_rate, anthropisation, human_boost, immigration), which
must always be given.  ``alpha``, ``beta`` and ``lambda`` are accepted as
short names for anthropisation, human_boost and hunting_rate.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import analysis, equilibria
from .integrate import IntegrationConfig, IntegrationError, integrate
from .model import (
    Formulation,
    ModelParams,
    ParameterError,
    StateDomainError,
    from_compet,
    region_bounds,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3

REQUIRED = ("hunting_rate", "anthropisation", "human_boost", "immigration")
MODEL_KEYS = tuple(f.name for f in fields(ModelParams))
ALIASES = {"alpha": "anthropisation", "beta": "human_boost", "lambda": "hunting_rate"}
INTEGRATION_KEYS = ("rel_tol", "abs_tol", "max_steps", "min_step", "record_stride")
OPTION_KEYS = (
    "horizon",
    "grid",
    "lambda_range",
    "alpha_range",
    "beta_fraction",
    "eps_list",
    "initial_state",
    "formulation",
    "seed",
    "out",
)
INT_KEYS = {"max_steps", "record_stride", "seed"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    integration: IntegrationConfig
    grid: tuple = (50, 50)
    lambda_range: tuple = (0.001, 0.05)
    alpha_range: tuple = (0.0, 0.99)
    beta_fraction: float | None = None
    eps_list: tuple = (0.01, 0.001, 0.0001)
    initial_state: tuple | None = None
    formulation: Formulation = Formulation.FULL
    seed: int | None = None
    out: str | None = None

    @property
    def horizon(self) -> float:
        return self.integration.t_end

    def __post_init__(self):
        if len(self.grid) != 2 or min(self.grid) < 2:
            raise ConfigError(f"grid resolution must be at least 2 per axis, got {self.grid!r}")


# ---------------------------------------------------------------------------
# parsing


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def _floats(text: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split()]
    if not parts:
        raise ValueError("empty list")
    return tuple(_float(p) for p in parts)


def _grid(text: str) -> tuple:
    parts = text.lower().replace(" ", "").split("x")
    if len(parts) != 2:
        raise ValueError(f"grid must look like NxM, got {text!r}")
    return int(parts[0]), int(parts[1])


def _pair(text: str) -> tuple:
    v = _floats(text)
    if len(v) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return v


def _convert(key: str, raw: str):
    if key in INT_KEYS:
        return int(raw)
    if key == "grid":
        return _grid(raw)
    if key in ("lambda_range", "alpha_range"):
        return _pair(raw)
    if key in ("eps_list", "initial_state"):
        return _floats(raw)
    if key == "formulation":
        return Formulation(raw.strip().lower())
    if key == "out":
        return raw.strip()
    if key == "beta_fraction" and raw.strip().lower() == "none":
        return None
    return _float(raw)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` text into a validated RunConfig.

    ``overrides`` (canonical key -> value) replace file values, as the CLI
    flags do.  Errors carry the offending line number when there is one.
    """
    values: dict = {}
    lines: dict = {}
    for no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", no)
        key, raw = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in MODEL_KEYS and key not in INTEGRATION_KEYS and key not in OPTION_KEYS:
            raise ConfigError(f"unknown key {key!r}", no)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", no)
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {key!r}: {exc}", no) from None
        lines[key] = no
    for key, v in (overrides or {}).items():
        if v is not None:
            values[ALIASES.get(key, key)] = v
            lines.pop(ALIASES.get(key, key), None)
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))

    model = {k: values[k] for k in MODEL_KEYS if k in values}
    try:
        params = ModelParams(**model)
    except ParameterError as exc:
        key = str(exc).split(" ", 1)[0]
        raise ConfigError(str(exc), lines.get(key)) from None
    integ = {k: values[k] for k in INTEGRATION_KEYS if k in values}
    try:
        integration = IntegrationConfig(t_end=values.get("horizon", 1000.0), **integ)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    opts = {k: values[k] for k in OPTION_KEYS if k in values and k != "horizon"}
    try:
        cfg = RunConfig(params=params, integration=integration, **opts)
    except ConfigError:
        raise
    if cfg.initial_state is not None and len(cfg.initial_state) != cfg.formulation.dim:
        raise ConfigError(
            f"initial_state needs {cfg.formulation.dim} values for {cfg.formulation.value}",
            lines.get("initial_state"),
        )
    return cfg


def render(cfg: RunConfig) -> str:
    """Configuration text that ``parse_config`` reads back to an equal RunConfig."""
    out = ["# model parameters"]
    for k in MODEL_KEYS:
        out.append(f"{k} = {getattr(cfg.params, k)!r}")
    out.append("# integration")
    out.append(f"horizon = {cfg.integration.t_end!r}")
    for k in INTEGRATION_KEYS:
        out.append(f"{k} = {getattr(cfg.integration, k)!r}")
    out.append("# options")
    out.append(f"grid = {cfg.grid[0]}x{cfg.grid[1]}")
    out.append("lambda_range = " + ", ".join(repr(float(x)) for x in cfg.lambda_range))
    out.append("alpha_range = " + ", ".join(repr(float(x)) for x in cfg.alpha_range))
    out.append(f"beta_fraction = {cfg.beta_fraction!r}")
    out.append("eps_list = " + ", ".join(repr(float(x)) for x in cfg.eps_list))
    if cfg.initial_state is not None:
        out.append("initial_state = " + ", ".join(repr(float(x)) for x in cfg.initial_state))
    out.append(f"formulation = {cfg.formulation.value}")
    if cfg.seed is not None:
        out.append(f"seed = {cfg.seed}")
    if cfg.out is not None:
        out.append(f"out = {cfg.out}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands


def fmt(x) -> str:
    """Locale-free 17-significant-digit formatting."""
    if x is None:
        return ""
    return format(float(x), ".17g")


def _initial_state(cfg: RunConfig) -> np.ndarray:
    p = cfg.params
    if cfg.initial_state is not None:
        return np.asarray(cfg.initial_state, dtype=float)
    b = region_bounds(p)
    if cfg.seed is not None:
        rng = np.random.default_rng(cfg.seed)
        while True:
            y = rng.uniform(0, 1, 3) * np.array([b.s_max, b.fauna_max, b.h_wild_max])
            if y[0] + p.diet_fraction * y[1] <= b.s_max:
                break
    else:
        y = np.array([100.0, 0.5 * b.fauna_max, 100.0 * p.m])
    if cfg.formulation is Formulation.REDUCED:
        return y[:2]
    if cfg.formulation is Formulation.COMPET:
        return y * np.array([1.0, -1.0, -1.0])
    return y


def cmd_thresholds(cfg: RunConfig, out) -> None:
    th = equilibria.thresholds(cfg.params)
    for f in fields(th):
        v = getattr(th, f.name)
        if v is not None:
            out.write(f"{f.name} = {fmt(v)}\n")


def cmd_equilibria(cfg: RunConfig, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["kind", "H_D", "F_W", "H_W", "stability", "a2", "a1", "a0"])
    for eq in equilibria.equilibria_all(cfg.params):
        w.writerow([eq.kind.value, *map(fmt, eq.state), eq.local_stability.value, *map(fmt, eq.eigen_summary)])


def cmd_classify(cfg: RunConfig, out) -> None:
    oc = analysis.classify(cfg.params)
    out.write(f"{oc.verdict.label}\n")
    out.write(f"verdict = {oc.verdict.value}\n")
    out.write(f"n_threshold = {fmt(oc.thresholds.n_threshold)}\n")
    if oc.thresholds.delta_stab is not None:
        out.write(f"delta_stab = {fmt(oc.thresholds.delta_stab)}\n")
    if oc.reason:
        out.write(f"reason = {oc.reason}\n")


def cmd_simulate(cfg: RunConfig, out) -> None:
    traj = integrate(cfg.params, cfg.formulation, _initial_state(cfg), cfg.integration)
    w = csv.writer(out, lineterminator="\n")
    states = traj.states
    if cfg.formulation is Formulation.REDUCED:
        w.writerow(["t", "H_D", "F_W"])
    else:
        w.writerow(["t", "H_D", "F_W", "H_W"])
        if cfg.formulation is Formulation.COMPET:
            states = states * np.array([1.0, -1.0, -1.0]) + 0.0
    for t, y in zip(traj.times, states):
        w.writerow([fmt(t), *map(fmt, y)])


def cmd_bifurcate(cfg: RunConfig, out) -> None:
    grid = analysis.bifurcation_grid(cfg.params, cfg.lambda_range, cfg.alpha_range, cfg.grid, cfg.beta_fraction)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["lambda_F", "alpha", "N", "delta_stab", "verdict"])
    for c in grid.cells:
        ds = "" if math.isnan(c.delta_stab) else fmt(c.delta_stab)
        n = "" if math.isnan(c.n_threshold) else fmt(c.n_threshold)
        w.writerow([fmt(c.lambda_f), fmt(c.alpha), n, ds, c.verdict.value])


def cmd_qssa(cfg: RunConfig, out) -> None:
    y0 = cfg.initial_state
    if y0 is None:
        y0 = _initial_state(replace(cfg, formulation=Formulation.FULL))
    gaps = analysis.qssa_compare(cfg.params, cfg.eps_list, y0, cfg.horizon, config=cfg.integration)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["epsilon", "sup_gap_HD", "sup_gap_FW", "sup_gap_HW"])
    for g in gaps:
        w.writerow([fmt(g.epsilon), fmt(g.sup_gap_hd), fmt(g.sup_gap_fw), fmt(g.sup_gap_hw)])


COMMANDS = {
    "thresholds": cmd_thresholds,
    "equilibria": cmd_equilibria,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "bifurcate": cmd_bifurcate,
    "qssa-compare": cmd_qssa,
}


def run(subcommand: str, cfg: RunConfig, stdout=None) -> int:
    """Run one subcommand; output goes to cfg.out when set, else ``stdout``."""
    stdout = stdout or sys.stdout
    buf = io.StringIO()
    try:
        COMMANDS[subcommand](cfg, buf)
    except (ParameterError, StateDomainError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrationError, ArithmeticError, equilibria.NoCoexistenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.out:
        try:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            print(f"error: cannot write {cfg.out}: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    else:
        stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecodyn", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="parameter file (key = value lines)")
    ap.add_argument("--out", help="write output here instead of stdout")
    ap.add_argument("--lambda", dest="hunting_rate", type=float)
    ap.add_argument("--alpha", dest="anthropisation", type=float)
    ap.add_argument("--immigration", type=float)
    ap.add_argument("--beta", dest="human_boost", type=float)
    ap.add_argument("--grid", type=_grid, help="resolution NxM (hunting rate x anthropisation)")
    ap.add_argument("--eps-list", dest="eps_list", type=_floats, help="comma-separated epsilon values")
    ap.add_argument("--horizon", type=float, help="integration horizon in years")
    ap.add_argument("--seed", type=int, help="seed for a random initial state in the invariant region")
    ap.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    overrides = {
        k: getattr(args, k)
        for k in ("hunting_rate", "anthropisation", "human_boost", "immigration", "grid", "eps_list", "horizon", "seed", "out")
    }
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.dump_config:
        sys.stdout.write(render(cfg))
        return EXIT_OK
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
