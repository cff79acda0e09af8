"""Command-line interface: ``tanglebound {tangle,curve,bound,reproduce}``.

Exit codes: 0 success, 2 input error, 3 I/O error, 4 reproduction failure.
Settings are resolved as command-line flag > ``--config`` JSON file > default.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import reproduce
from .bound import (
    BoundProblem,
    OptimizerSettings,
    Status,
    legendre_bound,
    legendre_sweep,
)
from .charcurve import benchmarks, skew_characteristic, tau3_closed_form
from .envelope import SampledCurve, lower_convex_envelope
from .qstate import GHZ, W, PureState, three_tangle

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_REPRO = 0, 2, 3, 4
DEFAULTS = {
    "grid": 200,
    "restarts": None,
    "seed": None,
    "space": None,
    "measure": None,
    "omega": None,
    "trace": False,
    "out": None,
    "format": "csv",
}
SETTINGS_KEYS = ("inner_tolerance", "outer_tolerance", "max_inner_iterations", "r_box")

log = logging.getLogger("tanglebound")


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    inputs: list[str] = field(default_factory=list)
    out: str | None = None
    grid: int = 200
    grid_given: bool = False
    format: str = "csv"
    trace: bool = False
    restarts: int | None = None
    seed: int | None = None
    space: str | None = None
    measure: str | None = None
    omega: float | None = None
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grid < 2:
            raise InputError("grid size must be at least 2")
        if self.format not in ("csv", "json"):
            raise InputError(f"unknown format {self.format!r}")

    def apply(self, settings: OptimizerSettings) -> OptimizerSettings:
        over = dict(self.settings)
        if self.restarts is not None:
            over["restarts"] = self.restarts
        if self.seed is not None:
            over["seed"] = self.seed
        if "r_box" in over:
            over["r_box"] = tuple(over["r_box"])
        try:
            return replace(settings, **over)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad optimizer settings: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for any flag")
    common.add_argument("--out", help="output file (directory for reproduce)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--grid", type=int, default=None, help="number of grid points (default 200)")
    common.add_argument("--restarts", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--space", choices=("full", "symmetric", "span"), default=None)
    common.add_argument("--measure", choices=("tau3", "tau3sq"), default=None)
    common.add_argument("--omega", type=float, default=None)
    common.add_argument("--trace", action="store_true", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tanglebound", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    p = sub.add_parser("tangle", parents=[common], help="three-tangle of a pure state given as JSON")
    p.add_argument("state_file")
    p = sub.add_parser("curve", parents=[common], help="tau3 or tau3^2 along the GHZ/W family")
    p.add_argument("family", choices=("ghzw-tau3", "ghzw-tau3sq"))
    p = sub.add_parser("bound", parents=[common], help="lower bound from a problem JSON file")
    p.add_argument("problem_file")
    p = sub.add_parser("reproduce", parents=[common], help="regenerate a reference figure or table")
    p.add_argument("target", choices=tuple(reproduce.TARGETS))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = dict(DEFAULTS)
    settings = {}
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config file must hold a JSON object")
        for key, value in data.items():
            if key in cfg:
                cfg[key] = value
            elif key in SETTINGS_KEYS:
                settings[key] = value
            else:
                raise InputError(f"unknown config key {key!r}")
    grid_given = args.grid is not None or "grid" in data
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    inputs = [getattr(args, name) for name in ("state_file", "family", "problem_file", "target")
              if getattr(args, name, None) is not None]
    return RunConfig(subcommand=args.subcommand, inputs=inputs, grid_given=grid_given,
                     settings=settings, **cfg)


# -- output helpers --------------------------------------------------------------


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _table(cfg: RunConfig, header: list[str], rows) -> str:
    if cfg.format == "json":
        recs = [dict(zip(header, (float(v) for v in row))) for row in rows]
        return json.dumps(recs, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(reproduce.fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _read_json(path: str):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc


# -- subcommands -------------------------------------------------------------------


def cmd_tangle(cfg: RunConfig) -> int:
    data = _read_json(cfg.inputs[0])
    try:
        state = PureState.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid state: {exc}") from exc
    tb = three_tangle(state)
    f = reproduce.fmt
    if cfg.format == "json":
        text = json.dumps({"tau3": tb.tau3, "tau3_sq": tb.tau3_sq, "d1": [tb.d1.real, tb.d1.imag],
                           "d2": [tb.d2.real, tb.d2.imag], "d3": [tb.d3.real, tb.d3.imag]}) + "\n"
    else:
        text = (
            f"tau3 = {f(tb.tau3)}\n"
            f"tau3_sq = {f(tb.tau3_sq)}\n"
            f"d1 = {f(tb.d1.real)} {f(tb.d1.imag)}j\n"
            f"d2 = {f(tb.d2.real)} {f(tb.d2.imag)}j\n"
            f"d3 = {f(tb.d3.real)} {f(tb.d3.imag)}j\n"
        )
    _emit(cfg, text)
    return EXIT_OK


def cmd_curve(cfg: RunConfig) -> int:
    """tau3(q, 0) on a q-grid, or with --omega the skew-witness minimum on a p-grid."""
    squared = cfg.inputs[0] == "ghzw-tau3sq"
    if cfg.omega is None:
        b = benchmarks()
        xs = np.unique(np.concatenate([np.linspace(0.0, 1.0, cfg.grid), [b.q0, b.q1]]))
        vals = tau3_closed_form(xs)
        vals = vals**2 if squared else vals
        header = ["q", "value", "envelope"]
    else:
        xs = np.linspace(0.0, 1.0, cfg.grid)
        vals = np.array([skew_characteristic(p, cfg.omega, squared=squared) for p in xs])
        header = ["p", "value", "envelope"]
    env = lower_convex_envelope(SampledCurve(xs, vals))
    _emit(cfg, _table(cfg, header, zip(xs, vals, env(xs))))
    return EXIT_OK


def _load_problem(cfg: RunConfig) -> BoundProblem:
    data = _read_json(cfg.inputs[0])
    if not isinstance(data, dict):
        raise InputError("problem file must hold a JSON object")
    if cfg.space is not None:
        if cfg.space == "span":
            if not isinstance(data.get("space"), dict):
                data["space"] = {"span": [GHZ.to_json(), W.to_json()]}
        else:
            data["space"] = cfg.space
    if cfg.measure is not None:
        data["measure"] = cfg.measure
    try:
        prob = BoundProblem.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid problem: {exc}") from exc
    prob = replace(prob, settings=cfg.apply(prob.settings))
    for k, (w, op) in enumerate(zip(prob.measured, prob.witnesses)):
        vals = np.linalg.eigvalsh(prob.space.reduce(op))
        if not vals[0] - 1e-9 <= w <= vals[-1] + 1e-9:
            raise InputError(f"measured value {w} of witness {k} outside attainable range "
                             f"[{vals[0]:.6g}, {vals[-1]:.6g}]")
    return prob


def _result_json(res, cfg: RunConfig) -> dict:
    return res.to_json(include_trace=cfg.trace)


def cmd_bound(cfg: RunConfig) -> int:
    prob = _load_problem(cfg)
    if not cfg.grid_given:
        res = legendre_bound(prob)
        if res.status is Status.MAX_ITER:
            log.warning("inner search hit the iteration cap; bound reported with status MAX_ITER")
        _emit(cfg, json.dumps(_result_json(res, cfg), indent=1) + "\n")
        return EXIT_OK

    vals = np.linalg.eigvalsh(prob.space.reduce(prob.witnesses[0]))
    ws = np.linspace(vals[0], vals[-1], cfg.grid)
    if prob.K == 1:
        results = legendre_sweep(prob, ws)
    else:
        results = [legendre_bound(prob.with_measured((w,) + prob.measured[1:])) for w in ws]
    if cfg.format == "json":
        recs = [{"w": float(w), **_result_json(r, cfg)} for w, r in zip(ws, results)]
        _emit(cfg, json.dumps(recs, indent=1) + "\n")
    else:
        _emit(cfg, _table(cfg, ["w", "epsilon"], [(w, r.epsilon) for w, r in zip(ws, results)]))
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig) -> int:
    target = cfg.inputs[0]
    out = Path(cfg.out or f"reproduce-{target}")
    out.mkdir(parents=True, exist_ok=True)
    settings = cfg.apply(OptimizerSettings())
    grid = cfg.grid if cfg.grid_given else (DEFAULTS["grid"] if target == "fig1" else reproduce.DEFAULT_GRID)
    try:
        checks = reproduce.TARGETS[target](out, grid, settings)
    except (ArithmeticError, ValueError, RuntimeError) as exc:  # keep partial outputs, report the failure
        print(f"FAIL {target}: {type(exc).__name__}: {exc}")
        return EXIT_REPRO
    lines = [c.line() for c in checks]
    n_pass = sum(c.passed for c in checks)
    lines.append(f"{target}: {n_pass}/{len(checks)} checks passed")
    (out / f"{target}_summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if n_pass == len(checks) else EXIT_REPRO


COMMANDS = {"tangle": cmd_tangle, "curve": cmd_curve, "bound": cmd_bound, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.subcommand](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
