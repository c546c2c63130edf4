"""Command-line entry point.

Subcommands: ``examples``, ``map``, ``grid``, ``verify``.
Exit codes: 0 success, 1 verification checks failed, 2 configuration
error, 3 spectral rejection, 4 output write failure.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, HGError, SpectralRejection
from .field_model import builtin_examples
from .runner import (RunConfig, build_map, evaluate_grid, evaluate_point, format_csv,
                     grid_points, load_config_file, run_suite)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_SPECTRAL = 3
EXIT_WRITE = 4

_RUN_KEYS = ("system", "mode", "cutoff", "M", "eps", "quad_tol", "flow_tol", "t_max", "seed",
             "stable_direction", "unstable_direction", "samples")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with any of the options below; flags override it")
    p.add_argument("--system", help="builtin name or path to a polynomial field JSON file")
    p.add_argument("--mode", choices=["local", "global"])
    p.add_argument("--cutoff", choices=["ball", "threshold", "none"])
    p.add_argument("--M", type=float, dest="M")
    p.add_argument("--eps", type=float)
    p.add_argument("--quad-tol", type=float, dest="quad_tol")
    p.add_argument("--flow-tol", type=float, dest="flow_tol")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--seed", type=int)
    p.add_argument("--stable-direction", choices=["forward", "backward"], dest="stable_direction")
    p.add_argument("--unstable-direction", choices=["forward", "backward"],
                   dest="unstable_direction")
    p.add_argument("--out", help="output file")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hgconj", description="Numerical linearizing conjugacies near "
                     "hyperbolic equilibria.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("examples", help="list builtin systems")

    p = sub.add_parser("map", help="evaluate H at points")
    _add_run_flags(p)
    p.add_argument("--point", action="append", default=[],
                   help="comma-separated coordinates; repeatable")

    p = sub.add_parser("grid", help="evaluate H on a grid and write CSV")
    _add_run_flags(p)
    p.add_argument("--box", help="lo,hi pairs per dimension (one pair applies to all)")
    p.add_argument("--steps", help="points per axis, one value or one per dimension")

    p = sub.add_parser("verify", help="run the verification suite and write a JSON report")
    _add_run_flags(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--timing", action="store_true", help="include wall time in the JSON report")
    return parser


def _run_config(args: argparse.Namespace) -> tuple[RunConfig, dict]:
    data = load_config_file(args.config) if args.config else {}
    data = {k.replace("-", "_"): v for k, v in data.items()}
    for key in _RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    try:
        cfg = RunConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, data


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} {text!r}") from exc
    if not vals or not all(np.isfinite(vals)):
        raise ConfigError(f"{what} must hold finite numbers")
    return vals


def _fmt(v) -> str:
    return ",".join(format(float(u), ".17g") for u in np.ravel(v))


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise _WriteError(str(exc)) from exc


class _WriteError(Exception):
    pass


def cmd_examples() -> int:
    for ex in builtin_examples():
        oracles = ",".join(ex.oracles) or "-"
        roa = ex.roa_descriptor or "-"
        print(f"{ex.name}\tdim={ex.field.dim}\toracles={oracles}\troa={roa}")
    return EXIT_OK


def cmd_map(args, cfg: RunConfig, data: dict) -> int:
    points = args.point or data.get("point") or []
    if isinstance(points, str):
        points = [points]
    ctx, rc, _ = build_map(cfg)
    n = ctx.field.dim
    parsed = []
    for text in points:
        x = _parse_floats(text, "point")
        if len(x) != n:
            raise ConfigError(f"point {text!r} has {len(x)} coordinates, system has {n}")
        parsed.append(np.array(x))
    lines = []
    for x in parsed:
        y, status, msg = evaluate_point(ctx, x)
        line = f"x={_fmt(x)} y={_fmt(y)} status={status}"
        if msg:
            line += f" error={msg}"
        lines.append(line)
    _write(args.out, "\n".join(lines) + ("\n" if lines else ""))
    return EXIT_OK


def cmd_grid(args, cfg: RunConfig, data: dict) -> int:
    ctx, rc, _ = build_map(cfg)
    n = ctx.field.dim
    box_text = args.box if args.box is not None else data.get("box")
    steps_text = args.steps if args.steps is not None else data.get("steps")
    if box_text is None or steps_text is None:
        raise ConfigError("grid needs --box and --steps")
    if isinstance(box_text, (list, tuple)):
        box_text = ",".join(str(v) for v in np.ravel(box_text))
    vals = _parse_floats(box_text, "box")
    if len(vals) == 2:
        vals = vals * n
    if len(vals) != 2 * n:
        raise ConfigError(f"box needs 2 or {2 * n} numbers, got {len(vals)}")
    box = [(vals[2 * i], vals[2 * i + 1]) for i in range(n)]
    steps = [int(v) for v in _parse_floats(str(steps_text).strip("[]"), "steps")]
    rows = evaluate_grid(ctx, grid_points(box, steps))
    _write(args.out, format_csv(rows, n))
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig, data: dict) -> int:
    report = run_suite(cfg)
    text = report.to_json(include_wall_time=args.timing)
    if args.out is not None:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    print(report.summary(), file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK if report.passed else EXIT_CHECKS_FAILED


_VALUE_FLAGS = ("--box", "--point", "--steps")


def _glue_negative_values(argv: Sequence[str]) -> list[str]:
    # "--box -3,3" would otherwise be read as an unknown option
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is None:
                out.append(tok)
            else:
                out.append(f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(_glue_negative_values(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        # usage errors and --help end here; hand the code back instead of exiting
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    if args.command == "examples":
        return cmd_examples()
    try:
        cfg, data = _run_config(args)
        handler = {"map": cmd_map, "grid": cmd_grid, "verify": cmd_verify}[args.command]
        return handler(args, cfg, data)
    except SpectralRejection as exc:
        print(f"hgconj: spectral rejection: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SPECTRAL
    except _WriteError as exc:
        print(f"hgconj: cannot write output: {exc}", file=sys.stderr)
        return EXIT_WRITE
    except (ConfigError, HGError) as exc:
        print(f"hgconj: configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
