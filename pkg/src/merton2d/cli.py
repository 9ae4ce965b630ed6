"""Command-line interface.

Subcommands:

* ``price``          march one scheme and print the price at a spot pair
* ``temporal-study`` time-discretization error sweep over N
* ``total-study``    combined error sweep over grid sizes m
* ``reference``      dump a finely stepped reference solution on the ROI

A flat key=value file passed via --config supplies defaults for any flag
(keys match the long flag names without dashes); explicit flags win.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .analytic import mc_reference_price
from .harness import (
    ErrorReport,
    ExperimentConfig,
    ReferenceKind,
    ReportRow,
    build_context,
    emit_report,
    price,
    run_scheme,
    temporal_error_study,
    total_error_study,
)
from .model import PayoffKind, SetId, parameter_set
from .stepping import Scheme

__all__ = ["main"]

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_NUMERICAL = 3

_ALL_SCHEMES = ",".join(s.value for s in Scheme)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--set", dest="set_id", type=int, choices=(1, 2, 3), default=None,
                   help="benchmark parameter set")
    p.add_argument("--payoff", choices=("min", "avg"), default=None,
                   help="put-on-the-min or put-on-the-average")
    p.add_argument("--m", type=int, default=None, help="grid cells per direction")
    p.add_argument("--n-list", default=None,
                   help="comma-separated base step counts N")
    p.add_argument("--schemes", default=None,
                   help=f"comma-separated scheme names (default: all of {_ALL_SCHEMES})")
    p.add_argument("--out-dir", default=None, help="directory for CSV/SVG output")
    p.add_argument("--seed", type=int, default=None,
                   help="Monte Carlo oracle seed (price subcommand only)")
    p.add_argument("--config", default=None,
                   help="flat key=value file mirroring the flags")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="merton2d",
        description="Two-asset jump-diffusion option pricer and convergence studies")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="price at a single spot pair")
    _add_common(p)
    p.add_argument("--s1", type=float, default=None, help="spot of asset 1 (default K)")
    p.add_argument("--s2", type=float, default=None, help="spot of asset 2 (default K)")
    p.add_argument("--n", type=int, default=None, help="time steps (default 100)")
    p.add_argument("--mc-paths", type=int, default=None,
                   help="also print a Monte Carlo estimate with this many paths")

    p = sub.add_parser("temporal-study", help="temporal error sweep over N")
    _add_common(p)
    p.add_argument("--reference-steps", type=int, default=None,
                   help="MCS2 reference step count (default 3000)")

    p = sub.add_parser("total-study", help="total error sweep over grid sizes")
    _add_common(p)
    p.add_argument("--m-list", default=None, help="comma-separated grid sizes m")

    p = sub.add_parser("reference", help="dump a reference solution on the ROI")
    _add_common(p)
    p.add_argument("--reference-steps", type=int, default=None)
    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill unset (None) options from the key=value configuration file."""
    if args.config is None:
        return
    path = Path(args.config)
    if not path.is_file():
        raise ValueError(f"config file not found: {path}")
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        dest = key.strip().replace("-", "_")
        if dest in ("set", "set_id"):
            dest = "set_id"
        if not hasattr(args, dest):
            raise ValueError(f"{path}:{lineno}: unknown option {key.strip()!r}")
        if getattr(args, dest) is None:
            cur_default = None
            typed: object = value.strip()
            if dest in ("set_id", "m", "n", "seed", "reference_steps", "mc_paths"):
                typed = int(typed)
            elif dest in ("s1", "s2"):
                typed = float(typed)
            setattr(args, dest, typed if typed != cur_default else None)


def _parse_int_list(text: str | None, flag: str) -> tuple[int, ...]:
    if not text:
        raise ValueError(f"{flag} is required")
    try:
        values = tuple(int(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise ValueError(f"bad {flag}: {text!r}") from exc
    if not values:
        raise ValueError(f"{flag} is empty")
    return values


def _parse_schemes(text: str | None) -> tuple[Scheme, ...]:
    if not text:
        return tuple(Scheme)
    try:
        return tuple(Scheme(tok.strip().lower()) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise ValueError(f"unknown scheme in {text!r}") from exc


def _resolve(args: argparse.Namespace) -> None:
    _apply_config_file(args)
    if args.set_id is None:
        raise ValueError("--set is required")
    args.set_id = SetId(int(args.set_id))
    args.payoff_kind = PayoffKind(args.payoff if args.payoff is not None else "min")
    args.scheme_list = _parse_schemes(args.schemes)


def _cmd_price(args: argparse.Namespace) -> int:
    _resolve(args)
    pset = parameter_set(args.set_id, args.payoff_kind)
    m = args.m if args.m is not None else 75
    n = args.n if args.n is not None else 100
    scheme = args.scheme_list[0]
    s1 = args.s1 if args.s1 is not None else pset.option.K
    s2 = args.s2 if args.s2 is not None else pset.option.K
    value = price(args.set_id, args.payoff_kind, m, n, scheme, s1, s2)
    print(f"price[{scheme.value}, set {args.set_id.value}, "
          f"{args.payoff_kind.value}, m={m}, N={n}] "
          f"({s1:g}, {s2:g}) = {value:.6f}")
    if args.mc_paths:
        seed = args.seed if args.seed is not None else 0
        est, se = mc_reference_price(pset.params, pset.option, s1, s2,
                                     args.mc_paths, seed)
        print(f"monte-carlo ({args.mc_paths} paths, seed {seed}) = "
              f"{est:.6f} +/- {se:.6f}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "price.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["set", "payoff", "scheme", "m", "N", "s1", "s2", "price"])
            w.writerow([args.set_id.value, args.payoff_kind.value, scheme.value,
                        m, n, s1, s2, format(value, ".12g")])
    return EXIT_OK


def _cmd_temporal(args: argparse.Namespace) -> int:
    _resolve(args)
    config = ExperimentConfig(
        set_id=args.set_id, payoff_kind=args.payoff_kind,
        schemes=args.scheme_list,
        m=args.m if args.m is not None else 75,
        n_list=_parse_int_list(args.n_list, "--n-list"),
        reference=ReferenceKind.MCS2,
        reference_steps=args.reference_steps if args.reference_steps is not None else 3000,
    )
    report = temporal_error_study(config)
    out_dir = args.out_dir if args.out_dir is not None else "."
    name = f"temporal_set{config.set_id.value}_{config.payoff_kind.value}_m{config.m}"
    csv_path, svg_path = emit_report(report, out_dir, name)
    print(f"wrote {csv_path}\nwrote {svg_path}")
    return EXIT_OK


def _cmd_total(args: argparse.Namespace) -> int:
    _resolve(args)
    if args.payoff_kind is not PayoffKind.PUT_ON_MIN:
        raise ValueError("total-study supports the put-on-the-min payoff only")
    config = ExperimentConfig(
        set_id=args.set_id, payoff_kind=args.payoff_kind,
        schemes=args.scheme_list,
        m_list=_parse_int_list(args.m_list, "--m-list"),
        reference=ReferenceKind.ANALYTIC,
    )
    report = total_error_study(config)
    out_dir = args.out_dir if args.out_dir is not None else "."
    name = f"total_set{config.set_id.value}_{config.payoff_kind.value}"
    csv_path, svg_path = emit_report(report, out_dir, name)
    print(f"wrote {csv_path}\nwrote {svg_path}")
    return EXIT_OK


def _cmd_reference(args: argparse.Namespace) -> int:
    _resolve(args)
    m = args.m if args.m is not None else 75
    steps = args.reference_steps if args.reference_steps is not None else 3000
    ctx = build_context(args.set_id, args.payoff_kind, m)
    v = run_scheme(ctx, Scheme.MCS2, steps)
    roi = ctx.roi
    grid = ctx.grid
    s1 = np.broadcast_to(grid.nodes1[None, :], (grid.m2 + 1, grid.m1 + 1)).ravel()
    s2 = np.broadcast_to(grid.nodes2[:, None], (grid.m2 + 1, grid.m1 + 1)).ravel()
    out = Path(args.out_dir if args.out_dir is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"reference_set{args.set_id.value}_{args.payoff_kind.value}_m{m}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s1", "s2", "value"])
        for a, b, val in zip(s1[roi], s2[roi], v[roi]):
            w.writerow([format(a, ".12g"), format(b, ".12g"), format(val, ".12g")])
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "price": _cmd_price,
    "temporal-study": _cmd_temporal,
    "total-study": _cmd_total,
    "reference": _cmd_reference,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
