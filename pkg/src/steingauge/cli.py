"""Command-line interface.

Subcommands:

* ``bounds --config c.toml``  -- run the experiment, print the per-n table
* ``rates --config c.toml``   -- run the experiment, print the slope fits
* ``verify [--battery ...]``  -- run the verification batteries
* ``stein --h sin --delta 0.5 [--L 8 --grid 4001 --out f.csv]``
                              -- solve the equation, dump the grid as CSV

Exit status is nonzero exactly when a contract fails: a soundness
sandwich, a battery violation, or a solver smoothness check.
"""

from __future__ import annotations

import argparse
import sys

from . import harness, stein
from .errors import SteinGaugeError

_STEIN_ALIASES = {
    "x": "identity",
    "sin": "sine",
    "sin2": "fast_sine",
    "cos": "cosine",
    "ramp": "smooth_ramp",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steingauge",
        description="normal-approximation bounds and their empirical sandwiches",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, blurb in (
        ("bounds", "evaluate bounds and distances over the configured grid"),
        ("rates", "fit and print log-log convergence rates"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="TOML experiment config")

    v = sub.add_parser("verify", help="run the verification batteries")
    v.add_argument(
        "--battery", choices=("inequalities", "covariance", "stein"),
        default=None, help="run one battery (default: all)",
    )
    v.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("stein", help="solve the equation for one test function")
    s.add_argument("--h", dest="h_name", default="sin",
                   help="battery function (x, sin, sin2, cos, tanh, ramp)")
    s.add_argument("--delta", type=float, default=0.5,
                   help="smoothness exponent for the ratio checks")
    s.add_argument("--L", type=float, default=8.0, help="grid half-width")
    s.add_argument("--grid", type=int, default=4001, help="grid size (odd)")
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    return parser


def _run_experiment_command(args, print_rates: bool) -> int:
    config = harness.load_config(args.config)
    result = harness.run_experiment(config)
    if print_rates:
        for name, fit in result.rate_fits.items():
            if fit is None:
                print(f"{name}: no fit (needs >= 4 positive points)")
            else:
                print(f"{name}: slope {fit.slope:+.4f}"
                      f" intercept {fit.intercept:+.4f}"
                      f" max residual {fit.max_abs_residual:.2e}")
    else:
        for n, rep, w1, d2l in zip(config.n_grid, result.reports,
                                   result.w1, result.d2):
            print(f"n={n}: {config.bound}={rep.total:.6g}"
                  f" w1={w1.value:.6g} (se {w1.resample_std_error:.2g})"
                  f" d2_lower={d2l.value:.6g} (se {d2l.resample_std_error:.2g})")
    for message in result.violations:
        print(f"VIOLATION {message}", file=sys.stderr)
    print(f"artifacts written to {result.output_dir}")
    return 1 if result.violations else 0


def _run_verify(args) -> int:
    selected = args.battery
    reports = []
    if selected in (None, "inequalities"):
        reports.append(harness.inequality_battery(seed=args.seed))
    if selected in (None, "covariance"):
        reports.append(harness.identity_battery(seed=args.seed))
    if selected in (None, "stein"):
        reports.append(harness.stein_battery())
    failed = False
    for report in reports:
        print(report.summary())
        for note in report.notes:
            print(f"  {note}")
        failed = failed or not report.ok
    return 1 if failed else 0


def _run_stein(args) -> int:
    name = _STEIN_ALIASES.get(args.h_name, args.h_name)
    matches = [tf for tf in stein.battery() if tf.label == name]
    if not matches:
        print(f"unknown test function {args.h_name!r};"
              f" aliases: {', '.join(sorted(_STEIN_ALIASES))}", file=sys.stderr)
        return 2
    tf = matches[0]
    sol = stein.solve(tf, half_width=args.L, grid_size=args.grid)
    first = stein.holder_check_first(sol, args.delta)
    second = (stein.holder_check_second(sol, args.delta)
              if sol.f_third is not None else None)
    header = ["grid", "f", "f_prime", "f_second"]
    if sol.f_third is not None:
        header.append("f_third")
    lines = [
        f"# h={tf.label} delta={args.delta:g} L={args.L:g} grid={args.grid}",
        f"# eh_normal={sol.eh_normal:.17g}",
        f"# residual={sol.residual:.6e} (tolerance {sol.tolerance:g})",
        f"# holder_first={first:.6f}",
    ]
    if second is not None:
        lines.append(f"# holder_second={second:.6f}")
    lines.append(",".join(header))
    for row in sol.to_rows():
        lines.append(",".join(format(v, ".17g") for v in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    bad = first > 1.0 + 1e-3 or (second is not None and second > 1.0 + 1e-3)
    return 1 if bad else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command in ("bounds", "rates"):
            return _run_experiment_command(args, print_rates=args.command == "rates")
        if args.command == "verify":
            return _run_verify(args)
        if args.command == "stein":
            return _run_stein(args)
    except SteinGaugeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
