"""Command-line front end.

Exit codes: 0 success, 2 invalid input or violated precondition, 3 numerical
blow-up (the partial trace is still written), 4 file I/O failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import dataclass

from ._files import atomic_write
from .errors import NoMatrixForm, NumericalError, OrderTooLow, ValidationError
from .harness import (
    DEFAULT_GRID,
    RunConfig,
    compare_schemes,
    detect_divergence,
    first_below,
    reproduce_divergence_table,
    run_trajectory,
    table_to_csv,
    traces_to_csv,
)
from .objective import log_spaced_objective, read_matrix_file
from .plot import radius_plot, trace_plot
from .schemes import CONVENTIONS, SchemeKind, SchemeParams
from .stability import analyze, check_assumptions, divergence_bound, limit_classification

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BLOWUP = 3
EXIT_IO = 4

EULER = (SchemeKind.EXPLICIT, SchemeKind.IMPLICIT, SchemeKind.EXPLICIT_IMPLICIT)


@dataclass(frozen=True)
class CliConfig:
    """Parsed and validated flags shared by the subcommands."""

    subcommand: str
    scheme: str | None
    params: SchemeParams | None
    L: float | None
    matrix: str | None
    dim: int
    iters: int
    stride: int | None
    out: str | None
    plot: str | None

    def objective(self):
        if self.matrix is not None:
            return read_matrix_file(self.matrix)
        return log_spaced_objective(self.dim, self.L)

    def smoothness(self) -> float:
        return self.L if self.matrix is None else self.objective().L


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
        return v
    return conv


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _grid_row(text):
    try:
        p, L, delta = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected p,L,delta, got {text!r}") from None
    return (int(p) if p.is_integer() else p, L, delta)


def _add_problem(sp, need_p=True):
    sp.add_argument("--p", type=float, required=need_p, help="order of the dynamics (p >= 2)")
    sp.add_argument("--C", type=_positive(float), default=1.0)
    sp.add_argument("--delta", type=_positive(float), required=need_p, help="time step; eps = delta^p")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--L", type=_positive(float), help="largest eigenvalue of the log-spaced default objective")
    src.add_argument("--matrix", metavar="FILE", help="objective file: dim, dim rows of A, row of x*")
    sp.add_argument("--dim", type=_positive(int), default=5)
    sp.add_argument("--index-convention", choices=CONVENTIONS, default="k+1",
                    help="index at which the explicit-implicit and implicit gradients are evaluated")


def _add_output(sp, plot=True):
    sp.add_argument("--out", metavar="PATH", help="CSV destination (default: stdout)")
    if plot:
        sp.add_argument("--plot", metavar="PATH", help="write an SVG chart here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accelstab",
        description="Discretizations of the accelerated Euler-Lagrange ODE on quadratics "
                    "and their stability analysis.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("simulate", help="run one scheme and write its trace CSV")
    sp.add_argument("--scheme", required=True)
    _add_problem(sp)
    sp.add_argument("--iters", type=_nonneg_int, default=1000)
    sp.add_argument("--stride", type=_positive(int))
    sp.add_argument("--nesterov-step", type=_positive(float))
    _add_output(sp)

    sp = sub.add_parser("predict", help="print the divergence bound and limit classifications")
    _add_problem(sp)

    sp = sub.add_parser("table", help="reproduce the divergence-iteration table")
    sp.add_argument("--C", type=_positive(float), default=1.0)
    sp.add_argument("--dim", type=_positive(int), default=5)
    sp.add_argument("--row", type=_grid_row, action="append", default=[], metavar="p,L,delta",
                    help="extra grid row (repeatable)")
    sp.add_argument("--no-default-grid", action="store_true", help="omit the eight published rows")
    sp.add_argument("--max-empirical-iters", type=_nonneg_int, default=10_000_000,
                    help="skip simulated runs needing more steps than this")
    sp.add_argument("--index-convention", choices=CONVENTIONS, default="k+1")
    _add_output(sp, plot=False)

    sp = sub.add_parser("scan", help="spectral radius of the stiffest mode against k")
    sp.add_argument("--scheme", default="explicit-implicit")
    _add_problem(sp)
    sp.add_argument("--k-min", type=_positive(int), default=1)
    sp.add_argument("--k-max", type=_positive(int), default=100_000)
    sp.add_argument("--stride", type=_positive(int), default=1)
    _add_output(sp)

    sp = sub.add_parser("compare", help="traces of several schemes on one objective")
    sp.add_argument("--scheme", dest="schemes", action="append", default=[],
                    help="scheme to include (repeatable); 'ode' is the fine-step reference")
    _add_problem(sp)
    sp.add_argument("--iters", type=_nonneg_int, default=1000)
    sp.add_argument("--stride", type=_positive(int))
    sp.add_argument("--nesterov-step", type=_positive(float))
    sp.add_argument("--level", type=_positive(float), default=1e-8,
                    help="report the first k at which each gap drops below this")
    _add_output(sp)
    return parser


def config_from_args(args) -> CliConfig:
    """Re-validate every numeric precondition before any work is done."""
    params = None
    if getattr(args, "p", None) is not None:
        params = SchemeParams(args.p, args.C, args.delta, args.index_convention)
    scheme = getattr(args, "scheme", None)
    if scheme is not None:
        scheme = SchemeKind.parse(scheme).value
    for name in getattr(args, "schemes", None) or ():
        if name != "ode":
            SchemeKind.parse(name)
    return CliConfig(args.subcommand, scheme, params, getattr(args, "L", None),
                     getattr(args, "matrix", None), args.dim, getattr(args, "iters", 0),
                     getattr(args, "stride", None), getattr(args, "out", None),
                     getattr(args, "plot", None))


def _emit(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def cmd_simulate(cfg: CliConfig, args) -> int:
    obj = cfg.objective()
    run = RunConfig(cfg.scheme, cfg.params, cfg.iters, stride=cfg.stride,
                    nesterov_step=args.nesterov_step)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        trace = run_trajectory(run, obj)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(cfg.out, trace.to_csv())
    if cfg.plot:
        trace_plot([trace], title=f"{cfg.scheme}, p={cfg.params.p:g}, delta={cfg.params.delta:g}").save(cfg.plot)
    if len(trace) > 1:
        verdict = detect_divergence(trace)
        if verdict.diverged:
            print(f"diverged at k={verdict.empirical_k} ({verdict.criterion.value})", file=sys.stderr)
        else:
            print(f"no divergence detected; final f_gap={trace.f_gap[-1]:.6g}", file=sys.stderr)
    if trace.nonfinite:
        print(f"error: numerical blow-up at k={int(trace.k[-1])}; partial trace written",
              file=sys.stderr)
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_predict(cfg: CliConfig, args) -> int:
    params = cfg.params
    L = cfg.smoothness()
    try:
        bound = divergence_bound(params, L, check=False)
        print(f"divergence bound: {bound:.1f}")
    except OrderTooLow:
        print("divergence bound: stable (no finite bound)")
    for kind in EULER:
        try:
            cls = limit_classification(kind, params, L).value
        except ValidationError as exc:
            cls = f"undetermined ({exc})"
        print(f"{kind.value}: {cls}")
    problems = check_assumptions(params, L)
    if problems:
        for msg in problems:
            print(f"assumption failure: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    print("assumptions: delta < 1/L and C < 1/(eps L) hold")
    return EXIT_OK


def cmd_table(cfg: CliConfig, args) -> int:
    grid = ([] if args.no_default_grid else list(DEFAULT_GRID)) + list(args.row)
    rows = reproduce_divergence_table(grid, C=args.C, dim=cfg.dim,
                                      max_empirical_iters=args.max_empirical_iters,
                                      convention=args.index_convention)
    _emit(cfg.out, table_to_csv(rows))
    return EXIT_OK


def cmd_scan(cfg: CliConfig, args) -> int:
    kind = SchemeKind.parse(cfg.scheme)
    if not kind.has_matrix_form:
        raise NoMatrixForm(f"{kind.value} has no transition-matrix form; nothing to scan")
    if args.k_max < args.k_min:
        raise ValidationError("--k-max must be >= --k-min")
    report = analyze(kind, cfg.params, cfg.smoothness(), args.k_min, args.k_max, args.stride)
    _emit(cfg.out, report.to_csv())
    if cfg.plot:
        radius_plot(report, title=f"{kind.value}, p={cfg.params.p:g}").save(cfg.plot)
    first = report.first_unstable_k
    print(f"first_unstable_k: {first if first is not None else 'none'}", file=sys.stderr)
    return EXIT_OK


def cmd_compare(cfg: CliConfig, args) -> int:
    names = list(dict.fromkeys(args.schemes))
    if len(names) < 2:
        raise ValidationError("compare needs at least two distinct --scheme values")
    obj = cfg.objective()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traces = compare_schemes(names, cfg.params, obj, cfg.iters, stride=cfg.stride,
                                 nesterov_step=args.nesterov_step, include_baseline=False)
    _emit(cfg.out, traces_to_csv(traces))
    if cfg.plot:
        trace_plot(traces, title=f"p={cfg.params.p:g}, delta={cfg.params.delta:g}",
                   hline=args.level).save(cfg.plot)
    for name, tr in traces.items():
        hit = first_below(tr, args.level)
        print(f"{name}: first k with f_gap <= {args.level:g}: {hit if hit is not None else 'never'}",
              file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "predict": cmd_predict,
    "table": cmd_table,
    "scan": cmd_scan,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.subcommand](cfg, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
