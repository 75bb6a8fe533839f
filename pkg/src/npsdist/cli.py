"""
Command-line front end, installed as ``nps`` (also ``python -m npsdist``).

Exit codes: 0 success, 2 data ingestion error, 3 fit did not converge (the
result is still written), 4 bad family spec or other usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .core import NpsModel, PrecisionWarning
from .inference import FitConfig, compare, fit_direct, fit_em, fit_normal, simulate
from .moments import approx_moments, moments_quantile_integral, moments_series
from .power_series import DomainError, get_family

EXIT_OK, EXIT_DATA, EXIT_NONCONVERGED, EXIT_USAGE = 0, 2, 3, 4


class IngestionError(Exception):
    pass


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class DataColumn:
    """One numeric column read from a CSV file."""

    values: np.ndarray
    source: str
    column: str
    n: int


def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def read_column(path: str, column: Optional[str] = None) -> DataColumn:
    """
    Read one column of finite numbers from a CSV file.

    The first row is a header when any of its cells is non-numeric.
    ``column`` is a header name or a 0-based index; the default is the
    first column.  Any non-numeric or non-finite data cell is an error, and
    the message lists the offending rows (1-based, counting the header).
    """
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise IngestionError(f"{path}: no rows")
    header = None
    start = 0
    if not all(_is_number(c.strip()) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        start = 1
    if column is None:
        idx = 0
    elif header is not None and column in header:
        idx = header.index(column)
    else:
        try:
            idx = int(column)
        except ValueError:
            raise IngestionError(f"{path}: no column named {column!r}") from None
    name = header[idx] if header is not None and idx < len(header) else str(idx)
    values, bad = [], []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        cell = row[idx].strip() if idx < len(row) else ""
        if _is_number(cell):
            values.append(float(cell))
        else:
            bad.append((lineno, cell))
    if bad:
        shown = ", ".join(f"row {i}: {c!r}" for i, c in bad[:10])
        raise IngestionError(f"{path}: {len(bad)} non-numeric row(s) in column {name!r} ({shown})")
    if not values:
        raise IngestionError(f"{path}: column {name!r} has no data")
    arr = np.asarray(values)
    return DataColumn(arr, path, name, arr.size)


# -- output helpers -----------------------------------------------------------


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _model(args) -> NpsModel:
    return NpsModel(get_family(args.family), args.mu, args.sigma, args.theta)


def _config(args) -> FitConfig:
    kw = {}
    if getattr(args, "extended", False):
        kw["extended"] = True
    if getattr(args, "rtol", None) is not None:
        kw["rtol"] = args.rtol
    if getattr(args, "max_iter", None) is not None:
        kw["max_iter_em"] = args.max_iter
        kw["max_iter_qn"] = args.max_iter
    return FitConfig(**kw)


def _fit_text(fit) -> str:
    p = fit.psi_hat
    lines = [
        f"family     {fit.family}",
        f"method     {fit.method}",
        f"n          {fit.n}",
        f"mu         {p.mu:.6f}  (se {fit.se[0]:.6f})",
        f"sigma      {p.sigma:.6f}  (se {fit.se[1]:.6f})",
    ]
    if fit.k == 3:
        lines.append(f"theta      {p.theta:.6f}  (se {fit.se[2]:.6f})")
    lines += [
        f"-loglik    {-fit.loglik:.4f}",
        f"AIC        {fit.aic:.4f}",
        f"BIC        {fit.bic:.4f}",
        f"converged  {fit.converged}" + (f"  ({fit.message})" if fit.message else ""),
    ]
    return "\n".join(lines) + "\n"


# -- subcommands ----------------------------------------------------------------


def cmd_fit(args) -> int:
    data = read_column(args.data, args.column)
    if args.family.lower() == "normal":
        fit = fit_normal(data.values)
    else:
        fam = get_family(args.family)
        cfg = _config(args)
        fit = fit_em(fam, data.values, cfg) if args.method == "em" else fit_direct(fam, data.values, cfg)
    if args.json:
        _emit(_json_text(fit.to_dict()), args.json)
    if args.format == "json":
        _emit(_json_text(fit.to_dict()), None)
    else:
        _emit(_fit_text(fit), None)
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _compare_table(rows) -> str:
    head = f"{'Dist.':<14}{'mu':>12}{'sigma':>12}{'theta':>12}{'-log(L)':>12}{'AIC':>12}{'BIC':>12}"
    out = [head]
    for r in rows:
        if r.fit is None:
            out.append(f"{r.family:<14}  FAILED: {r.error}")
            continue
        f, p = r.fit, r.fit.psi_hat
        th = "" if f.k == 2 else f"{p.theta:.4f}"
        flag = "" if f.converged else "  *"
        out.append(f"{f.family:<14}{p.mu:>12.4f}{p.sigma:>12.4f}{th:>12}{-f.loglik:>12.4f}{f.aic:>12.4f}{f.bic:>12.4f}{flag}")
    return "\n".join(out) + "\n"


def cmd_compare(args) -> int:
    data = read_column(args.data, args.column)
    families = [f for f in args.families.split(",") if f.strip()]
    if not families:
        raise UsageError("no families given")
    for f in families:
        if f.strip().lower() != "normal":
            get_family(f)
    rows = compare(data.values, families, method=args.method, config=_config(args))
    payload = [
        {"family": r.family, "rank": i + 1 if r.fit else None,
         "fit": r.fit.to_dict() if r.fit else None, "error": r.error}
        for i, r in enumerate(rows)
    ]
    if args.json:
        _emit(_json_text(payload), args.json)
    _emit(_json_text(payload) if args.format == "json" else _compare_table(rows), None)
    return EXIT_OK if any(r.fit is not None for r in rows) else EXIT_NONCONVERGED


def cmd_moments(args) -> int:
    model = _model(args)
    if args.method == "integral":
        summary = moments_quantile_integral(model)
    elif args.method == "series":
        summary = moments_series(model)
    else:
        summary = approx_moments(model)
    d = summary.as_dict()
    if args.format == "json":
        _emit(_json_text(d), None)
    else:
        labels = ("E", "E2", "E3", "E4", "Var", "Sk", "Kur")
        lines = [f"{k:<4}{v:.6f}" for k, v in zip(labels, summary.table_row())]
        _emit("\n".join(lines) + f"\nmethod {summary.method}  est_error {summary.est_error:.3g}\n", None)
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("-n must be a positive integer")
    model = _model(args)
    rng = np.random.default_rng(args.seed)
    y = np.atleast_1d(model.sample(rng, size=args.n, method=args.sampler))
    _emit("".join(f"{v!r}\n" for v in y.tolist()), args.output)
    return EXIT_OK


def _parse_range(text: str):
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise UsageError(f"bad --range {text!r}; expected lo:hi:steps") from None
    if not (hi > lo and steps >= 2):
        raise UsageError("--range needs lo < hi and at least 2 steps")
    return np.linspace(lo, hi, steps)


def cmd_curve(args) -> int:
    model = _model(args)
    what = [w.strip() for w in args.what.split(",") if w.strip()]
    funcs = {"pdf": model.pdf, "cdf": model.cdf, "hazard": model.hazard, "survival": model.survival}
    for w in what:
        if w not in funcs:
            raise UsageError(f"unknown curve {w!r}; choose from {', '.join(funcs)}")
    y = _parse_range(args.range)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionWarning)
        cols = [np.asarray(funcs[w](y)) for w in what]
    lines = [",".join(["y"] + what)]
    for i, v in enumerate(y):
        lines.append(",".join([repr(float(v))] + [repr(float(c[i])) for c in cols]))
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        truth = [float(v) for v in args.truth.split(",")]
    except ValueError:
        raise UsageError(f"bad --truth {args.truth!r}") from None
    if len(truth) != 3:
        raise UsageError("--truth needs mu,sigma,theta")
    if args.n < 1 or args.replicates < 1:
        raise UsageError("--n and --replicates must be positive")
    fam = get_family(args.family)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        summary = simulate(fam, truth, args.n, args.replicates, args.seed, args.method, _config(args))
    text = _json_text(summary.to_dict())
    if args.json:
        _emit(text, args.json)
    _emit(text, None)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .oracle import verification_report

    for line in verification_report(seed=args.seed, quick=args.quick):
        sys.stdout.write(line + "\n")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _model_args(p):
    p.add_argument("--family", required=True, help="e.g. ng, np, nl, nb:5, nnb:2")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.5)


def _fit_args(p):
    p.add_argument("--data", required=True, help="CSV file")
    p.add_argument("--column", help="column name or 0-based index (default: first)")
    p.add_argument("--method", choices=("em", "direct"), default="direct")
    p.add_argument("--extended", action="store_true", help="allow extended theta domain (direct only)")
    p.add_argument("--rtol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--json", help="also write JSON result to this file")
    p.add_argument("--format", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nps", description="Normal power-series distributions")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="maximum-likelihood fit of one family")
    p.add_argument("--family", required=True)
    _fit_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="fit several families and rank by AIC")
    p.add_argument("--families", required=True, help="comma list, e.g. ng,np,nl,nb:5,normal")
    _fit_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("moments", help="moments of one model")
    _model_args(p)
    p.add_argument("--method", choices=("integral", "series", "approx"), default="integral")
    p.add_argument("--format", choices=("text", "json"), default="json")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("sample", help="random draws, one per line")
    _model_args(p)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=("inverse", "compound"), default="inverse")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("curve", help="pdf / cdf / hazard on a grid, as CSV")
    _model_args(p)
    p.add_argument("--what", default="pdf,cdf,hazard")
    p.add_argument("--range", default="-4:4:81", help="lo:hi:steps")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("simulate", help="simulation study of the estimators")
    p.add_argument("--family", required=True)
    p.add_argument("--truth", required=True, help="mu,sigma,theta")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("em", "direct"), default="em")
    p.add_argument("--rtol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="oracle discrepancy report (key=value lines)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="smaller Monte Carlo sizes")
    p.set_defaults(func=cmd_verify)
    return parser


# options whose values may legitimately start with '-'
_SIGNED_OPTIONS = ("--range", "--truth", "--mu", "--theta")


def _join_signed(argv: Sequence[str]) -> List[str]:
    # argparse reads "--range -4:4:81" as two options; rewrite as "--range=-4:4:81"
    out, i = [], 0
    argv = list(argv)
    while i < len(argv):
        a = argv[i]
        if a in _SIGNED_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_signed(sys.argv[1:] if argv is None else argv))
    try:
        return args.func(args)
    except IngestionError as exc:
        sys.stderr.write(f"nps: data error: {exc}\n")
        return EXIT_DATA
    except (UsageError, DomainError) as exc:
        sys.stderr.write(f"nps: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        # bad family specs surface as ValueError from get_family
        sys.stderr.write(f"nps: {exc}\n")
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"nps: fit failed: {exc}\n")
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
