"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 statistical or
identification failure, 3 input/output or data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from .bridge import BUILTIN_NAMES, MomentSpec, builtin_spec, load_spec
from .data import read_csv, write_csv
from .errors import DataError, IdentificationError, NegControlError, SpecError
from .gmm import HacConfig, gmm_fit
from .simulation import SCENARIOS, DgpConfig, counterexample_check, generate, run_study
from .summary import RiskDifferenceSummary, binary_nc_adjust, explain_away_threshold, positive_control_adjust
from .timeseries import SeriesFrame, analyze_series, trend_basis

EXIT_USAGE, EXIT_STAT, EXIT_IO = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# formatting


def _fmt_row(label: str, r: dict, scale: float) -> str:
    e, lo, hi = r["estimate"] * scale, r["ci_lower"] * scale, r["ci_upper"] * scale
    return f"{label:<14}{e:>12.4f} ({lo:.4f}, {hi:.4f})   p={r['p_value']:.4f}   se={r['std_error'] * scale:.4g}"


def _emit(payload: dict, table: str, fmt: str, output: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n" if fmt == "machine" else table
    if output:
        try:
            Path(output).write_text(text)
        except OSError as exc:
            raise DataError(f"cannot write {output}: {exc}") from exc
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def _resolve_spec(bridge: str, p: int, contrast) -> MomentSpec:
    if bridge in BUILTIN_NAMES:
        return builtin_spec(bridge, p, tuple(contrast) if contrast else None)
    spec = load_spec(bridge)
    if contrast:
        spec = MomentSpec(spec.bridge, spec.instruments, tuple(contrast))
    return spec


def cmd_estimate(args) -> None:
    cmap = {"x": args.x, "y": args.y, "z": args.z, "w": args.w, "v": args.v or []}
    transforms = {role: "sqrt" for role in (args.sqrt or [])}
    data = read_csv(args.csv, cmap, transforms)
    hac = HacConfig(args.hac) if args.hac is not None else None
    if args.method == "gmm":
        spec = _resolve_spec(args.bridge, data.p, args.contrast)
        fit = gmm_fit(spec, data, hac=hac)
        payload = {"command": "estimate", "method": "gmm", "spec": spec.to_dict(), "fit": fit.report()}
        lines = [f"GMM ({fit.solver}, {'HAC' if hac else 'iid'} variance), n={data.n}"]
        lines += [_fmt_row(p["name"], p, args.scale) for p in payload["fit"]["parameters"]]
        if not fit.converged:
            lines.append("warning: optimiser did not converge")
    else:
        if args.method == "nc":
            res = est.nc_estimate(data, hac=hac)
        elif args.method == "tsls":
            res = est.nc_tsls(data)
        elif args.method == "iv":
            res = est.iv_estimate(data, covariates=data.p > 0, hac=hac)
        else:
            res = est.ols_estimate(data, hac=hac)
        relevance = None
        if args.method in ("nc", "tsls"):
            relevance = est.first_stage_relevance(data).report()
        payload = {"command": "estimate", "method": args.method, "estimate": res.report(), "first_stage": relevance}
        lines = [f"{args.method} estimate of the X coefficient, n={data.n}", _fmt_row("beta_x", payload["estimate"], args.scale)]
        if relevance:
            lines.append(_fmt_row("first stage", relevance, 1.0))
        lines += [f"warning: {w}" for w in res.warnings + tuple((relevance or {}).get("warnings", ()))]
    _emit(payload, "\n".join(lines) + "\n", args.format, args.output)


def cmd_timeseries(args) -> None:
    if args.lag < 1:
        raise SpecError("--lag must be a positive integer")
    path = Path(args.csv)
    try:
        with path.open(newline="") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    cols = [args.x, args.y, *(args.covariates or [])]
    if rows:
        missing = [c for c in cols if c not in rows[0]]
        if missing:
            raise DataError(f"missing column(s) {missing} in {path}")

    def col(name):
        try:
            return np.array([float(r[name]) for r in rows])
        except ValueError as exc:
            raise DataError(f"unparseable value in column {name!r}: {exc}") from None

    x, y = col(args.x), col(args.y)
    if args.sqrt_outcome:
        if np.any(y < 0):
            raise DataError("sqrt transform of negative outcome")
        y = np.sqrt(y)
    covs = [col(c) for c in (args.covariates or [])]
    names = list(args.covariates or [])
    if args.trend_harmonics is not None:
        basis, bnames = trend_basis(len(rows), args.trend_harmonics, args.period)
        covs += list(basis.T)
        names += list(bnames)
    cov = np.column_stack(covs) if covs else None
    trend = tuple(bnames) if args.trend_harmonics is not None else ()
    frame = SeriesFrame(x, y, cov, k=args.lag, covariate_names=tuple(names), deterministic=trend)
    spec = load_spec(args.bridge) if args.bridge else None
    report = analyze_series(frame, spec, HacConfig(args.hac), exposure_lags=args.exposure_lags)
    payload = {"command": "timeseries", **report}
    s = args.scale
    lines = [
        f"time-series analysis: n={report['n']}, lag={report['lag']}, exposure lags={report['exposure_lags']}"
        + (f", values x{s:g}" if s != 1 else ""),
        "Ordinary least squares",
        _fmt_row("  beta1", report["ols"], s),
        "Confounding test",
        _fmt_row("  alpha1", report["confounding_test"]["alpha1"], s),
        _fmt_row("  alpha2", report["confounding_test"]["alpha2"], s),
        "Negative control estimation",
        _fmt_row("  beta1", report["nc_gmm"]["beta1"], s),
    ]
    _emit(payload, "\n".join(lines) + "\n", args.format, args.output)


def cmd_simulate(args) -> None:
    cfg = DgpConfig(args.scenario, args.eta, args.xi, args.n)
    report = run_study(
        cfg, args.estimators, args.reps, args.seed, workers=args.workers, ipw_boot=args.ipw_boot
    )
    if args.out_dir:
        paths = report.write(args.out_dir, args.stem)
        sys.stdout.write(report.to_table())
        sys.stdout.write("".join(f"wrote {p}\n" for p in paths.values()))
    else:
        _emit(report.to_dict(), report.to_table(), args.format, args.output)


def cmd_simulate_data(args) -> None:
    sample = generate(DgpConfig(args.scenario, args.eta, args.xi, args.n), np.random.default_rng(args.seed))
    if isinstance(sample, SeriesFrame):
        header = "x,y," + ",".join(sample.covariate_names)
        body = np.column_stack([sample.x, sample.y, sample.covariates])
        np.savetxt(args.output, body, delimiter=",", header=header, comments="", fmt="%.17g")
    else:
        write_csv(sample, args.output)


def cmd_summary(args) -> None:
    summary = RiskDifferenceSummary.from_file(args.summary_file)
    if args.positive_control:
        a, b = args.ace_xw_range if args.ace_xw_range else (0.0, 0.0)
        if a > b:
            raise UsageError(f"--ace-xw-range lower bound {a} exceeds upper bound {b}")
        res = positive_control_adjust(summary, (a, b))
        payload = {"command": "summary", "mode": "positive_control", "gamma1": res.gamma1, "gamma2": res.gamma2,
                   "ace_xw_range": [a, b], "bound": list(res.bound)}
        lines = [
            f"gamma2 = {res.gamma2:.6g}",
            f"gamma1 = {res.gamma1:.6g}",
            f"ACE_XY = {res.gamma1:.6g} + ({res.gamma2:.6g}) * ACE_XW",
            f"bound for ACE_XW in [{a:g}, {b:g}]: [{res.bound[0]:.6g}, {res.bound[1]:.6g}]",
        ]
        try:
            thr = explain_away_threshold(summary)
            payload["explain_away_threshold"] = thr
            lines.append(f"ACE_XY = 0 when ACE_XW = {thr:.6g}")
        except IdentificationError:
            payload["explain_away_threshold"] = None
    else:
        res = binary_nc_adjust(summary, interaction=args.interaction)
        payload = {"command": "summary", "mode": "interaction" if args.interaction else "additive",
                   "ace": res.ace, "gamma2": res.gamma2, "gamma3": res.gamma3}
        lines = [f"ACE = {res.ace:.6g}", f"gamma2 = {res.gamma2:.6g}", f"gamma3 = {res.gamma3:.6g}"]
    _emit(payload, "\n".join(lines) + "\n", args.format, args.output)


def cmd_counterexample(args) -> int:
    res = counterexample_check(n=args.n, seed=args.seed)
    lines = ["target covariance of (X, Y, W):", _matrix(res["target"])]
    for row in res["settings"]:
        s = row["setting"]
        lines.append(f"beta={s['beta']:g}: analytic {'ok' if row['analytic_ok'] else 'MISMATCH'}")
        lines.append(_matrix(row["analytic"]))
        if row["empirical"] is not None:
            lines.append(f"  empirical (n={args.n}), max |z| = {row['empirical_max_z']:.2f}")
            lines.append(_matrix(row["empirical"]))
    lines.append("PASS" if res["passed"] else "FAIL")
    _emit({"command": "counterexample", **res}, "\n".join(lines) + "\n", args.format, args.output)
    return 0 if res["passed"] else EXIT_STAT


def _matrix(m) -> str:
    return "\n".join("  " + " ".join(f"{v:8.4f}" for v in row) for row in m)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="negcontrol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--format", choices=("table", "machine"), default="table")
        sp.add_argument("--output", help="write the report here instead of stdout")

    e = sub.add_parser("estimate", help="estimate the effect of X from a CSV sample")
    e.add_argument("csv")
    for role in ("x", "y", "z", "w"):
        e.add_argument(f"--{role}", required=True, help=f"column holding {role.upper()}")
    e.add_argument("--v", nargs="*", default=[], help="covariate columns")
    e.add_argument("--sqrt", nargs="*", choices=("x", "y", "z", "w"), help="square-root transform these roles")
    e.add_argument("--bridge", default="structural", help=f"builtin ({', '.join(BUILTIN_NAMES)}) or JSON config")
    e.add_argument("--contrast", nargs=2, type=float, metavar=("X1", "X0"))
    e.add_argument("--method", choices=("gmm", "nc", "iv", "ols", "tsls"), default="gmm")
    e.add_argument("--hac", type=int, metavar="BANDWIDTH", help="Newey-West bandwidth; default iid variance")
    e.add_argument("--scale", type=float, default=1.0, help="multiply reported estimates (e.g. 10000)")
    common(e)
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("timeseries", help="OLS, confounding test and NC estimation on one series")
    t.add_argument("csv")
    t.add_argument("--x", required=True)
    t.add_argument("--y", required=True)
    t.add_argument("--covariates", nargs="*", default=[])
    t.add_argument("--lag", type=int, default=1)
    t.add_argument("--exposure-lags", type=int, default=1)
    t.add_argument("--trend-harmonics", type=int, help="add polynomial and this many Fourier pairs of time")
    t.add_argument("--period", type=float, default=365.0)
    t.add_argument("--sqrt-outcome", action="store_true")
    t.add_argument("--bridge", help="JSON bridge config; default (1, X, V, W) over all lagged-design covariates")
    t.add_argument("--hac", type=int, default=None, metavar="BANDWIDTH", help="default floor(1.3 n^(1/3))")
    t.add_argument("--scale", type=float, default=1.0)
    common(t)
    t.set_defaults(func=cmd_timeseries)

    s = sub.add_parser("simulate", help="run a Monte Carlo study")
    s.add_argument("--scenario", choices=SCENARIOS, required=True)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--xi", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--estimators", nargs="*")
    s.add_argument("--workers", type=int, help="process pool size (default NC_THREADS or 1)")
    s.add_argument("--ipw-boot", type=int, default=200)
    s.add_argument("--out-dir", help="write report.json, report.txt, report_replications.csv here")
    s.add_argument("--stem", default="report")
    common(s)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("simulate-data", help="write one simulated sample as CSV")
    d.add_argument("--scenario", choices=SCENARIOS, required=True)
    d.add_argument("--eta", type=float, required=True)
    d.add_argument("--xi", type=float, required=True)
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--output", required=True)
    d.set_defaults(func=cmd_simulate_data)

    m = sub.add_parser("summary", help="adjust summary risk differences")
    m.add_argument("--summary-file", required=True)
    mode = m.add_mutually_exclusive_group()
    mode.add_argument("--interaction", action="store_true", help="allow an X-W interaction in the bridge")
    mode.add_argument("--positive-control", action="store_true", help="treat W as a positive control outcome")
    m.add_argument("--ace-xw-range", nargs=2, type=float, metavar=("A", "B"))
    common(m)
    m.set_defaults(func=cmd_summary)

    c = sub.add_parser("counterexample", help="verify the non-identification counterexample")
    c.add_argument("--n", type=int, default=1_000_000, help="simulation size; 0 skips the empirical check")
    c.add_argument("--seed", type=int, default=0)
    common(c)
    c.set_defaults(func=cmd_counterexample)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"negcontrol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as exc:
        print(f"negcontrol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IdentificationError as exc:
        print(f"negcontrol: identification failure: {exc}", file=sys.stderr)
        return EXIT_STAT
    except (DataError, OSError) as exc:
        print(f"negcontrol: data error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NegControlError as exc:
        print(f"negcontrol: error: {exc}", file=sys.stderr)
        return EXIT_STAT
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
