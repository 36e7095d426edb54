"""Command-line front end: ``delaygbm {region,simulate,fundamental,verify,replay}``.

Tables go to CSV (``--out``, or stdout). The JSON document carrying results
and the run manifest goes next to the CSV as ``<out>.json``, or to stderr
when writing to stdout. ``replay`` re-runs a saved JSON document.

Exit codes: 0 success (divergent or unstable verdicts included), 2 usage or
configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .conditions import (
    ReducedParams,
    asymptotic_ok,
    ehs_ok,
    exponential_ok,
    region_curve,
)
from .fundamental import (
    NotSquareIntegrable,
    appleby_ok,
    classify_regime,
    fundamental_solution,
    l2_norm_sq,
    sign_changes,
)
from .montecarlo import SimConfig, check_monotone, ensemble_mean_square, fit_decay

SCHEMA = 1
DEFAULT_SEED = 20240101
EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3
KINDS = ("asymptotic", "ehs", "exponential")


class UsageError(Exception):
    pass


def _fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _manifest(subcommand: str, params: dict) -> dict:
    return {
        "subcommand": subcommand,
        "params": params,
        "seed": params.get("seed"),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _emit(out: Optional[str], csv_text: str, doc: dict, stdout, stderr) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        stdout.write(csv_text)
        stderr.write(text)
        return
    path = Path(out)
    with open(path, "w", newline="") as fh:
        fh.write(csv_text)
    with open(path.with_name(path.name + ".json"), "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_region(kinds: Sequence[str], tau_min: float, tau_max: float, n_points: int):
    if n_points < 2:
        raise UsageError("n_points must be at least 2")
    if not 0 <= tau_min < tau_max:
        raise UsageError("need 0 <= tau_min < tau_max")
    kinds = list(KINDS) if "all" in kinds else list(kinds)
    for k in kinds:
        if k not in KINDS:
            raise UsageError(f"unknown kind {k!r}")
    kinds = [k for k in KINDS if k in kinds]
    taus = np.linspace(tau_min, tau_max, n_points)
    cols = [region_curve(k, taus).sigmas for k in kinds]
    header = ["tau"] + [f"sigma_{k}" for k in kinds]
    rows = [[t, *(c[i] for c in cols)] for i, t in enumerate(taus)]
    return _csv_text(header, rows), {"kinds": kinds, "n_rows": n_points}


def _sim_config(tau, sigma, w0, dt_divisor, dt, T, n_paths, seed, record_every) -> SimConfig:
    if dt_divisor < 1:
        raise UsageError("dt-divisor must be a positive integer")
    step = tau / dt_divisor if tau > 0 else dt
    try:
        return SimConfig(tau, sigma, step, T, n_paths, seed, w0, record_every)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def analytic_flags(tau: float, sigma: float) -> dict:
    p = ReducedParams(tau, sigma)
    exp_ok, witness = exponential_ok(p)
    app, reason = appleby_ok(p)
    return {
        "asymptotic_ok": asymptotic_ok(p),
        "ehs_ok": ehs_ok(p),
        "exponential_ok": exp_ok,
        "witness_mu": witness.mu if witness else None,
        "appleby_ok": app,
        "appleby_reason": reason,
    }


def cmd_simulate(tau, sigma, w0=1.0, dt_divisor=20, dt=1e-3, T=5.0, n_paths=10_000,
                 seed=DEFAULT_SEED, record_every=1, mean_square=False, fit_window=None,
                 workers=1):
    if tau < 0 or sigma < 0:
        raise UsageError("tau and sigma must be non-negative")
    cfg = _sim_config(tau, sigma, w0, dt_divisor, dt, T, n_paths, seed, record_every)
    series = ensemble_mean_square(cfg, n_workers=workers)
    scale = 2.0 if mean_square else 1.0
    name = "Ew2" if mean_square else "y"
    rows = zip(series.times, scale * series.y, scale * series.stderr)
    csv_text = _csv_text(["t", name, "stderr"], rows)
    verdict = analytic_flags(tau, sigma)
    try:
        fit = fit_decay(series, tuple(fit_window) if fit_window else None)
        verdict["fitted_rate"] = fit.rate
        verdict["fitted_rate_stderr"] = fit.stderr
    except ValueError:
        verdict["fitted_rate"] = None
        verdict["fitted_rate_stderr"] = None
    verdict["monotone"] = check_monotone(series, 3.0)
    return csv_text, verdict


def cmd_fundamental(tau, tol=1e-10, horizon=None, samples_per_piece=32):
    if not tau > 0:
        raise UsageError("tau must be positive")
    horizon = 20.0 * tau if horizon is None else horizon
    if not horizon > 0:
        raise UsageError("horizon must be positive")
    n_pieces = int(math.ceil(horizon / tau)) + 1
    poly = fundamental_solution(tau, n_pieces)
    n_samples = int(math.ceil(horizon / tau)) * samples_per_piece + 1
    t = np.linspace(0.0, horizon, n_samples)
    r = poly(t)
    result: dict[str, Any] = {"regime": classify_regime(tau).value,
                              "sign_changes": sign_changes(poly, horizon)}
    try:
        l2 = l2_norm_sq(tau, tol)
        result.update(l2_norm_sq=l2.value, tail_bound=l2.tail_bound, n_pieces=l2.n_pieces,
                      divergent=False)
    except NotSquareIntegrable:
        result.update(l2_norm_sq=None, divergent=True)
    return _csv_text(["t", "r"], zip(t, r)), result


def _mc_verdict(series) -> dict:
    """Compare the peak of ``y`` over the middle and final thirds of the run.

    Peaks rather than a log-linear fit, because oscillatory solutions pass
    close to zero and wreck the fit.
    """
    n = series.y.size
    if n < 6:
        return {"mc_verdict": "inconclusive", "mc_peak_rate": None}
    mid = slice(n // 3, 2 * n // 3)
    end = slice(2 * n // 3, n)
    i = int(np.argmax(series.y[mid])) + n // 3
    j = int(np.argmax(series.y[end])) + 2 * n // 3
    a, sa = series.y[i], series.stderr[i]
    b, sb = series.y[j], series.stderr[j]
    if b + 3.0 * sb < a - 3.0 * sa:
        v = "decay"
    elif b - 3.0 * sb > a + 3.0 * sa:
        v = "growth"
    else:
        v = "inconclusive"
    rate = math.log(b / a) / (series.times[j] - series.times[i]) if a > 0 and b > 0 else None
    return {"mc_verdict": v, "mc_peak_rate": rate}


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def cmd_verify(tau_grid: Sequence[float], sigma_grid: Sequence[float], n_paths=2000,
               seed=DEFAULT_SEED, T=5.0, dt_divisor=20, dt=1e-2, workers=1):
    for t in tau_grid:
        if not 0 <= t <= 2:
            raise UsageError("tau grid must lie in [0, 2]")
    for s in sigma_grid:
        if not 0 <= s <= 2:
            raise UsageError("sigma grid must lie in [0, 2]")
    points = []
    idx = 0
    for tau in tau_grid:
        for sigma in sigma_grid:
            flags = analytic_flags(float(tau), float(sigma))
            if n_paths > 0:
                cfg = _sim_config(float(tau), float(sigma), 1.0, dt_divisor, dt, T, n_paths,
                                  _point_seed(seed, idx), 1)
                flags.update(_mc_verdict(ensemble_mean_square(cfg, n_workers=workers)))
            points.append({"tau": float(tau), "sigma": float(sigma), **flags})
            idx += 1
    summary = {
        "n_points": len(points),
        "asymptotic_not_appleby": sum(p["asymptotic_ok"] and not p["appleby_ok"] for p in points),
        "exponential_not_asymptotic": sum(p["exponential_ok"] and not p["asymptotic_ok"] for p in points),
        "exponential_not_appleby": sum(p["exponential_ok"] and not p["appleby_ok"] for p in points),
    }
    if n_paths > 0:
        conclusive = [p for p in points if p["mc_verdict"] != "inconclusive"]
        summary["mc_conclusive"] = len(conclusive)
        summary["mc_agrees_with_appleby"] = sum(
            (p["mc_verdict"] == "decay") == p["appleby_ok"] for p in conclusive)
    return {"points": points, "summary": summary}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaygbm", description="Stability regions and Monte Carlo checks for a delayed geometric Brownian motion.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("region", help="sample the stability-region boundaries")
    p.add_argument("--kinds", nargs="+", default=["all"], choices=["all", *KINDS])
    p.add_argument("--tau-min", type=float, default=0.0)
    p.add_argument("--tau-max", type=float, default=1.0)
    p.add_argument("--n-points", type=int, default=201)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="Monte Carlo mean square plus analytic verdicts")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--w0", type=float, default=1.0)
    p.add_argument("--dt-divisor", type=int, default=20, help="steps per delay (tau > 0)")
    p.add_argument("--dt", type=float, default=1e-3, help="step when tau = 0")
    p.add_argument("--T", type=float, default=5.0)
    p.add_argument("--n-paths", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--mean-square", action="store_true", help="report E[w^2] instead of E[w^2/2]")
    p.add_argument("--fit-window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("fundamental", help="fundamental solution diagnostics")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--horizon", type=float)
    p.add_argument("--samples-per-piece", type=int, default=32)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="grid report of analytic flags and Monte Carlo verdicts")
    p.add_argument("--tau", type=float, nargs=3, metavar=("LO", "HI", "N"), default=[0.0, 1.0, 5])
    p.add_argument("--sigma", type=float, nargs=3, metavar=("LO", "HI", "N"), default=[0.0, 1.4, 5])
    p.add_argument("--n-paths", type=int, default=2000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--T", type=float, default=5.0)
    p.add_argument("--dt-divisor", type=int, default=20)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("replay", help="re-run the command recorded in a JSON output")
    p.add_argument("manifest")
    p.add_argument("--out")
    return parser


def _grid(spec) -> list[float]:
    lo, hi, n = spec
    n = int(n)
    if n < 0:
        raise UsageError("grid size must be non-negative")
    return [] if n == 0 else np.linspace(lo, hi, n).tolist()


def _run(args: argparse.Namespace, stdout, stderr) -> int:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    cmd = args.command
    if cmd == "replay":
        with open(args.manifest) as fh:
            doc = json.load(fh)
        man = doc["manifest"]
        ns = argparse.Namespace(command=man["subcommand"], out=args.out, **man["params"])
        return _run(ns, stdout, stderr)

    if cmd == "region":
        text, info = cmd_region(args.kinds, args.tau_min, args.tau_max, args.n_points)
        doc = {"result": info}
    elif cmd == "simulate":
        text, verdict = cmd_simulate(args.tau, args.sigma, args.w0, args.dt_divisor, args.dt, args.T,
                                     args.n_paths, args.seed, args.record_every, args.mean_square,
                                     args.fit_window, args.workers)
        doc = {"verdict": verdict}
    elif cmd == "fundamental":
        text, result = cmd_fundamental(args.tau, args.tol, args.horizon, args.samples_per_piece)
        doc = {"result": result}
    elif cmd == "verify":
        report = cmd_verify(_grid(args.tau), _grid(args.sigma), args.n_paths, args.seed, args.T,
                            args.dt_divisor, args.dt, args.workers)
        doc = {"report": report}
        text = None
    else:  # pragma: no cover - argparse rejects unknown commands
        raise UsageError(cmd)
    doc = {"schema": SCHEMA, "manifest": _manifest(cmd, params), **doc}
    if text is None:
        # verify emits JSON only
        out_text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        if args.out is None:
            stdout.write(out_text)
        else:
            with open(args.out, "w") as fh:
                fh.write(out_text)
    else:
        _emit(args.out, text, doc, stdout, stderr)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args, stdout, stderr)
    except UsageError as exc:
        stderr.write(f"delaygbm: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        stderr.write(f"delaygbm: I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
