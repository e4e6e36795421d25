"""Command-line front end: analyze, simulate, ensemble, verify, report.

All commands are deterministic given (spec, seed, flags): reports are JSON
with sorted keys and repr-exact floats, bulk series go to CSV. verify exits
nonzero when any enabled check fails, so it can gate CI.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import asymptotics, simulate, verify as verify_mod
from .errors import InvalidCheckpoint, MissingInput, UnbalancedModel, UrnError
from .model import system_from_json, system_to_dict, validate_spec


def parse_checkpoints(text, n_steps=None):
    """Checkpoint mini-language: '10,100,1000' or 'log:10:1e6:12'."""
    try:
        if text.startswith("log:"):
            _, start, stop, count = text.split(":")
            pts = np.geomspace(float(start), float(stop), int(count))
            cps = sorted({int(round(p)) for p in pts})
        else:
            cps = sorted({int(p) for p in text.split(",") if p.strip()})
    except ValueError:
        raise InvalidCheckpoint(
            f"bad checkpoint spec {text!r}; expected a comma list like '10,100,1000' "
            "or 'log:start:stop:count'"
        ) from None
    if n_steps is not None:
        cps = [c for c in cps if c <= n_steps]
    return tuple(cps)


def _load_system(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UrnError(f"cannot read spec file: {exc}") from None
    try:
        spec = system_from_json(text)
    except json.JSONDecodeError as exc:
        raise UrnError(
            f"spec file is not valid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from None
    return validate_spec(spec)


def _dump_json(obj, path):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _analyze_payload(system):
    report = asymptotics.analyze(system)
    payload = {"system": system_to_dict(system)}
    payload.update(report.to_dict())
    return report, payload


def _summary_lines(report):
    lines = [
        f"{'subsystem':<10} {'urns':<10} {'regime':<18} {'rate':<14} {'lambda*':<12} Z_inf"
    ]
    for sub in report.subsystems:
        lam = "-" if sub.lambda_star is None else f"{sub.lambda_star.real:.4g}"
        z = ", ".join(f"{v:.4f}" for v in sub.z_inf.reshape(-1))
        urns = ",".join(str(u + 1) for u in sub.urns)
        lines.append(
            f"{sub.label:<10} {urns:<10} {sub.regime:<18} {sub.rate:<14} {lam:<12} ({z})"
        )
    return lines


def cmd_analyze(args):
    system = _load_system(args.spec)
    report, payload = _analyze_payload(system)
    for line in _summary_lines(report):
        print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(payload, out / "analyze.json")
        print(f"wrote {out / 'analyze.json'}")
    return 0


def _write_trajectory_csv(path, trajectories):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "step", "urn", "color", "Z", "T"])
        for rep, tr in enumerate(trajectories):
            for ci, step in enumerate(tr.checkpoints):
                for j in range(tr.z.shape[1]):
                    for k in range(tr.z.shape[2]):
                        w.writerow(
                            [rep, step, j, k, repr(float(tr.z[ci, j, k])), repr(float(tr.t[ci, j]))]
                        )


def cmd_simulate(args):
    system = _load_system(args.spec)
    cps = parse_checkpoints(args.checkpoints, args.steps) if args.checkpoints else None
    tr = simulate.run(system, args.steps, args.seed, cps, engine=args.engine)
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trajectory.csv"
    _write_trajectory_csv(path, [tr])
    print(f"wrote {path} (engine: {tr.engine})")
    return 0


def cmd_ensemble(args):
    system = _load_system(args.spec)
    cps = parse_checkpoints(args.checkpoints, args.steps) if args.checkpoints else None
    stats = simulate.ensemble(
        system,
        args.steps,
        args.reps,
        args.seed,
        checkpoints=cps,
        workers=args.workers,
        engine=args.engine,
    )
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "ensemble_cov.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "statistic", "i", "j", "value"])
        for ci, step in enumerate(stats.checkpoints):
            mean = stats.flat_z(ci).mean(axis=0)
            cov = stats.cov_z(ci)
            for i, v in enumerate(mean):
                w.writerow([step, "mean", i, -1, repr(float(v))])
            for i in range(cov.shape[0]):
                for j in range(cov.shape[1]):
                    w.writerow([step, "cov", i, j, repr(float(cov[i, j]))])
    print(f"wrote {path}")
    return 0


def _default_checkpoints(n_steps):
    # start two decades below the horizon: early checkpoints sit in the
    # mean-relaxation transient and bias rate fits (followers especially)
    if n_steps >= 1000:
        lo = max(100, n_steps // 100)
        return parse_checkpoints(f"log:{lo}:{n_steps}:8", n_steps)
    return (n_steps,)


def run_verification(system, report, *, seed, n_steps, reps, checkpoints, checks, tols, workers=1):
    """Drive the enabled checks over one shared ensemble; returns VerificationReport."""
    stats = simulate.ensemble(
        system, n_steps, reps, seed, checkpoints=checkpoints, reference=report.z_inf, workers=workers
    )
    results = []
    if "total" in checks:
        results.append(verify_mod.check_total_balls(stats, system.balanced))
    if "limits" in checks:
        for sub in report.subsystems:
            sel = list(sub.urns)
            results.append(
                verify_mod.check_limits(
                    _restrict(stats, sel),
                    report.z_inf[sel],
                    atol=tols.get("limits", 0.01),
                    name=f"limits[{sub.label}]",
                )
            )
    if "rate" in checks:
        for sub in report.subsystems:
            expected, band = verify_mod.expected_rate_slope(sub)
            band = tols.get("rate_band", band)
            results.append(
                verify_mod.check_rate(
                    stats, report.z_inf, expected, band=band, urns=list(sub.urns),
                    name=f"rate[{sub.label}]",
                )
            )
    if "clt" in checks:
        if not system.balanced:
            raise UnbalancedModel(
                "CLT checks require constant total replacements; the system "
                "contains a random_scaled urn"
            )
        for sub in report.subsystems:
            if sub.regime != asymptotics.REGIME_SQRT_N:
                continue
            results.append(
                verify_mod.check_clt(
                    stats, sub, report,
                    frob_tol=tols.get("frob", 0.15),
                    skew_tol=tols.get("skew", 0.2),
                    kurt_tol=tols.get("kurt", 0.4),
                    name=f"clt[{sub.label}]",
                )
            )
    if "regime_c" in checks:
        for sub in report.subsystems:
            if sub.regime != asymptotics.REGIME_POLYNOMIAL:
                continue
            # separate seed branch: keep these paths independent of the ensemble
            paths = [
                simulate.run(system, 10**6, ss, (10**4, 10**5, 10**6))
                for ss in np.random.SeedSequence([seed, 0x7263]).spawn(50)
            ]
            results.append(
                verify_mod.check_regime_c(
                    paths, report.z_inf, sub.lambda_star.real, urns=list(sub.urns),
                    name=f"regime_c[{sub.label}]",
                )
            )
    return verify_mod.VerificationReport(checks=tuple(results)), stats


def _restrict(stats, urns):
    """EnsembleStats view limited to the given urns (for per-subsystem checks)."""
    from .simulate import EnsembleStats

    return EnsembleStats(
        checkpoints=stats.checkpoints,
        z=stats.z[:, :, urns, :],
        t=stats.t[:, :, urns],
        t0=stats.t0[urns],
        base_seed=stats.base_seed,
        seeds=stats.seeds,
        reference=None if stats.reference is None else stats.reference[urns],
        scaled=None if stats.scaled is None else stats.scaled[:, :, urns, :],
        fingerprint=stats.fingerprint,
    )


def cmd_verify(args):
    system = _load_system(args.spec)
    report, payload = _analyze_payload(system)
    checks = tuple(c.strip() for c in args.checks.split(",") if c.strip())
    cps = (
        parse_checkpoints(args.checkpoints, args.steps)
        if args.checkpoints
        else _default_checkpoints(args.steps)
    )
    tols = {}
    if args.tol_limits is not None:
        tols["limits"] = args.tol_limits
    if args.tol_frob is not None:
        tols["frob"] = args.tol_frob
    if args.tol_rate_band is not None:
        tols["rate_band"] = args.tol_rate_band
    if args.tol_skew is not None:
        tols["skew"] = args.tol_skew
    if args.tol_kurt is not None:
        tols["kurt"] = args.tol_kurt
    vreport, stats = run_verification(
        system,
        report,
        seed=args.seed,
        n_steps=args.steps,
        reps=args.reps,
        checkpoints=cps,
        checks=checks,
        tols=tols,
        workers=args.workers,
    )
    for c in vreport.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    payload = {
        "analyze": payload,
        "config": {
            "seed": args.seed,
            "steps": args.steps,
            "reps": args.reps,
            "checkpoints": list(cps),
            "checks": list(checks),
        },
        "verification": vreport.to_dict(),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(payload, out / "verify.json")
        print(f"wrote {out / 'verify.json'}")
    return 0 if vreport.passed else 1


def cmd_report(args):
    out = Path(args.out)
    analyze_path = out / "analyze.json"
    verify_path = out / "verify.json"
    if not analyze_path.exists() and not verify_path.exists():
        raise MissingInput(f"no analyze.json or verify.json under {out}")
    merged = {}
    if analyze_path.exists():
        merged["analyze"] = json.loads(analyze_path.read_text())
    if verify_path.exists():
        merged["verify"] = json.loads(verify_path.read_text())
        if "analyze" not in merged:
            merged["analyze"] = merged["verify"].get("analyze", {})
    _dump_json(merged, out / "report.json")
    files = [out / "report.json"]

    rate_rows = []
    for check in merged.get("verify", {}).get("verification", {}).get("checks", []):
        if not check["name"].startswith("rate["):
            continue
        label = check["name"][5:-1]
        steps = check["detail"]["steps"]
        logdev = check["detail"]["log_mean_dev"]
        slope = check["estimate"]
        intercept = check["detail"]["intercept"]
        predicted = check["prediction"]
        x0 = float(np.log(steps[0]))
        for s, ld in zip(steps, logdev):
            x = float(np.log(s))
            rate_rows.append(
                [
                    label,
                    s,
                    repr(x),
                    repr(ld),
                    repr(intercept + slope * x),
                    repr((intercept + slope * x0) + predicted * (x - x0)),
                ]
            )
    if rate_rows:
        path = out / "rate_series.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["subsystem", "step", "log_n", "log_mean_dev", "fitted", "predicted"]
            )
            w.writerows(rate_rows)
        files.append(path)
    for f in files:
        print(f"wrote {f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="interurn",
        description="Analyze and simulate systems of interacting generalized Friedman urns.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="predict limits, rates and covariances")
    pa.add_argument("--spec", required=True)
    pa.add_argument("--out")
    pa.set_defaults(fn=cmd_analyze)

    ps = sub.add_parser("simulate", help="run one trajectory, write CSV snapshots")
    ps.add_argument("--spec", required=True)
    ps.add_argument("--seed", required=True, type=int)
    ps.add_argument("--steps", required=True, type=int)
    ps.add_argument("--checkpoints")
    ps.add_argument("--out")
    ps.add_argument("--engine", choices=simulate.available_engines())
    ps.set_defaults(fn=cmd_simulate)

    pe = sub.add_parser("ensemble", help="replicated runs with covariance CSV")
    pe.add_argument("--spec", required=True)
    pe.add_argument("--seed", required=True, type=int)
    pe.add_argument("--steps", required=True, type=int)
    pe.add_argument("--reps", required=True, type=int)
    pe.add_argument("--checkpoints")
    pe.add_argument("--workers", type=int, default=1)
    pe.add_argument("--out")
    pe.add_argument("--engine", choices=simulate.available_engines())
    pe.set_defaults(fn=cmd_ensemble)

    pv = sub.add_parser("verify", help="statistical checks of predictions")
    pv.add_argument("--spec", required=True)
    pv.add_argument("--seed", required=True, type=int)
    pv.add_argument("--steps", type=int, default=100000)
    pv.add_argument("--reps", type=int, default=200)
    pv.add_argument("--checkpoints")
    # rate is opt-in: a sound log-log fit needs a deep horizon (--steps 1e6)
    pv.add_argument("--checks", default="limits,total")
    pv.add_argument("--workers", type=int, default=1)
    pv.add_argument("--out")
    pv.add_argument("--tol-limits", type=float, dest="tol_limits")
    pv.add_argument("--tol-frob", type=float, dest="tol_frob")
    pv.add_argument("--tol-rate-band", type=float, dest="tol_rate_band")
    pv.add_argument("--tol-skew", type=float, dest="tol_skew")
    pv.add_argument("--tol-kurt", type=float, dest="tol_kurt")
    pv.set_defaults(fn=cmd_verify)

    pr = sub.add_parser("report", help="merge prior outputs into one artifact")
    pr.add_argument("--out", required=True)
    pr.set_defaults(fn=cmd_report)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UrnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
