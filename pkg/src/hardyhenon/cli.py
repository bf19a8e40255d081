"""Command-line runner: solve / minimize / verify / simulate / sweep.

Artifacts: profile CSVs (full double precision), JSON reports, and a
manifest JSON per run listing parameters, tolerances, content digests of
inputs and outputs, and the wall clock. Reports themselves carry no
timestamps, so identical invocations produce byte-identical reports.

Exit codes: 0 success, 1 usage, 2 numeric failure,
3 bracket/convergence failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    BracketInvalid,
    DegenerateProfile,
    HardyHenonError,
    IntegratorStall,
    NonConvergence,
    NonIntegrable,
    StabilityViolation,
    WrongRegime,
)
from .params import InvalidParameter, Regime, derive, validate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_BRACKET = 3
EXIT_VERIFY = 4

_NUMERIC_ERRORS = (IntegratorStall, StabilityViolation, NonIntegrable, DegenerateProfile)
_BRACKET_ERRORS = (BracketInvalid, NonConvergence)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_manifest(out_base: Path, args_dict, inputs, outputs, wall_clock, seed):
    params = {
        k: v for k, v in args_dict.items()
        if isinstance(v, (str, int, float, bool, list, tuple, type(None)))
    }
    manifest = {
        "tool": "hardyhenon",
        "version": __version__,
        "parameters": params,
        "seed": seed,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs if Path(p).exists()},
        "wall_clock_s": wall_clock,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json(str(out_base) + ".manifest.json", manifest)


def _seed() -> int:
    return int(os.environ.get("HH_SEED", "0"))


def _params_from_args(args):
    cfg = {}
    if getattr(args, "config", None):
        for line in Path(args.config).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            cfg[key.strip()] = val.strip()
    N = args.N if args.N is not None else int(cfg.get("N"))
    m = args.m if args.m is not None else float(cfg.get("m"))
    sigma = args.sigma if args.sigma is not None else float(cfg.get("sigma"))
    regime = getattr(args, "regime", None) or cfg.get("regime") or "Admissible"
    return validate(N, m, sigma, regime=regime)


def defaults_table() -> dict:
    from .certificates import DEFAULT_TOLERANCES
    from .minimizer import MinimizeControls
    from .shooting import ShootControls

    return {
        "solve": dataclasses.asdict(ShootControls()),
        "minimize": dataclasses.asdict(MinimizeControls()),
        "verify_tolerances": dict(DEFAULT_TOLERANCES),
        "simulate": {
            "n_cells": 2000,
            "horizon_s": 3.0,
            "delta": 0.0,
            "box_factor": 1.8,
            "safety": 0.4,
            "dt_min": 1e-14,
        },
        "seed_env": "HH_SEED",
    }


def run_solve(args) -> int:
    from .radial import write_profile_csv
    from .shooting import ShootControls, bisect_for_support, find_bracket

    t0 = time.time()
    params = _params_from_args(args)
    controls = ShootControls(
        rtol=args.rtol, atol=args.atol, eps_cap=args.eps_cap, n_profile=args.n_profile
    )
    if args.v0_lo is not None and args.v0_hi is not None:
        bracket = (args.v0_lo, args.v0_hi)
    else:
        bracket = find_bracket(params, controls)
    result = bisect_for_support(params, bracket, controls)
    out = Path(args.out)
    write_profile_csv(out, result.profile, params.N, params.m, params.sigma)
    report = {
        "V0_star": result.V0_star,
        "R": result.R,
        "bracket_width": result.bracket_width,
        "integrator_tolerance": result.integrator_tolerance,
        "r0_tail": result.r0_tail,
        "iterations": result.n_iterations,
        "diagnostics": result.diagnostics,
    }
    report_path = args.report or str(out) + ".report.json"
    _write_json(report_path, report)
    _write_manifest(out, vars(args), [], [out, report_path], time.time() - t0, _seed())
    print(f"solve: V0*={result.V0_star:.12g} R={result.R:.12g} -> {out}")
    return EXIT_OK


def run_minimize(args) -> int:
    from .minimizer import MinimizeControls, ckn_constant, minimize, rescale_to_solution, sharpness_suite
    from .radial import write_profile_csv

    t0 = time.time()
    params = _params_from_args(args)
    der = derive(params)
    controls = MinimizeControls(
        grid_size=args.grid_size, r_max=args.rmax, kkt_tol=args.tol
    )
    state, report = minimize(params, controls=controls)
    solution = rescale_to_solution(state.profile, report.lam, der)
    out = Path(args.out)
    write_profile_csv(out, solution, params.N, params.m, params.sigma)
    payload = dict(report.as_dict())
    payload.update(
        {
            "kkt_residual": state.kkt_residual,
            "iterations": state.iteration,
            "converged": state.converged,
            "grid_size": state.grid_size,
            "V0_rescaled": float(solution.values[0]),
            "support_radius_rescaled": solution.support_radius,
        }
    )
    try:
        payload["ckn_constant"] = ckn_constant(params, der, report)
    except HardyHenonError as exc:
        payload["ckn_constant_error"] = str(exc)
    if args.sharpness_profiles:
        payload["sharpness_min_S"] = sharpness_suite(
            params, der, report.K_star, n_profiles=args.sharpness_profiles,
            seed=_seed(), r_max=1.2 * state.profile.r_max,
        )
    report_path = args.report or str(out) + ".report.json"
    _write_json(report_path, payload)
    _write_manifest(out, vars(args), [], [out, report_path], time.time() - t0, _seed())
    print(
        f"minimize: K*={report.K_star:.10g} S={report.S_of_minimizer:.10g} "
        f"kkt={state.kkt_residual:.2e} -> {out}"
    )
    return EXIT_OK if state.converged else EXIT_BRACKET


def run_verify(args) -> int:
    from .certificates import certify
    from .radial import read_profile_csv

    t0 = time.time()
    meta, profile = read_profile_csv(args.profile)
    regime = "NonexistenceProbe" if meta["sigma"] <= -2.0 else "Admissible"
    params = validate(meta["N"], meta["m"], meta["sigma"], regime=regime)
    overrides = {}
    if args.tol_poh is not None:
        overrides.update({"poh1": args.tol_poh, "poh2": args.tol_poh, "poh3": args.tol_poh})
    report_path = args.report or str(args.profile) + ".verify.json"
    try:
        if float(np.max(profile.values)) <= 0.0:
            raise DegenerateProfile("zero profile has no certificates to check")
        report = certify(params, profile, tolerances=overrides or None, V0=meta["V0"])
    except DegenerateProfile as exc:
        _write_json(report_path, {"error": type(exc).__name__, "message": str(exc), "verdicts": {}})
        _write_manifest(Path(report_path), vars(args), [args.profile], [report_path],
                        time.time() - t0, _seed())
        print(f"verify: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    _write_json(report_path, report.as_dict())
    _write_manifest(Path(report_path), vars(args), [args.profile], [report_path],
                    time.time() - t0, _seed())
    n_fail = sum(1 for v in report.verdicts.values() if v == "fail")
    print(f"verify: {len(report.verdicts)} checks, {n_fail} failing -> {report_path}")
    return EXIT_OK if report.all_pass else EXIT_VERIFY


def run_simulate(args) -> int:
    from .parabolic import track_separate_variables
    from .radial import read_profile_csv

    t0 = time.time()
    meta, profile = read_profile_csv(args.profile)
    params = validate(meta["N"], meta["m"], meta["sigma"])
    L = args.box_factor * (profile.support_radius or profile.r_max)
    report = track_separate_variables(
        params, profile, horizon_s=args.horizon_s, delta=args.delta,
        n_cells=args.cells, L=L,
    )
    out = Path(args.out)
    with open(out, "w") as f:
        f.write("s,deviation\n")
        for s, d in report.deviation_history:
            f.write("%.17g,%.17g\n" % (s, d))
    report_path = args.report or str(out) + ".report.json"
    payload = report.as_dict()
    payload.pop("runtime_s", None)  # timing lives in the manifest
    _write_json(report_path, payload)
    _write_manifest(out, vars(args), [args.profile], [out, report_path],
                    time.time() - t0, _seed())
    print(
        f"simulate: max deviation {report.max_deviation:.3e} over s<=",
        f"{args.horizon_s} ({report.n_steps} steps) -> {out}",
    )
    if args.delta == 0.0 and report.verdict != "pass":
        return EXIT_VERIFY
    return EXIT_OK


def _sweep_cell(task):
    """One sweep row: solve, minimize, cross-validate, verify."""
    N, m, sigma, outdir, grid_size, n_profile = task
    row = {"N": N, "m": m, "sigma": sigma, "status": "ok"}
    try:
        from .certificates import certify, nonexistence_certificate
        from .minimizer import MinimizeControls, minimize, rescale_to_solution
        from .radial import write_profile_csv
        from .shooting import (
            ShootControls,
            ShotKind,
            bisect_for_support,
            find_bracket,
            scan_bracket,
        )

        if sigma <= -2.0:
            params = validate(N, m, sigma, regime=Regime.NONEXISTENCE_PROBE)
            cert = nonexistence_certificate(params)
            scan = scan_bracket(params, np.geomspace(1e-3, 1e3, 7),
                                ShootControls(rtol=1e-8, atol=1e-10))
            row["verdict"] = (
                "nonexistence-certified" if cert["signs_certified"] else "fail"
            )
            row["touchdowns_found"] = sum(1 for _, k in scan if k is ShotKind.TOUCHDOWN)
            return row

        params = validate(N, m, sigma)
        der = derive(params)
        sc = ShootControls(eps_cap=1e-6, n_profile=n_profile)
        res = bisect_for_support(params, find_bracket(params, sc), sc)
        state, rep = minimize(params, controls=MinimizeControls(grid_size=grid_size))
        v = rescale_to_solution(state.profile, rep.lam, der)
        cert = certify(params, res.profile)
        tag = f"N{N}_m{m}_s{sigma}"
        write_profile_csv(Path(outdir) / f"profile_{tag}.csv", res.profile, N, m, sigma)
        row.update(
            {
                "V0_star": res.V0_star,
                "R": res.R,
                "K_star": rep.K_star,
                "S_min": rep.S_of_minimizer,
                "poh1": cert.poh1_residual,
                "poh2": cert.poh2_residual,
                "poh3": cert.poh3_residual,
                "v0_cross_rel": abs(v.values[0] - res.V0_star) / res.V0_star,
                "verdict": "pass" if cert.all_pass else "fail",
            }
        )
    except Exception as exc:  # crash isolation: a failing cell never aborts the sweep
        row["status"] = f"error: {type(exc).__name__}: {exc}"
        row["verdict"] = "error"
    return row


SWEEP_COLUMNS = [
    "N", "m", "sigma", "status", "V0_star", "R", "K_star", "S_min",
    "poh1", "poh2", "poh3", "v0_cross_rel", "touchdowns_found", "verdict",
]


def run_sweep(args) -> int:
    t0 = time.time()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (N, m, sigma, str(outdir), args.grid_size, args.n_profile)
        for N in args.N_list
        for m in args.m_list
        for sigma in args.sigma_list
    ]
    if args.jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, tasks))
    else:
        rows = [_sweep_cell(t) for t in tasks]
    summary = outdir / "summary.csv"
    with open(summary, "w") as f:
        f.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(_csv_cell(row.get(c)) for c in SWEEP_COLUMNS) + "\n")
    _write_manifest(summary, vars(args), [], [summary], time.time() - t0, _seed())
    n_bad = sum(1 for r in rows if r.get("verdict") not in ("pass", "nonexistence-certified"))
    print(f"sweep: {len(rows)} cells, {n_bad} not passing -> {summary}")
    return EXIT_OK


def _csv_cell(val) -> str:
    if val is None:
        return ""
    if isinstance(val, float):
        return "%.17g" % val
    return str(val).replace(",", ";")


def run_show_defaults(_args) -> int:
    print(json.dumps(defaults_table(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hardyhenon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_params(sp):
        sp.add_argument("--N", type=int, default=None)
        sp.add_argument("--m", type=float, default=None)
        sp.add_argument("--sigma", type=float, default=None)
        sp.add_argument("--regime", choices=[r.value for r in Regime], default=None)
        sp.add_argument("--config", help="key=value file with N, m, sigma, regime")

    sp = sub.add_parser("solve", help="shooting route: threshold height and support radius")
    add_params(sp)
    sp.add_argument("--v0-lo", type=float, default=None)
    sp.add_argument("--v0-hi", type=float, default=None)
    sp.add_argument("--rtol", type=float, default=1e-10)
    sp.add_argument("--atol", type=float, default=1e-12)
    sp.add_argument("--eps-cap", type=float, default=1e-4)
    sp.add_argument("--n-profile", type=int, default=4000)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", default=None)
    sp.set_defaults(func=run_solve)

    sp = sub.add_parser("minimize", help="variational route: constrained minimizer and sharp constant")
    add_params(sp)
    sp.add_argument("--grid-size", type=int, default=2048)
    sp.add_argument("--rmax", type=float, default=None)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--sharpness-profiles", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", default=None)
    sp.set_defaults(func=run_minimize)

    sp = sub.add_parser("verify", help="run all certificates on a profile file")
    sp.add_argument("--profile", required=True)
    sp.add_argument("--report", default=None)
    sp.add_argument("--tol-poh", type=float, default=None)
    sp.set_defaults(func=run_verify)

    sp = sub.add_parser("simulate", help="rescaled porous-medium run from a profile")
    sp.add_argument("--profile", required=True)
    sp.add_argument("--horizon-s", type=float, default=3.0)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--cells", type=int, default=2000)
    sp.add_argument("--box-factor", type=float, default=1.8)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", default=None)
    sp.set_defaults(func=run_simulate)

    sp = sub.add_parser("sweep", help="grid of parameter triples, one pipeline per cell")
    sp.add_argument("--N-list", type=int, nargs="*", default=[3])
    sp.add_argument("--m-list", type=float, nargs="*", default=[2.0])
    sp.add_argument("--sigma-list", type=float, nargs="*", default=[-1.0])
    sp.add_argument("--outdir", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--grid-size", type=int, default=2048)
    sp.add_argument("--n-profile", type=int, default=4000)
    sp.set_defaults(func=run_sweep)

    sp = sub.add_parser("show-defaults", help="print the centralized defaults table")
    sp.set_defaults(func=run_show_defaults)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InvalidParameter as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _BRACKET_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except _NUMERIC_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WrongRegime as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
