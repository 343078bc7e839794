"""Command-line interface.

Subcommands: bounds, test, bootstrap, simulate, benchmark, power, coverage,
curves. Every run emits a manifest (command, resolved parameters, seed,
input digests, version, duration) next to its output so results can be
reproduced bit-exactly. Exit codes: 0 success, 1 runtime error,
2 infeasible budget, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import ScalarTau, VectorTau, ate_bounds_scalar, ate_bounds_vector, curve_samples
from .covariance import (
    load_covariance_csv,
    load_dataset_csv,
    sample_covariance,
    write_dataset_csv,
)
from .errors import Infeasible, IvBoundsError
from .experiments import run_benchmark_records, run_coverage, run_power, summarize_benchmark
from .inference import bootstrap_bounds, exclusion_test
from .simulate import SimConfig, generate_dataset

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 64

SEED_ENV_VAR = "IVBOUNDS_SEED"


class UsageError(Exception):
    pass


def _sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def _manifest(command: str, params: dict, seed, inputs: list[str], started: float) -> dict:
    return {
        "command": command,
        "parameters": {
            k: v
            for k, v in params.items()
            if v is not None and not k.startswith("_") and not callable(v)
            and k not in ("func", "command")
        },
        "seed": seed,
        "input_digests": {p: _sha256(p) for p in inputs},
        "version": __version__,
        "duration_seconds": round(time.perf_counter() - started, 6),
    }


def _emit(payload: dict, out: str | None, manifest: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        _write_manifest(out, manifest)
    print(text)


def _write_manifest(out: str, manifest: dict) -> None:
    Path(str(out) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _write_rows_csv(path: str, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in columns})


def _load_config_file(path: str) -> dict:
    """Flat key=value file; '#' starts a comment; blank lines ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(args: argparse.Namespace, defaults: dict, types: dict) -> None:
    """Fill args from a config file for keys the user left at defaults."""
    if not getattr(args, "config", None):
        return
    file_values = _load_config_file(args.config)
    for key, raw in file_values.items():
        if key not in defaults:
            raise UsageError(f"unknown config key: {key}")
        if getattr(args, key) != defaults[key]:
            continue  # explicit flag wins
        convert = types.get(key)
        default = defaults[key]
        if convert is not None:
            value = convert(raw)
        elif isinstance(default, bool):
            value = raw.lower() in ("1", "true", "yes")
        else:
            value = raw
        setattr(args, key, value)


def _blocks_from_args(args) -> tuple[object, list[str]]:
    if getattr(args, "covariance", None):
        return load_covariance_csv(args.covariance), [args.covariance]
    data = load_dataset_csv(args.data)
    return sample_covariance(data), [args.data]


def _tau_spec_from_args(args) -> ScalarTau | VectorTau:
    if getattr(args, "tau_vector", None):
        vec = np.loadtxt(args.tau_vector, delimiter=",", ndmin=1)
        return VectorTau(vec)
    if args.tau is None:
        raise UsageError("either --tau or --tau-vector is required")
    return ScalarTau(args.p, args.tau)


def _bounds_payload(bounds, spec) -> dict:
    geom = bounds.geometry
    return {
        "theta_minus": bounds.theta_minus,
        "theta_plus": bounds.theta_plus,
        "rho_minus": bounds.rho_minus,
        "rho_plus": bounds.rho_plus,
        "theta_check": geom.theta_check[0] if geom is not None else None,
        "rho_check": geom.rho_check[0] if geom is not None else None,
        "tau_check": geom.tau_check if geom is not None else None,
        "tau": bounds.tau_used,
        "p": spec.p if isinstance(spec, ScalarTau) else None,
        "feasible": True,
        "boundary_clipped": bounds.boundary_clipped,
    }


def cmd_bounds(args) -> int:
    started = time.perf_counter()
    blocks, inputs = _blocks_from_args(args)
    spec = _tau_spec_from_args(args)
    if getattr(args, "tau_vector", None):
        inputs.append(args.tau_vector)
    try:
        if isinstance(spec, ScalarTau):
            bounds = ate_bounds_scalar(blocks, spec)
        else:
            bounds = ate_bounds_vector(blocks, spec)
    except Infeasible as exc:
        payload = {"feasible": False, "error": str(exc)}
        manifest = _manifest("bounds", vars(args), args.seed, inputs, started)
        _emit(payload, args.out, manifest)
        return EXIT_INFEASIBLE
    payload = _bounds_payload(bounds, spec)
    manifest = _manifest("bounds", vars(args), args.seed, inputs, started)
    _emit(payload, args.out, manifest)
    return EXIT_OK


def cmd_test(args) -> int:
    started = time.perf_counter()
    if args.B < 99:
        raise UsageError("--B must be at least 99")
    data = load_dataset_csv(args.data)
    result = exclusion_test(data, B=args.B, seed=args.seed, keep_null_stats=False)
    manifest = _manifest("test", vars(args), args.seed, [args.data], started)
    _emit(result.to_dict(), args.out, manifest)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    started = time.perf_counter()
    data = load_dataset_csv(args.data)
    spec = _tau_spec_from_args(args)
    res_minus, res_plus = bootstrap_bounds(
        data, spec, B=args.B, alpha=args.alpha, method=args.method, seed=args.seed
    )
    payload = {"lower_bound": res_minus.to_dict(), "upper_bound": res_plus.to_dict()}
    manifest = _manifest("bootstrap", vars(args), args.seed, [args.data], started)
    _emit(payload, args.out, manifest)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    cfg = SimConfig(
        d_z=args.d_z,
        sigma_zz_kind=args.sigma_zz_kind,
        toeplitz_autocorr=args.toeplitz_autocorr,
        rho=args.rho,
        snr_x=args.snr_x,
        snr_y=args.snr_y,
        theta_star=args.theta_star,
        sigma_yy=args.sigma_yy,
        gamma_sparsity=args.gamma_sparsity,
        seed=args.seed,
    )
    data, truth = generate_dataset(cfg, args.n)
    csv_path = args.out_prefix + ".csv"
    truth_path = args.out_prefix + ".truth.json"
    write_dataset_csv(csv_path, data)
    Path(truth_path).write_text(
        json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    manifest = _manifest("simulate", vars(args), args.seed, [], started)
    _write_manifest(args.out_prefix, manifest)
    print(json.dumps({"data": csv_path, "truth": truth_path}))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    started = time.perf_counter()
    records = run_benchmark_records(
        n=args.n, runs_per_cell=args.runs, tau_factor=args.tau_factor,
        seed=args.seed, full=args.full,
    )
    _write_rows_csv(
        args.out, records,
        ["config_id", "run", "method", "estimate_lo", "estimate_hi",
         "theta_star", "d_z", "sigma_zz_kind", "rho", "snr_x", "snr_y"],
    )
    summary = summarize_benchmark(records)
    rate = float(np.mean([c.contain_rate >= 1.0 - 1e-12 for c in summary]))
    manifest = _manifest("benchmark", vars(args), args.seed, [], started)
    _write_manifest(args.out, manifest)
    print(json.dumps({"out": args.out, "cells": len(summary),
                      "all_runs_contain_rate": rate}))
    return EXIT_OK


def cmd_power(args) -> int:
    started = time.perf_counter()
    targets = tuple(float(t) for t in args.targets.split(","))
    points = run_power(
        tau_check_targets=targets, n=args.n, runs=args.runs,
        n_null=args.B, level=args.level, d_z=args.d_z, seed=args.seed,
    )
    rows = [p.to_dict() for p in points]
    _write_rows_csv(args.out, rows, list(rows[0].keys()))
    manifest = _manifest("power", vars(args), args.seed, [], started)
    _write_manifest(args.out, manifest)
    print(json.dumps({"out": args.out, "points": len(rows)}))
    return EXIT_OK


def cmd_coverage(args) -> int:
    started = time.perf_counter()
    rhos = tuple(float(r) for r in args.rhos.split(","))
    cells = run_coverage(
        rhos=rhos, n=args.n, n_datasets=args.datasets, n_boot=args.B,
        alpha=args.alpha, d_z=args.d_z, seed=args.seed,
    )
    rows = [c.to_dict() for c in cells]
    _write_rows_csv(args.out, rows, list(rows[0].keys()))
    manifest = _manifest("coverage", vars(args), args.seed, [], started)
    _write_manifest(args.out, manifest)
    print(json.dumps({"out": args.out, "cells": len(rows)}))
    return EXIT_OK


def cmd_curves(args) -> int:
    started = time.perf_counter()
    blocks, inputs = _blocks_from_args(args)
    grid = np.linspace(-1.0, 1.0, args.grid_size + 2)[1:-1]
    rows = curve_samples(blocks, args.p, grid)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "theta", "leakage"])
        writer.writerows(rows.tolist())
    manifest = _manifest("curves", vars(args), args.seed, inputs, started)
    _write_manifest(args.out, manifest)
    print(json.dumps({"out": args.out, "rows": int(rows.shape[0])}))
    return EXIT_OK


def _add_data_args(sub, covariance_ok: bool = False):
    sub.add_argument("--data", help="dataset CSV with columns X,Y,Z1..Zd")
    if covariance_ok:
        sub.add_argument(
            "--covariance",
            help="covariance-matrix CSV (Z block first, then X, Y) instead of --data",
        )


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=_default_seed(),
                     help=f"RNG seed (default from ${SEED_ENV_VAR} or 0)")
    sub.add_argument("--config", help="flat key=value config file; flags override")
    sub.add_argument("--out", help="write JSON/CSV output (and manifest) here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivbounds",
        description="Sharp bounds on causal effects with leaky instruments.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    b = subs.add_parser("bounds", help="compute ATE bounds under a leakage budget")
    _add_data_args(b, covariance_ok=True)
    b.add_argument("--tau", type=float, help="scalar leakage budget")
    b.add_argument("--tau-vector", help="CSV file of per-instrument thresholds")
    b.add_argument("--p", type=float, default=2.0, help="norm order (default 2)")
    _add_common(b)
    b.set_defaults(func=cmd_bounds)

    t = subs.add_parser("test", help="Monte Carlo exclusion test")
    _add_data_args(t)
    t.add_argument("--B", type=int, default=1000, help="null replicates (>= 99)")
    _add_common(t)
    t.set_defaults(func=cmd_test)

    bo = subs.add_parser("bootstrap", help="bootstrap CIs for the bounds")
    _add_data_args(bo)
    bo.add_argument("--tau", type=float, help="scalar leakage budget")
    bo.add_argument("--tau-vector", help="CSV file of per-instrument thresholds")
    bo.add_argument("--p", type=float, default=2.0)
    bo.add_argument("--B", type=int, default=2000, help="bootstrap replicates (>= 199)")
    bo.add_argument("--alpha", type=float, default=0.1)
    bo.add_argument("--method", choices=["empirical", "kernel", "gaussian"],
                    default="empirical")
    _add_common(bo)
    bo.set_defaults(func=cmd_bootstrap)

    s = subs.add_parser("simulate", help="draw a synthetic dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d-z", type=int, default=5, dest="d_z")
    s.add_argument("--sigma-zz-kind", choices=["diagonal", "toeplitz"],
                   default="diagonal", dest="sigma_zz_kind")
    s.add_argument("--toeplitz-autocorr", type=float, default=0.5,
                   dest="toeplitz_autocorr")
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--snr-x", type=float, default=2.0, dest="snr_x")
    s.add_argument("--snr-y", type=float, default=2.0, dest="snr_y")
    s.add_argument("--theta-star", type=float, default=1.0, dest="theta_star")
    s.add_argument("--sigma-yy", type=float, default=10.0, dest="sigma_yy")
    s.add_argument("--gamma-sparsity", type=float, default=0.2,
                   dest="gamma_sparsity")
    s.add_argument("--out-prefix", required=True, dest="out_prefix")
    _add_common(s)
    s.set_defaults(func=cmd_simulate)

    be = subs.add_parser("benchmark", help="containment benchmark over a grid")
    be.add_argument("--n", type=int, default=1000)
    be.add_argument("--runs", type=int, default=10)
    be.add_argument("--tau-factor", type=float, default=1.1, dest="tau_factor")
    be.add_argument("--full", action="store_true",
                    help="widen to the full grid instead of the reduced one")
    _add_common(be)
    be.set_defaults(func=cmd_benchmark)

    po = subs.add_parser("power", help="rejection-rate curve for the exclusion test")
    po.add_argument("--targets", default="0,0.25,0.5,0.75,1.0",
                    help="comma-separated true minimal-leakage values")
    po.add_argument("--n", type=int, default=1000)
    po.add_argument("--runs", type=int, default=200)
    po.add_argument("--B", type=int, default=500)
    po.add_argument("--level", type=float, default=0.1)
    po.add_argument("--d-z", type=int, default=5, dest="d_z")
    _add_common(po)
    po.set_defaults(func=cmd_power)

    co = subs.add_parser("coverage", help="bootstrap CI coverage study")
    co.add_argument("--rhos", default="-0.6,0,0.6")
    co.add_argument("--n", type=int, default=1000)
    co.add_argument("--datasets", type=int, default=100)
    co.add_argument("--B", type=int, default=500)
    co.add_argument("--alpha", type=float, default=0.1)
    co.add_argument("--d-z", type=int, default=5, dest="d_z")
    _add_common(co)
    co.set_defaults(func=cmd_coverage)

    cu = subs.add_parser("curves", help="sample the leakage curve over rho")
    _add_data_args(cu, covariance_ok=True)
    cu.add_argument("--p", type=float, default=2.0)
    cu.add_argument("--grid-size", type=int, default=1001, dest="grid_size")
    _add_common(cu)
    cu.set_defaults(func=cmd_curves)

    for sub in (b, t, bo, s, be, po, co, cu):
        actions = [a for a in sub._actions if a.dest not in ("help", "func")]
        sub.set_defaults(
            _defaults={a.dest: a.default for a in actions},
            _types={a.dest: a.type for a in actions},
        )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; remap (0 for --help/--version)
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        _apply_config(args, getattr(args, "_defaults", {}),
                      getattr(args, "_types", {}))
        if hasattr(args, "data") and not args.data and not getattr(args, "covariance", None):
            needs_data = args.command in ("bounds", "test", "bootstrap", "curves")
            if needs_data:
                raise UsageError("--data (or --covariance) is required")
        for path_attr in ("data", "covariance", "tau_vector", "config"):
            path = getattr(args, path_attr, None)
            if path and not Path(path).exists():
                raise UsageError(f"file not found: {path}")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IvBoundsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
