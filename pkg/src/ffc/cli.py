"""Command-line front end.

    ffc check|connection|geodesic|oracle-compare|examples --config <path> [--out <path>] [--tol <float>] [--seed <u64>]

``--config`` also accepts ``builtin:<name>``.  Exit codes: 0 success, 1 a check
or tolerance failed, 2 bad input (unreadable config, parse error, bad arguments).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

import numpy as np

from .config import BUILTINS, ProblemConfig, example_json
from .connection import berwald_general, connection_at, holonomic_oracle
from .errors import ConfigError, FinslerError, NotRegular, ParseError
from .frame import frame_point, structure_coefficients
from .geodesic import GeodesicState, integrate, solve_second_class
from .metric import analyze, homogeneity_check

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
SCALINGS = (0.5, 2.0, 3.0)


def _err(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def _finite_max(values) -> float:
    arr = np.abs(np.asarray(values, dtype=float))
    return float(arr.max()) if arr.size else 0.0


def _multipliers(cfg: ProblemConfig, x, theta):
    rule = cfg.lambdaI()
    if rule == "zero":
        return None
    if rule == "solve":
        ic = cfg.integration_config()
        return solve_second_class(cfg.chart, cfg.metric, GeodesicState(0.0, x, theta), ic).values
    return rule


@contextlib.contextmanager
def _sink(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _dump(obj) -> str:
    return json.dumps(obj, allow_nan=False, sort_keys=False)


def run_check(cfg: ProblemConfig, tol: float, seed=None) -> dict:
    rtol = float(cfg.tolerances["rank"])
    stol = float(cfg.tolerances["frame_singularity"])
    htol = float(cfg.tolerances["homogeneity"])
    worst = {"homogeneity": 0.0, "cartan": 0.0, "metricity": 0.0, "G_scaling": 0.0}
    profile, errors = {}, []
    min_det = np.inf
    points = cfg.sample_points(seed=seed)
    for x, th in points:
        where = {"x": x.tolist(), "theta": th.tolist()}
        try:
            worst["homogeneity"] = max(worst["homogeneity"], homogeneity_check(cfg.metric, th, SCALINGS))
            fp = frame_point(cfg.chart, x, stol)
            min_det = min(min_det, abs(np.linalg.det(fp.E)) / np.linalg.norm(fp.E, 2) ** cfg.dim)
            cd = connection_at(cfg.chart, cfg.metric, x, th, _multipliers(cfg, x, th), rank_tol=rtol, singular_tol=stol)
        except FinslerError as exc:
            errors.append({**where, "error": _err(exc)})
            continue
        worst["cartan"] = max(worst["cartan"], _finite_max(cd.cartan_residual))
        worst["metricity"] = max(worst["metricity"], _finite_max(cd.metricity_residual))
        key = f"r={cd.analysis.rank},D={cd.D}"
        profile[key] = profile.get(key, 0) + 1
        # G must scale with degree two; multipliers are held fixed (zero rule only)
        if cd.D == 0 or cfg.lambdaI() == "zero":
            c = structure_coefficients(fp)
            scale = max(1.0, _finite_max(cd.G))
            for lam in SCALINGS:
                try:
                    ma = analyze(cfg.metric, lam * th, rtol, cd.analysis.partition)
                except FinslerError as exc:
                    errors.append({**where, "error": _err(exc)})
                    break
                diff = berwald_general(ma, c) - lam**2 * cd.G
                worst["G_scaling"] = max(worst["G_scaling"], _finite_max(diff) / (lam**2 * scale))
    passed = (
        not errors
        and worst["homogeneity"] <= htol
        and worst["cartan"] <= tol
        and worst["metricity"] <= tol
        and worst["G_scaling"] <= tol
    )
    return {
        "name": cfg.name,
        "points": len(points),
        "tolerance": tol,
        "homogeneity_tolerance": htol,
        "max_homogeneity_residual": worst["homogeneity"],
        "max_G_scaling_residual": worst["G_scaling"],
        "max_cartan_residual": worst["cartan"],
        "max_metricity_residual": worst["metricity"],
        "min_relative_frame_det": None if not np.isfinite(min_det) else float(min_det),
        "rank_profile": profile,
        "errors": errors,
        "pass": bool(passed),
    }


def connection_records(cfg: ProblemConfig, seed=None):
    rtol = float(cfg.tolerances["rank"])
    stol = float(cfg.tolerances["frame_singularity"])
    for x, th in cfg.sample_points(seed=seed):
        rec = {"x": x.tolist(), "theta": th.tolist()}
        try:
            cd = connection_at(cfg.chart, cfg.metric, x, th, _multipliers(cfg, x, th), rank_tol=rtol, singular_tol=stol)
        except FinslerError as exc:
            rec["error"] = _err(exc)
            yield rec
            continue
        rec.update(
            G=cd.G.tolist(),
            N=cd.N.tolist(),
            C=cd.C.tolist(),
            rank=cd.analysis.rank,
            D=cd.D,
            lambdaI=cd.lambdaI.tolist(),
            residuals={"cartan": _finite_max(cd.cartan_residual), "metricity": _finite_max(cd.metricity_residual)},
        )
        yield rec


def run_oracle_compare(cfg: ProblemConfig, tol: float, seed=None) -> dict:
    rtol = float(cfg.tolerances["rank"])
    stol = float(cfg.tolerances["frame_singularity"])
    worst, count = 0.0, 0
    report = {"name": cfg.name, "tolerance": tol}
    try:
        for x, th in cfg.sample_points(seed=seed):
            fp = frame_point(cfg.chart, x, stol)
            ma = analyze(cfg.metric, th, rtol)
            if ma.D:
                raise NotRegular(f"metric Hessian has {ma.D} extra null direction(s); the coordinate formula needs D = 0")
            G = berwald_general(ma, structure_coefficients(fp))
            _, G_oracle = holonomic_oracle(cfg.chart, cfg.metric, x, fp.Einv @ th, rtol)
            worst = max(worst, _finite_max(G - G_oracle))
            count += 1
    except FinslerError as exc:
        report.update(points=count, error=_err(exc), max_abs_diff=None, **{"pass": False})
        return report
    report.update(points=count, max_abs_diff=worst, **{"pass": worst <= tol})
    return report


def geodesic_rows(cfg: ProblemConfig):
    result = integrate(cfg.chart, cfg.metric, cfg.initial_state(), cfg.integration_config())
    d = result.diagnostics
    el = d.get("el_residual")
    n = cfg.dim
    header = ["s"] + [f"x{i}" for i in range(n)] + [f"Theta{i}" for i in range(n)] + ["L", "maxC", "maxELresidual"]
    rows = []
    for k, st in enumerate(result.states):
        r_el = float(np.max(np.abs(el[k]))) if el is not None else float("nan")
        rows.append([st.s, *st.x, *st.Theta, d["L"][k], d["max_C"][k], r_el])
    return header, rows, result


def _write_csv(fh, header, rows):
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join("%.17g" % v for v in row) + "\n")


def _cmd_check(args, cfg):
    tol = args.tol if args.tol is not None else float(cfg.tolerances["residual"])
    report = run_check(cfg, tol, args.seed)
    with _sink(args.out or cfg.output.get("check")) as fh:
        fh.write(json.dumps(report, indent=2, allow_nan=False) + "\n")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _cmd_connection(args, cfg):
    failed = False
    with _sink(args.out or cfg.output.get("connection")) as fh:
        for rec in connection_records(cfg, args.seed):
            failed |= "error" in rec
            fh.write(_dump(rec) + "\n")
    return EXIT_FAIL if failed else EXIT_OK


def _cmd_geodesic(args, cfg):
    header, rows, result = geodesic_rows(cfg)
    with _sink(args.out or cfg.output.get("geodesic")) as fh:
        _write_csv(fh, header, rows)
    d = result.diagnostics
    tol = args.tol if args.tol is not None else float(cfg.tolerances["residual"])
    bad = d["constraint_drift_exceeded"]
    if cfg.gauge["lambda0"] in (None, "zero", "0"):
        bad = bad or d["L_drift"] > tol
    print(
        f"L drift {d['L_drift']:.3g}, max |C| {d['max_abs_C']:.3g}, C drift {d['C_drift']:.3g}, "
        f"max EL residual {d.get('max_el_residual', float('nan')):.3g}",
        file=sys.stderr,
    )
    return EXIT_FAIL if bad else EXIT_OK


def _cmd_oracle(args, cfg):
    tol = args.tol if args.tol is not None else float(cfg.tolerances["residual"])
    report = run_oracle_compare(cfg, tol, args.seed)
    with _sink(args.out or cfg.output.get("oracle")) as fh:
        fh.write(json.dumps(report, indent=2, allow_nan=False) + "\n")
    if "error" in report:
        print(f"ffc: {report['error']}", file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def write_examples(directory) -> list:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in BUILTINS:
        path = out / f"{name}.json"
        path.write_text(example_json(name), encoding="utf-8")
        written.append(path)
    return written


COMMANDS = {
    "check": _cmd_check,
    "connection": _cmd_connection,
    "geodesic": _cmd_geodesic,
    "oracle-compare": _cmd_oracle,
}


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffc", description="Nonlinear Finsler connections in moving frames.")
    p.add_argument("command", choices=[*COMMANDS, "examples"])
    p.add_argument("--config", help="problem JSON, or builtin:<name>")
    p.add_argument("--out", help="output file (directory for 'examples'); default stdout")
    p.add_argument("--tol", type=float, help="override the residual tolerance")
    p.add_argument("--seed", type=_u64, help="override the sampling seed")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "examples":
        for path in write_examples(args.out or "."):
            print(path)
        return EXIT_OK
    if not args.config:
        print("ffc: error: --config is required", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = ProblemConfig.load(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ParseError) as exc:
        print(f"ffc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FinslerError as exc:
        print(f"ffc: {_err(exc)}", file=sys.stderr)
        return EXIT_FAIL
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stderr.close()
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
