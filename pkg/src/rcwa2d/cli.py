"""Command-line front end: ``rcwa run | validate | schema``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import apriori_constant, sesquilinear_residual
from .config import SCHEMA, ConfigError, RunConfig
from .convergence import ReferenceSpec, format_float, run_h_sweep, run_m_sweep
from .errors import RCWAError
from .fields import diffraction_efficiencies, field_grid
from .geometry import build_slicing, check_nontrapping, max_crossings, stairstep_error_norm, stairstep_permittivity
from .solver import solve_scattering

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _solve(cfg: RunConfig, out: Path, formats, threads) -> None:
    device, incident = cfg.device(), cfg.incident()
    disc = cfg.discretization
    slicing = build_slicing(device, disc["h"])
    sol = solve_scattering(device, slicing, incident, disc["M"], threads)
    eff = diffraction_efficiencies(sol)
    basis = sol.basis
    R = dict(zip(eff.orders_reflected.tolist(), eff.R.tolist()))
    T = dict(zip(eff.orders_transmitted.tolist(), eff.T.tolist()))
    if "csv" in formats:
        rows = []
        for i, n in enumerate(basis.indices.tolist()):
            r, t = complex(sol.r[i]), complex(sol.t[i])
            rows.append([n, float(basis.alphas[i]), r.real, r.imag, t.real, t.imag, float(R.get(n, 0.0)), float(T.get(n, 0.0))])
        _write_csv(out / "results.csv", ["order", "alpha", "r_re", "r_im", "t_re", "t_im", "R", "T"], rows)
        grid = cfg.output.get("grid", {})
        data = field_grid(sol, device.period, device.half_height, grid.get("nx", 64), grid.get("nz", 128))
        _write_csv(out / "field_grid.csv", ["x1", "x2", "re_u", "im_u"], [list(map(float, row)) for row in data])
    if "json" in formats:
        _write_json(
            out / "summary.json",
            {
                "run": "solve",
                "M": sol.M,
                "num_slices": slicing.num_slices,
                "h": slicing.h,
                "total_reflected": eff.total_reflected,
                "total_transmitted": eff.total_transmitted,
                "absorbed": eff.absorbed,
                "continuity_residual": sol.continuity_residual(),
                "max_exponential": sol.max_exponential,
            },
        )


def _sweep(cfg: RunConfig, out: Path, formats, threads) -> None:
    device, incident = cfg.device(), cfg.incident()
    disc = cfg.discretization
    ref = ReferenceSpec(disc["reference"]["M"], disc["reference"]["h"])
    policy = disc.get("floor_policy", "min")
    if cfg.run == "m_sweep":
        report = run_m_sweep(device, incident, disc["h"], disc["M_list"], ref, policy, threads)
    else:
        report = run_h_sweep(device, incident, disc["M"], disc["h_list"], ref, policy, threads)
    if "csv" in formats:
        (out / "results.csv").write_text(report.to_csv())
    if "json" in formats:
        _write_json(out / "summary.json", {"run": cfg.run, **report.summary()})


def _diagnose(cfg: RunConfig, out: Path, formats, threads) -> None:
    device, incident = cfg.device(), cfg.incident()
    disc = cfg.discretization
    slicing = build_slicing(device, disc["h"])
    sol = solve_scattering(device, slicing, incident, disc["M"], threads)
    nontrapping = check_nontrapping(device)
    apriori = apriori_constant(device, incident, sol)
    apriori_h = apriori_constant(device, incident, stairstep=stairstep_permittivity(device, slicing))
    residual = sesquilinear_residual(sol)
    stair = stairstep_error_norm(device, slicing, 1.0)
    quantities = {
        "nontrapping_satisfied": nontrapping.satisfied,
        "C_lemma2": apriori.C_lemma2,
        "C_theorem1": apriori.C_theorem1,
        "C_theorem1_stairstep": apriori_h.C_theorem1,
        "measured_ratio": apriori.measured_ratio,
        "residual_max_relative": residual.max_relative(),
        "stairstep_error_l1": stair,
        "max_crossings": max_crossings(device, slicing),
    }
    if "csv" in formats:
        rows = [[k, float(v) if not isinstance(v, bool) else int(v)] for k, v in quantities.items()]
        _write_csv(out / "results.csv", ["quantity", "value"], rows)
    if "json" in formats:
        _write_json(
            out / "summary.json",
            {
                "run": "diagnose",
                "nontrapping": nontrapping.to_dict(),
                "apriori": apriori.to_dict(),
                "apriori_stairstep": apriori_h.to_dict(),
                "residual_max_relative": residual.max_relative(),
                "stairstep_error_l1": stair,
                "max_crossings": quantities["max_crossings"],
            },
        )


RUNNERS = {"solve": _solve, "m_sweep": _sweep, "h_sweep": _sweep, "diagnose": _diagnose}


def cmd_run(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.get("directory", "rcwa_out"))
    out.mkdir(parents=True, exist_ok=True)
    formats = set(cfg.output.get("formats", ["csv", "json"]))
    try:
        RUNNERS[cfg.run](cfg, out, formats, args.threads)
    except (RCWAError, np.linalg.LinAlgError) as exc:
        print(f"error: {args.config}: solver failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote results to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        RunConfig.load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(SCHEMA, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcwa", description="2D s-polarized RCWA solver and convergence harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a run configuration")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides output.directory)")
    run.add_argument("--threads", type=int, default=None, help="worker threads")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a configuration against the schema")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    sch = sub.add_parser("schema", help="print the configuration JSON schema")
    sch.set_defaults(func=cmd_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
