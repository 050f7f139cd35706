"""``roughfilm`` command line.

Every subcommand prints one JSON report on stdout (keys sorted, so equal
inputs give byte-identical output) and optionally writes CSV tables.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 numerical
failure, 4 failed self-test.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import set_default_threads
from .anisotropy import compute, easy_axis
from .cell_solver import ConvergenceError, build_mesh, exchange_tensor, solve_cell
from .config import Config, ConfigError, default_config, load_config
from .energy import EnergyParams, MagnetizationField, constant_minimizer, energy_terms
from .gamma_validator import sweep
from .profiles import GeometryError
from .quadrature import NonFiniteError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def jsonable(obj):
    """Plain JSON types; raises NonFiniteError on NaN or infinity."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(dataclasses.asdict(obj))
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise NonFiniteError("report contains a non-finite number")
        return v
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(report) -> str:
    return json.dumps(jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _floats(text, count=None, what="value"):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) != count:
        raise ConfigError(f"{what}: expected {count} numbers, got {len(vals)}")
    return vals


def flatten(obj, prefix=""):
    """``(dotted key, value)`` pairs of a JSON-ready report, in key order."""
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], obj


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def cmd_ahom(cfg: Config, args):
    geom = cfg.build_geometry()
    rules = cfg.rules
    if args.parallel and geom.parallel_offset is None:
        raise ConfigError("--parallel requires f2 = f1 + a")
    t = compute(geom, parallel=True if args.parallel else None, cell=rules.cell_rule,
                plane=rules.plane_rule, split=rules.split_rule)
    ax = easy_axis(t)
    if args.csv:
        mats = [("total", t.total), ("sym", t.sym)]
        mats += [(f"term{i + 1}", m) for i, m in enumerate(t.terms)]
        _write_csv(args.csv, ["matrix"] + [f"a{i}{j}" for i in range(1, 4) for j in range(1, 4)],
                   [[name] + list(np.ravel(m)) for name, m in mats])
    return {"total": t.total, "sym": t.sym, "terms": list(t.terms), "easy_axis": ax.axis,
            "spectrum": ax.spectrum, "degenerate": ax.degenerate,
            "formula_used": t.formula_used, "rule_parameters": t.rule_parameters}


def cmd_ghom(cfg: Config, args):
    geom = cfg.build_geometry()
    mesh = build_mesh(geom, cfg.mesh)
    G = exchange_tensor(geom, mesh)
    report = {"G": G.G, "basis_energies": G.basis_energies, "residuals": G.residuals,
              "volume": G.volume, "mesh": dataclasses.asdict(cfg.mesh)}
    if args.field and not args.xi:
        raise ConfigError("--field needs --xi")
    if args.xi:
        xi = np.array(_floats(args.xi, 6, "--xi")).reshape(3, 2)
        sol = solve_cell(geom, mesh, xi)
        report["xi"] = {"xi": xi, "energy": sol.energy, "row_energies": sol.row_energies,
                        "reconstructed": G.energy_density(xi), "residual": sol.residual,
                        "iterations": sol.iterations}
        if args.field:
            coords = mesh.node_coordinates(geom)
            nh, _, nz = mesh.shape
            rows = []
            for i in range(nh):
                for j in range(nh):
                    for k in range(nz):
                        rows.append([i, j, k, *coords[i, j, k], *sol.phi[i, j, k]])
            _write_csv(args.field, ["i", "j", "k", "y1", "y2", "y3", "phi1", "phi2", "phi3"], rows)
    return report


def cmd_easy_axis(cfg: Config, args):
    geom = cfg.build_geometry()
    t = compute(geom, cell=cfg.rules.cell_rule, plane=cfg.rules.plane_rule, split=cfg.rules.split_rule)
    ax = easy_axis(t)
    params = EnergyParams(cfg.d, geom)
    axis, value = constant_minimizer(None, t, params)
    return {"axis": axis, "energy": value, "min_eigenvalue": ax.value, "spectrum": ax.spectrum,
            "degenerate": ax.degenerate, "perpendicular": bool(abs(abs(axis[2]) - 1.0) < 1e-9),
            "area": geom.area, "formula_used": t.formula_used}


def cmd_energy(cfg: Config, args):
    geom = cfg.build_geometry()
    try:
        field = MagnetizationField.from_csv(args.field, geom)
    except OSError as exc:
        raise ConfigError(f"cannot read field: {exc}") from exc
    t = compute(geom, cell=cfg.rules.cell_rule, plane=cfg.rules.plane_rule, split=cfg.rules.split_rule)
    G = exchange_tensor(geom, cfg.mesh)
    return energy_terms(field, G, t, EnergyParams(cfg.d, geom)).to_dict()


def cmd_gamma_sweep(cfg: Config, args):
    geom = cfg.build_geometry()
    m = np.array(_floats(args.m, 3, "--m"))
    norm = np.linalg.norm(m)
    if norm == 0:
        raise ConfigError("--m must be nonzero")
    m = m / norm
    eps = _floats(args.eps, None, "--eps")
    t = compute(geom, cell=cfg.rules.cell_rule, plane=cfg.rules.plane_rule, split=cfg.rules.split_rule)
    s = sweep(geom, m, eps, cfg.rules.validator, anisotropy=t)
    cols = ("eps", "I_eps", "target", "abs_error", "rel_error")
    if args.csv:
        _write_csv(args.csv, list(cols), [[getattr(r, c) for c in cols] for r in s.records])
    return {"m": s.m, "eps": list(s.eps_list), "records": [dataclasses.asdict(r) for r in s.records],
            "target": s.target, "extrapolated": s.extrapolated,
            "extrapolated_first_order": s.extrapolated_first_order,
            "extrapolation_model": s.extrapolation_model, "resolution": s.resolution,
            "formula_used": t.formula_used}


def cmd_selftest(cfg: Config, args):
    from .selftest import run_selftest
    return run_selftest()


COMMANDS = {
    "ahom": cmd_ahom,
    "ghom": cmd_ghom,
    "easy-axis": cmd_easy_axis,
    "energy": cmd_energy,
    "gamma-sweep": cmd_gamma_sweep,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker thread cap")

    parser = _Parser(prog="roughfilm", parents=[common],
                     description="Shape anisotropy and exchange of thin films with periodic rough surfaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("ahom", parents=[common], help="homogenized anisotropy tensor")
    p.add_argument("--parallel", action="store_true", help="use the parallel-roughness formula")
    p.add_argument("--csv", help="also write the matrices to this CSV file")

    p = sub.add_parser("ghom", parents=[common], help="exchange tensor from the cell problem")
    p.add_argument("--xi", help="slope matrix, six comma-separated values row by row")
    p.add_argument("--field", help="write the corrector for --xi to this CSV file")

    sub.add_parser("easy-axis", parents=[common], help="constant minimizer of the limit energy")

    p = sub.add_parser("energy", parents=[common], help="limit energy of a sampled field")
    p.add_argument("--field", required=True, help="CSV with x_index, y_index, m1, m2, m3")

    p = sub.add_parser("gamma-sweep", parents=[common], help="finite-eps energies against the limit")
    p.add_argument("--m", required=True, help="constant magnetization, e.g. 0,0,1")
    p.add_argument("--eps", default="0.125,0.0625,0.03125,0.015625", help="decreasing eps values")
    p.add_argument("--csv", help="also write the sweep table to this CSV file")

    sub.add_parser("selftest", parents=[common], help="run the acceptance checks")
    return parser


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "roughfilm: error: a command is required")
    except UsageError as exc:
        print(exc, file=stderr)
        return EXIT_USAGE
    try:
        threads = getattr(args, "threads", 1)
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        set_default_threads(threads)
        path = getattr(args, "config", None)
        cfg = load_config(path) if path else default_config()
        report = COMMANDS[args.command](cfg, args)
        text = dumps(report)
        if cfg.output_path:
            try:
                if cfg.output_format == "csv":
                    _write_csv(cfg.output_path, ["key", "value"], flatten(jsonable(report)))
                else:
                    Path(cfg.output_path).write_text(text, encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot write {cfg.output_path}: {exc}") from exc
    except (ConfigError, GeometryError) as exc:
        print(f"roughfilm: configuration error: {exc}", file=stderr)
        return EXIT_CONFIG
    except (ConvergenceError, NonFiniteError, ArithmeticError) as exc:
        print(f"roughfilm: numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"roughfilm: invalid input: {exc}", file=stderr)
        return EXIT_CONFIG
    finally:
        set_default_threads(1)
    stdout.write(text)
    if args.command == "selftest" and not report["passed"]:
        return EXIT_VALIDATION
    return EXIT_OK


def main() -> None:
    sys.exit(run())
