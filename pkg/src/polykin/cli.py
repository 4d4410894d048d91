"""Command-line drivers: snapshot I/O, entropy reports, runs and sweeps.

Exit codes: 0 ok, 2 vacuum, 3 parse or input error, 4 theorem violation,
5 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, snapshot
from .entropy import entropy_report, theorem_check, theta_eigenvalues
from .errors import PolykinError, TensorNotPositiveDefinite
from .gaussian import anisotropic_gaussian, maxwellian
from .moments import collision_frequency, compute_macro
from .params import Params
from .quadrature import PRESETS, GridSpec, build_grid
from .relaxation import RunConfig, SlabSpec, run_homogeneous, run_slab
from .sampling import SAMPLER_DELTAS, make_rng, random_distribution, sample_macrostates

log = logging.getLogger("polykin")

EXIT_OK, EXIT_VACUUM, EXIT_PARSE, EXIT_VIOLATION, EXIT_NUMERICAL = 0, 2, 3, 4, 5
NO_ASSERTION = "report-only: nu < 0 lies outside the theorem regime; no assertion is made"
RNG_NAME = "numpy.random.Philox"

DEFAULT_SWEEP = {
    "seed": 0,
    "ensemble_size": 10000,
    "nu": [0.0, 0.25, 0.5, 0.75, 0.99],
    "theta": [0.0, 0.25, 0.5, 0.75, 1.0],
    "delta": list(SAMPLER_DELTAS),
    "probe_negative_nu": False,
}
PROBE_NU = [-0.1, -0.25, -0.4, -0.49]
REPORT_COLUMNS = ["seed", "nu", "theta", "delta", "R_closed", "R_quad", "D", "relative_part",
                  "F_theta", "F_bound", "theorem_lhs", "theorem_ok"]


class CliError(PolykinError):
    exit_code = EXIT_PARSE


# --- formatting -----------------------------------------------------------------

def _num(x) -> str:
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(r.get(c)) if not isinstance(r.get(c), str) else r[c] for c in columns])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text)


# --- configuration ----------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config must be a JSON object")
    return cfg


def _resolve_grid(cfg: dict, delta: float, preset: str | None) -> GridSpec:
    g = cfg.get("grid")
    if preset is not None:
        g = preset
    if g is None:
        return GridSpec.preset("default", delta)
    if isinstance(g, str):
        return GridSpec.preset(g, delta)
    if not isinstance(g, dict):
        raise CliError("grid must be a preset name or an object")
    if "preset" in g or "t_max" in g:
        v_points, e_points = PRESETS[g.get("preset", "default")]
        return GridSpec.for_temperature(
            delta, t_max=float(g.get("t_max", 2.0)), u_max=float(g.get("u_max", 0.0)),
            v_points=int(g.get("v_points", v_points)), energy_points=int(g.get("energy_points", e_points)),
        )
    try:
        return GridSpec.from_dict({**g, "delta": delta})
    except KeyError as exc:
        raise CliError(f"grid object lacks {exc}") from exc


def _params(cfg: dict) -> Params:
    p = cfg.get("params")
    if not isinstance(p, dict):
        raise CliError("config needs a 'params' object with nu, theta, delta")
    try:
        return Params(float(p["nu"]), float(p["theta"]), float(p["delta"]))
    except KeyError as exc:
        raise CliError(f"params lacks {exc}") from exc


def _initial(spec: dict, grid, seed: int) -> np.ndarray:
    """Initial distribution for one cell from an 'initial' config object."""
    kind = spec.get("kind", "maxwellian")
    rho = float(spec.get("rho", 1.0))
    U = np.asarray(spec.get("U", [0.0, 0.0, 0.0]), dtype=float)
    if kind == "maxwellian":
        return maxwellian(rho, U, float(spec.get("T", 1.0)), grid.delta, grid)
    if kind == "anisotropic":
        Theta = np.asarray(spec.get("Theta", np.diag([1.0, 2.0, 3.0])), dtype=float)
        return anisotropic_gaussian(rho, U, Theta, float(spec.get("T_I", 1.0)), grid)
    if kind == "mixture":
        return random_distribution(make_rng(seed), grid, components=int(spec.get("components", 3)))
    if kind == "snapshot":
        snap = snapshot.read(spec["path"])
        if snap.spec != grid.spec or snap.x_cells is not None:
            raise CliError("initial snapshot grid differs from the run grid")
        return snap.values
    raise CliError(f"unknown initial kind {kind!r}")


def _run_config(cfg: dict, args, slab: SlabSpec | None, A0: float | None, vmax: float):
    params = _params(cfg)
    spec = _resolve_grid(cfg, params.delta, args.grid_preset)
    scale = 1.0
    if cfg.get("time_unit", "absolute") == "collision":
        if A0 is None:
            raise CliError("time_unit 'collision' needs the initial collision frequency")
        scale = 1.0 / A0
    elif cfg.get("time_unit", "absolute") != "absolute":
        raise CliError("time_unit must be 'absolute' or 'collision'")
    if "dt" in cfg:
        dt = float(cfg["dt"]) * scale
    elif slab is not None:
        dt = float(cfg.get("cfl", 0.9)) * slab.dx / vmax
    else:
        dt = 0.05 * scale
    # a step count takes precedence over t_end
    t_end = int(cfg["steps"]) * dt if "steps" in cfg else float(cfg.get("t_end", 5.0)) * scale
    return RunConfig(
        params=params, grid=spec, t_end=t_end, dt=dt,
        scheme=cfg.get("scheme", "exponential"),
        conservative_projection=bool(cfg.get("conservative_projection", False)),
        slab=slab, sample_every=int(cfg.get("sample_every", 1)),
    )


def _seed(cfg: dict, args) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(cfg.get("seed", 0))


# --- commands -----------------------------------------------------------------------

def cmd_moments(args) -> int:
    snap = snapshot.read(args.snapshot)
    mac = compute_macro(snap.values, snap.grid())
    d = mac.to_dict()
    if args.format == "json":
        _emit(_json_text(d), args.out, "moments.json")
        return EXIT_OK
    rows = []
    cells = 1 if snap.x_cells is None else snap.x_cells
    for i in range(cells):
        m = mac if snap.x_cells is None else mac.cell(i)
        rows.append({"cell": i, "rho": m.rho, "Ux": m.U[0], "Uy": m.U[1], "Uz": m.U[2],
                     "T_tr": m.T_tr, "T_I": m.T_I, "T_delta": m.T_delta,
                     "E_tr": m.E_tr, "E_I": m.E_I})
    _emit(_csv_text(rows, list(rows[0])), args.out, "moments.csv")
    return EXIT_OK


def cmd_decompose(args) -> int:
    snap = snapshot.read(args.snapshot)
    params = Params(args.nu, args.theta, snap.delta)
    grid = snap.grid()
    if not params.theorem_regime:
        print(NO_ASSERTION, file=sys.stderr)
    values = snap.values if snap.x_cells is not None else snap.values[None]
    mac_all = compute_macro(values, grid)
    rows = []
    for i in range(values.shape[0]):
        mac = mac_all.cell(i)
        try:
            row = asdict(entropy_report(values[i], params, grid, mac))
        except TensorNotPositiveDefinite:
            if params.theorem_regime:
                raise
            chk = theorem_check(mac, params)
            row = {"R_closed": chk.R_closed, "F_theta": chk.F_theta, "F_bound": chk.F_bound,
                   "theorem_lhs": chk.theorem_lhs, "theorem_ok": None, "regime": False,
                   "note": "tensor not positive definite; quadrature terms undefined"}
        row.update(seed=args.seed if args.seed is not None else "", nu=params.nu,
                   theta=params.theta, delta=params.delta, cell=i)
        rows.append(row)
    if args.format == "json":
        body = rows[0] if snap.x_cells is None else rows
        _emit(_json_text(body), args.out, "report.json")
    else:
        cols = REPORT_COLUMNS + ["H", "decomposition_residual", "regime"]
        if snap.x_cells is not None:
            cols = ["cell"] + cols
        _emit(_csv_text(rows, cols), args.out, "report.csv")
    if params.theorem_regime and not all(r["theorem_ok"] for r in rows):
        log.error("theorem inequality violated")
        return EXIT_VIOLATION
    return EXIT_OK


TRAJ_COLUMNS = ["t", "rho", "Ux", "Uy", "Uz", "Ttr", "TI", "Tdelta", "H", "D", "R_closed",
                "drift_mass", "drift_energy"]


def _write_run(args, cfg, run_cfg, seed, traj, kind, extra) -> int:
    rows = traj.rows()
    out = args.out or "."
    if args.format == "json":
        _emit(_json_text(rows), out, "trajectory.json")
    else:
        _emit(_csv_text(rows, TRAJ_COLUMNS), out, "trajectory.csv")
    manifest = {
        "command": kind,
        "version": __version__,
        "config": cfg,
        "run": run_cfg.to_dict(),
        "seed": seed,
        "rng": RNG_NAME,
        "n_steps": run_cfg.n_steps,
        "max_drift": traj.max_drift(),
        "max_h_increase": traj.max_h_increase,
        "h_violations": len(traj.h_violations),
        "truncation_bound": traj.truncation_bound,
        "theorem_regime": traj.regime,
        **extra,
    }
    _emit(_json_text(manifest), out, "manifest.json")
    if traj.regime and traj.h_violations:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_relax(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed(cfg, args)
    params = _params(cfg)
    spec = _resolve_grid(cfg, params.delta, args.grid_preset)
    grid = build_grid(spec)
    f0 = _initial(cfg.get("initial", {}), grid, seed)
    A0 = float(collision_frequency(compute_macro(f0, grid), params))
    run_cfg = _run_config(cfg, args, None, A0, float(np.max(np.abs(grid.v))))
    traj = run_homogeneous(f0, run_cfg, grid)
    return _write_run(args, cfg, run_cfg, seed, traj, "relax", {"A0": A0})


def _slab_field(spec: dict, grid, slab: SlabSpec, seed: int) -> np.ndarray:
    """Temperature wave T(x) = T0 (1 + a sin 2 pi x / L), T_I(x) = T0 (1 - a sin ...)."""
    kind = spec.get("kind", "temperature-wave")
    if kind != "temperature-wave":
        cell = _initial(spec, grid, seed)
        return np.broadcast_to(cell, (slab.x_cells,) + cell.shape).copy()
    a = float(spec.get("amplitude", 0.2))
    T0 = float(spec.get("T", 1.0))
    rho = float(spec.get("rho", 1.0))
    x = (np.arange(slab.x_cells) + 0.5) / slab.x_cells
    s = np.sin(2.0 * np.pi * x)
    return np.stack([
        anisotropic_gaussian(rho, np.zeros(3), T0 * (1 + a * si) * np.eye(3), T0 * (1 - a * si), grid)
        for si in s
    ])


def cmd_slab(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed(cfg, args)
    params = _params(cfg)
    spec = _resolve_grid(cfg, params.delta, args.grid_preset)
    grid = build_grid(spec)
    sl = cfg.get("slab", {"x_cells": 64, "x_length": 1.0})
    slab = SlabSpec(int(sl["x_cells"]), float(sl["x_length"]))
    f0 = _slab_field(cfg.get("initial", {}), grid, slab, seed)
    A0 = float(np.max(collision_frequency(compute_macro(f0, grid), params)))
    run_cfg = _run_config(cfg, args, slab, A0, float(np.max(np.abs(grid.v))))
    traj = run_slab(f0, run_cfg, grid)
    return _write_run(args, cfg, run_cfg, seed, traj, "slab", {"A0_max": A0})


def sweep_rows(cfg: dict) -> tuple[list[dict], bool]:
    """Summary row per (nu, theta, delta) cell and whether any asserted cell failed."""
    seed = int(cfg["seed"])
    n = int(cfg["ensemble_size"])
    nus = [float(v) for v in cfg["nu"]]
    if cfg.get("probe_negative_nu"):
        nus = nus + [v for v in PROBE_NU if v not in nus]
    rows = []
    violated = False
    for k, delta in enumerate(cfg["delta"]):
        # one ensemble per delta, shared by every (nu, theta) cell
        rng = make_rng(seed + k)
        mac = sample_macrostates(rng, n, float(delta))
        eigs = theta_eigenvalues(mac)
        for nu in nus:
            for theta in cfg["theta"]:
                p = Params(nu, float(theta), float(delta))
                chk = theorem_check(mac, p, eigs)
                R = np.asarray(chk.R_closed)
                lhs = np.asarray(chk.theorem_lhs)
                defined = np.isfinite(R)
                row = {
                    "nu": nu, "theta": float(theta), "delta": float(delta), "n": n,
                    "min_R": float(np.min(R[defined])) if defined.any() else math.nan,
                    "max_R": float(np.max(R[defined])) if defined.any() else math.nan,
                    "max_lhs_excess": float(np.max(lhs[defined]) - (3.0 + delta)) if defined.any() else math.nan,
                    "undefined": int(np.sum(~defined)),
                    "mode": "assert" if p.theorem_regime else "report-only",
                }
                if p.theorem_regime:
                    bad = int(np.sum(~np.asarray(chk.theorem_ok)))
                    row["violations"] = bad
                    violated |= bad > 0
                else:
                    row["violations"] = ""
                rows.append(row)
    return rows, violated


SWEEP_COLUMNS = ["nu", "theta", "delta", "n", "min_R", "max_R", "max_lhs_excess", "undefined",
                 "violations", "mode"]


def cmd_sweep(args) -> int:
    cfg = {**DEFAULT_SWEEP, **_load_config(args.config)}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.probe_negative_nu:
        cfg["probe_negative_nu"] = True
    if args.ensemble_size is not None:
        cfg["ensemble_size"] = args.ensemble_size
    for nu in cfg["nu"]:
        if nu < 0 and not cfg["probe_negative_nu"]:
            raise CliError("negative nu in the sweep needs probe_negative_nu")
    rows, violated = sweep_rows(cfg)
    if cfg["probe_negative_nu"]:
        print(NO_ASSERTION, file=sys.stderr)
    if args.format == "json":
        _emit(_json_text({"config": cfg, "rows": rows}), args.out, "sweep.json")
    else:
        _emit(_csv_text(rows, SWEEP_COLUMNS), args.out, "sweep.csv")
    return EXIT_VIOLATION if violated else EXIT_OK


def cmd_snapshot(args) -> int:
    """Write a fixture snapshot: maxwellian, anisotropic, mixture, zero or a slab wave."""
    delta = args.delta
    if args.grid_preset is not None:
        spec = GridSpec.preset(args.grid_preset, delta)
    else:
        spec = GridSpec.for_temperature(delta, t_max=args.t_max)
    grid = build_grid(spec)
    seed = args.seed if args.seed is not None else 0
    x_cells = None
    if args.kind == "zero":
        values = np.zeros(grid.shape)
    elif args.kind == "slab-wave":
        slab = SlabSpec(args.x_cells, 1.0)
        values = _slab_field({"amplitude": args.amplitude}, grid, slab, seed)
        x_cells = args.x_cells
    else:
        values = _initial({"kind": args.kind}, grid, seed)
    if args.file is None:
        raise CliError("snapshot needs an output file")
    snapshot.write(args.file, snapshot.Snapshot(spec, values, x_cells), args.encoding)
    return EXIT_OK


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="64-bit seed for all randomness")
    common.add_argument("--grid-preset", choices=sorted(PRESETS), help="velocity/energy grid size")
    common.add_argument("--out", help="output directory (stdout when omitted, where allowed)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polykin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"polykin {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("moments", parents=[common], help="macroscopic fields of a snapshot")
    s.add_argument("snapshot")
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("decompose", parents=[common], help="entropy production report")
    s.add_argument("snapshot")
    s.add_argument("--nu", type=float, required=True)
    s.add_argument("--theta", type=float, required=True)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("relax", parents=[common], help="space-homogeneous relaxation run")
    s.set_defaults(func=cmd_relax)

    s = sub.add_parser("slab", parents=[common], help="periodic slab run")
    s.set_defaults(func=cmd_slab)

    s = sub.add_parser("sweep", parents=[common], help="closed-form remainder over an ensemble")
    s.add_argument("--probe-negative-nu", action="store_true")
    s.add_argument("--ensemble-size", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("snapshot", parents=[common], help="write a fixture snapshot")
    s.add_argument("kind", choices=("maxwellian", "anisotropic", "mixture", "zero", "slab-wave"))
    s.add_argument("file")
    s.add_argument("--delta", type=float, default=2.0)
    s.add_argument("--t-max", type=float, default=2.0, help="largest temperature the grid must hold")
    s.add_argument("--encoding", choices=snapshot.ENCODINGS, default="f64le")
    s.add_argument("--x-cells", type=int, default=8)
    s.add_argument("--amplitude", type=float, default=0.2)
    s.set_defaults(func=cmd_snapshot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PolykinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (KeyError, TypeError, ValueError) as exc:
        # malformed config values that slipped past explicit checks
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FloatingPointError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
