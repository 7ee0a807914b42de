"""Command-line front end: preset/file configurations in, CSV data out.

Every data file is written with '#'-prefixed metadata lines, one plain
column-header row, and 17-significant-digit numbers, and is accompanied
by a JSON manifest sidecar (<out>.manifest.json) recording the exact
command, configuration identity, and parameters that produced it.
Re-running the manifest's argv reproduces the CSV byte for byte.

Exit codes: 0 success, 2 usage/validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classify import classify_trajectory
from .dynamics import IntegratorSettings, StateStd
from .errors import ConfigError, NumericalError, SepsurfError
from .planar import PlanarConfiguration, load_tabulated, preset, preset_names, q_mono
from .separatrix import (
    SeparatrixCurve,
    SeparatrixSample,
    backward_to_plane,
    build_curve,
    forward_return_map,
    reflect_for_reversal,
)


class UsageError(SepsurfError):
    """Bad command-line input (exit code 2)."""


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_csv(path: Path, meta: dict, columns: list[str], rows) -> None:
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_manifest(out: Path, command: str, argv: list[str], identity: dict,
                    parameters: dict, wall_time: float) -> None:
    manifest = {
        "command": command,
        "argv": argv,
        "tool": f"sepsurf {__version__}",
        "config": identity,
        "parameters": parameters,
        "wall_time_s": wall_time,
        "output": str(out),
    }
    Path(str(out) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_gnuplot(out: Path, using: str, title: str) -> None:
    script = "\n".join([
        'set datafile separator ","',
        "set key autotitle columnhead",
        f'set title "{title}"',
        f"plot '{out}' using {using} with points pt 7 ps 0.3",
        "pause -1",
    ])
    Path(str(out) + ".gp").write_text(script + "\n")


def _resolve_config(name_or_path: str):
    if name_or_path in preset_names():
        return preset(name_or_path), {"preset": name_or_path}
    path = Path(name_or_path)
    if path.exists():
        cfg = load_tabulated(path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        return cfg, {"path": str(path), "sha256": digest}
    raise UsageError(f"unknown preset or missing configuration file: {name_or_path}")


def _settings(config: PlanarConfiguration, args) -> IntegratorSettings:
    return IntegratorSettings.for_config(
        config, h=getattr(args, "h", None), s_max=getattr(args, "s_max", None))


def _default_q0(config: PlanarConfiguration) -> float:
    return max(1.0, 1.01 * q_mono(config))


def _read_csv(path: Path):
    meta = {}
    columns = None
    rows = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
            continue
        if columns is None:
            columns = [c.strip() for c in line.split(",")]
            continue
        rows.append(line.split(","))
    return meta, columns or [], rows


# --------------------------------------------------------------------------
# Commands


def _cmd_configs(args, argv) -> int:
    if args.action != "list":
        raise UsageError(f"unknown configs action {args.action!r}")
    header = f"{'name':<14} {'T':<20} {'M':<6} {'Rbound':<8} {'q_mono':<20} symmetry / notes"
    print(header)
    print("-" * len(header))
    for name in preset_names():
        cfg = preset(name)
        sym = ", ".join(format(s, ".6g") for s in cfg.symmetry_points)
        notes = []
        if sym:
            notes.append(f"t0 = {sym}")
        if cfg.time_mode == "fictional":
            notes.append("fictional clock")
        if cfg.collision_phases:
            notes.append("collisions at " +
                         ", ".join(format(c, ".6g") for c in cfg.collision_phases))
        if cfg.annotation:
            notes.append(cfg.annotation)
        print(f"{name:<14} {cfg.period:<20.12g} {cfg.total_mass:<6g} "
              f"{cfg.r_bound:<8g} {q_mono(cfg):<20.12g} {'; '.join(notes)}")
    return 0


def _surface_meta(config, identity, q0, grid, tol_rel, tol_abs, settings, direction):
    return {
        "sepsurf": "surface",
        "config": identity.get("preset") or identity.get("path"),
        "q0": _fmt(q0),
        "grid": grid,
        "tol_rel": _fmt(tol_rel),
        "tol_abs": _fmt(tol_abs),
        "h": _fmt(settings.h),
        "s_max": _fmt(settings.s_max),
        "direction": direction,
        "period": _fmt(config.period),
    }


def _cmd_surface(args, argv) -> int:
    config, identity = _resolve_config(args.config)
    settings = _settings(config, args)
    q0 = args.q0 if args.q0 is not None else _default_q0(config)
    tol_abs = args.tol * math.sqrt(2.0 * config.total_mass) / math.sqrt(q0)
    started = time.perf_counter()
    curve = build_curve(q0, config, grid_n=args.grid, tol=tol_abs, settings=settings)
    wall = time.perf_counter() - started
    out = Path(args.out)
    meta = _surface_meta(config, identity, q0, args.grid, args.tol, tol_abs,
                         settings, 1)
    rows = [(s.theta, s.f, s.bracket_width, int(s.flagged)) for s in curve.samples]
    _write_csv(out, meta, ["theta", "f", "bracket_width", "flags"], rows)
    _write_manifest(out, "surface", argv, identity, {
        "q0": q0, "q0_defaulted": args.q0 is None, "grid": args.grid,
        "tol_rel": args.tol, "tol_abs": tol_abs, "h": settings.h,
        "s_max": settings.s_max,
    }, wall)
    if args.gnuplot:
        _write_gnuplot(out, "1:2", "escape/return boundary velocity")
    return 0


def _load_surface_file(path: Path, config: PlanarConfiguration):
    meta, columns, rows = _read_csv(path)
    if meta.get("sepsurf") != "surface" or "q0" not in meta:
        raise UsageError(f"{path} is not a surface CSV")
    thetas = np.array([float(r[0]) for r in rows])
    f = np.array([float(r[1]) for r in rows])
    width = np.array([float(r[2]) for r in rows])
    flagged = np.array([r[3].strip() not in ("0", "") for r in rows])
    q0 = float(meta["q0"])
    tol = float(meta.get("tol_abs", 0.0)) or None
    samples = [SeparatrixSample(theta=float(thetas[i]), f=float(f[i]),
                                bracket_width=float(width[i]),
                                decided=(not flagged[i], True), flagged=bool(flagged[i]))
               for i in range(len(rows))]
    return SeparatrixCurve(q0=q0, direction=int(meta.get("direction", 1)),
                           tol=tol or 0.0, thetas=thetas, f=f,
                           bracket_width=width, flagged=flagged, samples=samples)


def _cmd_plane_curve(args, argv) -> int:
    config, identity = _resolve_config(args.config)
    settings = _settings(config, args)
    started = time.perf_counter()
    if args.surface_file:
        curve = _load_surface_file(Path(args.surface_file), config)
        q0 = curve.q0
    else:
        q0 = args.q0 if args.q0 is not None else _default_q0(config)
        tol_abs = args.tol * math.sqrt(2.0 * config.total_mass) / math.sqrt(q0)
        curve = build_curve(q0, config, grid_n=args.grid, tol=tol_abs,
                            settings=settings)
    plane = backward_to_plane(curve, config, settings=settings,
                              p_cap=args.p_cap, refine=not args.no_refine,
                              refine_floor=args.refine_floor)
    branches = [plane]
    if args.reflect is not None:
        branches.append(reflect_for_reversal(plane, args.reflect, config))
    wall = time.perf_counter() - started
    out = Path(args.out)
    meta = {
        "sepsurf": "plane-curve",
        "config": identity.get("preset") or identity.get("path"),
        "q0": _fmt(q0),
        "p_cap": _fmt(args.p_cap) if args.p_cap is not None else "none",
        "reflect": _fmt(args.reflect) if args.reflect is not None else "none",
        "h": _fmt(settings.h),
        "s_max": _fmt(settings.s_max),
        "period": _fmt(config.period),
    }
    rows = []
    for br in branches:
        for i in range(len(br.theta)):
            rows.append((br.branch, br.theta[i], br.p[i], int(br.periods[i]),
                         bool(br.truncated[i])))
    _write_csv(out, meta, ["branch", "theta_mod_T", "p", "periods", "truncated"], rows)
    _write_manifest(out, "plane-curve", argv, identity, {
        "q0": q0, "p_cap": args.p_cap, "reflect": args.reflect,
        "refine": not args.no_refine, "h": settings.h, "s_max": settings.s_max,
        "surface_file": args.surface_file,
        "grid": args.grid if not args.surface_file else None,
    }, wall)
    if args.gnuplot:
        _write_gnuplot(out, "2:3", "q = 0 plane traces")
    return 0


def _cmd_return_map(args, argv) -> int:
    config, identity = _resolve_config(args.config)
    settings = _settings(config, args)
    path = Path(args.points_from)
    if not path.exists():
        raise UsageError(f"points file not found: {path}")
    meta, columns, rows = _read_csv(path)
    points = []
    if "branch" in columns:
        i_th = columns.index("theta_mod_T")
        i_p = columns.index("p")
        i_tr = columns.index("truncated") if "truncated" in columns else None
        i_br = columns.index("branch")
        for r in rows:
            if r[i_br].strip() != args.branch:
                continue
            if i_tr is not None and r[i_tr].strip() not in ("0", ""):
                continue
            th, p = float(r[i_th]), float(r[i_p])
            if p > 0.0:
                points.append((th, p))
    else:
        for r in rows:
            th, p = float(r[0]), float(r[1])
            if p > 0.0:
                points.append((th, p))
    if not points:
        raise UsageError(f"no usable launch points in {path}")
    started = time.perf_counter()
    images = forward_return_map(points, config, settings=settings)
    wall = time.perf_counter() - started
    T = config.period
    if args.period_offset is not None:
        lo, hi = args.period_offset * T, (args.period_offset + 1) * T
        images = [m for m in images if m.returned and lo <= m.theta_out_raw < hi]
    out = Path(args.out)
    meta = {
        "sepsurf": "return-map",
        "config": identity.get("preset") or identity.get("path"),
        "points_from": str(path),
        "branch": args.branch,
        "period_offset": args.period_offset if args.period_offset is not None else "none",
        "h": _fmt(settings.h),
        "s_max": _fmt(settings.s_max),
        "period": _fmt(T),
        "sign_convention": "p > 0 half-plane via (q,p) -> (-q,-p)",
    }
    rows_out = [(m.theta_in, m.p_in, m.theta_out_raw, m.theta_out, m.p_out,
                 m.periods, m.returned) for m in images]
    _write_csv(out, meta,
               ["theta_in", "p_in", "theta_out_raw", "theta_out_mod_T",
                "p_out", "periods", "returned"], rows_out)
    _write_manifest(out, "return-map", argv, identity, {
        "points_from": str(path), "branch": args.branch,
        "period_offset": args.period_offset, "h": settings.h,
        "s_max": settings.s_max,
    }, wall)
    if args.gnuplot:
        _write_gnuplot(out, "4:5", "first-return images")
    return 0


def _cmd_classify(args, argv) -> int:
    config, identity = _resolve_config(args.config)
    settings = _settings(config, args)
    state = StateStd(q=args.q, p=args.p, theta=args.theta)
    result = classify_trajectory(state, config, settings=settings)
    if result.verdict == "undecided":
        text = f"undecided after budget {result.budget:.6g}"
    else:
        text = (f"{result.verdict} (witness {result.witness:.6g}) "
                f"at t = {result.decision_time:.6g}")
    payload = {
        "verdict": result.verdict,
        "witness": result.witness,
        "decision_time": result.decision_time,
        "budget": result.budget,
        "q": args.q, "p": args.p, "theta": args.theta,
        "config": identity.get("preset") or identity.get("path"),
    }
    print(text)
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


# --------------------------------------------------------------------------
# Parser


def _add_common(p, with_grid=True):
    p.add_argument("--config", required=True,
                   help="preset name or tabulated CSV path")
    p.add_argument("--h", type=float, default=None, help="integration step")
    p.add_argument("--s-max", dest="s_max", type=float, default=None,
                   help="undecided budget (configuration clock)")
    if with_grid:
        p.add_argument("--q0", type=float, default=None,
                       help="boundary height (default max(1, 1.01 q_mono))")
        p.add_argument("--grid", type=int, default=64,
                       help="number of phase samples covering [0, T]")
        p.add_argument("--tol", type=float, default=1e-10,
                       help="bisection tolerance relative to sqrt(2M) Q0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepsurf",
        description="Escape/return separatrices for vertical motion over "
                    "periodic planar configurations")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("configs", help="inspect built-in configurations")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=_cmd_configs)

    p = sub.add_parser("surface", help="sample the boundary velocity f(theta)")
    _add_common(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--gnuplot", action="store_true",
                   help="emit a gnuplot script next to the CSV")
    p.set_defaults(func=_cmd_surface)

    p = sub.add_parser("plane-curve", help="trace the boundary to the q = 0 plane")
    _add_common(p)
    p.add_argument("--surface-file", default=None,
                   help="reuse a surface CSV instead of recomputing")
    p.add_argument("--reflect", type=float, default=None,
                   help="add the branch reflected through this symmetry phase")
    p.add_argument("--p-cap", dest="p_cap", type=float, default=None,
                   help="flag points with p beyond this cap as truncated")
    p.add_argument("--no-refine", action="store_true",
                   help="disable adaptive subdivision near spikes")
    p.add_argument("--refine-floor", dest="refine_floor", type=float, default=None,
                   help="source-phase floor for spike subdivision (default T/1e4)")
    p.add_argument("--out", required=True)
    p.add_argument("--gnuplot", action="store_true")
    p.set_defaults(func=_cmd_plane_curve)

    p = sub.add_parser("return-map", help="forward first-return images of plane points")
    _add_common(p, with_grid=False)
    p.add_argument("--points-from", dest="points_from", required=True,
                   help="CSV of launch points (plane-curve output or theta,p rows)")
    p.add_argument("--branch", default="S0-",
                   help="branch to take from a plane-curve file")
    p.add_argument("--period-offset", dest="period_offset", type=int, default=None,
                   help="keep only images with raw exit phase in [n T, (n+1) T)")
    p.add_argument("--out", required=True)
    p.add_argument("--gnuplot", action="store_true")
    p.set_defaults(func=_cmd_return_map)

    p = sub.add_parser("classify", help="escape/return verdict for one state")
    _add_common(p, with_grid=False)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--out", default=None, help="also write the JSON verdict here")
    p.set_defaults(func=_cmd_classify)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
