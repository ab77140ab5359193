"""Command-line front end.

Exit codes: 0 success, 1 gradient check failed, 2 bad input (unreadable
mesh, scene or parameter file), 3 analysis finished but some intersections
stayed degenerate (the report is still written).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .closure import close_garment, select_loops
from .energy import BodySDF, ClothModel, EnergyParams, SimState
from .mesh import MeshError, TriMesh, load_obj, save_obj
from .pipeline import SelfCollisionPipeline
from .proximity import build_self_collision_edges
from .selfx import FAILURE_KINDS
from .sim import Scene, SimConfig, WindSpec, run_sequence

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT, EXIT_DEGENERATE = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4
FD_STEP = 1e-6

REGION_COLORS = ((0.85, 0.2, 0.2), (0.2, 0.45, 0.85), (0.2, 0.7, 0.3), (0.9, 0.6, 0.1), (0.6, 0.3, 0.8))


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# canonical JSON


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        # 12 significant digits keeps reports stable against last-bit noise
        return float(f"{x:.12g}")
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_canon({"schema_version": SCHEMA_VERSION, **report}), sort_keys=True, indent=2) + "\n"


def _emit(report: dict, path: str | None) -> None:
    text = dumps(report)
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# inputs


def _read_mesh(path: str) -> TriMesh:
    try:
        return load_obj(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except MeshError as exc:
        raise InputError(str(exc)) from exc


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _read_params(path: str | None) -> EnergyParams:
    if not path:
        return EnergyParams()
    data = _read_json(path)
    try:
        return EnergyParams.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _loops(mesh: TriMesh, spec: str):
    try:
        return select_loops(mesh, spec)
    except (MeshError, ValueError) as exc:
        raise InputError(f"--close-loops {spec!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    mesh = _read_mesh(args.input)
    pipe = SelfCollisionPipeline(mesh, _loops(mesh, args.close_loops))
    a = pipe.analyze()
    regions = []
    for k, (r, vol) in enumerate(zip(a.regions, a.loss.per_region)):
        item = r.to_json()
        item["volume"] = vol
        item["excluded"] = a.model.geometries[k] is None
        regions.append(item)
    failed = sorted({d.kind for d in a.diagnostics if d.kind in FAILURE_KINDS})
    report = {
        "command": "analyze",
        "input": args.input,
        "mesh": {
            "vertices": mesh.n_vertices,
            "faces": mesh.n_faces,
            "closed_loops": len(a.closure.added_vertex_provenance),
            "remeshed_faces": a.remesh.mesh.n_faces,
        },
        "intersection_records": len(a.records),
        "paths": [p.to_json() for p in a.paths],
        "path_pairs": [list(p) for p in a.pairs],
        "regions": regions,
        "volume": a.loss.value,
        "diagnostics": _diag_summary(a.diagnostics),
        "status": "degenerate" if failed else "ok",
        "failures": failed,
    }
    _emit(report, args.output)
    if args.tagged_obj:
        _write_tagged(args.tagged_obj, a)
    return EXIT_DEGENERATE if failed else EXIT_OK


def _diag_summary(diags) -> dict:
    counts: dict[str, int] = {}
    for d in diags:
        counts[d.kind] = counts.get(d.kind, 0) + 1
    # merge notes can run into the thousands; keep only their count
    detail = [d.to_json() for d in diags if d.kind != "dedup"]
    return {"counts": counts, "items": detail}


def _write_tagged(path: str, a) -> None:
    out = Path(path)
    mtl = out.with_suffix(".mtl")
    groups = {}
    lines = ["newmtl default", "Kd 0.8 0.8 0.8", ""]
    for k, r in enumerate(a.regions):
        name = f"region_{k}"
        groups[name] = np.concatenate(r.face_groups)
        c = REGION_COLORS[k % len(REGION_COLORS)]
        lines += [f"newmtl {name}", f"Kd {c[0]} {c[1]} {c[2]}", ""]
    mtl.write_text("\n".join(lines), encoding="utf-8")
    save_obj(out, a.remesh.mesh, mtl=mtl.name, face_groups=groups)


def cmd_close(args) -> int:
    mesh = _read_mesh(args.input)
    diags: list = []
    res = close_garment(mesh, _loops(mesh, args.close_loops), diags)
    save_obj(args.output, res.closed_mesh)
    if args.report:
        _emit({
            "command": "close",
            "input": args.input,
            "added_vertices": len(res.added_vertex_provenance),
            "added_faces": list(res.added_face_range),
            "diagnostics": _diag_summary(diags),
        }, args.report)
    return EXIT_OK


def cmd_edges(args) -> int:
    mesh = _read_mesh(args.input)
    try:
        es = build_self_collision_edges(mesh, args.radius)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit({"command": "edges", "input": args.input, "count": len(es), **es.to_json()}, args.output)
    return EXIT_OK


def _max_rel_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = max(float(np.abs(analytic).max(initial=0.0)), float(np.abs(fd).max(initial=0.0)))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - fd).max() / scale)


def central_difference(fun, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    g = np.zeros(x.size)
    flat = x.ravel()
    for i in range(x.size):
        xp = flat.copy()
        xp[i] += h
        xm = flat.copy()
        xm[i] -= h
        g[i] = (fun(xp.reshape(x.shape)) - fun(xm.reshape(x.shape))) / (2.0 * h)
    return g.reshape(x.shape)


def gradient_check(mesh: TriMesh, params: EnergyParams, seed: int, loops="all", body: BodySDF | None = None,
                   corrupt: str | None = None) -> dict:
    """Analytic versus central-difference gradients for the volume and every energy term."""
    rng = np.random.default_rng(seed)
    x = mesh.vertices + rng.normal(scale=1e-4, size=mesh.vertices.shape)
    scale = float(np.ptp(mesh.vertices, axis=0).max()) or 1.0
    state = SimState(x - rng.normal(scale=1e-3 * scale, size=x.shape), x - rng.normal(scale=1e-3 * scale, size=x.shape),
                     x, rng.normal(size=x.shape))
    model = ClothModel(mesh, params)
    pairs = build_self_collision_edges(mesh, params.repulsive_threshold, x).pairs
    terms = {
        "stretching": model.stretching,
        "bending": model.bending,
        "collision": lambda y: model.collision(y, body),
        "inertia": lambda y: model.inertia(y, state.x_curr, state.x_prev),
        "external": lambda y: model.external(y, state.external_force),
        "repulsive": lambda y: model.repulsive(y, pairs),
    }
    a = SelfCollisionPipeline(mesh, loops).analyze(x)
    if any(g is not None for g in a.model.geometries):
        terms["volume"] = a.model.evaluate
    out = {}
    for name in sorted(terms):
        fun = terms[name]
        val, g = fun(x)
        if corrupt == name:
            g = g * 1.01 + 1e-3 * np.abs(g).max(initial=1.0)
        fd = central_difference(lambda y: fun(y)[0], x)
        err = _max_rel_error(g, fd)
        item = {"max_rel_error": err, "passed": err < GRADCHECK_TOL, "value": val}
        if not np.any(g) and not np.any(fd):
            item["notice"] = "zero gradient; check is vacuous"
        out[name] = item
    if "volume" not in terms:
        out["volume"] = {"skipped": True, "passed": True, "notice": "no penetration region; volume check skipped"}
    return out


def cmd_gradcheck(args) -> int:
    mesh = _read_mesh(args.input)
    params = _read_params(args.params)
    loops = _loops(mesh, args.close_loops)
    terms = gradient_check(mesh, params, args.seed, loops, corrupt=args.corrupt_gradient)
    ok = all(t["passed"] for t in terms.values())
    _emit({"command": "gradcheck", "input": args.input, "seed": args.seed, "tolerance": GRADCHECK_TOL,
           "fd_step": FD_STEP, "terms": terms, "passed": ok}, args.output)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def load_scene(path: str, seed: int | None = None) -> tuple[SimConfig, dict]:
    """Build a :class:`SimConfig` from a scene file; returns it with the parsed JSON."""
    data = _read_json(path)
    base = Path(path).parent
    try:
        if "mesh" in data:
            mesh = _read_mesh(str(base / data["mesh"]))
            if "rest" in data:
                rest = _read_mesh(str(base / data["rest"]))
                mesh = TriMesh(mesh.vertices, mesh.faces, rest.vertices)
        elif "fixture" in data:
            fx = data["fixture"]
            maker = getattr(fixtures, fx["name"], None)
            if maker is None or fx["name"].startswith("_"):
                raise InputError(f"unknown fixture {fx['name']!r}")
            mesh = maker(**fx.get("args", {}))
        else:
            raise InputError(f"{path}: scene needs 'mesh' or 'fixture'")
        wind = data.get("wind", {})
        direction = wind.get("direction", "random")
        scene = Scene(
            mesh=mesh,
            body=BodySDF.from_json(data.get("body", [])),
            pinned=tuple(int(i) for i in data.get("pinned", [])),
            loops=str(data.get("loops", "none")),
            wind=WindSpec(tuple(wind.get("magnitude", (0.0, 0.0))),
                          direction if isinstance(direction, str) else tuple(direction),
                          int(data.get("seed", 0) if seed is None else seed)),
        )
        cfg = SimConfig(
            scene=scene,
            steps=int(data.get("steps", 0)),
            params=EnergyParams.from_dict(data.get("params", {})),
            inner_iterations=int(data.get("inner_iterations", 10)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return cfg, data


def cmd_simulate(args) -> int:
    cfg, _ = load_scene(args.scene, args.seed)
    if args.steps is not None:
        if args.steps < 0:
            raise InputError("--steps must be nonnegative")
        cfg = SimConfig(**{**cfg.__dict__, "steps": args.steps})
    rep = run_sequence(cfg, dump_frames=args.dump_frames)
    _emit({"command": "simulate", "scene": args.scene, "seed": cfg.scene.wind.seed, "steps": cfg.steps,
           **rep.to_json()}, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="selfcol", description="Self-intersection analysis and penetration volume for garments.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="intersection paths, regions and penetration volume")
    a.add_argument("--input", required=True)
    a.add_argument("--output", help="report path (default: stdout)")
    a.add_argument("--close-loops", default="all", help="all, none, or comma-separated loop indices")
    a.add_argument("--tagged-obj", help="write the remeshed surface with penetration faces as materials")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("close", help="cap boundary loops with centroid fans")
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--close-loops", default="all")
    c.add_argument("--report")
    c.set_defaults(func=cmd_close)

    e = sub.add_parser("edges", help="non-edge vertex pairs closer than a radius")
    e.add_argument("--input", required=True)
    e.add_argument("--radius", type=float, required=True)
    e.add_argument("--output")
    e.set_defaults(func=cmd_edges)

    g = sub.add_parser("gradcheck", help="compare analytic gradients with central differences")
    g.add_argument("--input", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--params")
    g.add_argument("--close-loops", default="all")
    g.add_argument("--output")
    g.add_argument("--corrupt-gradient", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("simulate", help="step a scene and report self-collision metrics")
    s.add_argument("--scene", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--dump-frames")
    s.add_argument("--report")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"selfcol: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
