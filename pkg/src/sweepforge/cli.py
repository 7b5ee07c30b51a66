"""Command line: sweep a scene, validate its inputs, or probe the funnel at a point."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .brep import BrepSolid, validate_solid
from .config import SolverConfig
from .contact import (FrameDegenerate, classify_value, frame_and_theta, funnel_point, general_position_report,
                      orientation_sign)
from .errors import NonSimpleSweepSuspected, SceneError, SweepError
from .motion import Trajectory, trajectory_from_record, validate_trajectory
from .solids import make_solid

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCENE_VERSION = "sweepforge-scene/1"
EXIT_OK, EXIT_LOAD, EXIT_NONSIMPLE, EXIT_SOLVER = 0, 1, 2, 3


@dataclass
class Scene:
    name: str
    solid: BrepSolid
    traj: Trajectory
    config: SolverConfig
    mesh_density: int = 16
    simple: bool = True
    outputs: dict = field(default_factory=dict)
    path: Path | None = None


def bundled_scenes() -> list[str]:
    root = resources.files("sweepforge") / "scenes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def scene_path(ref: str) -> Path:
    """A scene file path, or the name of a bundled scene."""
    p = Path(ref)
    if p.exists():
        return p
    bundled = resources.files("sweepforge") / "scenes" / f"{ref}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise SceneError(f"scene {ref!r} not found (bundled: {', '.join(bundled_scenes())})", stage="load")


def load_scene(ref: str, overrides: dict | None = None) -> Scene:
    path = scene_path(ref)
    try:
        record = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise SceneError(f"cannot parse {path}: {exc}", stage="load") from exc
    if record.get("version") != SCENE_VERSION:
        raise SceneError(f"{path}: expected version {SCENE_VERSION!r}, got {record.get('version')!r}",
                         stage="load")
    try:
        solid = _load_solid(record["solid"], path.parent)
        traj = trajectory_from_record(record["trajectory"])
        config = SolverConfig().with_overrides(**{**record.get("solver", {}), **(overrides or {})})
    except KeyError as exc:
        raise SceneError(f"{path}: missing section {exc}", stage="load") from exc
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{path}: {exc}", stage="load") from exc
    bad = validate_solid(solid, config.coincidence_tol)
    if bad:
        raise SceneError(f"{path}: input solid invalid: {bad[0]}", stage="load", entity=bad[0].entity)
    bad_t = validate_trajectory(traj, 200)
    if bad_t:
        raise SceneError(f"{path}: trajectory invalid: {bad_t[0]}", stage="load")
    out = record.get("output", {})
    return Scene(record.get("name", path.stem), solid, traj, config, int(out.get("mesh_density", 16)),
                 bool(record.get("simple", True)), out, path)


def _load_solid(table: dict, base: Path) -> BrepSolid:
    if "file" in table:
        try:
            return BrepSolid.from_record(json.loads((base / table["file"]).read_text()))
        except (OSError, ValueError, KeyError, IndexError) as exc:
            raise SceneError(f"cannot load solid file {table['file']}: {exc}", stage="load") from exc
    return make_solid(table["generator"], **table.get("params", {}))


# -- subcommands -----------------------------------------------------------------------

def _overrides(args) -> dict:
    o = {}
    if getattr(args, "tol", None) is not None:
        o["coincidence_tol"] = args.tol
    if getattr(args, "seed_density", None) is not None:
        o["grid_seed_density"] = args.seed_density
    return o


def _emit(args, pairs: dict, human: str | None = None) -> None:
    if args.porcelain:
        for k, v in pairs.items():
            print(f"{k}={v}")
    else:
        print(human if human is not None else "\n".join(f"{k}: {v}" for k, v in pairs.items()))


def cmd_sweep(args) -> int:
    from .lift import sweep_envelope
    from .meshout import export_brep, export_obj, tessellate_envelope, write_report

    scene = load_scene(args.scene, _overrides(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env, report = sweep_envelope(scene.solid, scene.traj, scene.config, scene=scene.name)
    density = args.mesh_density or scene.mesh_density
    mesh = tessellate_envelope(env, density, jobs=args.jobs)
    paths = {"brep": out_dir / f"{scene.name}.brep.json", "obj": out_dir / f"{scene.name}.obj",
             "report": out_dir / f"{scene.name}.report.json"}
    export_brep(env, paths["brep"])
    export_obj(mesh, paths["obj"])
    write_report(report, paths["report"])
    c = report.output_counts
    _emit(args, {"scene": scene.name, "vertices": c["vertices"], "edges": c["edges"], "faces": c["faces"],
                 "theta_min": repr(report.theta_min), "audits_ok": str(report.ok).lower(),
                 **{k: str(v) for k, v in paths.items()}},
          f"{scene.name}: {c['faces']} faces, {c['edges']} edges, {c['vertices']} vertices; "
          f"theta_min {report.theta_min:.4g}; audits {'passed' if report.ok else 'FAILED'}\n"
          + "\n".join(f"  wrote {p}" for p in paths.values()))
    return EXIT_OK


def cmd_validate(args) -> int:
    scene = load_scene(args.scene, _overrides(args))
    warnings = []
    reports = []
    for f in range(len(scene.solid.faces)):
        r = general_position_report(scene.solid.faces[f].geometry, scene.traj, face=f,
                                    density=args.seed_density or 24)
        reports.append(r)
        warnings.extend(f"face {f}: {w}" for w in r.warnings)
    pairs = {"scene": scene.name, "faces": len(scene.solid.faces), "edges": len(scene.solid.edges),
             "vertices": len(scene.solid.vertices), "warnings": len(warnings),
             "general_position": "ok" if not warnings else "warnings"}
    human = (f"{scene.name}: solid and trajectory valid "
             f"({len(scene.solid.faces)} faces, {len(scene.solid.edges)} edges)\n"
             + ("general position: ok" if not warnings else
                "general position warnings:\n" + "\n".join(f"  {w}" for w in warnings)))
    _emit(args, pairs, human)
    return EXIT_OK


def cmd_probe(args) -> int:
    scene = load_scene(args.scene, _overrides(args))
    if not 0 <= args.face < len(scene.solid.faces):
        raise SceneError(f"face {args.face} out of range", stage="probe")
    patch = scene.solid.faces[args.face].geometry
    fp = funnel_point(args.face, patch, scene.traj, args.u, args.v, args.t)
    try:
        theta = frame_and_theta(fp, patch, scene.traj).theta
    except FrameDegenerate as exc:
        theta = exc.theta
    sign = int(orientation_sign(fp, scene.config.ft_deadband))
    cls = classify_value(float(fp.f), float(args.t), scene.traj.interval)
    pairs = {"face": args.face, "u": repr(args.u), "v": repr(args.v), "t": repr(args.t),
             "f": repr(float(fp.f)), "f_u": repr(float(fp.f_u)), "f_v": repr(float(fp.f_v)),
             "f_t": repr(float(fp.f_t)), "theta": repr(float(theta)), "orientation_sign": sign, "class": cls}
    _emit(args, pairs)
    return EXIT_OK


def cmd_scenes(args) -> int:
    for name in bundled_scenes():
        print(name)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sweepforge", description="Boundary of a solid swept along a rigid motion.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scene", required=True, help="scene file or bundled scene name")
        sp.add_argument("--tol", type=float, help="coincidence tolerance override")
        sp.add_argument("--seed-density", type=int, help="grid seeding density override")
        sp.add_argument("--porcelain", action="store_true", help="machine-readable key=value output")

    s = sub.add_parser("sweep", help="compute the envelope and write brep, mesh and report")
    common(s)
    s.add_argument("--out-dir", default=".", help="output directory")
    s.add_argument("--mesh-density", type=int, help="grid density of the tessellation")
    s.add_argument("--jobs", type=int, default=1, help="worker threads for tessellation")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check the scene inputs and general position")
    common(v)
    v.set_defaults(func=cmd_validate)

    pr = sub.add_parser("probe", help="funnel diagnostics at one (face, u, v, t)")
    common(pr)
    pr.add_argument("face", type=int)
    pr.add_argument("u", type=float)
    pr.add_argument("v", type=float)
    pr.add_argument("t", type=float)
    pr.set_defaults(func=cmd_probe)

    ls = sub.add_parser("scenes", help="list bundled scenes")
    ls.set_defaults(func=cmd_scenes, porcelain=False)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SceneError as exc:
        print(exc.located(), file=sys.stderr)
        return EXIT_LOAD
    except NonSimpleSweepSuspected as exc:
        print(exc.located(), file=sys.stderr)
        return EXIT_NONSIMPLE
    except SweepError as exc:
        print(exc.located(), file=sys.stderr)
        return EXIT_SOLVER
    except np.linalg.LinAlgError as exc:
        print(f"[stage=solver] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
