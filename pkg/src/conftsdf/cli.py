"""Command-line pipeline: synth | stereo | integrate | mesh | voxels | eval.

Subcommands compose via the shell; every stage reads and writes the shared
dataset layout (JSON manifest + PFM frames + TUM pose file) and the binary
map snapshot, so any stage's output feeds the next.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import scenes as scn
from .datasets import (
    DatasetManifest,
    EngineConfig,
    FrameEntry,
    associate_pose,
    load_frame_images,
    load_manifest,
    parse_pose_file,
    read_pfm,
    save_manifest,
    write_pfm,
    write_pose_file,
)
from .errors import (
    ConfigError,
    ConfTsdfError,
    DataError,
    FormatError,
    IoError,
    OrderError,
    ParseError,
)
from .evaluation import region_weight_stats, report_json, report_lines, surface_error
from .geometry import Pose, quat_from_matrix
from .images import ScalarImage
from .meshing import (
    export_ply,
    export_voxel_cloud,
    export_voxel_cloud_ply,
    import_ply,
    marching_cubes,
)
from .stereo import (
    block_match,
    cosine_confidence,
    depth_to_pointcloud,
    disparity_to_depth,
    filter_by_confidence,
    patch_featurize,
    shift_features,
)
from .tsdf import TsdfMap, integrate_frame

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

DEFAULT_INTRINSICS = dict(
    alpha_x=40.0, alpha_y=40.0, o_x=32.0, o_y=24.0, width=64, height=48, baseline=0.12
)


def look_at(position, target, up=(0.0, -1.0, 0.0)) -> Pose:
    """Camera-to-world pose with +z pointing from position toward target."""
    c = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - c
    z = z / np.linalg.norm(z)
    upv = np.asarray(up, dtype=np.float64)
    x = np.cross(upv, z)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross([1.0, 0.0, 0.0], z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(quat_from_matrix(np.stack([x, y, z], axis=1)), c)


def default_trajectory(scene_name: str, frames: int, extent=None) -> list[tuple[float, Pose]]:
    """Built-in scripted trajectories per reference scene.

    Positions carry small irrational-looking offsets so rays never align
    with voxel-grid planes.
    """
    if frames < 1:
        raise ConfigError("--frames must be >= 1")
    ts = np.arange(frames, dtype=np.float64)
    poses = []
    if scene_name == "two_walls":
        for k, t in enumerate(ts):
            u = k / max(frames - 1, 1)
            trans = np.array(
                [0.0137 + 0.0176 * u, -0.0071 + 0.0190 * u, 0.0053 - 0.0102 * u]
            )
            poses.append((float(t), Pose(translation=trans)))
    elif scene_name == "sphere_room":
        # Fibonacci-sphere viewpoints: near-normal incidence over the whole
        # surface keeps the projective-distance bias small
        center = np.array([0.0, 0.0, 2.0])
        golden = np.pi * (3.0 - np.sqrt(5.0))
        for k, t in enumerate(ts):
            y = 1.0 - 2.0 * (k + 0.5) / frames
            r = np.sqrt(max(1.0 - y * y, 0.0))
            ang = golden * k
            pos = center + 1.35 * np.array([r * np.cos(ang), y, r * np.sin(ang)])
            pos += np.array([0.0113, 0.0071, -0.0059])
            poses.append((float(t), look_at(pos, center)))
    elif scene_name == "pool":
        ex, ey, ez = extent if extent is not None else (40.0, 6.45, 1.5)
        for k, t in enumerate(ts):
            u = k / max(frames - 1, 1)
            pos = np.array([0.15 * ex + 0.55 * ex * u, ey / 2 + 0.0137, 0.7 * ez])
            target = pos + np.array([0.0071, 0.0113, -1.0])
            poses.append((float(t), look_at(pos, target)))
    else:
        raise ConfigError(f"no built-in trajectory for scene '{scene_name}'")
    return poses


def _intrinsics_from_args(args):
    from .geometry import CameraIntrinsics

    return CameraIntrinsics(
        alpha_x=args.focal,
        alpha_y=args.focal,
        o_x=args.width / 2.0,
        o_y=args.height / 2.0,
        width=args.width,
        height=args.height,
        baseline=args.baseline,
    )


def cmd_synth(args) -> int:
    catalog = scn.make_reference_scenes(pool_full_scale=not args.pool_scaled)
    if args.scene not in catalog:
        raise ConfigError(f"unknown scene '{args.scene}' (have {sorted(catalog)})")
    scene = catalog[args.scene]
    intr = _intrinsics_from_args(args)
    poses = default_trajectory(args.scene, args.frames, scene.extent)

    out = Path(args.output)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    write_pose_file(poses, out / "poses.txt")
    frames = []
    for i, (t, pose) in enumerate(poses):
        depth, conf = scn.render_frame(
            scene, pose, intr, noise_sigma_coeff=args.noise_coeff, seed=args.seed + i
        )
        dp = f"frames/depth_{i:04d}.pfm"
        cp = f"frames/conf_{i:04d}.pfm"
        write_pfm(depth, out / dp)
        write_pfm(conf, out / cp)
        frames.append(FrameEntry(timestamp=t, depth=dp, confidence=cp))
    manifest = DatasetManifest(
        intrinsics=intr,
        pose_file="poses.txt",
        frames=frames,
        confidence_prenormalized=True,
        root=out,
    )
    save_manifest(manifest, out / "manifest.json")
    print(f"synth: wrote {len(frames)} frames to {out}")
    return EXIT_OK


def cmd_stereo(args) -> int:
    manifest = load_manifest(args.manifest)
    out = Path(args.output)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    poses = parse_pose_file(manifest.resolve(manifest.pose_file))
    write_pose_file(poses, out / "poses.txt")
    frames = []
    for i, fr in enumerate(manifest.frames):
        if fr.disparity is not None and fr.left is not None:
            disp = read_pfm(manifest.resolve(fr.disparity))
            left = read_pfm(manifest.resolve(fr.left))
            fl = patch_featurize(left, args.patch_radius)
            conf = cosine_confidence(fl, shift_features(fl, disp))
        elif fr.left is not None and fr.right is not None:
            left = read_pfm(manifest.resolve(fr.left))
            right = read_pfm(manifest.resolve(fr.right))
            disp, conf = block_match(
                left, right, manifest.intrinsics, args.max_disp, args.patch_radius
            )
        elif fr.disparity is not None:
            disp = read_pfm(manifest.resolve(fr.disparity))
            conf = ScalarImage.full(disp.width, disp.height, 1.0)
        else:
            raise DataError(f"frame {i}: stereo needs disparity or left/right images")
        depth = disparity_to_depth(disp, manifest.intrinsics)
        dp = f"frames/depth_{i:04d}.pfm"
        cp = f"frames/conf_{i:04d}.pfm"
        write_pfm(depth, out / dp)
        write_pfm(conf, out / cp)
        frames.append(FrameEntry(timestamp=fr.timestamp, depth=dp, confidence=cp))
    save_manifest(
        DatasetManifest(
            intrinsics=manifest.intrinsics,
            pose_file="poses.txt",
            frames=frames,
            confidence_prenormalized=True,
            root=out,
        ),
        out / "manifest.json",
    )
    print(f"stereo: wrote {len(frames)} depth/confidence frames to {out}")
    return EXIT_OK


def _engine_config(args) -> EngineConfig:
    cfg = EngineConfig.load(args.config) if args.config else EngineConfig()
    overrides = {}
    if getattr(args, "mode", None):
        overrides["update_mode"] = args.mode
    if getattr(args, "weight", None):
        overrides["weight_mode"] = {
            "const": "constant",
            "quad": "quadratic",
            "conf": "confidence",
        }[args.weight]
    if getattr(args, "voxel_size", None) is not None:
        overrides["voxel_size"] = args.voxel_size
    if getattr(args, "c_min", None) is not None:
        overrides["c_min"] = args.c_min
    if getattr(args, "seed", None) is not None:
        overrides["noise_seed"] = args.seed
    if overrides:
        doc = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
        doc.update(overrides)
        try:
            cfg = EngineConfig(**doc)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def run_integration(manifest: DatasetManifest, cfg: EngineConfig) -> TsdfMap:
    """Fold all frames of a dataset into a fresh map, in timestamp order."""
    poses = parse_pose_file(manifest.resolve(manifest.pose_file))
    tsdf_map = cfg.make_map()
    icfg = cfg.integration_config()
    for fr in manifest.frames:
        pose = associate_pose(poses, fr.timestamp, cfg.pose_match_tolerance)
        depth, conf = load_frame_images(manifest, fr)
        depth = filter_by_confidence(depth, conf, cfg.c_min)
        cloud = depth_to_pointcloud(depth, conf, manifest.intrinsics)
        integrate_frame(tsdf_map, cloud, pose, manifest.intrinsics, conf, icfg)
    return tsdf_map


def cmd_integrate(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _engine_config(args)
    tsdf_map = run_integration(manifest, cfg)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    tsdf_map.save(args.output)
    print(
        f"integrate: {len(manifest.frames)} frames, "
        f"{len(tsdf_map.blocks)} blocks -> {args.output}"
    )
    return EXIT_OK


def cmd_mesh(args) -> int:
    cfg = _engine_config(args)
    tsdf_map = TsdfMap.load(args.snapshot)
    mesh = marching_cubes(tsdf_map, cfg.omega_mesh_min)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    export_ply(mesh, args.output)
    print(f"mesh: {mesh.num_vertices} vertices, {mesh.num_triangles} faces -> {args.output}")
    return EXIT_OK


def cmd_voxels(args) -> int:
    cfg = _engine_config(args)
    tsdf_map = TsdfMap.load(args.snapshot)
    cloud = export_voxel_cloud(tsdf_map, cfg.omega_vis_min)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    export_voxel_cloud_ply(cloud, args.output)
    print(f"voxels: {len(cloud)} surface voxels -> {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    catalog = scn.make_reference_scenes(pool_full_scale=not args.pool_scaled)
    if args.scene not in catalog:
        raise ConfigError(f"unknown scene '{args.scene}' (have {sorted(catalog)})")
    scene = catalog[args.scene]
    cfg = _engine_config(args)

    tsdf_map = TsdfMap.load(args.snapshot) if args.snapshot else None
    if args.mesh:
        mesh = import_ply(args.mesh)
    elif tsdf_map is not None:
        mesh = marching_cubes(tsdf_map, cfg.omega_mesh_min)
    else:
        raise ConfigError("eval needs --snapshot and/or --mesh")

    error = surface_error(mesh, scene) if mesh.num_vertices else None
    regions = []
    if tsdf_map is not None:
        for name, (lo, hi) in scene.regions.items():
            regions.append(
                region_weight_stats(tsdf_map, lo, hi, label=name)
            )
    for line in report_lines(error, regions):
        print(line)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(report_json(error, regions) + "\n", "ascii")
    return EXIT_OK


def _add_config_flags(p):
    p.add_argument("--config", help="engine config JSON")
    p.add_argument("--mode", choices=["accumulate", "average"])
    p.add_argument("--weight", choices=["const", "quad", "conf"])
    p.add_argument("--voxel-size", type=float, dest="voxel_size")
    p.add_argument("--c-min", type=float, dest="c_min")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conftsdf",
        description="Confidence-weighted TSDF mapping pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic dataset")
    p.add_argument("--scene", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--width", type=int, default=DEFAULT_INTRINSICS["width"])
    p.add_argument("--height", type=int, default=DEFAULT_INTRINSICS["height"])
    p.add_argument("--focal", type=float, default=DEFAULT_INTRINSICS["alpha_x"])
    p.add_argument("--baseline", type=float, default=DEFAULT_INTRINSICS["baseline"])
    p.add_argument("--noise-coeff", type=float, default=0.0, dest="noise_coeff")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool-scaled", action="store_true", dest="pool_scaled")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stereo", help="disparity/images -> depth + confidence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-disp", type=int, default=64, dest="max_disp")
    p.add_argument("--patch-radius", type=int, default=2, dest="patch_radius")
    p.set_defaults(func=cmd_stereo)

    p = sub.add_parser("integrate", help="fold a dataset into a map snapshot")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("mesh", help="snapshot -> PLY mesh")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("voxels", help="snapshot -> voxel-cloud PLY")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_voxels)

    p = sub.add_parser("eval", help="snapshot/mesh vs analytic scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--snapshot")
    p.add_argument("--mesh")
    p.add_argument("--output")
    p.add_argument("--pool-scaled", action="store_true", dest="pool_scaled")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    return parser


def _apply_thread_cap() -> None:
    val = os.environ.get("CONFTSDF_THREADS")
    if val is None:
        return
    try:
        n = int(val)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"CONFTSDF_THREADS must be a positive integer, got {val!r}")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_cap()
        return args.func(args)
    except ConfigError as exc:
        print(f"[{args.command}] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ParseError, OrderError, FormatError, IoError) as exc:
        print(f"[{args.command}] data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfTsdfError, AssertionError) as exc:
        print(f"[{args.command}] internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
