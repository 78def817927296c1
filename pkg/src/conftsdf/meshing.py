"""Surface extraction and export: marching cubes over the TSDF, a
violet-to-red confidence colormap, and binary PLY writers/readers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates
from skimage import measure

from .errors import FormatError, IoError
from .tsdf import TsdfMap


@dataclass
class TriangleMesh:
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    confidences: np.ndarray = field(default_factory=lambda: np.zeros(0))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.uint8))
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.confidences = np.asarray(self.confidences, dtype=np.float64).reshape(-1)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


@dataclass
class VoxelCloud:
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(0))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.uint8))

    def __len__(self) -> int:
        return len(self.centers)


def confidence_to_color(c) -> np.ndarray:
    """Violet (lowest) to red (highest) hue ramp, full saturation and value.

    hue = 270 * (1 - c) degrees; channels rounded half-up to 8 bits.
    Accepts a scalar or an array; returns uint8 RGB with a matching leading
    shape.
    """
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    scalar = c.ndim == 0
    c = np.atleast_1d(c)
    hue = 270.0 * (1.0 - c)
    hp = hue / 60.0
    i = np.floor(hp).astype(np.int64) % 6
    f = hp - np.floor(hp)
    # S = V = 1: p = 0, q = 1 - f, t = f
    q = 1.0 - f
    t = f
    one = np.ones_like(f)
    zero = np.zeros_like(f)
    r = np.choose(i, [one, q, zero, zero, t, one])
    g = np.choose(i, [t, one, one, q, zero, zero])
    b = np.choose(i, [zero, zero, t, one, one, q])
    rgb = np.stack([r, g, b], axis=-1)
    out = np.floor(rgb * 255.0 + 0.5).astype(np.uint8)
    return out[0] if scalar else out


def _dense_field(tsdf_map: TsdfMap):
    """Assemble allocated blocks into dense phi/omega volumes.

    Returns (phi, omega, origin_index) or None when nothing is allocated.
    """
    if not tsdf_map.blocks:
        return None
    side = tsdf_map.block_side
    keys = np.array(sorted(tsdf_map.blocks), dtype=np.int64)
    lo = keys.min(axis=0)
    hi = keys.max(axis=0)
    shape = tuple((hi - lo + 1) * side)
    phi = np.zeros(shape)
    omega = np.zeros(shape)
    for key in map(tuple, keys):
        blk = tsdf_map.blocks[key]
        o = (np.asarray(key, dtype=np.int64) - lo) * side
        phi[o[0] : o[0] + side, o[1] : o[1] + side, o[2] : o[2] + side] = blk.phi
        omega[o[0] : o[0] + side, o[1] : o[1] + side, o[2] : o[2] + side] = blk.omega
    return phi, omega, lo * side


def marching_cubes(tsdf_map: TsdfMap, omega_mesh_min: float = 1e-4) -> TriangleMesh:
    """Extract the phi = 0 isosurface; cells touching voxels with
    omega <= omega_mesh_min are skipped. Vertex confidence is the
    zero-crossing interpolation of corner omegas, normalized by omega_max."""
    if omega_mesh_min < 0:
        raise ValueError("omega_mesh_min must be >= 0")
    dense = _dense_field(tsdf_map)
    if dense is None:
        return TriangleMesh()
    phi, omega, origin = dense
    observed = omega > omega_mesh_min
    # skimage gates cell (i,j,k) on mask[i+1,j+1,k+1]; fold "all 8 corners
    # observed" into that single upper-corner entry
    mask = np.zeros_like(observed)
    mask[1:, 1:, 1:] = True
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                mask[1:, 1:, 1:] &= observed[
                    di : observed.shape[0] - 1 + di,
                    dj : observed.shape[1] - 1 + dj,
                    dk : observed.shape[2] - 1 + dk,
                ]
    if not mask.any():
        return TriangleMesh()
    try:
        verts, faces, _, _ = measure.marching_cubes(phi, level=0.0, mask=mask)
    except (ValueError, RuntimeError):
        return TriangleMesh()
    if len(verts) == 0:
        return TriangleMesh()
    omega_at_vert = map_coordinates(omega, verts.T, order=1, mode="nearest")
    conf = np.clip(omega_at_vert / tsdf_map.omega_max, 0.0, 1.0)
    world = (verts.astype(np.float64) + origin + 0.5) * tsdf_map.voxel_size
    # skimage's winding already makes cross-product normals point toward
    # positive phi (free space)
    faces = faces.astype(np.int64)
    return TriangleMesh(world, conf, confidence_to_color(conf), faces)


def export_voxel_cloud(tsdf_map: TsdfMap, omega_vis_min: float) -> VoxelCloud:
    """Surface voxels (|phi| < voxel size, omega above threshold), colored
    by omega / omega_max."""
    idx, phi, omega = tsdf_map.observed_voxels()
    keep = (omega > omega_vis_min) & (np.abs(phi) < tsdf_map.voxel_size)
    idx, phi, omega = idx[keep], phi[keep], omega[keep]
    centers = (idx + 0.5) * tsdf_map.voxel_size
    colors = confidence_to_color(np.clip(omega / tsdf_map.omega_max, 0.0, 1.0))
    if len(centers) == 0:
        colors = np.zeros((0, 3), dtype=np.uint8)
    return VoxelCloud(centers, phi, omega, colors)


_VERTEX_DTYPE = np.dtype(
    [
        ("x", "<f4"),
        ("y", "<f4"),
        ("z", "<f4"),
        ("red", "u1"),
        ("green", "u1"),
        ("blue", "u1"),
        ("confidence", "<f4"),
    ]
)
_FACE_DTYPE = np.dtype([("n", "u1"), ("i0", "<i4"), ("i1", "<i4"), ("i2", "<i4")])

_VOXEL_DTYPE = np.dtype(
    [
        ("x", "<f4"),
        ("y", "<f4"),
        ("z", "<f4"),
        ("phi", "<f4"),
        ("omega", "<f4"),
        ("red", "u1"),
        ("green", "u1"),
        ("blue", "u1"),
    ]
)


def export_ply(mesh: TriangleMesh, path) -> None:
    """Binary little-endian PLY with per-vertex color and confidence."""
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.num_vertices}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "property float confidence\n"
        f"element face {mesh.num_triangles}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    verts = np.empty(mesh.num_vertices, dtype=_VERTEX_DTYPE)
    verts["x"] = mesh.vertices[:, 0]
    verts["y"] = mesh.vertices[:, 1]
    verts["z"] = mesh.vertices[:, 2]
    verts["red"] = mesh.colors[:, 0]
    verts["green"] = mesh.colors[:, 1]
    verts["blue"] = mesh.colors[:, 2]
    verts["confidence"] = mesh.confidences
    faces = np.empty(mesh.num_triangles, dtype=_FACE_DTYPE)
    faces["n"] = 3
    faces["i0"] = mesh.triangles[:, 0]
    faces["i1"] = mesh.triangles[:, 1]
    faces["i2"] = mesh.triangles[:, 2]
    try:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(verts.tobytes())
            f.write(faces.tobytes())
    except OSError as exc:
        raise IoError(f"failed to write PLY: {exc}", path=str(path)) from exc


def import_ply(path) -> TriangleMesh:
    """Read back a mesh written by export_ply."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise IoError(f"failed to read PLY: {exc}", path=str(path)) from exc
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n") or end < 0:
        raise FormatError("not a PLY file")
    header = raw[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise FormatError("only binary little-endian PLY is supported")
    nv = nf = 0
    for line in header:
        if line.startswith("element vertex "):
            nv = int(line.split()[-1])
        elif line.startswith("element face "):
            nf = int(line.split()[-1])
    body = raw[end + len(b"end_header\n") :]
    need = nv * _VERTEX_DTYPE.itemsize + nf * _FACE_DTYPE.itemsize
    if len(body) < need:
        raise FormatError("truncated PLY payload")
    verts = np.frombuffer(body[: nv * _VERTEX_DTYPE.itemsize], dtype=_VERTEX_DTYPE)
    faces = np.frombuffer(
        body[nv * _VERTEX_DTYPE.itemsize : need], dtype=_FACE_DTYPE
    )
    if nf and not np.all(faces["n"] == 3):
        raise FormatError("non-triangular face in PLY")
    return TriangleMesh(
        np.stack([verts["x"], verts["y"], verts["z"]], axis=1).astype(np.float64),
        verts["confidence"].astype(np.float64),
        np.stack([verts["red"], verts["green"], verts["blue"]], axis=1),
        np.stack([faces["i0"], faces["i1"], faces["i2"]], axis=1).astype(np.int64),
    )


def export_voxel_cloud_ply(cloud: VoxelCloud, path) -> None:
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property float phi\n"
        "property float omega\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    rec = np.empty(len(cloud), dtype=_VOXEL_DTYPE)
    rec["x"] = cloud.centers[:, 0] if len(cloud) else []
    rec["y"] = cloud.centers[:, 1] if len(cloud) else []
    rec["z"] = cloud.centers[:, 2] if len(cloud) else []
    rec["phi"] = cloud.phi
    rec["omega"] = cloud.omega
    rec["red"] = cloud.colors[:, 0] if len(cloud) else []
    rec["green"] = cloud.colors[:, 1] if len(cloud) else []
    rec["blue"] = cloud.colors[:, 2] if len(cloud) else []
    try:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(rec.tobytes())
    except OSError as exc:
        raise IoError(f"failed to write PLY: {exc}", path=str(path)) from exc
