"""Block-hashed TSDF map and the confidence-weighted integration engine.

Distances are projective (measured along the sensor ray, positive in front
of the surface), truncated to +/- tau. Weights come from one of three
models (constant, inverse-square-depth, stereo confidence) and are fused
either by accumulation or by averaging with the previous weight.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateRay, FormatError
from .geometry import CameraIntrinsics, Pose
from .images import ConfidencePointCloud, ScalarImage

WEIGHT_MODES = ("constant", "quadratic", "confidence")
UPDATE_MODES = ("accumulate", "average")

SNAPSHOT_MAGIC = b"CTSD"
SNAPSHOT_VERSION = 1

# packed voxel-index keys: 21 bits per axis, offset to keep them positive
_KEY_OFFSET = 1 << 20
_KEY_BITS = 21


@dataclass
class IntegrationConfig:
    weight_mode: str = "confidence"
    update_mode: str = "average"
    c_min: float = 0.5
    max_ray_length: float = 10.0
    default_confidence: float = 0.0

    def __post_init__(self):
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")
        if not (0.0 <= self.c_min <= 1.0):
            raise ValueError("c_min must lie in [0, 1]")
        if self.max_ray_length <= 0:
            raise ValueError("max_ray_length must be positive")


@dataclass
class IntegrationReport:
    voxels_touched: int = 0
    points_skipped: int = 0
    points_used: int = 0


class VoxelBlock:
    """Dense cube of side**3 voxels; phi meaningless where omega == 0."""

    __slots__ = ("block_index", "side", "phi", "omega")

    def __init__(self, block_index: tuple[int, int, int], side: int):
        self.block_index = tuple(int(i) for i in block_index)
        self.side = side
        self.phi = np.zeros((side, side, side))
        self.omega = np.zeros((side, side, side))


def default_omega_max(weight_mode: str, update_mode: str) -> float:
    """100 for accumulating updates; 1.0 when averaged weights track confidence."""
    if update_mode == "average" and weight_mode == "confidence":
        return 1.0
    return 100.0


class TsdfMap:
    """Sparse voxel grid stored as lazily allocated fixed-size blocks.

    Voxel (i, j, k) is the cube [i*mu, (i+1)*mu) x ... with center at
    (i + 0.5) * mu; block (bi, bj, bk) holds voxels b*side .. b*side+side-1.
    """

    def __init__(
        self,
        voxel_size: float = 0.05,
        omega_max: float = 100.0,
        truncation: float | None = None,
        eta: float | None = None,
        block_side: int = 16,
    ):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if block_side < 1:
            raise ValueError("block_side must be >= 1")
        self.voxel_size = float(voxel_size)
        self.truncation = float(truncation) if truncation is not None else 4.0 * voxel_size
        self.eta = float(eta) if eta is not None else float(voxel_size)
        self.omega_max = float(omega_max)
        self.block_side = int(block_side)
        self.blocks: dict[tuple[int, int, int], VoxelBlock] = {}

    # -- voxel addressing ------------------------------------------------

    def voxel_center(self, ijk) -> np.ndarray:
        return (np.asarray(ijk, dtype=np.float64) + 0.5) * self.voxel_size

    def voxel_index(self, point) -> np.ndarray:
        return np.floor(np.asarray(point, dtype=np.float64) / self.voxel_size).astype(
            np.int64
        )

    def allocate(self, block_index) -> VoxelBlock:
        key = tuple(int(i) for i in block_index)
        blk = self.blocks.get(key)
        if blk is None:
            blk = VoxelBlock(key, self.block_side)
            self.blocks[key] = blk
        return blk

    def voxel(self, ijk) -> tuple[float, float]:
        """(phi, omega) of a global voxel index; (0, 0) if unobserved."""
        ijk = np.asarray(ijk, dtype=np.int64)
        b, l = np.divmod(ijk, self.block_side)
        blk = self.blocks.get(tuple(int(x) for x in b))
        if blk is None:
            return 0.0, 0.0
        return float(blk.phi[l[0], l[1], l[2]]), float(blk.omega[l[0], l[1], l[2]])

    def get_voxels(self, ijk: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized (phi, omega) fetch for an (N, 3) array of voxel indices."""
        n = len(ijk)
        phi = np.zeros(n)
        omega = np.zeros(n)
        if n == 0:
            return phi, omega
        b, l = np.divmod(ijk, self.block_side)
        keys = _pack_keys(b)
        order = np.argsort(keys, kind="stable")
        sk = keys[order]
        starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
        ends = np.r_[starts[1:], len(sk)]
        for s, e in zip(starts, ends):
            rows = order[s:e]
            blk = self.blocks.get(tuple(int(x) for x in b[rows[0]]))
            if blk is None:
                continue
            li = l[rows]
            phi[rows] = blk.phi[li[:, 0], li[:, 1], li[:, 2]]
            omega[rows] = blk.omega[li[:, 0], li[:, 1], li[:, 2]]
        return phi, omega

    def set_voxels(self, ijk: np.ndarray, phi: np.ndarray, omega: np.ndarray) -> None:
        if len(ijk) == 0:
            return
        b, l = np.divmod(ijk, self.block_side)
        keys = _pack_keys(b)
        order = np.argsort(keys, kind="stable")
        sk = keys[order]
        starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
        ends = np.r_[starts[1:], len(sk)]
        for s, e in zip(starts, ends):
            rows = order[s:e]
            blk = self.allocate(b[rows[0]])
            li = l[rows]
            blk.phi[li[:, 0], li[:, 1], li[:, 2]] = phi[rows]
            blk.omega[li[:, 0], li[:, 1], li[:, 2]] = omega[rows]

    def observed_voxels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All voxels with omega > 0: (indices (N,3), phi (N,), omega (N,))."""
        idx, phis, omegas = [], [], []
        for key in sorted(self.blocks):
            blk = self.blocks[key]
            li, lj, lk = np.nonzero(blk.omega > 0)
            if len(li) == 0:
                continue
            base = np.asarray(key, dtype=np.int64) * self.block_side
            idx.append(np.stack([li, lj, lk], axis=1) + base)
            phis.append(blk.phi[li, lj, lk])
            omegas.append(blk.omega[li, lj, lk])
        if not idx:
            return np.zeros((0, 3), dtype=np.int64), np.zeros(0), np.zeros(0)
        return np.concatenate(idx), np.concatenate(phis), np.concatenate(omegas)

    def copy(self) -> "TsdfMap":
        m = TsdfMap(
            self.voxel_size, self.omega_max, self.truncation, self.eta, self.block_side
        )
        for key, blk in self.blocks.items():
            nb = m.allocate(key)
            nb.phi[:] = blk.phi
            nb.omega[:] = blk.omega
        return m

    # -- snapshot serialization -------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(SNAPSHOT_MAGIC)
            f.write(
                struct.pack(
                    "<IddddIQ",
                    SNAPSHOT_VERSION,
                    self.voxel_size,
                    self.truncation,
                    self.eta,
                    self.omega_max,
                    self.block_side,
                    len(self.blocks),
                )
            )
            for key in sorted(self.blocks):
                blk = self.blocks[key]
                f.write(struct.pack("<qqq", *key))
                inter = np.empty((self.block_side**3, 2))
                inter[:, 0] = blk.phi.reshape(-1)
                inter[:, 1] = blk.omega.reshape(-1)
                f.write(inter.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "TsdfMap":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != SNAPSHOT_MAGIC:
                raise FormatError(f"bad snapshot magic {magic!r}")
            header = f.read(struct.calcsize("<IddddIQ"))
            if len(header) != struct.calcsize("<IddddIQ"):
                raise FormatError("truncated snapshot header")
            version, mu, tau, eta, om, side, count = struct.unpack("<IddddIQ", header)
            if version != SNAPSHOT_VERSION:
                raise FormatError(f"unsupported snapshot version {version}")
            m = cls(mu, om, tau, eta, side)
            rec = side**3 * 16
            for _ in range(count):
                head = f.read(24)
                if len(head) != 24:
                    raise FormatError("truncated block header")
                key = struct.unpack("<qqq", head)
                payload = f.read(rec)
                if len(payload) != rec:
                    raise FormatError("truncated block payload")
                inter = np.frombuffer(payload, dtype="<f8").reshape(-1, 2)
                blk = m.allocate(key)
                blk.phi[:] = inter[:, 0].reshape(side, side, side)
                blk.omega[:] = inter[:, 1].reshape(side, side, side)
        return m


# -- weight and update primitives (scalar, for desk checks) ----------------


def projective_distance(v, q, c) -> float:
    """Signed distance along the sensor ray: ||q - v|| * sign((q-v).(q-c))."""
    v = np.asarray(v, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d = q - v
    return float(np.linalg.norm(d) * np.sign(np.dot(d, q - c)))


def weight_constant(rho: float, tau: float) -> float:
    return 1.0 if rho > -tau else 0.0


def weight_quadratic(rho: float, z: float, tau: float, eta: float) -> float:
    """Inverse-square-of-depth weight with a linear taper behind the surface."""
    if z <= 0:
        raise DegenerateRay("voxel coincides with the camera center")
    if rho > -eta:
        return 1.0 / (z * z)
    if rho > -tau:
        return (1.0 / (z * z)) * (rho + tau) / (tau - eta)
    return 0.0


def weight_confidence(rho: float, c1: float, c2: float, tau: float, eta: float) -> float:
    """Stereo-confidence weight: C1 near/in front, C2 in the taper band."""
    if rho > -eta:
        return c1
    if rho > -tau:
        return c2
    return 0.0


def update_voxel(
    phi: float,
    omega: float,
    rho: float,
    omega_new: float,
    update_mode: str,
    omega_max: float,
    tau: float,
) -> tuple[float, float]:
    """One fusion step; a zero observation weight leaves the voxel untouched."""
    if omega_new < 0:
        raise ValueError("observation weight must be non-negative")
    if omega_new == 0:
        return phi, omega
    rho_t = min(max(rho, -tau), tau)
    phi_next = (omega * phi + omega_new * rho_t) / (omega + omega_new)
    if update_mode == "average":
        omega_next = min((omega + omega_new) / 2.0, omega_max)
    else:
        omega_next = min(omega + omega_new, omega_max)
    return phi_next, omega_next


def lookup_confidence(
    point_world,
    pose: Pose,
    intr: CameraIntrinsics,
    conf: ScalarImage,
    default_confidence: float,
) -> float:
    """Project a world point into the confidence image, nearest pixel.

    Falls back to default_confidence behind the camera, off the image, or
    on an invalid pixel.
    """
    out = _lookup_confidence_batch(
        np.asarray(point_world, dtype=np.float64).reshape(1, 3),
        pose,
        intr,
        conf,
        default_confidence,
    )
    return float(out[0])


def _lookup_confidence_batch(points_world, pose, intr, conf, default_confidence):
    r = pose.matrix()
    pc = (points_world - pose.translation) @ r
    out = np.full(len(points_world), default_confidence, dtype=np.float64)
    z = pc[:, 2]
    front = z > 0
    if not np.any(front):
        return out
    with np.errstate(divide="ignore", invalid="ignore"):
        a = intr.alpha_x * pc[:, 0] / z + intr.o_x
        b = intr.alpha_y * pc[:, 1] / z + intr.o_y
    px = np.floor(a + 0.5)
    py = np.floor(b + 0.5)
    ok = front & (px >= 0) & (px < intr.width) & (py >= 0) & (py < intr.height)
    pxi = np.where(ok, px, 0).astype(np.int64)
    pyi = np.where(ok, py, 0).astype(np.int64)
    ok &= conf.mask[pyi, pxi]
    out[ok] = conf.data[pyi[ok], pxi[ok]]
    return out


# -- numba kernels ----------------------------------------------------------


@njit(cache=True)
def _traverse_rays(origin, points, voxel_size, extend, out_idx, out_pid):
    """Exact grid traversal from the sensor origin through each point,
    extended `extend` meters beyond it. Emits voxel indices in ray order,
    rays in point order. Returns the number of emitted entries."""
    n = 0
    for p in range(points.shape[0]):
        dx = points[p, 0] - origin[0]
        dy = points[p, 1] - origin[1]
        dz = points[p, 2] - origin[2]
        length = np.sqrt(dx * dx + dy * dy + dz * dz)
        if length <= 0.0:
            continue
        ux = dx / length
        uy = dy / length
        uz = dz / length
        total = length + extend

        ix = int(np.floor(origin[0] / voxel_size))
        iy = int(np.floor(origin[1] / voxel_size))
        iz = int(np.floor(origin[2] / voxel_size))

        if ux > 0.0:
            sx, tmx = 1, ((ix + 1) * voxel_size - origin[0]) / ux
            tdx = voxel_size / ux
        elif ux < 0.0:
            sx, tmx = -1, (ix * voxel_size - origin[0]) / ux
            tdx = -voxel_size / ux
        else:
            sx, tmx, tdx = 0, np.inf, np.inf
        if uy > 0.0:
            sy, tmy = 1, ((iy + 1) * voxel_size - origin[1]) / uy
            tdy = voxel_size / uy
        elif uy < 0.0:
            sy, tmy = -1, (iy * voxel_size - origin[1]) / uy
            tdy = -voxel_size / uy
        else:
            sy, tmy, tdy = 0, np.inf, np.inf
        if uz > 0.0:
            sz, tmz = 1, ((iz + 1) * voxel_size - origin[2]) / uz
            tdz = voxel_size / uz
        elif uz < 0.0:
            sz, tmz = -1, (iz * voxel_size - origin[2]) / uz
            tdz = -voxel_size / uz
        else:
            sz, tmz, tdz = 0, np.inf, np.inf

        out_idx[n, 0] = ix
        out_idx[n, 1] = iy
        out_idx[n, 2] = iz
        out_pid[n] = p
        n += 1
        while True:
            if tmx <= tmy and tmx <= tmz:
                if tmx >= total:
                    break
                ix += sx
                tmx += tdx
            elif tmy <= tmz:
                if tmy >= total:
                    break
                iy += sy
                tmy += tdy
            else:
                if tmz >= total:
                    break
                iz += sz
                tmz += tdz
            out_idx[n, 0] = ix
            out_idx[n, 1] = iy
            out_idx[n, 2] = iz
            out_pid[n] = p
            n += 1
    return n


@njit(cache=True)
def _fuse_groups(starts, counts, rho_t, w, phi, omega, average_mode, omega_max):
    """Apply the fusion recurrence per voxel group, updates in emission order."""
    for u in range(len(starts)):
        ph = phi[u]
        om = omega[u]
        for t in range(starts[u], starts[u] + counts[u]):
            wt = w[t]
            if wt <= 0.0:
                continue
            ph = (om * ph + wt * rho_t[t]) / (om + wt)
            if average_mode:
                om = min((om + wt) / 2.0, omega_max)
            else:
                om = min(om + wt, omega_max)
        phi[u] = ph
        omega[u] = om


def _pack_keys(ijk: np.ndarray) -> np.ndarray:
    i = ijk[:, 0].astype(np.int64) + _KEY_OFFSET
    j = ijk[:, 1].astype(np.int64) + _KEY_OFFSET
    k = ijk[:, 2].astype(np.int64) + _KEY_OFFSET
    return (i << (2 * _KEY_BITS)) | (j << _KEY_BITS) | k


def _unpack_keys(keys: np.ndarray) -> np.ndarray:
    mask = (1 << _KEY_BITS) - 1
    i = (keys >> (2 * _KEY_BITS)) - _KEY_OFFSET
    j = ((keys >> _KEY_BITS) & mask) - _KEY_OFFSET
    k = (keys & mask) - _KEY_OFFSET
    return np.stack([i, j, k], axis=1)


# -- frame integration -------------------------------------------------------


def integrate_frame(
    tsdf_map: TsdfMap,
    cloud: ConfidencePointCloud,
    pose: Pose,
    intr: CameraIntrinsics,
    conf: ScalarImage,
    cfg: IntegrationConfig,
) -> IntegrationReport:
    """Fuse one posed point cloud (camera frame) into the map.

    Each point is raycast from the sensor origin, through the point, tau
    beyond it; every traversed voxel receives one update, and per voxel the
    updates land in point order.
    """
    report = IntegrationReport()
    if len(cloud) == 0:
        return report
    mu = tsdf_map.voxel_size
    tau = tsdf_map.truncation
    eta = tsdf_map.eta

    c = pose.translation
    q_world = pose.apply(cloud.positions)
    seg = q_world - c
    lengths = np.linalg.norm(seg, axis=1)
    keep = (lengths > 0) & (lengths <= cfg.max_ray_length)
    report.points_skipped = int(np.sum(~keep))
    report.points_used = int(np.sum(keep))
    if report.points_used == 0:
        return report
    q = q_world[keep]
    point_conf = cloud.confidences[keep]
    lengths = lengths[keep]

    cap = int(np.sum(np.ceil((lengths + tau) / mu) * 3 + 8))
    out_idx = np.empty((cap, 3), dtype=np.int64)
    out_pid = np.empty(cap, dtype=np.int64)
    n = _traverse_rays(c, q, mu, tau, out_idx, out_pid)
    vox = out_idx[:n]
    pid = out_pid[:n]

    centers = (vox + 0.5) * mu
    qv = q[pid] - centers
    dist = np.linalg.norm(qv, axis=1)
    sign = np.sign(np.einsum("ij,ij->i", qv, q[pid] - c))
    rho = dist * sign

    if cfg.weight_mode == "constant":
        w = np.where(rho > -tau, 1.0, 0.0)
    elif cfg.weight_mode == "quadratic":
        z = np.linalg.norm(centers - c, axis=1)
        if np.any(z <= 0):
            raise DegenerateRay("voxel center coincides with the camera center")
        inv = 1.0 / (z * z)
        w = np.where(
            rho > -eta,
            inv,
            np.where(rho > -tau, inv * (rho + tau) / (tau - eta), 0.0),
        )
    else:
        c1 = _lookup_confidence_batch(centers, pose, intr, conf, cfg.default_confidence)
        c2 = point_conf[pid]
        w = np.where(rho > -eta, c1, np.where(rho > -tau, c2, 0.0))

    rho_t = np.clip(rho, -tau, tau)

    keys = _pack_keys(vox)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]]).astype(np.int64)
    counts = np.diff(np.r_[starts, len(sk)]).astype(np.int64)
    uniq_vox = _unpack_keys(sk[starts])

    phi, omega = tsdf_map.get_voxels(uniq_vox)
    w_sorted = w[order]
    rho_sorted = rho_t[order]
    _fuse_groups(
        starts,
        counts,
        rho_sorted,
        w_sorted,
        phi,
        omega,
        cfg.update_mode == "average",
        tsdf_map.omega_max,
    )
    tsdf_map.set_voxels(uniq_vox, phi, omega)

    touched = np.add.reduceat(w_sorted > 0, starts) > 0
    report.voxels_touched = int(np.sum(touched))
    return report
