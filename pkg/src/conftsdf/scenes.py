"""Analytic scenes, trajectories, and the synthetic depth/confidence renderer.

Scenes are unions of solid primitives, each carrying a uniform texture
confidence; the renderer casts one ray per pixel and records the camera-
frame Z of the nearest hit plus the hit primitive's confidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, Pose, quat_slerp
from .images import ScalarImage

_EPS = 1e-9


@dataclass(frozen=True)
class Plane:
    """Solid half-space: inside where dot(p - point, normal) < 0."""

    point: np.ndarray
    normal: np.ndarray
    texture_confidence: float

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64))
        n = np.asarray(self.normal, dtype=np.float64)
        nn = np.linalg.norm(n)
        if nn < 1e-12:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / nn)
        _check_conf(self.texture_confidence)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.point) @ self.normal

    def ray_hits(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        denom = dirs @ self.normal
        num = (self.point - origin) @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        t = np.where((np.abs(denom) > 1e-15) & (t > _EPS), t, np.inf)
        return t


@dataclass(frozen=True)
class Box:
    """Axis-aligned solid box."""

    minimum: np.ndarray
    maximum: np.ndarray
    texture_confidence: float

    def __post_init__(self):
        object.__setattr__(self, "minimum", np.asarray(self.minimum, dtype=np.float64))
        object.__setattr__(self, "maximum", np.asarray(self.maximum, dtype=np.float64))
        if not np.all(self.minimum < self.maximum):
            raise ValueError("box minimum must be strictly below maximum per axis")
        _check_conf(self.texture_confidence)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        center = (self.minimum + self.maximum) / 2.0
        half = (self.maximum - self.minimum) / 2.0
        d = np.abs(p - center) - half
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.minimum(np.max(d, axis=1), 0.0)
        return outside + inside

    def ray_hits(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
        t0 = (self.minimum - origin) * inv
        t1 = (self.maximum - origin) * inv
        tn = np.minimum(t0, t1)
        tf = np.maximum(t0, t1)
        # axes with zero direction: hit only if origin within the slab
        par = np.abs(dirs) < 1e-15
        in_slab = (origin >= self.minimum) & (origin <= self.maximum)
        tn = np.where(par, np.where(in_slab, -np.inf, np.inf), tn)
        tf = np.where(par, np.where(in_slab, np.inf, -np.inf), tf)
        enter = tn.max(axis=1)
        exit_ = tf.min(axis=1)
        hit = (enter <= exit_) & (enter > _EPS)
        return np.where(hit, enter, np.inf)


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    texture_confidence: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        _check_conf(self.texture_confidence)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(points) - self.center, axis=1) - self.radius

    def ray_hits(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origin - self.center
        a = np.einsum("ij,ij->i", dirs, dirs)
        b = 2.0 * dirs @ oc
        c = oc @ oc - self.radius**2
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t_near = (-b - sq) / (2 * a)
        t_far = (-b + sq) / (2 * a)
        t = np.where(t_near > _EPS, t_near, np.where(t_far > _EPS, t_far, np.inf))
        return np.where(disc >= 0, t, np.inf)


def _check_conf(c: float) -> None:
    if not (0.0 <= c <= 1.0):
        raise ValueError("texture_confidence must lie in [0, 1]")


@dataclass
class Scene:
    """Ordered union of primitives, with optional named evaluation regions
    (axis-aligned boxes as (lo, hi) corner pairs) and a nominal extent."""

    primitives: list
    regions: dict = field(default_factory=dict)
    extent: tuple | None = None

    def sdf(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        values = np.stack([p.sdf(pts) for p in self.primitives], axis=0)
        return values.min(axis=0)


@dataclass
class TrajectorySpec:
    """Keyposes interpolated with linear translation and slerp rotation."""

    keyposes: list  # (time, Pose) pairs
    frame_rate: float

    def __post_init__(self):
        if len(self.keyposes) < 2:
            raise ValueError("a trajectory needs at least 2 keyposes")
        times = [t for t, _ in self.keyposes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keypose times must be strictly increasing")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")


def interpolate_pose(spec: TrajectorySpec, t: float) -> Pose:
    times = [tt for tt, _ in spec.keyposes]
    for kt, kp in spec.keyposes:
        if abs(t - kt) < 1e-12:
            return kp
    if t < times[0] or t > times[-1]:
        raise ValueError("query time outside the trajectory span")
    hi = next(i for i, tt in enumerate(times) if tt > t)
    t0, p0 = spec.keyposes[hi - 1]
    t1, p1 = spec.keyposes[hi]
    u = (t - t0) / (t1 - t0)
    return Pose(
        quat_slerp(p0.rotation, p1.rotation, u),
        (1.0 - u) * p0.translation + u * p1.translation,
    )


def sample_trajectory(spec: TrajectorySpec) -> list[tuple[float, Pose]]:
    """Poses at 1/frame_rate intervals from the first to the last key time."""
    t0 = spec.keyposes[0][0]
    t_end = spec.keyposes[-1][0]
    out = []
    k = 0
    while True:
        t = t0 + k / spec.frame_rate
        if t > t_end + 1e-9:
            break
        out.append((min(t, t_end), interpolate_pose(spec, min(t, t_end))))
        k += 1
    return out


def render_frame(
    scene: Scene,
    pose: Pose,
    intr: CameraIntrinsics,
    noise_sigma_coeff: float = 0.0,
    seed: int = 0,
) -> tuple[ScalarImage, ScalarImage]:
    """Render depth (camera-frame Z) and confidence images analytically.

    Rays pass through integer pixel sample positions. Misses are invalid
    pixels. Optional depth noise is zero-mean Gaussian with sigma
    = noise_sigma_coeff * Z^2, drawn from a seeded Philox generator so
    frames are bitwise reproducible.
    """
    if not scene.primitives:
        raise ValueError("cannot render an empty scene")
    h, w = intr.height, intr.width
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    dirs_cam = np.stack(
        [
            (xs.ravel() - intr.o_x) / intr.alpha_x,
            (ys.ravel() - intr.o_y) / intr.alpha_y,
            np.ones(w * h),
        ],
        axis=1,
    )
    dirs = dirs_cam @ pose.matrix().T
    origin = pose.translation

    # dirs have unit camera-frame z, so the ray parameter is the camera Z
    best_t = np.full(w * h, np.inf)
    best_conf = np.full(w * h, np.nan)
    for prim in scene.primitives:
        t = prim.ray_hits(origin, dirs)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_conf[closer] = prim.texture_confidence

    valid = np.isfinite(best_t)
    depth = np.where(valid, best_t, np.nan)
    if noise_sigma_coeff > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        noise = rng.standard_normal(w * h) * noise_sigma_coeff * np.square(depth)
        depth = np.where(valid, depth + noise, np.nan)
        bad = valid & (depth <= 0)
        valid = valid & ~bad
    depth_img = ScalarImage(depth.reshape(h, w), valid.reshape(h, w))
    conf_img = ScalarImage(
        np.where(valid, best_conf, np.nan).reshape(h, w), valid.reshape(h, w)
    )
    return depth_img, conf_img


def make_reference_scenes(pool_full_scale: bool = True) -> dict[str, Scene]:
    """Named desk-scale test scenes.

    pool: water-tank box (full 40 x 6.45 x 1.5 m or a 1:10-ish scale-down),
    floor confidence 0.9, walls 0.3. two_walls: fronto-parallel patches at
    z = 1.4 (confidence 0.9) and z = 0.56 (confidence 0.4) seen from the
    origin. sphere_room: a 0.5 m sphere inside a box room, for mesh tests.
    """
    scenes = {}

    ex, ey, ez = (40.0, 6.45, 1.5) if pool_full_scale else (4.0, 0.645, 0.15)
    th = 0.2
    floor = Box([0.0, 0.0, -th], [ex, ey, 0.0], 0.9)
    walls = [
        Box([-th, -th, 0.0], [0.0, ey + th, ez], 0.3),
        Box([ex, -th, 0.0], [ex + th, ey + th, ez], 0.3),
        Box([-th, -th, 0.0], [ex + th, 0.0, ez], 0.3),
        Box([-th, ey, 0.0], [ex + th, ey + th, ez], 0.3),
    ]
    scenes["pool"] = Scene(
        [floor] + walls,
        regions={"floor": ([0.0, 0.0, -0.1], [ex, ey, 0.05])},
        extent=(ex, ey, ez),
    )

    wall_a = Box([-1.05, -0.85, 1.4], [-0.05, 0.85, 1.6], 0.9)
    wall_b = Box([0.05, -0.36, 0.56], [0.44, 0.36, 0.76], 0.4)
    scenes["two_walls"] = Scene(
        [wall_a, wall_b],
        regions={
            "wall_a": ([-0.95, -0.7, 1.30], [-0.12, 0.7, 1.50]),
            "wall_b": ([0.11, -0.28, 0.46], [0.38, 0.28, 0.66]),
        },
    )

    sphere = Sphere([0.0, 0.0, 2.0], 0.5, 0.8)
    room = [
        Box([-3.0, -3.0, 4.8], [3.0, 3.0, 5.2], 0.6),
        Box([-3.2, -3.0, -1.2], [-2.8, 3.0, 5.2], 0.6),
        Box([2.8, -3.0, -1.2], [3.2, 3.0, 5.2], 0.6),
        Box([-3.0, -3.2, -1.2], [3.0, -2.8, 5.2], 0.6),
        Box([-3.0, 2.8, -1.2], [3.0, 3.2, 5.2], 0.6),
    ]
    scenes["sphere_room"] = Scene(
        [sphere] + room,
        regions={"sphere": ([-0.7, -0.7, 1.3], [0.7, 0.7, 2.7])},
    )
    return scenes
