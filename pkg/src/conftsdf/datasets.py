"""Dataset ingestion: PFM float images, TUM pose files, JSON manifests,
and the engine configuration document.

Manifest and config parsing reject unknown keys so a typoed parameter can
never silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    OrderError,
    ParseError,
)
from .geometry import CameraIntrinsics, Pose
from .images import ScalarImage
from .stereo import disparity_to_depth
from .tsdf import IntegrationConfig, TsdfMap, default_omega_max

# -- PFM --------------------------------------------------------------------


def write_pfm(img: ScalarImage, path) -> None:
    """Grayscale PFM, little-endian (scale -1.0), rows bottom-to-top.

    Invalid pixels are stored as NaN.
    """
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{img.width} {img.height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        rows = np.where(img.mask, img.data, np.nan).astype("<f4")
        f.write(rows[::-1].tobytes())


def read_pfm(path) -> ScalarImage:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            raise FormatError("color PFM not supported (grayscale 'Pf' only)")
        if magic != b"Pf":
            raise FormatError(f"bad PFM magic {magic!r}")
        try:
            dims = f.readline().split()
            width, height = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
        except (ValueError, IndexError) as exc:
            raise FormatError("malformed PFM header") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        payload = f.read(width * height * 4)
        if len(payload) != width * height * 4:
            raise FormatError("truncated PFM payload")
        data = np.frombuffer(payload, dtype=dtype).reshape(height, width)[::-1]
    data = data.astype(np.float64)
    return ScalarImage(data, np.isfinite(data))


# -- TUM pose files -----------------------------------------------------------


def parse_pose_file(path) -> list[tuple[float, Pose]]:
    """TUM lines `t tx ty tz qx qy qz qw`; '#' comments; strictly increasing t."""
    out: list[tuple[float, Pose]] = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 8:
                raise ParseError(
                    f"expected 8 fields, got {len(fields)} (line {lineno})",
                    line_number=lineno,
                )
            try:
                vals = [float(x) for x in fields]
            except ValueError as exc:
                raise ParseError(
                    f"non-numeric field (line {lineno})", line_number=lineno
                ) from exc
            t, tx, ty, tz, qx, qy, qz, qw = vals
            if out and t <= out[-1][0]:
                raise OrderError(f"non-monotone timestamp at line {lineno}")
            out.append((t, Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))))
    return out


def write_pose_file(poses: list[tuple[float, Pose]], path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for t, p in poses:
            w, x, y, z = (float(v) for v in p.rotation)
            tx, ty, tz = (float(v) for v in p.translation)
            f.write(f"{t!r} {tx!r} {ty!r} {tz!r} {x!r} {y!r} {z!r} {w!r}\n")


# -- engine config ------------------------------------------------------------


@dataclass
class EngineConfig:
    voxel_size: float = 0.05
    omega_max: float | None = None  # resolved from the modes when unset
    weight_mode: str = "confidence"
    update_mode: str = "average"
    c_min: float = 0.5
    max_ray_length: float = 10.0
    default_confidence: float = 0.0
    block_side: int = 16
    truncation: float | None = None  # defaults to 4 * voxel_size
    eta: float | None = None  # defaults to voxel_size
    omega_mesh_min: float = 1e-4
    omega_vis_min: float = 1e-4
    noise_seed: int = 0
    pose_match_tolerance: float = 0.01

    def __post_init__(self):
        # reuse IntegrationConfig validation for the shared fields
        IntegrationConfig(
            weight_mode=self.weight_mode,
            update_mode=self.update_mode,
            c_min=self.c_min,
            max_ray_length=self.max_ray_length,
            default_confidence=self.default_confidence,
        )
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if self.block_side < 1:
            raise ValueError("block_side must be >= 1")
        if self.pose_match_tolerance < 0:
            raise ValueError("pose_match_tolerance must be >= 0")

    def resolved_omega_max(self) -> float:
        if self.omega_max is not None:
            return self.omega_max
        return default_omega_max(self.weight_mode, self.update_mode)

    def make_map(self) -> TsdfMap:
        return TsdfMap(
            voxel_size=self.voxel_size,
            omega_max=self.resolved_omega_max(),
            truncation=self.truncation,
            eta=self.eta,
            block_side=self.block_side,
        )

    def integration_config(self) -> IntegrationConfig:
        return IntegrationConfig(
            weight_mode=self.weight_mode,
            update_mode=self.update_mode,
            c_min=self.c_min,
            max_ray_length=self.max_ray_length,
            default_confidence=self.default_confidence,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EngineConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="ascii")

    @classmethod
    def load(cls, path) -> "EngineConfig":
        try:
            return cls.from_json(Path(path).read_text(encoding="ascii"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


# -- dataset manifest ---------------------------------------------------------

_FRAME_KEYS = {"timestamp", "depth", "confidence", "disparity", "left", "right"}
_MANIFEST_KEYS = {
    "version",
    "intrinsics",
    "pose_file",
    "frames",
    "confidence_prenormalized",
}
_INTRINSIC_KEYS = {"alpha_x", "alpha_y", "o_x", "o_y", "width", "height", "baseline"}


@dataclass
class FrameEntry:
    timestamp: float
    depth: str | None = None
    confidence: str | None = None
    disparity: str | None = None
    left: str | None = None
    right: str | None = None


@dataclass
class DatasetManifest:
    intrinsics: CameraIntrinsics
    pose_file: str
    frames: list[FrameEntry]
    confidence_prenormalized: bool = True
    version: int = 1
    root: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        return self.root / rel


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="ascii"))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}") from exc
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise DataError(f"unknown manifest keys: {sorted(unknown)}")
    for key in ("version", "intrinsics", "pose_file", "frames"):
        if key not in doc:
            raise DataError(f"manifest missing required key '{key}'")
    intr_doc = doc["intrinsics"]
    unknown = set(intr_doc) - _INTRINSIC_KEYS
    if unknown:
        raise DataError(f"unknown intrinsics keys: {sorted(unknown)}")
    try:
        intr = CameraIntrinsics(**intr_doc)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad intrinsics: {exc}") from exc

    root = path.parent
    frames = []
    last_t = None
    for i, fr in enumerate(doc["frames"]):
        unknown = set(fr) - _FRAME_KEYS
        if unknown:
            raise DataError(f"unknown frame keys in frame {i}: {sorted(unknown)}")
        if "timestamp" not in fr:
            raise DataError(f"frame {i} missing timestamp")
        entry = FrameEntry(**fr)
        if last_t is not None and entry.timestamp <= last_t:
            raise OrderError(f"frame timestamps not strictly increasing at frame {i}")
        last_t = entry.timestamp
        has_stereo_pair = entry.left is not None and entry.right is not None
        if entry.depth is None and entry.disparity is None and not has_stereo_pair:
            raise DataError(
                f"frame {i} has no depth, disparity, or left/right image pair"
            )
        for rel in (entry.depth, entry.confidence, entry.disparity, entry.left, entry.right):
            if rel is not None and not (root / rel).exists():
                raise DataError(f"frame {i} references missing file {rel}")
        frames.append(entry)

    pose_file = doc["pose_file"]
    if not (root / pose_file).exists():
        raise DataError(f"pose file {pose_file} does not exist")

    return DatasetManifest(
        intrinsics=intr,
        pose_file=pose_file,
        frames=frames,
        confidence_prenormalized=bool(doc.get("confidence_prenormalized", True)),
        version=int(doc["version"]),
        root=root,
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "version": manifest.version,
        "intrinsics": asdict(manifest.intrinsics),
        "pose_file": manifest.pose_file,
        "confidence_prenormalized": manifest.confidence_prenormalized,
        "frames": [
            {k: v for k, v in asdict(fr).items() if v is not None}
            for fr in manifest.frames
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "ascii")


def load_frame_images(
    manifest: DatasetManifest, frame: FrameEntry
) -> tuple[ScalarImage, ScalarImage]:
    """Depth and confidence images for a frame (depth derived from
    disparity when no depth map is stored)."""
    if frame.depth is not None:
        depth = read_pfm(manifest.resolve(frame.depth))
    elif frame.disparity is None:
        raise DataError(
            "frame has no depth or disparity; run the stereo stage first"
        )
    else:
        depth = disparity_to_depth(
            read_pfm(manifest.resolve(frame.disparity)), manifest.intrinsics
        )
    if frame.confidence is not None:
        conf = read_pfm(manifest.resolve(frame.confidence))
        if not manifest.confidence_prenormalized:
            conf = ScalarImage(
                np.where(conf.mask, (conf.data + 1.0) / 2.0, np.nan), conf.mask
            )
    else:
        conf = ScalarImage.full(depth.width, depth.height, 1.0)
    return depth, conf


def associate_pose(
    poses: list[tuple[float, Pose]], timestamp: float, tolerance: float
) -> Pose:
    """Nearest pose within `tolerance` seconds; exact synthetic timestamps
    match with tolerance 0."""
    if not poses:
        raise DataError("empty pose list")
    best = min(poses, key=lambda tp: abs(tp[0] - timestamp))
    if abs(best[0] - timestamp) > tolerance + 1e-12:
        raise DataError(f"no pose within {tolerance}s of t={timestamp}")
    return best[1]
