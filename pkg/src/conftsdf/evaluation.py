"""Reconstruction accuracy and weight-statistics checks against analytic scenes."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyMesh, ProbeUnobserved
from .meshing import TriangleMesh
from .scenes import Scene
from .tsdf import TsdfMap


@dataclass
class SurfaceErrorReport:
    rms_error: float
    max_error: float
    vertex_count: int


@dataclass
class RegionWeightStats:
    region: str
    mean_omega: float
    min_omega: float
    max_omega: float
    voxel_count: int


def surface_error(mesh: TriangleMesh, scene: Scene) -> SurfaceErrorReport:
    """Vertex-to-surface error via the scene's analytic signed distance."""
    if mesh.num_vertices == 0:
        raise EmptyMesh("cannot evaluate an empty mesh")
    err = np.abs(scene.sdf(mesh.vertices))
    return SurfaceErrorReport(
        rms_error=float(np.sqrt(np.mean(err**2))),
        max_error=float(err.max()),
        vertex_count=mesh.num_vertices,
    )


def region_weight_stats(
    tsdf_map: TsdfMap,
    region_min,
    region_max,
    surface_band: float | None = None,
    label: str = "region",
) -> RegionWeightStats:
    """Weight statistics over surface voxels (|phi| < surface_band, omega > 0)
    whose centers fall inside the axis-aligned box."""
    if surface_band is None:
        surface_band = tsdf_map.voxel_size
    if surface_band <= 0:
        raise ValueError("surface_band must be positive")
    lo = np.asarray(region_min, dtype=np.float64)
    hi = np.asarray(region_max, dtype=np.float64)
    idx, phi, omega = tsdf_map.observed_voxels()
    if len(idx):
        centers = (idx + 0.5) * tsdf_map.voxel_size
        keep = (
            np.all(centers >= lo, axis=1)
            & np.all(centers <= hi, axis=1)
            & (np.abs(phi) < surface_band)
        )
        omega = omega[keep]
    else:
        omega = np.zeros(0)
    if len(omega) == 0:
        return RegionWeightStats(label, 0.0, 0.0, 0.0, 0)
    return RegionWeightStats(
        label,
        float(omega.mean()),
        float(omega.min()),
        float(omega.max()),
        int(len(omega)),
    )


def convergence_series(snapshots, probe_index) -> list[float]:
    """Omega of one voxel after each integration step.

    `snapshots` is a sequence of TsdfMap states (one per frame); raises
    ProbeUnobserved if the voxel carries zero weight in every snapshot.
    """
    series = [snap.voxel(probe_index)[1] for snap in snapshots]
    if not series or max(series) == 0.0:
        raise ProbeUnobserved(f"voxel {tuple(probe_index)} never observed")
    return series


def report_lines(
    error: SurfaceErrorReport | None, regions: list[RegionWeightStats]
) -> list[str]:
    """Line-oriented key=value rendering of an evaluation report."""
    lines = []
    if error is not None:
        lines.append(f"rms_error={error.rms_error:.9g}")
        lines.append(f"max_error={error.max_error:.9g}")
        lines.append(f"vertex_count={error.vertex_count}")
    for st in regions:
        lines.append(f"region.{st.region}.mean_omega={st.mean_omega:.9g}")
        lines.append(f"region.{st.region}.min_omega={st.min_omega:.9g}")
        lines.append(f"region.{st.region}.max_omega={st.max_omega:.9g}")
        lines.append(f"region.{st.region}.voxel_count={st.voxel_count}")
    return lines


def report_json(
    error: SurfaceErrorReport | None, regions: list[RegionWeightStats]
) -> str:
    doc = {
        "rms_error": error.rms_error if error else None,
        "max_error": error.max_error if error else None,
        "vertex_count": error.vertex_count if error else None,
        "regions": [asdict(r) for r in regions],
    }
    return json.dumps(doc, indent=2, sort_keys=True)
