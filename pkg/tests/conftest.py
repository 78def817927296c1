import sys

import numpy as np
import pytest

from conftsdf import (
    CameraIntrinsics,
    ConfidencePointCloud,
    IntegrationConfig,
    Pose,
    TsdfMap,
    integrate_frame,
)
from conftsdf.images import ScalarImage


@pytest.fixture(scope="session")
def intr_ref():
    """The intrinsics used by the worked desk examples."""
    return CameraIntrinsics(400.0, 400.0, 320.0, 240.0, 640, 480, 0.12)


@pytest.fixture(scope="session")
def intr_small():
    """Small frame for fast end-to-end runs."""
    return CameraIntrinsics(40.0, 40.0, 32.0, 24.0, 64, 48, 0.12)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels(intr_small):
    """Trigger numba compilation once so timed tests measure steady state."""
    m = TsdfMap(voxel_size=0.1, omega_max=10.0)
    cloud = ConfidencePointCloud(np.array([[0.0, 0.0, 1.0]]), np.array([0.5]))
    conf = ScalarImage.full(intr_small.width, intr_small.height, 0.5)
    cfg = IntegrationConfig(weight_mode="confidence", update_mode="average")
    integrate_frame(m, cloud, Pose.identity(), intr_small, conf, cfg)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion, independent of output capture."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for num in sorted(results):
        name, status, elapsed = results[num]
        terminalreporter.write_line(f"  criterion {num} ({name}): {status} [{elapsed:.2f}s]")
