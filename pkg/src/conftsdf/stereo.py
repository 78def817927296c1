"""Stereo front-end: disparity to depth, cosine-similarity confidence,
confidence filtering, and point-cloud generation.

A deterministic patch-based featurizer and a classical block matcher stand
in for the learned stereo network so the full pipeline runs without one.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .geometry import CameraIntrinsics
from .images import ConfidencePointCloud, FeatureImage, ScalarImage

VARIANCE_FLOOR = 1e-12
NORM_FLOOR = 1e-12


def disparity_to_depth(disp: ScalarImage, intr: CameraIntrinsics) -> ScalarImage:
    """Z = alpha_x * baseline / d; non-positive or invalid disparity -> invalid."""
    valid = disp.mask & (disp.data > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = intr.alpha_x * intr.baseline / disp.data
    return ScalarImage(np.where(valid, depth, np.nan), valid)


def shift_features(left_features: FeatureImage, disp: ScalarImage) -> FeatureImage:
    """Sample left features at (x + d(x, y), y), nearest pixel, no interpolation."""
    if (left_features.height, left_features.width) != (disp.height, disp.width):
        raise ShapeError("feature image and disparity image sizes differ")
    h, w = disp.data.shape
    xs = np.arange(w)[None, :] + disp.data
    src_x = np.floor(xs + 0.5)
    in_bounds = disp.mask & (src_x >= 0) & (src_x < w)
    src_xi = np.where(in_bounds, src_x, 0).astype(np.int64)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    sampled = left_features.data[rows, src_xi]
    valid = in_bounds & left_features.mask[rows, src_xi]
    return FeatureImage(np.where(valid[..., None], sampled, np.nan), valid)


def cosine_confidence(a: FeatureImage, b: FeatureImage) -> ScalarImage:
    """Per-pixel cosine similarity mapped affinely from [-1, 1] to [0, 1]."""
    if a.data.shape != b.data.shape:
        raise ShapeError("feature images must share shape and feature_dim")
    na = np.linalg.norm(np.nan_to_num(a.data), axis=2)
    nb = np.linalg.norm(np.nan_to_num(b.data), axis=2)
    valid = a.mask & b.mask & (na >= NORM_FLOOR) & (nb >= NORM_FLOOR)
    dot = np.einsum("ijk,ijk->ij", np.nan_to_num(a.data), np.nan_to_num(b.data))
    with np.errstate(divide="ignore", invalid="ignore"):
        cs = np.clip(dot / (na * nb), -1.0, 1.0)
    conf = (cs + 1.0) / 2.0
    return ScalarImage(np.where(valid, conf, np.nan), valid)


def filter_by_confidence(
    depth: ScalarImage, conf: ScalarImage, c_min: float
) -> ScalarImage:
    """Invalidate depth wherever confidence is invalid or below c_min (inclusive keep)."""
    if not depth.same_shape(conf):
        raise ShapeError("depth and confidence image sizes differ")
    keep = depth.mask & conf.mask & (conf.data >= c_min)
    return ScalarImage(np.where(keep, depth.data, np.nan), keep)


def depth_to_pointcloud(
    depth: ScalarImage, conf: ScalarImage, intr: CameraIntrinsics
) -> ConfidencePointCloud:
    """Backproject every valid depth pixel, carrying its confidence."""
    if not depth.same_shape(conf):
        raise ShapeError("depth and confidence image sizes differ")
    ys, xs = np.nonzero(depth.mask)
    if len(xs) == 0:
        return ConfidencePointCloud.empty()
    z = depth.data[ys, xs]
    pts = np.stack(
        [
            (xs - intr.o_x) * z / intr.alpha_x,
            (ys - intr.o_y) * z / intr.alpha_y,
            z,
        ],
        axis=1,
    )
    c = np.where(conf.mask[ys, xs], conf.data[ys, xs], 0.0)
    return ConfidencePointCloud(pts, np.clip(c, 0.0, 1.0))


def patch_featurize(image: ScalarImage, patch_radius: int) -> FeatureImage:
    """Zero-mean, unit-norm intensity patches as per-pixel features.

    Border pixels, pixels whose patch covers an invalid pixel, and
    textureless patches (variance below 1e-12) are invalid.
    """
    if patch_radius < 1:
        raise ValueError("patch_radius must be >= 1")
    h, w = image.data.shape
    k = 2 * patch_radius + 1
    if h < k or w < k:
        raise ShapeError("image smaller than the feature patch")
    f = k * k
    data = np.full((h, w, f), np.nan)
    mask = np.zeros((h, w), dtype=bool)

    windows = sliding_window_view(np.nan_to_num(image.data), (k, k)).reshape(
        h - k + 1, w - k + 1, f
    )
    win_valid = (
        sliding_window_view(image.mask, (k, k)).reshape(h - k + 1, w - k + 1, f).all(axis=2)
    )
    centered = windows - windows.mean(axis=2, keepdims=True)
    sumsq = np.einsum("ijk,ijk->ij", centered, centered)
    textured = (sumsq / f) >= VARIANCE_FLOOR
    ok = win_valid & textured
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = centered / np.sqrt(sumsq)[..., None]
    r = patch_radius
    inner = data[r : h - r, r : w - r]
    inner[ok] = unit[ok]
    mask[r : h - r, r : w - r] = ok
    return FeatureImage(data, mask)


def block_match(
    left: ScalarImage,
    right: ScalarImage,
    intr: CameraIntrinsics,
    max_disp: int,
    patch_radius: int,
) -> tuple[ScalarImage, ScalarImage]:
    """Integer-disparity winner-take-all match over patch-feature cosine scores.

    For each left pixel the candidate right patch sits at (x - d, y); the
    winning d maximizes raw cosine similarity and the reported confidence is
    the affinely normalized score at that d.
    """
    if not left.same_shape(right):
        raise ShapeError("left and right image sizes differ")
    if max_disp < 1:
        raise ValueError("max_disp must be >= 1")
    fl = patch_featurize(left, patch_radius)
    fr = patch_featurize(right, patch_radius)
    h, w = left.data.shape

    best_cs = np.full((h, w), -np.inf)
    best_d = np.full((h, w), -1, dtype=np.int64)
    ldat = np.nan_to_num(fl.data)
    rdat = np.nan_to_num(fr.data)
    for d in range(0, max_disp + 1):
        # features are unit-norm, so the dot product is the cosine similarity
        cs = np.full((h, w), -np.inf)
        valid = np.zeros((h, w), dtype=bool)
        if d == 0:
            cs_d = np.einsum("ijk,ijk->ij", ldat, rdat)
            valid = fl.mask & fr.mask
            cs[valid] = cs_d[valid]
        else:
            cs_d = np.einsum("ijk,ijk->ij", ldat[:, d:], rdat[:, :-d])
            v = fl.mask[:, d:] & fr.mask[:, :-d]
            cs[:, d:][v] = cs_d[v]
            valid[:, d:] = v
        better = valid & (cs > best_cs)
        best_cs[better] = cs[better]
        best_d[better] = d

    matched = best_d >= 0
    disp = ScalarImage(
        np.where(matched, best_d.astype(np.float64), np.nan), matched
    )
    conf = ScalarImage(
        np.where(matched, (np.clip(best_cs, -1.0, 1.0) + 1.0) / 2.0, np.nan), matched
    )
    return disp, conf
