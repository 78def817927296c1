"""Float image containers with explicit per-pixel validity masks.

Invalid pixels carry NaN in the data array, but the boolean mask is the
authoritative record (NaN semantics do not survive every file format).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class ScalarImage:
    """Single-channel float image, row-major (height, width)."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError(f"ScalarImage data must be 2-D, got {self.data.shape}")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.data.shape:
            raise ShapeError("mask shape must match data shape")
        self.mask = self.mask & np.isfinite(self.data)
        self.data = np.where(self.mask, self.data, np.nan)

    @classmethod
    def from_array(cls, data, mask=None) -> "ScalarImage":
        data = np.asarray(data, dtype=np.float64)
        if mask is None:
            mask = np.isfinite(data)
        return cls(data, mask)

    @classmethod
    def full(cls, width: int, height: int, value: float) -> "ScalarImage":
        return cls.from_array(np.full((height, width), value))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "ScalarImage":
        return ScalarImage(self.data.copy(), self.mask.copy())

    def same_shape(self, other: "ScalarImage") -> bool:
        return self.data.shape == other.data.shape


@dataclass
class FeatureImage:
    """Per-pixel feature vectors, shape (height, width, feature_dim)."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ShapeError(f"FeatureImage data must be 3-D, got {self.data.shape}")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.data.shape[:2]:
            raise ShapeError("mask shape must match (height, width)")
        self.mask = self.mask & np.all(np.isfinite(self.data), axis=2)
        self.data = np.where(self.mask[..., None], self.data, np.nan)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.data.shape[2]


@dataclass
class ConfidencePointCloud:
    """Camera-frame points tagged with depth-estimation confidence."""

    positions: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.confidences = np.asarray(self.confidences, dtype=np.float64).reshape(-1)
        if len(self.positions) != len(self.confidences):
            raise ShapeError("positions and confidences must have equal length")
        if len(self.positions):
            if not np.all(np.isfinite(self.positions)):
                raise ValueError("point positions must be finite")
            if np.any(self.positions[:, 2] <= 0):
                raise ValueError("point depths must be positive")
            if np.any((self.confidences < 0) | (self.confidences > 1)):
                raise ValueError("confidences must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls) -> "ConfidencePointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0))
