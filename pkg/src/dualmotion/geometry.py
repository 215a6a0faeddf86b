"""Entity geometric features and egocentric coordinate transforms.

All coordinates are millimeters. Humans are 18-joint skeletons, objects are
8-corner boxes. The egocentric transform is a pure translation by the acting
human's centroid; there is no rotational alignment.

Two parallel surfaces live here: plain-numpy operations on ``EntityFeatures``
(dataset side) and taped-tensor equivalents (model side, so gradients can flow
through predicted features during closed-loop rollout).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from dualmotion import tensor as T

HUMAN = "human"
OBJECT = "object"
HUMAN_POINTS = 18
OBJECT_POINTS = 8
POINTS_BY_CLASS = {HUMAN: HUMAN_POINTS, OBJECT: OBJECT_POINTS}


@dataclass(frozen=True)
class EntityFeatures:
    """One entity's geometry at a single timestep: class plus 3D points."""

    cls: str
    class_label: str
    points: np.ndarray  # (k, 3)

    def __post_init__(self):
        if self.cls not in POINTS_BY_CLASS:
            raise ValueError(f"unknown entity class {self.cls!r}")
        pts = np.asarray(self.points, dtype=np.float64)
        expected = POINTS_BY_CLASS[self.cls]
        if pts.shape != (expected, 3):
            raise ValueError(
                f"{self.cls} entity needs {expected} 3D points, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("entity points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def flat(self) -> np.ndarray:
        """Row-major flattened coordinates (54 for humans, 24 for objects)."""
        return self.points.reshape(-1)


def centroid(f: EntityFeatures) -> np.ndarray:
    return f.points.mean(axis=0)


def ego_transform(x: EntityFeatures, center: EntityFeatures) -> EntityFeatures:
    """Translate ``x`` into the frame anchored at ``center``'s centroid."""
    if center.cls != HUMAN:
        raise ValueError(f"egocentric center must be a human, got {center.cls!r}")
    return replace(x, points=x.points - centroid(center))


def ego_inverse(x_bar: EntityFeatures, center: EntityFeatures) -> EntityFeatures:
    """Exact inverse translation of :func:`ego_transform`."""
    if center.cls != HUMAN:
        raise ValueError(f"egocentric center must be a human, got {center.cls!r}")
    return replace(x_bar, points=x_bar.points + centroid(center))


def center_leaf_distance(center: EntityFeatures, leaf: EntityFeatures) -> float:
    """Euclidean distance between the two entities' centroids, in mm."""
    d = centroid(center) - centroid(leaf)
    return float(np.sqrt(d @ d))


# ---------------------------------------------------------------------------
# taped equivalents operating on (k, 3) tensors

def centroid_t(points: T.Tensor) -> T.Tensor:
    return T.mean(points, axis=0)


def ego_shift(points: T.Tensor, center_centroid: T.Tensor) -> T.Tensor:
    return T.sub(points, center_centroid)


def ego_unshift(points: T.Tensor, center_centroid: T.Tensor) -> T.Tensor:
    return T.add(points, center_centroid)


def pair_distance_t(centroid_a: T.Tensor, centroid_b: T.Tensor) -> T.Tensor:
    return T.sqrt(T.squared_l2(T.sub(centroid_a, centroid_b)))
