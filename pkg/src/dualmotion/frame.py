"""Per-step view of the scene shared by all channels.

A FeatureFrame wraps one timestep's feature tensors (mm, shape (points, 3))
and lazily caches the derived quantities the channels keep asking for:
flattened/scaled network inputs, zero-padded class-uniform vectors for
attention, centroids, egocentric views, and pairwise centroid distances.

During the observed prefix the features are constants; during the prediction
horizon they are the model's own outputs, so everything derived here stays on
the tape and gradients flow through the closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass

from dualmotion import tensor as T
from dualmotion.geometry import HUMAN, HUMAN_POINTS, centroid_t, ego_shift, pair_distance_t
from dualmotion.tensor import Tensor

PAD_WIDTH = HUMAN_POINTS * 3  # object vectors are zero-padded up to this


@dataclass(frozen=True)
class EntityInfo:
    entity_id: int
    cls: str
    class_label: str
    n_points: int

    @property
    def width(self) -> int:
        return self.n_points * 3


def sort_entities(infos) -> list[EntityInfo]:
    """Canonical order: humans first, then objects, each by ascending id."""
    return sorted(infos, key=lambda e: (e.cls != HUMAN, e.entity_id))


class FeatureFrame:
    def __init__(self, entities: list[EntityInfo], features: dict[int, Tensor],
                 feature_scale: float):
        self.entities = entities
        self.by_id = {e.entity_id: e for e in entities}
        self.features = features
        self.scale = feature_scale
        self.ids = [e.entity_id for e in entities]
        self.human_ids = [e.entity_id for e in entities if e.cls == HUMAN]
        self._flat: dict[int, Tensor] = {}
        self._padded: dict[int, Tensor] = {}
        self._centroid: dict[int, Tensor] = {}
        self._ego: dict[tuple[int, int], Tensor] = {}
        self._dist: dict[tuple[int, int], Tensor] = {}

    def feature(self, entity_id: int) -> Tensor:
        return self.features[entity_id]

    def flat_scaled(self, entity_id: int) -> Tensor:
        out = self._flat.get(entity_id)
        if out is None:
            info = self.by_id[entity_id]
            out = T.mul(T.reshape(self.features[entity_id], (info.width,)),
                        T.constant(self.scale))
            self._flat[entity_id] = out
        return out

    def _pad(self, flat: Tensor, width: int) -> Tensor:
        if width == PAD_WIDTH:
            return flat
        return T.concat([flat, T.zeros(PAD_WIDTH - width)])

    def padded_scaled(self, entity_id: int) -> Tensor:
        out = self._padded.get(entity_id)
        if out is None:
            out = self._pad(self.flat_scaled(entity_id), self.by_id[entity_id].width)
            self._padded[entity_id] = out
        return out

    def centroid(self, entity_id: int) -> Tensor:
        out = self._centroid.get(entity_id)
        if out is None:
            out = centroid_t(self.features[entity_id])
            self._centroid[entity_id] = out
        return out

    def ego_flat_padded(self, center_id: int, leaf_id: int) -> Tensor:
        """Leaf features in the center human's frame, flattened/scaled/padded."""
        key = (center_id, leaf_id)
        out = self._ego.get(key)
        if out is None:
            if self.by_id[center_id].cls != HUMAN:
                raise ValueError(f"egocentric center {center_id} is not a human")
            info = self.by_id[leaf_id]
            pts = ego_shift(self.features[leaf_id], self.centroid(center_id))
            flat = T.mul(T.reshape(pts, (info.width,)), T.constant(self.scale))
            out = self._pad(flat, info.width)
            self._ego[key] = out
        return out

    def distance(self, a: int, b: int) -> Tensor:
        """Centroid-to-centroid distance in mm, as a scalar tensor."""
        key = (a, b) if a <= b else (b, a)
        out = self._dist.get(key)
        if out is None:
            out = pair_distance_t(self.centroid(key[0]), self.centroid(key[1]))
            self._dist[key] = out
        return out

    def distance_value(self, a: int, b: int) -> float:
        return self.distance(a, b).item()
