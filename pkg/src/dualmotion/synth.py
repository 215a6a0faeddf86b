"""Scripted human-object scenes with ground-truth switch labels, plus dataset I/O.

Each scene runs a small per-human state machine: wander between waypoints,
stage toward a target object, approach until the hand lands on it, carry it
rigidly for a few steps, release, and retreat. Switch labels are 1 exactly
while an episode (approach, carry, retreat-until-clear) covers the step.

World conventions: millimeters, z-up, all centroids move in the z=0 plane.
Humans are a rigid 18-joint rig translated along the walk path; objects are
8-corner boxes. The rig's hand joint sits ~56 mm from the body centroid so a
carried object stays inside the manipulation radius.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dualmotion.config import Config
from dualmotion.geometry import HUMAN, OBJECT, HUMAN_POINTS, OBJECT_POINTS

EPISODE_CLEAR_MM = 150.0   # episode ends once the human is this far from every object
STAGING_DIST_MM = 300.0    # approach starts from about this distance
WALL_MARGIN_MM = 130.0
OBJECT_SEPARATION_MM = 320.0
MOVABLE_LABELS = ("box", "cup", "bottle", "tray", "basket")
STATIONARY_LABEL = "table"


class GenerationError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


def _build_rig() -> np.ndarray:
    # stylized standing figure, hands pulled in front of the torso;
    # offsets are re-centered so the rig centroid is exactly the walk position
    joints = np.array([
        [0, 0, 820],      # head
        [0, 0, 700],      # neck
        [170, 0, 660],    # shoulders
        [-170, 0, 660],
        [200, 90, 480],   # elbows
        [-200, 90, 480],
        [20, 80, 250],    # hands (carry pose)
        [-20, 80, 250],
        [0, 0, 450],      # torso
        [0, 0, 280],      # pelvis
        [110, 0, 260],    # hips
        [-110, 0, 260],
        [120, 20, 0],     # knees
        [-120, 20, 0],
        [125, 0, -260],   # ankles
        [-125, 0, -260],
        [130, 60, -300],  # feet
        [-130, 60, -300],
    ], dtype=np.float64)
    return joints - joints.mean(axis=0)


RIG = _build_rig()
HAND_JOINT = 6
HAND_OFFSET = RIG[HAND_JOINT]


@dataclass
class SceneEntity:
    entity_id: int
    cls: str
    class_label: str
    features: np.ndarray  # (steps, points, 3)


@dataclass
class Scene:
    scene_id: str
    dt: float
    entities: list[SceneEntity]
    switch_labels: dict[int, np.ndarray]  # human id -> (steps,) of {0, 1}

    @property
    def steps(self) -> int:
        return self.entities[0].features.shape[0]

    @property
    def human_ids(self) -> list[int]:
        return [e.entity_id for e in self.entities if e.cls == HUMAN]

    def entity(self, entity_id: int) -> SceneEntity:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise KeyError(f"no entity {entity_id} in {self.scene_id}")

    def has_episode(self) -> bool:
        return any(labels.any() for labels in self.switch_labels.values())


def _corner_offsets(half: np.ndarray) -> np.ndarray:
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                     dtype=np.float64)
    return signs * half


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


class _ObjectSim:
    def __init__(self, entity_id, label, pos_xy, half, movable):
        self.entity_id = entity_id
        self.label = label
        self.pos = np.array([pos_xy[0], pos_xy[1], 0.0])
        self.half = half
        self.movable = movable
        self.carried_by: int | None = None
        self.track: list[np.ndarray] = []


class _HumanSim:
    def __init__(self, entity_id, pos_xy, zone, n_episodes, rng, cfg):
        self.entity_id = entity_id
        self.pos = np.asarray(pos_xy, dtype=np.float64)
        self.zone = zone  # (xmin, xmax, ymin, ymax)
        self.rng = rng
        self.cfg = cfg
        self.phase = "wander"
        self.speed = rng.uniform(cfg.speed_min_mm, cfg.speed_max_mm)
        self.waypoint: np.ndarray | None = None
        self.episodes_left = n_episodes
        self.wander_left = int(rng.integers(2, 5))
        self.target: _ObjectSim | None = None
        self.stage_point: np.ndarray | None = None
        self.carry_left = 0
        self.released: _ObjectSim | None = None
        self.episode_step = -1  # steps since approach start, for onset offset
        self._release_after_follow = False
        self.track: list[np.ndarray] = []
        self.labels: list[int] = []

    # -- sampling helpers ---------------------------------------------------

    def _in_zone(self, p) -> np.ndarray:
        xmin, xmax, ymin, ymax = self.zone
        return np.array([np.clip(p[0], xmin, xmax), np.clip(p[1], ymin, ymax)])

    def _sample_waypoint(self, objects, clearance, min_dist=250.0, away_from=None):
        xmin, xmax, ymin, ymax = self.zone
        for _ in range(80):
            wp = np.array([self.rng.uniform(xmin, xmax), self.rng.uniform(ymin, ymax)])
            if np.linalg.norm(wp - self.pos) < min_dist:
                continue
            if away_from is not None and (wp - self.pos) @ (self.pos - away_from) <= 0:
                continue
            # the released object is excluded: the path starts next to it and
            # the away_from condition already makes separation monotone
            ok = all(
                _point_segment_distance(o.pos[:2], self.pos, wp) >= clearance
                for o in objects
                if o is not self.target and o is not self.released and o.carried_by is None)
            if ok:
                return wp
        return None

    def _find_stage_point(self, target: "_ObjectSim", objects) -> np.ndarray | None:
        """Point near the target whose straight path from here stays label-0 safe."""
        tgt = target.pos[:2]
        away = self.pos - tgt
        norm = np.linalg.norm(away)
        base = away / norm if norm > 1e-9 else np.array([1.0, 0.0])
        for k in (0, 1, -1, 2, -2, 3, -3, 4, -4, 5, -5, 6):
            ang = k * np.pi / 6.0
            rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
            candidate = self._in_zone(tgt + (rot @ base) * STAGING_DIST_MM)
            if np.linalg.norm(candidate - tgt) < STAGING_DIST_MM - 1e-6:
                continue  # zone clamp pulled it too close
            others_ok = all(
                _point_segment_distance(o.pos[:2], self.pos, candidate) >= self.cfg.clearance_mm
                for o in objects if o is not target and o.carried_by is None)
            target_ok = _point_segment_distance(tgt, self.pos, candidate) >= 200.0
            if others_ok and target_ok:
                return candidate
        return None

    # -- per-step update ----------------------------------------------------

    def _walk_toward(self, goal) -> bool:
        """Move one step toward goal; returns True on arrival (snapped)."""
        delta = goal - self.pos
        dist = float(np.linalg.norm(delta))
        if dist <= self.speed:
            self.pos = np.asarray(goal, dtype=np.float64).copy()
            return True
        self.pos = self.pos + delta / dist * self.speed
        return False

    def step(self, objects: list[_ObjectSim]):
        cfg = self.cfg
        label = 0

        if self.phase == "wander":
            if self.waypoint is None:
                self.waypoint = self._sample_waypoint(objects, cfg.clearance_mm)
            if self.waypoint is not None and self._walk_toward(self.waypoint):
                self.waypoint = None
                self.speed = self.rng.uniform(cfg.speed_min_mm, cfg.speed_max_mm)
            self.wander_left -= 1
            if self.episodes_left > 0 and self.wander_left <= 0:
                candidates = [o for o in objects if o.movable and o.carried_by is None]
                if candidates:
                    target = min(
                        candidates, key=lambda o: np.linalg.norm(o.pos[:2] - self.pos))
                    stage_point = self._find_stage_point(target, objects)
                    if stage_point is None:
                        self.wander_left = 1  # retry from the next position
                    else:
                        self.target = target
                        self.stage_point = stage_point
                        self.phase = "stage"

        elif self.phase == "stage":
            if self._walk_toward(self.stage_point):
                self.phase = "approach"
                self.episodes_left -= 1
                self.episode_step = 0

        elif self.phase == "approach":
            grasp_point = self.target.pos[:2] - HAND_OFFSET[:2]
            if self._walk_toward(grasp_point):
                self.target.carried_by = self.entity_id
                self.phase = "carry"
                self.carry_left = int(self.rng.integers(
                    cfg.carry_min_steps, cfg.carry_max_steps + 1))
                self.waypoint = self._sample_waypoint(objects, cfg.clearance_mm,
                                                      min_dist=450.0)
            label = 1 if self.episode_step >= cfg.label_onset_offset else 0
            self.episode_step += 1

        elif self.phase == "carry":
            if self.waypoint is None or self._walk_toward(self.waypoint):
                self.waypoint = self._sample_waypoint(objects, cfg.clearance_mm,
                                                      min_dist=450.0)
            self.carry_left -= 1
            label = 1
            self.episode_step += 1
            if self.carry_left <= 0:
                # release after the object-follow update below, so the object
                # rests exactly at this step's hand position
                self._release_after_follow = True

        elif self.phase == "retreat":
            if self.waypoint is None:
                self.waypoint = self._sample_waypoint(
                    objects, cfg.clearance_mm, away_from=self.released.pos[:2])
            if self.waypoint is not None and self._walk_toward(self.waypoint):
                self.waypoint = None
            min_dist = min(np.linalg.norm(o.pos[:2] - self.pos) for o in objects)
            if min_dist > EPISODE_CLEAR_MM:
                self.phase = "wander"
                self.released = None
                self.wander_left = int(self.rng.integers(2, 7))
            else:
                label = 1

        # carried object rides on the hand joint
        hand = np.array([self.pos[0], self.pos[1], 0.0]) + HAND_OFFSET
        for o in objects:
            if o.carried_by == self.entity_id:
                o.pos = hand.copy()

        if self._release_after_follow:
            self._release_after_follow = False
            self.target.carried_by = None
            self.released = self.target
            self.target = None
            self.phase = "retreat"
            self.waypoint = self._sample_waypoint(
                objects, cfg.clearance_mm, away_from=self.released.pos[:2])

        self.track.append(self.pos.copy())
        self.labels.append(label)


def _zones(arena: float, n_humans: int) -> list[tuple]:
    # disjoint x-strips with a buffer so label-0 clearance cannot be violated
    # by another human's carried object
    half = arena / 2.0
    buffer = 150.0
    width = (arena - buffer * (n_humans - 1)) / n_humans
    zones = []
    x = -half
    for _ in range(n_humans):
        zones.append((x + WALL_MARGIN_MM, x + width - WALL_MARGIN_MM,
                      -half + WALL_MARGIN_MM, half - WALL_MARGIN_MM))
        x += width + buffer
    return zones


def generate_scene(cfg: Config, index: int) -> Scene:
    """Deterministically script one scene; the rng derives from (seed, index)."""
    rng = np.random.default_rng([cfg.seed, index])
    steps = cfg.total_steps
    n_humans = int(rng.integers(cfg.min_humans, cfg.max_humans + 1))
    n_objects = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))

    zones = _zones(cfg.arena_mm, n_humans)
    if any(z[1] - z[0] < 4 * cfg.clearance_mm or z[3] - z[2] < 4 * cfg.clearance_mm
           for z in zones):
        raise GenerationError(
            f"arena {cfg.arena_mm} mm too small for {n_humans} humans "
            f"with clearance {cfg.clearance_mm} mm")

    # objects: movables round-robin over zones so every human has a target,
    # plus one stationary object
    objects: list[_ObjectSim] = []
    next_id = n_humans
    specs = []
    for k in range(n_objects - 1):
        specs.append((MOVABLE_LABELS[k % len(MOVABLE_LABELS)], True, zones[k % n_humans]))
    specs.append((STATIONARY_LABEL, False, zones[0]))
    for label, movable, zone in specs:
        placed = False
        for _ in range(200):
            pos = np.array([rng.uniform(zone[0], zone[1]), rng.uniform(zone[2], zone[3])])
            if all(np.linalg.norm(pos - o.pos[:2]) >= OBJECT_SEPARATION_MM for o in objects):
                placed = True
                break
        if not placed:
            raise GenerationError(
                f"arena {cfg.arena_mm} mm too small to place {n_objects} objects")
        half = (np.array([280.0, 280.0, 60.0]) if label == STATIONARY_LABEL
                else rng.uniform(40.0, 90.0, 3))
        objects.append(_ObjectSim(next_id, label, pos, half, movable))
        next_id += 1

    humans: list[_HumanSim] = []
    rate = cfg.episode_rate
    for h in range(n_humans):
        zone = zones[h]
        for _ in range(200):
            pos = np.array([rng.uniform(zone[0], zone[1]), rng.uniform(zone[2], zone[3])])
            if all(np.linalg.norm(pos - o.pos[:2]) >= cfg.clearance_mm for o in objects):
                break
        else:
            raise GenerationError("arena too small to place humans clear of objects")
        n_ep = int(rate) + (1 if rng.random() < rate - int(rate) else 0)
        humans.append(_HumanSim(h, pos, zone, n_ep, rng, cfg))

    for _ in range(steps):
        for h in humans:
            h.step(objects)
        for o in objects:
            o.track.append(o.pos.copy())

    entities = []
    for h in humans:
        feats = np.stack([np.array([p[0], p[1], 0.0]) + RIG for p in h.track])
        entities.append(SceneEntity(h.entity_id, HUMAN, "person", feats))
    for o in objects:
        offsets = _corner_offsets(o.half)
        feats = np.stack([c + offsets for c in o.track])
        entities.append(SceneEntity(o.entity_id, OBJECT, o.label, feats))
    labels = {h.entity_id: np.array(h.labels, dtype=np.int64) for h in humans}

    scene = Scene(f"scene-{index:04d}", cfg.dt, entities, labels)
    _validate_generated(scene, cfg)
    return scene


def _validate_generated(scene: Scene, cfg: Config) -> None:
    """Generator-internal invariants; violations are bugs, not data."""
    object_centroids = np.stack(
        [e.features.mean(axis=1) for e in scene.entities if e.cls == OBJECT])  # (n_obj, steps, 3)
    stationary = [e for e in scene.entities if e.class_label == STATIONARY_LABEL]
    if not stationary or not all(
            (e.features == e.features[0]).all() for e in stationary):
        raise GenerationError(f"{scene.scene_id}: stationary object moved")
    for e in scene.entities:
        if e.cls != HUMAN:
            continue
        centroids = e.features.mean(axis=1)  # (steps, 3)
        labels = scene.switch_labels[e.entity_id]
        dists = np.linalg.norm(object_centroids - centroids[None], axis=-1)  # (n_obj, steps)
        bad = (dists.min(axis=0) <= cfg.rho_out_mm) & (labels == 0)
        if bad.any():
            raise GenerationError(
                f"{scene.scene_id}: human {e.entity_id} within rho_out of an object "
                f"at label-0 steps {np.nonzero(bad)[0].tolist()}")


def generate_dataset(cfg: Config) -> list[Scene]:
    return [generate_scene(cfg, i) for i in range(cfg.num_scenes)]


# ---------------------------------------------------------------------------
# dataset file format: one JSON record per line

def scene_to_record(scene: Scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "dt": scene.dt,
        "entities": [
            {
                "id": e.entity_id,
                "class": e.cls,
                "class_label": e.class_label,
                "features": [step.reshape(-1).tolist() for step in e.features],
            }
            for e in scene.entities
        ],
        "switch_labels": {str(k): v.tolist() for k, v in scene.switch_labels.items()},
    }


def write_dataset(scenes: list[Scene], path) -> None:
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_record(scene), separators=(",", ":")) + "\n")


def _field(record: dict, name: str, lineno: int):
    if name not in record:
        raise DatasetFormatError(f"line {lineno}: missing field {name!r}")
    return record[name]


def read_dataset(path) -> list[Scene]:
    """Parse a dataset file; malformed records name the offending line and field."""
    path = Path(path)
    scenes = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"line {lineno}: invalid JSON record: {e}") from e
            scenes.append(_parse_record(record, lineno))
    return scenes


def _parse_record(record: dict, lineno: int) -> Scene:
    scene_id = _field(record, "scene_id", lineno)
    dt = float(_field(record, "dt", lineno))
    raw_entities = _field(record, "entities", lineno)
    raw_labels = _field(record, "switch_labels", lineno)
    if not raw_entities:
        raise DatasetFormatError(f"line {lineno}: field 'entities' is empty")

    entities = []
    step_counts = set()
    for ent in raw_entities:
        eid = int(_field(ent, "id", lineno))
        cls = _field(ent, "class", lineno)
        label = _field(ent, "class_label", lineno)
        feats = _field(ent, "features", lineno)
        width = {HUMAN: HUMAN_POINTS * 3, OBJECT: OBJECT_POINTS * 3}.get(cls)
        if width is None:
            raise DatasetFormatError(f"line {lineno}: field 'class' has unknown value {cls!r}")
        arr = np.asarray(feats, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != width:
            raise DatasetFormatError(
                f"line {lineno}: field 'features' of entity {eid} must be "
                f"steps x {width}, got {arr.shape}")
        step_counts.add(arr.shape[0])
        entities.append(SceneEntity(eid, cls, label, arr.reshape(arr.shape[0], -1, 3)))
    if len(step_counts) != 1:
        raise DatasetFormatError(
            f"line {lineno}: field 'features' step counts differ: {sorted(step_counts)}")
    steps = step_counts.pop()

    labels = {}
    human_ids = {e.entity_id for e in entities if e.cls == HUMAN}
    for key, bits in raw_labels.items():
        hid = int(key)
        if hid not in human_ids:
            raise DatasetFormatError(
                f"line {lineno}: field 'switch_labels' refers to non-human entity {hid}")
        arr = np.asarray(bits, dtype=np.int64)
        if arr.shape != (steps,) or not np.isin(arr, (0, 1)).all():
            raise DatasetFormatError(
                f"line {lineno}: field 'switch_labels' of human {hid} must be "
                f"{steps} values in {{0,1}}")
        labels[hid] = arr
    missing = human_ids - set(labels)
    if missing:
        raise DatasetFormatError(
            f"line {lineno}: field 'switch_labels' missing humans {sorted(missing)}")
    return Scene(scene_id, dt, entities, labels)
