"""Planar sandbox: labeled objects, deterministic scene generation, and
object-centric observations.

Worlds are 2D with a unit workspace by default. Obstacles appear only at
test time; demonstration scenes contain just the target object, so avoidance
at inference is exercised zero-shot. The policy only ever sees the clouds of
the labels it asks for, which is the property the generalization tests pin
down: mutating anything outside those labels leaves the observation
bit-identical.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ObjectAbsentError
from .observation import Observation

EE_RADIUS = 0.03
TARGET_RADIUS = 0.05
TASKS = ("reach", "reach_with_distractors", "reach_around")


@dataclass(frozen=True)
class Disc:
    r: float


@dataclass(frozen=True)
class Rect:
    w: float
    h: float


@dataclass(frozen=True)
class Polygon:
    verts: tuple[tuple[float, float], ...]


Shape = Disc | Rect | Polygon


def shape_centroid(shape: Shape) -> np.ndarray:
    """Centroid in the shape's local frame."""
    if isinstance(shape, (Disc, Rect)):
        return np.zeros(2)
    v = np.asarray(shape.verts, dtype=np.float64)
    # area-weighted polygon centroid (shoelace)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = cross.sum() / 2.0
    if abs(area) < 1e-12:
        return v.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def effective_radius(shape: Shape) -> float:
    """Circumradius about the centroid; sizes the safety distance."""
    if isinstance(shape, Disc):
        return shape.r
    if isinstance(shape, Rect):
        return float(np.hypot(shape.w, shape.h) / 2.0)
    v = np.asarray(shape.verts, dtype=np.float64)
    return float(np.linalg.norm(v - shape_centroid(shape), axis=1).max())


def _point_in_polygon(pts: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over pts (N, 2); division-free form."""
    inside = np.zeros(len(pts), dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        straddles = (y1 > pts[:, 1]) != (y2 > pts[:, 1])
        lhs = (pts[:, 0] - x1) * (y2 - y1)
        rhs = (x2 - x1) * (pts[:, 1] - y1)
        inside ^= straddles & ((lhs < rhs) != (y2 < y1))
    return inside


def sample_object_cloud(shape: Shape, n_points: int,
                        seed: int | np.random.SeedSequence) -> np.ndarray:
    """Uniform points over the closed shape region, local frame, (n, 2).

    Deterministic per seed. Polygons use rejection sampling inside the
    bounding box.
    """
    rng = np.random.default_rng(seed)
    if isinstance(shape, Disc):
        theta = rng.uniform(0.0, 2.0 * np.pi, n_points)
        rad = shape.r * np.sqrt(rng.uniform(0.0, 1.0, n_points))
        return np.stack([rad * np.cos(theta), rad * np.sin(theta)], axis=1)
    if isinstance(shape, Rect):
        x = rng.uniform(-shape.w / 2.0, shape.w / 2.0, n_points)
        y = rng.uniform(-shape.h / 2.0, shape.h / 2.0, n_points)
        return np.stack([x, y], axis=1)
    verts = np.asarray(shape.verts, dtype=np.float64)
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    out = np.empty((0, 2))
    while len(out) < n_points:
        cand = rng.uniform(lo, hi, size=(4 * n_points, 2))
        out = np.concatenate([out, cand[_point_in_polygon(cand, verts)]])
    return out[:n_points]


@dataclass(frozen=True)
class SceneObject:
    label: str
    shape: Shape
    pose: tuple[float, float, float]  # x, y, rotation angle

    def centroid(self) -> np.ndarray:
        x, y, theta = self.pose
        return np.array([x, y]) + _rotate(shape_centroid(self.shape)[None], theta)[0]


def _rotate(pts: np.ndarray, theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return pts @ np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class Scene:
    task: str
    seed: int
    workspace: tuple[float, float, float, float]  # x0, y0, x1, y1
    start: tuple[float, float]
    ee_radius: float
    q_star: float
    objects: tuple[SceneObject, ...]
    target_labels: tuple[str, ...]
    obstacle_labels: tuple[str, ...]

    def __post_init__(self):
        labels = [o.label for o in self.objects]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate object labels: {labels}")
        if set(self.target_labels) & set(self.obstacle_labels):
            raise ValueError("target and obstacle labels overlap")

    def object(self, label: str) -> SceneObject:
        for o in self.objects:
            if o.label == label:
                return o
        raise KeyError(label)

    def target_centroid(self) -> np.ndarray:
        return self.object(self.target_labels[0]).centroid()


def _label_seed(scene_seed: int, label: str) -> np.random.SeedSequence:
    """Stable per-object seed: independent of the other objects present."""
    return np.random.SeedSequence([scene_seed, zlib.crc32(label.encode())])


def object_cloud(scene: Scene, label: str, n_points: int) -> np.ndarray:
    """World-frame point cloud of one labeled object."""
    obj = scene.object(label)
    local = sample_object_cloud(obj.shape, n_points, _label_seed(scene.seed, label))
    x, y, theta = obj.pose
    return _rotate(local, theta) + np.array([x, y])


def obstacle_clouds(scene: Scene, n_points: int) -> list[np.ndarray]:
    return [object_cloud(scene, lbl, n_points) for lbl in scene.obstacle_labels]


def generate_scene(task: str, seed: int) -> Scene:
    """Deterministic scene for one of the sandbox tasks.

    The target disc is placed in an annulus around a sampled start position;
    `reach_with_distractors` draws the target identically (same rng prefix)
    and then adds 1-3 identical-shape distractors; `reach_around` puts one
    obstacle directly on the start-to-target segment so an unguided
    straight-line policy must collide.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE4E, seed]))
    ws = (0.0, 0.0, 1.0, 1.0)
    margin = 0.08

    start = np.array([rng.uniform(0.15, 0.45), rng.uniform(0.25, 0.75)])
    while True:
        ang = rng.uniform(-np.pi, np.pi)
        dist = rng.uniform(0.35, 0.6)
        target = start + dist * np.array([np.cos(ang), np.sin(ang)])
        if (ws[0] + margin <= target[0] <= ws[2] - margin
                and ws[1] + margin <= target[1] <= ws[3] - margin):
            break
    objects = [SceneObject("target", Disc(TARGET_RADIUS),
                           (float(target[0]), float(target[1]), 0.0))]
    obstacle_labels: tuple[str, ...] = ()

    if task == "reach_with_distractors":
        for i in range(int(rng.integers(1, 4))):
            while True:
                pos = rng.uniform([ws[0] + margin, ws[1] + margin],
                                  [ws[2] - margin, ws[3] - margin])
                if (np.linalg.norm(pos - target) > 3 * TARGET_RADIUS
                        and np.linalg.norm(pos - start) > 3 * TARGET_RADIUS):
                    break
            objects.append(SceneObject(f"distractor_{i + 1}", Disc(TARGET_RADIUS),
                                       (float(pos[0]), float(pos[1]), 0.0)))

    shape: Shape = Disc(0.07)
    if task == "reach_around":
        variant = seed % 3
        if variant == 1:
            shape = Rect(0.12, 0.10)
        elif variant == 2:
            shape = Polygon(((-0.07, -0.055), (0.07, -0.055), (0.0, 0.075)))
        u = rng.uniform(0.4, 0.6)
        perp = np.array([-(target - start)[1], (target - start)[0]])
        perp = perp / np.linalg.norm(perp)
        off = rng.uniform(-0.5, 0.5) * EE_RADIUS
        theta = float(rng.uniform(0.0, 2.0 * np.pi)) if not isinstance(shape, Disc) else 0.0
        desired = start + u * (target - start) + off * perp
        pose_xy = desired - _rotate(shape_centroid(shape)[None], theta)[0]
        objects.append(SceneObject("obstacle", shape,
                                   (float(pose_xy[0]), float(pose_xy[1]), theta)))
        obstacle_labels = ("obstacle",)

    q_star = 1.2 * (effective_radius(shape) + EE_RADIUS)
    return Scene(task=task, seed=seed, workspace=ws,
                 start=(float(start[0]), float(start[1])),
                 ee_radius=EE_RADIUS, q_star=float(q_star),
                 objects=tuple(objects), target_labels=("target",),
                 obstacle_labels=obstacle_labels)


def observe(scene: Scene, labels: tuple[str, ...], ee_states: np.ndarray,
            n_points: int = 64) -> Observation:
    """Observation containing only the clouds of the requested labels.

    The union cloud is brought to exactly `n_points` points: a single object
    already at the budget passes through unchanged; larger unions are
    subsampled with a deterministic permutation keyed by the scene seed and
    the requested labels; smaller ones are padded by cycling (the encoder is
    duplication-invariant). `ee_states` is the stacked state history
    (T_o, state_dim).
    """
    matched = [o.label for o in scene.objects if o.label in labels]
    if not matched:
        raise ObjectAbsentError(f"no scene object matches labels {sorted(labels)}")
    clouds = [object_cloud(scene, lbl, n_points) for lbl in matched]
    union = np.concatenate(clouds, axis=0)
    if len(union) > n_points:
        ss = np.random.SeedSequence(
            [scene.seed, zlib.crc32(("observe:" + ",".join(sorted(matched))).encode())])
        keep = np.sort(np.random.default_rng(ss).permutation(len(union))[:n_points])
        union = union[keep]
    elif len(union) < n_points:
        union = np.resize(union, (n_points, union.shape[1]))
    ee_states = np.asarray(ee_states, dtype=np.float64)
    stacked = np.repeat(union[None], ee_states.shape[0], axis=0)
    return Observation(clouds=stacked, states=ee_states)


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to segment a-b, vectorized over points."""
    points = np.asarray(points, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)
