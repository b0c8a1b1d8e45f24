"""On-disk formats: demo datasets, policy checkpoints, scene specs.

Both binary formats open with the magic ``LO3D`` followed by a one-byte
kind tag (1 = dataset, 2 = checkpoint) and a little-endian u32 format
version, so loading the wrong file type fails with a clear error.

Checkpoint (kind 2, version 1), all integers little-endian:
    prediction_type u8, encoder_mode u8,
    schedule block: K u32, beta_start f64, beta_end f64,
    dimension table: count u32 then u32 entries
        (cloud_dim, state_dim, obs_horizon, horizon, action_dim,
         encoder_hidden, feature_dim, film_hidden, time_embed_dim,
         n_trunk_layers, widths...),
    normalization stats: three sections (action, state, cloud), each
        dim u32 then dim f64 mins and dim f64 maxes,
    weights: raw f64 arrays in parameter declaration order.

Dataset (kind 1, version 1):
    meta: task (u16 length + utf8), episodes u32, seed_base i64,
        n_points u16, expert_steps u16, obs_horizon u16, horizon u16,
        exec_horizon u16, scene spec hash (8 bytes),
    normalization stats (as above),
    episode index table: per episode u64 payload offset + u32 frame count,
    payload per episode: cloud (P x d f32), states (T x sd f32),
        actions (T x ad f32).

Truncation raises DataError naming the byte offset where data ran out.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .data import DemoDataset, DemoEpisode
from .denoiser import (ENCODER_MODES, PREDICTION_TYPES, DenoiserParams,
                       NetDims, init_params)
from .errors import DataError
from .normalize import NormalizationStats
from .rollout import Policy
from .scenes import Disc, Polygon, Rect, Scene, SceneObject
from .schedule import make_schedule

MAGIC = b"LO3D"
KIND_DATASET = 1
KIND_CHECKPOINT = 2
VERSION = 1


def _read(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated file: expected {n} bytes for {what} "
                        f"at offset {fh.tell() - len(buf)}")
    return buf


def _read_struct(fh, fmt: str, what: str):
    return struct.unpack(fmt, _read(fh, struct.calcsize(fmt), what))


def _write_header(fh, kind: int) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<BI", kind, VERSION))


def _check_header(fh, kind: int, path: str) -> None:
    magic = _read(fh, 4, "magic")
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, not a trajdiff file")
    got_kind, version = _read_struct(fh, "<BI", "header")
    if got_kind != kind:
        names = {KIND_DATASET: "demo dataset", KIND_CHECKPOINT: "checkpoint"}
        raise DataError(f"{path}: file is a {names.get(got_kind, f'kind {got_kind}')}, "
                        f"expected a {names[kind]}")
    if version != VERSION:
        raise DataError(f"{path}: format version {version} needs migration "
                        f"(supported: {VERSION})")


def _write_stats(fh, stats: NormalizationStats) -> None:
    for lo, hi in ((stats.action_min, stats.action_max),
                   (stats.state_min, stats.state_max),
                   (stats.cloud_min, stats.cloud_max)):
        fh.write(struct.pack("<I", len(lo)))
        fh.write(np.asarray(lo, dtype="<f8").tobytes())
        fh.write(np.asarray(hi, dtype="<f8").tobytes())


def _read_stats(fh) -> NormalizationStats:
    pairs = []
    for what in ("action", "state", "cloud"):
        (dim,) = _read_struct(fh, "<I", f"{what} stats dim")
        lo = np.frombuffer(_read(fh, 8 * dim, f"{what} mins"), dtype="<f8").copy()
        hi = np.frombuffer(_read(fh, 8 * dim, f"{what} maxes"), dtype="<f8").copy()
        pairs += [lo, hi]
    return NormalizationStats(*pairs)


# --- checkpoint -----------------------------------------------------------

def save_checkpoint(path: str, policy: Policy,
                    beta_start: float, beta_end: float) -> None:
    params, dims = policy.params, policy.params.dims
    with open(path, "wb") as fh:
        _write_header(fh, KIND_CHECKPOINT)
        fh.write(struct.pack("<BB", PREDICTION_TYPES.index(params.prediction_type),
                             ENCODER_MODES.index(params.encoder_mode)))
        fh.write(struct.pack("<Idd", policy.schedule.K, beta_start, beta_end))
        table = [dims.cloud_dim, dims.state_dim, dims.obs_horizon, dims.horizon,
                 dims.action_dim, dims.encoder_hidden, dims.feature_dim,
                 dims.film_hidden, dims.time_embed_dim, len(dims.trunk_widths),
                 *dims.trunk_widths]
        fh.write(struct.pack("<I", len(table)))
        fh.write(struct.pack(f"<{len(table)}I", *table))
        _write_stats(fh, policy.stats)
        for _, arr in params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[Policy, tuple[float, float]]:
    """Returns the policy and the (beta_start, beta_end) it was trained with."""
    try:
        fh = open(path, "rb")
    except OSError as err:
        raise DataError(f"cannot open checkpoint {path}: {err}") from err
    with fh:
        _check_header(fh, KIND_CHECKPOINT, path)
        pt_idx, em_idx = _read_struct(fh, "<BB", "type tags")
        try:
            prediction_type = PREDICTION_TYPES[pt_idx]
            encoder_mode = ENCODER_MODES[em_idx]
        except IndexError as err:
            raise DataError(f"{path}: unknown type tag ({pt_idx}, {em_idx})") from err
        K, beta_start, beta_end = _read_struct(fh, "<Idd", "schedule block")
        (count,) = _read_struct(fh, "<I", "dimension table size")
        table = list(_read_struct(fh, f"<{count}I", "dimension table"))
        if count < 10 or count != 10 + table[9]:
            raise DataError(f"{path}: inconsistent dimension table")
        dims = NetDims(cloud_dim=table[0], state_dim=table[1], obs_horizon=table[2],
                       horizon=table[3], action_dim=table[4], encoder_hidden=table[5],
                       feature_dim=table[6], film_hidden=table[7],
                       time_embed_dim=table[8], trunk_widths=tuple(table[10:]))
        stats = _read_stats(fh)
        params = init_params(dims, np.random.default_rng(0),
                             prediction_type=prediction_type,
                             encoder_mode=encoder_mode)
        for name, arr in params.items():
            raw = _read(fh, 8 * arr.size, f"weights for {name}")
            params.set_(name, np.frombuffer(raw, dtype="<f8").reshape(arr.shape).copy())
        extra = fh.read(1)
        if extra:
            raise DataError(f"{path}: trailing bytes after weights")
    schedule = make_schedule(K, "linear", beta_start, beta_end)
    return Policy(params=params, schedule=schedule, stats=stats), (beta_start, beta_end)


# --- demo dataset ---------------------------------------------------------

def dataset_spec_hash(meta: dict) -> bytes:
    """8-byte digest of the scene-generating parameters."""
    key = f"{meta.get('task')}:{meta.get('seed_base')}:{meta.get('episodes')}"
    return hashlib.sha256(key.encode()).digest()[:8]


def save_dataset(path: str, dataset: DemoDataset) -> None:
    meta = dataset.meta
    with open(path, "wb") as fh:
        _write_header(fh, KIND_DATASET)
        task = str(meta.get("task", "")).encode()
        fh.write(struct.pack("<H", len(task)))
        fh.write(task)
        fh.write(struct.pack("<IqHHHHH", len(dataset.episodes),
                             int(meta.get("seed_base", 0)),
                             int(meta.get("n_points", 0)),
                             int(meta.get("expert_steps", 0)),
                             int(meta.get("obs_horizon", 0)),
                             int(meta.get("horizon", 0)),
                             int(meta.get("exec_horizon", 0))))
        fh.write(dataset_spec_hash(meta))
        _write_stats(fh, dataset.stats)
        blobs, offsets, frames = [], [], []
        pos = 0
        for ep in dataset.episodes:
            blob = (np.ascontiguousarray(ep.cloud, dtype="<f4").tobytes()
                    + np.ascontiguousarray(ep.states, dtype="<f4").tobytes()
                    + np.ascontiguousarray(ep.actions, dtype="<f4").tobytes())
            offsets.append(pos)
            frames.append(len(ep.states))
            blobs.append(blob)
            pos += len(blob)
        for off, fr in zip(offsets, frames):
            fh.write(struct.pack("<QI", off, fr))
        for blob in blobs:
            fh.write(blob)


def load_dataset(path: str) -> DemoDataset:
    try:
        fh = open(path, "rb")
    except OSError as err:
        raise DataError(f"cannot open dataset {path}: {err}") from err
    with fh:
        _check_header(fh, KIND_DATASET, path)
        (task_len,) = _read_struct(fh, "<H", "task name length")
        task = _read(fh, task_len, "task name").decode()
        n_eps, seed_base, n_points, expert_steps, obs_h, horizon, exec_h = \
            _read_struct(fh, "<IqHHHHH", "dataset meta")
        spec_hash = _read(fh, 8, "scene spec hash")
        stats = _read_stats(fh)
        d = len(stats.cloud_min)
        sd = len(stats.state_min)
        ad = len(stats.action_min)
        index = [_read_struct(fh, "<QI", f"episode index {i}") for i in range(n_eps)]
        episodes = []
        for i, (_, frames) in enumerate(index):
            cloud = np.frombuffer(_read(fh, 4 * n_points * d, f"episode {i} cloud"),
                                  dtype="<f4").reshape(n_points, d).copy()
            states = np.frombuffer(_read(fh, 4 * frames * sd, f"episode {i} states"),
                                   dtype="<f4").reshape(frames, sd).copy()
            actions = np.frombuffer(_read(fh, 4 * frames * ad, f"episode {i} actions"),
                                    dtype="<f4").reshape(frames, ad).copy()
            episodes.append(DemoEpisode(cloud=cloud, states=states, actions=actions))
        extra = fh.read(1)
        if extra:
            raise DataError(f"{path}: trailing bytes after episode payload")
    meta = dict(task=task, episodes=n_eps, seed_base=seed_base, n_points=n_points,
                expert_steps=expert_steps, obs_horizon=obs_h, horizon=horizon,
                exec_horizon=exec_h)
    if dataset_spec_hash(meta) != spec_hash:
        raise DataError(f"{path}: scene spec hash mismatch")
    return DemoDataset(episodes=episodes, stats=stats, meta=meta)


# --- scene specs ----------------------------------------------------------

def _shape_to_dict(shape) -> dict:
    if isinstance(shape, Disc):
        return {"type": "disc", "r": shape.r}
    if isinstance(shape, Rect):
        return {"type": "rect", "w": shape.w, "h": shape.h}
    return {"type": "polygon", "verts": [list(v) for v in shape.verts]}


def _shape_from_dict(d: dict):
    kind = d.get("type")
    if kind == "disc":
        return Disc(float(d["r"]))
    if kind == "rect":
        return Rect(float(d["w"]), float(d["h"]))
    if kind == "polygon":
        return Polygon(tuple((float(x), float(y)) for x, y in d["verts"]))
    raise DataError(f"unknown shape type {kind!r}")


def scene_to_dict(scene: Scene) -> dict:
    return {
        "task": scene.task,
        "seed": scene.seed,
        "workspace": list(scene.workspace),
        "start": list(scene.start),
        "ee_radius": scene.ee_radius,
        "q_star": scene.q_star,
        "objects": [{"label": o.label, "shape": _shape_to_dict(o.shape),
                     "pose": list(o.pose)} for o in scene.objects],
        "target_labels": list(scene.target_labels),
        "obstacle_labels": list(scene.obstacle_labels),
    }


def scene_from_dict(d: dict) -> Scene:
    try:
        objects = tuple(
            SceneObject(label=str(o["label"]), shape=_shape_from_dict(o["shape"]),
                        pose=tuple(float(x) for x in o["pose"]))
            for o in d["objects"])
        return Scene(task=str(d["task"]), seed=int(d["seed"]),
                     workspace=tuple(float(x) for x in d["workspace"]),
                     start=tuple(float(x) for x in d["start"]),
                     ee_radius=float(d["ee_radius"]), q_star=float(d["q_star"]),
                     objects=objects,
                     target_labels=tuple(str(x) for x in d["target_labels"]),
                     obstacle_labels=tuple(str(x) for x in d["obstacle_labels"]))
    except (KeyError, TypeError, ValueError) as err:
        raise DataError(f"invalid scene spec: {err}") from err


def save_scene(path: str, scene: Scene) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(path: str) -> Scene:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise DataError(f"cannot read scene file {path}: {err}") from err
    return scene_from_dict(data)
