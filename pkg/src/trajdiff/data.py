"""Demonstration collection and training-batch assembly.

Demonstrations come from a scripted expert that drives the end-effector
straight to the target with a trapezoidal speed profile plus a small seeded
lateral bow, standing in for tele-operation. Demo scenes are obstacle-free;
obstacles only exist at evaluation time.

On disk, episodes are 32-bit floats (see fileio); in memory the dataset
keeps the float32 arrays so write/read round-trips are bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .normalize import NormalizationStats, normalize
from .scenes import Scene, generate_scene, object_cloud, point_segment_distance, obstacle_clouds

GRIPPER_IDLE = 0.0


@dataclass
class DemoEpisode:
    cloud: np.ndarray    # (P, d) target object cloud, world units
    states: np.ndarray   # (T, state_dim) per-step robot state
    actions: np.ndarray  # (T, action_dim) executed action = next position


@dataclass
class DemoDataset:
    episodes: list[DemoEpisode]
    stats: NormalizationStats
    meta: dict = field(default_factory=dict)


def scripted_expert(scene: Scene, steps: int = 48, jitter: float = 0.01) -> np.ndarray:
    """Expert end-effector path, (steps + 1, 2), start and target exact.

    Trapezoidal progress profile (quarter ramps) along the straight line,
    with a single seeded lateral sine bow of amplitude up to `jitter`; the
    bow vanishes at both endpoints and leaves progress along the path axis
    monotone.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0xE84E7, scene.seed]))
    start = np.asarray(scene.start, dtype=np.float64)
    target = scene.target_centroid()
    tau = np.linspace(0.0, 1.0, steps + 1)
    ramp = 0.25
    v = np.minimum(np.minimum(tau / ramp, (1.0 - tau) / ramp), 1.0)
    v = np.maximum(v, 0.0)
    # progress = normalized integral of the speed profile
    s = np.concatenate([[0.0], np.cumsum((v[1:] + v[:-1]) / 2.0)])
    s /= s[-1]
    path = start + s[:, None] * (target - start)
    bow = rng.uniform(-jitter, jitter)
    direction = (target - start) / np.linalg.norm(target - start)
    perp = np.array([-direction[1], direction[0]])
    return path + (bow * np.sin(np.pi * s))[:, None] * perp


def demo_episode(scene: Scene, n_points: int = 64, expert_steps: int = 48,
                 jitter: float = 0.01) -> DemoEpisode:
    """Run the expert on one scene and package the time-aligned pairs."""
    path = scripted_expert(scene, steps=expert_steps, jitter=jitter)
    cloud = object_cloud(scene, scene.target_labels[0], n_points)
    grip = np.full((expert_steps, 1), GRIPPER_IDLE)
    states = np.concatenate([path[:-1], grip], axis=1)
    actions = path[1:]
    return DemoEpisode(cloud=cloud.astype(np.float32),
                       states=states.astype(np.float32),
                       actions=actions.astype(np.float32))


def collect_demos(task: str = "reach", episodes: int = 200, seed_base: int = 0,
                  n_points: int = 64, expert_steps: int = 48,
                  jitter: float = 0.01, horizon: int = 16,
                  obs_horizon: int = 2, exec_horizon: int = 8) -> DemoDataset:
    """Collect demonstrations over seeded scene variations and fit stats."""
    eps: list[DemoEpisode] = []
    for i in range(episodes):
        scene = generate_scene(task, seed_base + i)
        ep = demo_episode(scene, n_points=n_points, expert_steps=expert_steps,
                          jitter=jitter)
        if len(ep.actions) < horizon:
            raise ValueError(f"episode length {len(ep.actions)} < horizon {horizon}")
        for ob in obstacle_clouds(scene, n_points):
            path = np.concatenate([ep.states[:, :2], ep.actions[-1:, :]], axis=0)
            for a, b in zip(path[:-1], path[1:]):
                if point_segment_distance(ob, a, b).min() <= scene.ee_radius:
                    raise ValueError(f"demo episode seed {scene.seed} collides")
        eps.append(ep)
    stats = NormalizationStats.fit(
        np.concatenate([e.actions for e in eps]),
        np.concatenate([e.states for e in eps]),
        np.concatenate([e.cloud for e in eps]),
    )
    meta = dict(task=task, episodes=episodes, seed_base=seed_base,
                n_points=n_points, expert_steps=expert_steps,
                obs_horizon=obs_horizon, horizon=horizon,
                exec_horizon=exec_horizon)
    return DemoDataset(episodes=eps, stats=stats, meta=meta)


class WindowSampler:
    """Draws training batches of (observation window, action window).

    Windows start at any step t; the observation history repeats the first
    frame at t=0 and the action window pads by repeating the final action,
    mirroring how the receding-horizon loop behaves at the episode edges.
    All episodes must share the same length and cloud size.
    """

    def __init__(self, dataset: DemoDataset, obs_horizon: int, horizon: int):
        stats = dataset.stats
        self.obs_horizon = obs_horizon
        self.horizon = horizon
        self.clouds = normalize(np.stack([e.cloud for e in dataset.episodes]),
                                stats.cloud_min, stats.cloud_max)
        self.states = normalize(np.stack([e.states for e in dataset.episodes]),
                                stats.state_min, stats.state_max)
        self.actions = normalize(np.stack([e.actions for e in dataset.episodes]),
                                 stats.action_min, stats.action_max)
        self.n_episodes, self.length = self.states.shape[:2]

    def __call__(self, rng: np.random.Generator, batch_size: int) -> dict:
        ep = rng.integers(0, self.n_episodes, size=batch_size)
        t = rng.integers(0, self.length, size=batch_size)
        hist = np.clip(t[:, None] + np.arange(-self.obs_horizon + 1, 1), 0, None)
        future = np.clip(t[:, None] + np.arange(self.horizon), None, self.length - 1)
        cloud = self.clouds[ep]  # (B, P, d); scene is static over the episode
        return dict(
            clouds=np.repeat(cloud[:, None], self.obs_horizon, axis=1),
            states=self.states[ep[:, None], hist],
            actions=self.actions[ep[:, None], future],
        )
