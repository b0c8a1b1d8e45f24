"""Receding-horizon closed loop: plan, execute, re-observe.

Each plan generation re-reads the scene, refreshes the closest obstacle
point from the current end-effector position (once per plan, never inside
the denoising loop), samples an n-waypoint trajectory, and executes the
first m waypoints with straight-line interpolation. Collision is checked
exactly per executed segment against the obstacle clouds at a clearance of
the end-effector radius.

Flag ordering: along each executed waypoint, collision is evaluated before
arrival, and the episode ends at the first collision or the first waypoint
within the success threshold; success and collision therefore never co-occur.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import GuidanceConfig, ObstacleContext
from .denoiser import DenoiserParams
from .errors import DivergenceError
from .normalize import NormalizationStats, unnormalize
from .observation import normalize_observation
from .sampling import ConditionedDenoiser, SamplerConfig, guided_sample
from .scenes import Scene, observe, obstacle_clouds, point_segment_distance
from .schedule import NoiseSchedule


@dataclass
class Policy:
    """Trained denoiser with the schedule and stats it was trained under."""

    params: DenoiserParams
    schedule: NoiseSchedule
    stats: NormalizationStats


@dataclass
class EpisodeResult:
    success: bool
    collided: bool
    min_clearance: float       # inf when the scene has no obstacles
    path_length: float
    smoothness: float          # sum of squared second differences, executed path
    plans_issued: int
    wall_ms_per_plan: float    # diagnostic only; excluded from metrics output
    aborted: str | None = None


@dataclass
class EpisodeTrace:
    """Optional rendering payload: executed path and per-plan waypoints."""

    executed: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    plans: list[np.ndarray] = field(default_factory=list)


def _segment_clearance(ob_clouds: list[np.ndarray], a: np.ndarray, b: np.ndarray,
                       ee_radius: float) -> float:
    dists = [point_segment_distance(c, a, b).min() for c in ob_clouds if len(c)]
    if not dists:
        return np.inf
    return float(min(dists) - ee_radius)


def rollout(policy: Policy, scene: Scene, guidance: GuidanceConfig,
            sampler_cfg: SamplerConfig, rng: np.random.Generator,
            n_points: int = 64, max_plans: int = 20,
            success_eps_frac: float = 0.05, exec_horizon: int | None = None,
            skip_last: bool = False,
            trace: EpisodeTrace | None = None) -> EpisodeResult:
    """Run one episode; returns metrics (and fills `trace` when given)."""
    dims = policy.params.dims
    m = exec_horizon if exec_horizon is not None else max(1, dims.horizon // 2)
    ws = scene.workspace
    success_eps = success_eps_frac * max(ws[2] - ws[0], ws[3] - ws[1])
    target = scene.target_centroid()
    guided = guidance.mode != "none"
    if guided:
        guidance = replace(guidance, q_star=guidance.q_star or scene.q_star)
    ob_clouds = obstacle_clouds(scene, n_points)

    ee = np.asarray(scene.start, dtype=np.float64)
    history = [ee.copy()] * dims.obs_horizon
    executed = [ee.copy()]
    success = collided = False
    min_clear = np.inf
    plans = 0
    wall = 0.0

    while plans < max_plans and not success and not collided:
        states = np.array([np.concatenate([p, [0.0]]) for p in history])
        obs = normalize_observation(policy.stats,
                                    observe(scene, scene.target_labels, states,
                                            n_points=n_points))
        c_ob = None
        if guided:
            c_ob = ObstacleContext(ob_clouds, ee.copy()).refresh()
        model = ConditionedDenoiser(policy.params, policy.schedule, obs)
        t0 = time.perf_counter()
        try:
            plan_norm = guided_sample(policy.schedule, model, guidance, c_ob,
                                      sampler_cfg, rng, stats=policy.stats,
                                      skip_last=skip_last)
        except DivergenceError as err:
            return EpisodeResult(False, False, float(min_clear),
                                 _path_length(executed), _smoothness(executed),
                                 plans + 1, wall / max(plans, 1),
                                 aborted=f"divergence at step {err.step}")
        wall += (time.perf_counter() - t0) * 1e3
        plans += 1
        plan = unnormalize(plan_norm, policy.stats.action_min, policy.stats.action_max)
        if trace is not None:
            trace.plans.append(plan.copy())

        for w in plan[:m]:
            w = w[:2]
            clear = _segment_clearance(ob_clouds, ee, w, scene.ee_radius)
            min_clear = min(min_clear, clear)
            executed.append(w.copy())
            history = history[1:] + [w.copy()]
            ee = w
            if clear <= 0.0:
                collided = True
                break
            if np.linalg.norm(ee - target) <= success_eps:
                success = True
                break

    if trace is not None:
        trace.executed = np.array(executed)
    return EpisodeResult(success=success, collided=collided,
                         min_clearance=float(min_clear),
                         path_length=_path_length(executed),
                         smoothness=_smoothness(executed),
                         plans_issued=plans,
                         wall_ms_per_plan=wall / max(plans, 1))


def _path_length(points: list[np.ndarray]) -> float:
    p = np.asarray(points)
    if len(p) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def _smoothness(points: list[np.ndarray]) -> float:
    p = np.asarray(points)
    if len(p) < 3:
        return 0.0
    dd = p[2:] - 2.0 * p[1:-1] + p[:-2]
    return float(np.sum(dd * dd))


@dataclass
class EpisodeRow:
    task: str
    scene_seed: int
    episode_seed: int
    result: EpisodeResult


def evaluate(policy: Policy, scenes: list[Scene], guidance: GuidanceConfig,
             sampler_cfg: SamplerConfig, seeds: list[int],
             n_points: int = 64, max_plans: int = 20,
             success_eps_frac: float = 0.05, exec_horizon: int | None = None,
             skip_last: bool = False,
             traces: list[EpisodeTrace] | None = None) -> list[EpisodeRow]:
    """One episode per (scene, seed) pair, merged in seed order."""
    if len(scenes) != len(seeds):
        raise ValueError(f"{len(scenes)} scenes but {len(seeds)} seeds")
    rows = []
    for scene, seed in zip(scenes, seeds):
        rng = np.random.default_rng(np.random.SeedSequence([0xEB15, seed]))
        trace = EpisodeTrace() if traces is not None else None
        res = rollout(policy, scene, guidance, sampler_cfg, rng,
                      n_points=n_points, max_plans=max_plans,
                      success_eps_frac=success_eps_frac,
                      exec_horizon=exec_horizon, skip_last=skip_last,
                      trace=trace)
        if traces is not None:
            traces.append(trace)
        rows.append(EpisodeRow(scene.task, scene.seed, seed, res))
    return rows


def aggregate(rows: list[EpisodeRow]) -> dict:
    """Mean metrics over episode rows; clearance averages finite values only."""
    if not rows:
        return dict(episodes=0)
    res = [r.result for r in rows]
    clear = [x.min_clearance for x in res if np.isfinite(x.min_clearance)]
    return dict(
        episodes=len(res),
        success_rate=float(np.mean([x.success for x in res])),
        collision_rate=float(np.mean([x.collided for x in res])),
        mean_min_clearance=float(np.mean(clear)) if clear else float("nan"),
        mean_path_length=float(np.mean([x.path_length for x in res])),
        mean_smoothness=float(np.mean([x.smoothness for x in res])),
        mean_plans=float(np.mean([x.plans_issued for x in res])),
        mean_wall_ms_per_plan=float(np.mean([x.wall_ms_per_plan for x in res])),
    )
