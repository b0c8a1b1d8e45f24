"""Obstacle hinge cost, its thresholded gradient, and the chain rule that
maps a clean-trajectory cost back onto the noisy trajectory.

The cost is sum_i max(0, q_star - dist(a_i, c_ob)) over waypoints, with the
distance restricted to the masked coordinates. A raw distance would attract
the trajectory under mean-shift guidance; the hinge both repels and
reproduces the thresholded-gradient case structure (zero beyond q_star,
inclusive at the boundary).

Guidance gradients are evaluated in world units and mapped to normalized
action units through the stored per-dimension scale, so the gradient scale
rho means the same thing across tasks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .normalize import NormalizationStats, unnormalize
from .schedule import NoiseSchedule, estimate_clean

log = logging.getLogger(__name__)

GUIDANCE_MODES = ("none", "clean_estimate", "noisy_baseline")
GRAD_MODES = ("full_vjp", "frozen_eps")

# Below this masked distance the repulsion direction is undefined; we emit a
# unit gradient along the first masked axis instead.
DEGENERATE_DIST = 1e-9


@dataclass(frozen=True)
class GuidanceConfig:
    rho: float = 0.0
    q_star: float | None = None          # None: use the scene's value
    mode: str = "none"
    grad_mode: str = "full_vjp"
    coord_mask: tuple[int, ...] = (0, 1)

    def validate(self) -> None:
        if not np.isfinite(self.rho):
            raise ValueError("rho must be finite")
        if self.q_star is not None and not self.q_star > 0:
            raise ValueError("q_star must be positive")
        if self.mode not in GUIDANCE_MODES:
            raise ValueError(f"mode must be one of {GUIDANCE_MODES}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
        if len(self.coord_mask) == 0:
            raise ValueError("coord_mask must be nonempty")


@dataclass
class ObstacleContext:
    """Obstacle clouds plus the closest point cached for one plan generation."""

    clouds: list[np.ndarray]
    ee_pos: np.ndarray
    closest: np.ndarray | None = None

    def refresh(self) -> np.ndarray | None:
        self.closest = closest_point(self.clouds, self.ee_pos)
        return self.closest


def closest_point(clouds: list[np.ndarray], ee_pos: np.ndarray) -> np.ndarray | None:
    """Obstacle point nearest to the end-effector (full-dimension distance).

    Ties break to the first occurrence in iteration order. Returns None when
    the obstacle set is empty, which callers treat as "disable guidance".
    """
    points = [np.asarray(c, dtype=np.float64) for c in clouds if len(c)]
    if not points:
        return None
    allpts = np.concatenate(points, axis=0)
    d2 = np.sum((allpts - np.asarray(ee_pos, dtype=np.float64)) ** 2, axis=1)
    return allpts[int(np.argmin(d2))].copy()


def _masked_dists(a: np.ndarray, c_ob: np.ndarray,
                  coord_mask: tuple[int, ...]) -> np.ndarray:
    mask = list(coord_mask)
    diff = np.asarray(a, dtype=np.float64)[:, mask] - np.asarray(c_ob, dtype=np.float64)[mask]
    return np.sqrt(np.sum(diff * diff, axis=1))


def trajectory_cost(a: np.ndarray, c_ob: np.ndarray, q_star: float,
                    coord_mask: tuple[int, ...]) -> float:
    """Sum of hinge penalties max(0, q_star - dist) over waypoints."""
    d = _masked_dists(a, c_ob, coord_mask)
    return float(np.sum(np.maximum(0.0, q_star - d)))


def cost_gradient(a: np.ndarray, c_ob: np.ndarray, q_star: float,
                  coord_mask: tuple[int, ...]) -> np.ndarray:
    """Per-waypoint gradient of `trajectory_cost`, (n, action_dim).

    Rows are nonzero exactly where dist <= q_star: -(a_i - c_ob)/dist on the
    masked dimensions, zero elsewhere. Subtracting rho * gradient from the
    trajectory therefore pushes violating waypoints away from the obstacle.
    """
    a = np.asarray(a, dtype=np.float64)
    mask = list(coord_mask)
    grad = np.zeros_like(a)
    d = _masked_dists(a, c_ob, coord_mask)
    violating = d <= q_star
    degenerate = violating & (d < DEGENERATE_DIST)
    regular = violating & ~degenerate
    if np.any(regular):
        diff = a[np.ix_(regular, mask)] - np.asarray(c_ob, dtype=np.float64)[mask]
        sub = np.zeros((int(regular.sum()), a.shape[1]))
        sub[:, mask] = -diff / d[regular][:, None]
        grad[regular] = sub
    if np.any(degenerate):
        idx = np.where(degenerate)[0]
        log.warning("waypoints %s coincide with the obstacle point; "
                    "using fallback gradient along masked axis %d",
                    idx.tolist(), mask[0])
        grad[idx, mask[0]] = -1.0
    return grad


def base_rho(stats: NormalizationStats, q_star: float, K: int,
             coord_mask: tuple[int, ...]) -> float:
    """Reference gradient scale for sweeps.

    Subtracting rho * gradient moves a violating waypoint by about
    rho * scale^2 world units per step (unit hinge gradient, late-step
    chain factor ~1), so rho = q_star / (K * mean(scale^2)) displaces it by
    roughly q_star over a full K-step generation.
    """
    scale = stats.action_scale()[list(coord_mask)]
    return float(q_star / (K * np.mean(scale * scale)))


def guidance_gradient(cfg: GuidanceConfig, s: NoiseSchedule, model,
                      ak: np.ndarray, k: int, c_ob: np.ndarray,
                      stats: NormalizationStats,
                      eps_hat: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the obstacle cost with respect to the noisy trajectory.

    `model` is any object with ``predict(ak, k)`` and ``vjp(ak, k, cot)`` in
    normalized units (a trained denoiser bound to its observation, or an
    analytic oracle). In clean_estimate mode the cost is evaluated on the
    estimated clean trajectory and chained back through the estimate:
    frozen_eps treats the predicted noise as constant (factor 1/sqrt(abar_k)),
    full_vjp additionally subtracts sqrt(1-abar_k)/sqrt(abar_k) times the
    denoiser VJP with the cost gradient as cotangent. noisy_baseline
    evaluates the cost directly at the un-normalized noisy trajectory and
    never consults the model. Output is in normalized action units.
    """
    cfg.validate()
    if cfg.mode == "none":
        raise ValueError("guidance_gradient called with mode 'none'")
    if cfg.q_star is None:
        raise ValueError("q_star unresolved; supply the scene's value")
    scale = stats.action_scale()

    if cfg.mode == "noisy_baseline":
        a_world = unnormalize(ak, stats.action_min, stats.action_max)
        return scale * cost_gradient(a_world, c_ob, cfg.q_star, cfg.coord_mask)

    if eps_hat is None:
        eps_hat = model.predict(ak, k)
    a0 = estimate_clean(s, ak, eps_hat, k)
    a0_world = unnormalize(a0, stats.action_min, stats.action_max)
    g_norm = scale * cost_gradient(a0_world, c_ob, cfg.q_star, cfg.coord_mask)
    abar = s.alpha_bar[k - 1]
    out = g_norm / np.sqrt(abar)
    if cfg.grad_mode == "full_vjp":
        out = out - np.sqrt(1.0 - abar) / np.sqrt(abar) * model.vjp(ak, k, g_norm)
    return out
