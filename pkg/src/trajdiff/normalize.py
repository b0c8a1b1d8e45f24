"""Per-dimension min-max normalization to [-1, 1].

Stats are fitted once over the training dataset and travel with the
checkpoint. Degenerate dimensions (max == min) map to constant 0 and
back to their min.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _fit(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = np.asarray(values, dtype=np.float64).reshape(-1, values.shape[-1])
    return flat.min(axis=0), flat.max(axis=0)


@dataclass(frozen=True)
class NormalizationStats:
    """Min/max per dimension for actions, robot states, and cloud coordinates."""

    action_min: np.ndarray
    action_max: np.ndarray
    state_min: np.ndarray
    state_max: np.ndarray
    cloud_min: np.ndarray
    cloud_max: np.ndarray

    @classmethod
    def fit(cls, actions: np.ndarray, states: np.ndarray,
            clouds: np.ndarray) -> "NormalizationStats":
        """Fit over arrays whose last axis is the feature dimension."""
        amin, amax = _fit(actions)
        smin, smax = _fit(states)
        cmin, cmax = _fit(clouds)
        return cls(amin, amax, smin, smax, cmin, cmax)

    @classmethod
    def identity(cls, action_dim: int, state_dim: int, cloud_dim: int) -> "NormalizationStats":
        """Stats that make normalize/unnormalize the identity map."""
        def pair(d):
            return -np.ones(d), np.ones(d)
        return cls(*pair(action_dim), *pair(state_dim), *pair(cloud_dim))

    def action_scale(self) -> np.ndarray:
        """World units per normalized unit, per action dimension."""
        return (self.action_max - self.action_min) / 2.0


def normalize(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Map [lo, hi] to [-1, 1]; degenerate dims go to 0."""
    x = np.asarray(x, dtype=np.float64)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (x - lo) / safe - 1.0
    return np.where(span > 0, out, 0.0)


def unnormalize(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Inverse of `normalize`; degenerate dims return lo."""
    x = np.asarray(x, dtype=np.float64)
    span = hi - lo
    return np.where(span > 0, (x + 1.0) / 2.0 * span + lo, lo)
