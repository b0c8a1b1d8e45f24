"""Object-centric observation container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .normalize import NormalizationStats, normalize


@dataclass(frozen=True)
class Observation:
    """Point clouds of the task-relevant objects plus robot state.

    Both arrays are stacked over the observation horizon: ``clouds`` has
    shape (T_o, P, d) and ``states`` (T_o, state_dim) where the state is
    the end-effector position followed by the gripper scalar.
    """

    clouds: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.clouds.ndim != 3 or self.states.ndim != 2:
            raise ValueError(f"bad observation shapes: clouds {self.clouds.shape}, "
                             f"states {self.states.shape}")
        if self.clouds.shape[0] != self.states.shape[0]:
            raise ValueError("clouds and states disagree on observation horizon")


def normalize_observation(stats: NormalizationStats, obs: Observation) -> Observation:
    """Map an observation from world units into the network's [-1, 1] range."""
    return Observation(
        clouds=normalize(obs.clouds, stats.cloud_min, stats.cloud_max),
        states=normalize(obs.states, stats.state_min, stats.state_max),
    )
