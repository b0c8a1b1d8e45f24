"""Trajectory diffusion policy with cost-guided sampling and a planar sandbox."""

from .costs import (GuidanceConfig, ObstacleContext, closest_point,
                    cost_gradient, guidance_gradient, trajectory_cost)
from .denoiser import (DenoiserParams, NetDims, denoiser_vjp, encode_points,
                       init_params, predict_noise)
from .normalize import NormalizationStats
from .observation import Observation, normalize_observation
from .rollout import EpisodeResult, Policy, aggregate, evaluate, rollout
from .sampling import (AnalyticGaussianDenoiser, ConditionedDenoiser,
                       SamplerConfig, ddim_step, ddpm_step, guided_sample,
                       last_step_ablation)
from .scenes import Scene, generate_scene, observe, sample_object_cloud
from .schedule import (NoiseSchedule, estimate_clean, forward_diffuse,
                       make_schedule, posterior_mean)
from .training import train, train_step

__all__ = [
    "AnalyticGaussianDenoiser", "ConditionedDenoiser", "DenoiserParams",
    "EpisodeResult", "GuidanceConfig", "NetDims", "NoiseSchedule",
    "NormalizationStats", "Observation", "ObstacleContext", "Policy",
    "SamplerConfig", "Scene", "aggregate", "closest_point", "cost_gradient",
    "ddim_step", "ddpm_step", "denoiser_vjp", "encode_points", "estimate_clean",
    "evaluate", "forward_diffuse", "generate_scene", "guidance_gradient",
    "guided_sample", "init_params", "last_step_ablation", "make_schedule",
    "normalize_observation", "observe", "posterior_mean", "predict_noise",
    "rollout", "sample_object_cloud", "train", "train_step", "trajectory_cost",
]
