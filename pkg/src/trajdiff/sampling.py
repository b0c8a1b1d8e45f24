"""DDPM and DDIM reverse processes with pluggable cost guidance.

Samplers consume a "noise model": any object exposing ``predict(ak, k)``,
``vjp(ak, k, cot)`` and ``shape``. The observation conditioning is bound
into the model object (`ConditionedDenoiser`), which also lets the
analytic Gaussian oracle drive the exact same sampler code.

Noise draws follow a fixed order so runs are reproducible from the seed:
one draw for the initial trajectory, then one per step whose noise scale
is strictly positive (the final step toward k=0 is deterministic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import denoiser as dn
from .costs import GuidanceConfig, guidance_gradient
from .denoiser import DenoiserParams
from .errors import DivergenceError
from .normalize import NormalizationStats
from .observation import Observation
from .schedule import NoiseSchedule, estimate_clean, posterior_mean


@dataclass(frozen=True)
class SamplerConfig:
    sampler: str = "ddpm"   # "ddpm" | "ddim"
    steps: int = 100        # inference steps; DDIM may subsample the schedule
    eta: float = 0.0        # DDIM stochasticity in [0, 1]
    rng_seed: int = 0

    def validate(self, K: int) -> None:
        if self.sampler not in ("ddpm", "ddim"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if not 1 <= self.steps <= K:
            raise ValueError(f"steps must be in 1..{K}, got {self.steps}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")


class AnalyticGaussianDenoiser:
    """Bayes-optimal noise predictor for trajectories drawn from N(mean, std^2).

    Used to verify samplers without training: the optimal prediction is
    eps*(ak, k) = (ak - sqrt(abar_k) * E[a0 | ak]) / sqrt(1 - abar_k) with
    E[a0 | ak] = mean + (sqrt(abar_k) std^2 / (abar_k std^2 + 1 - abar_k))
    * (ak - sqrt(abar_k) mean).
    """

    def __init__(self, schedule: NoiseSchedule, mean: np.ndarray, std):
        self.schedule = schedule
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.broadcast_to(np.asarray(std, dtype=np.float64),
                                   self.mean.shape).copy()
        if np.any(self.std <= 0):
            raise ValueError("std must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape

    def posterior_clean_mean(self, ak: np.ndarray, k: int) -> np.ndarray:
        abar = self.schedule.alpha_bar[k - 1]
        var = self.std * self.std
        gain = np.sqrt(abar) * var / (abar * var + 1.0 - abar)
        return self.mean + gain * (ak - np.sqrt(abar) * self.mean)

    def predict(self, ak: np.ndarray, k: int) -> np.ndarray:
        abar = self.schedule.alpha_bar[k - 1]
        e0 = self.posterior_clean_mean(ak, k)
        return (ak - np.sqrt(abar) * e0) / np.sqrt(1.0 - abar)

    def vjp(self, ak: np.ndarray, k: int, cotangent: np.ndarray) -> np.ndarray:
        # d eps / d ak is diagonal: sqrt(1-abar) / (abar var + 1 - abar).
        abar = self.schedule.alpha_bar[k - 1]
        var = self.std * self.std
        return np.sqrt(1.0 - abar) / (abar * var + 1.0 - abar) * cotangent


class ConditionedDenoiser:
    """Trained denoiser bound to one normalized observation.

    FiLM pairs depend only on the observation, so they are computed once
    here and reused across all denoising steps of a plan. An observation
    with zero cloud points stands for "object absent" and contributes a
    zero feature vector.
    """

    def __init__(self, params: DenoiserParams, schedule: NoiseSchedule,
                 obs: Observation):
        self.params = params
        self.schedule = schedule
        dims = params.dims
        if obs.clouds.shape[1] == 0:
            feats = np.zeros((1, dims.obs_horizon * dims.feature_dim))
        else:
            f, _ = dn._encode_clouds(params, obs.clouds.astype(np.float64))
            feats = f.reshape(1, -1)
        cond = np.concatenate([feats, obs.states.reshape(1, -1)], axis=1)
        self._films, _ = dn._films_from_cond(params, cond)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.params.dims.horizon, self.params.dims.action_dim)

    def _raw(self, ak: np.ndarray, k: int):
        return dn._trunk_forward(self.params, ak[None], np.array([k]), self._films)

    def predict(self, ak: np.ndarray, k: int) -> np.ndarray:
        raw, _ = self._raw(ak, k)
        if self.params.prediction_type == "sample":
            return dn._to_implied_noise(self.schedule, ak, k, raw[0])
        return raw[0]

    def vjp(self, ak: np.ndarray, k: int, cotangent: np.ndarray) -> np.ndarray:
        _, cache = self._raw(ak, k)
        raw_vjp = dn._trunk_input_vjp(self.params, cache, cotangent[None])[0]
        if self.params.prediction_type == "sample":
            abar = self.schedule.alpha_bar[k - 1]
            return (cotangent - np.sqrt(abar) * raw_vjp) / np.sqrt(1.0 - abar)
        return raw_vjp


def ddpm_step(s: NoiseSchedule, model, ak: np.ndarray, k: int,
              rng: np.random.Generator,
              eps_hat: np.ndarray | None = None) -> np.ndarray:
    """One unguided reverse step; deterministic at k=1 where sigma is 0."""
    if eps_hat is None:
        eps_hat = model.predict(ak, k)
    mu = posterior_mean(s, ak, eps_hat, k)
    sig = s.sigma[k - 1]
    if sig > 0:
        return mu + sig * rng.standard_normal(ak.shape)
    return mu


def ddim_step(s: NoiseSchedule, model, ak: np.ndarray, k: int, k_prev: int,
              rng: np.random.Generator, eta: float = 0.0,
              eps_hat: np.ndarray | None = None) -> np.ndarray:
    """One DDIM update from step k to k_prev (k_prev may be 0).

    The stochastic term uses sigma = eta * sigma_ddpm(k), forced to 0 on the
    final step toward k_prev=0 so the returned trajectory is noise-free.
    """
    if not 0 <= k_prev < k:
        raise ValueError(f"need 0 <= k_prev < k, got k_prev={k_prev}, k={k}")
    if eps_hat is None:
        eps_hat = model.predict(ak, k)
    a0 = estimate_clean(s, ak, eps_hat, k)
    abar_prev = s.alpha_bar_at(k_prev)
    sig = 0.0 if k_prev == 0 else eta * s.sigma[k - 1]
    rem = 1.0 - abar_prev - sig * sig
    if rem < 0:
        raise ValueError(f"eta={eta} too large for the subsampled schedule "
                         f"at step {k}->{k_prev}")
    out = np.sqrt(abar_prev) * a0 + np.sqrt(rem) * eps_hat
    if sig > 0:
        out = out + sig * rng.standard_normal(ak.shape)
    return out


def ddim_indices(K: int, steps: int) -> np.ndarray:
    """Evenly spaced, strictly increasing inference indices over 1..K.

    The last index is always K (sampling starts from pure noise); steps=1
    degenerates to the single pair K -> 0.
    """
    if steps == 1:
        return np.array([K])
    return np.unique(np.round(np.linspace(1, K, steps)).astype(int))


def guided_sample(s: NoiseSchedule, model, guidance: GuidanceConfig,
                  c_ob: np.ndarray | None, cfg: SamplerConfig,
                  rng: np.random.Generator,
                  stats: NormalizationStats | None = None,
                  skip_last: bool = False) -> np.ndarray:
    """Run the full reverse process with cost guidance.

    At each step the base update runs first, then rho times the guidance
    gradient (computed at the pre-step trajectory) is subtracted from the
    result; this happens at every step including the final one unless
    `skip_last` is set. Guidance is disabled entirely when the mode is
    "none", when no obstacle point is supplied, or when rho is 0, in which
    case the output is bit-identical to the unguided sampler under the same
    rng. Returns the clean trajectory in normalized units.
    """
    cfg.validate(s.K)
    guided = guidance.mode != "none" and c_ob is not None and guidance.rho != 0.0
    if guided and stats is None:
        n, a = model.shape
        stats = NormalizationStats.identity(a, 1, len(c_ob))

    ak = rng.standard_normal(model.shape)
    if cfg.sampler == "ddpm":
        pairs = [(k, k - 1) for k in range(s.K, 0, -1)]
    else:
        taus = ddim_indices(s.K, cfg.steps)
        pairs = list(zip(taus[::-1], np.concatenate([taus[:-1][::-1], [0]])))

    for i, (k, k_prev) in enumerate(pairs):
        last = i == len(pairs) - 1
        eps_hat = model.predict(ak, int(k))
        if cfg.sampler == "ddpm":
            nxt = ddpm_step(s, model, ak, int(k), rng, eps_hat=eps_hat)
        else:
            nxt = ddim_step(s, model, ak, int(k), int(k_prev), rng,
                            eta=cfg.eta, eps_hat=eps_hat)
        if guided and not (skip_last and last):
            g = guidance_gradient(guidance, s, model, ak, int(k), c_ob,
                                  stats, eps_hat=eps_hat)
            nxt = nxt - guidance.rho * g
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"non-finite trajectory at denoising step k={k}",
                                  step=int(k))
        ak = nxt
    return ak


def last_step_ablation(s: NoiseSchedule, model, guidance: GuidanceConfig,
                       c_ob: np.ndarray | None, cfg: SamplerConfig,
                       rng: np.random.Generator,
                       stats: NormalizationStats | None = None,
                       skip_last: bool = False) -> np.ndarray:
    """`guided_sample` with the final step's guidance term optionally omitted."""
    return guided_sample(s, model, guidance, c_ob, cfg, rng,
                         stats=stats, skip_last=skip_last)
