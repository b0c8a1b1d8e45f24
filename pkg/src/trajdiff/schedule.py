"""Diffusion noise schedule and the closed-form clean/noisy trajectory maps.

Step indices k run 1..K, with k=K pure noise. Arrays are stored 0-based:
``beta[k-1]`` is the coefficient for step k. ``alpha_bar`` at the virtual
index k=0 is defined as 1, which makes the posterior noise scale at k=1
exactly zero, so the final reverse step is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step coefficients of a K-step variance-preserving diffusion."""

    K: int
    beta: np.ndarray       # (K,), in (0, 1)
    alpha: np.ndarray      # (K,), 1 - beta
    alpha_bar: np.ndarray  # (K,), cumulative product of alpha
    sigma: np.ndarray      # (K,), posterior noise scale, sigma[0] == 0

    def alpha_bar_at(self, k: int) -> float:
        """alpha_bar for step k, with the k=0 convention alpha_bar=1."""
        if k == 0:
            return 1.0
        return float(self.alpha_bar[k - 1])

    def _check_k(self, k: int) -> None:
        if not 1 <= k <= self.K:
            raise ValueError(f"step index k={k} outside 1..{self.K}")


def make_schedule(K: int, kind: str = "linear",
                  beta_start: float = 1e-4, beta_end: float = 0.1) -> NoiseSchedule:
    """Build a K-step schedule. `linear` interpolates beta uniformly.

    The default beta range is chosen so that alpha_bar at k=K is below 0.01
    at K=100: sampling starts from a standard normal, so the forward process
    must actually reach it within the step budget.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, "
                         f"got ({beta_start}, {beta_end})")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")

    beta = np.linspace(beta_start, beta_end, K, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    # DDPM posterior variance beta_k * (1 - abar_{k-1}) / (1 - abar_k);
    # abar_0 := 1 gives sigma[0] == 0.
    alpha_bar_prev = np.concatenate(([1.0], alpha_bar[:-1]))
    sigma = np.sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar))
    return NoiseSchedule(K=K, beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma)


def forward_diffuse(s: NoiseSchedule, a0: np.ndarray, k: int, eps: np.ndarray) -> np.ndarray:
    """Noise a clean trajectory to step k: sqrt(abar_k)*a0 + sqrt(1-abar_k)*eps."""
    s._check_k(k)
    a0 = np.asarray(a0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if a0.shape != eps.shape:
        raise ValueError(f"shape mismatch: a0 {a0.shape} vs eps {eps.shape}")
    abar = s.alpha_bar[k - 1]
    return np.sqrt(abar) * a0 + np.sqrt(1.0 - abar) * eps


def posterior_mean(s: NoiseSchedule, ak: np.ndarray, eps_hat: np.ndarray, k: int) -> np.ndarray:
    """Reverse-step mean: (ak - (1-alpha_k)/sqrt(1-abar_k) * eps_hat) / sqrt(alpha_k)."""
    s._check_k(k)
    ak = np.asarray(ak, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if ak.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: ak {ak.shape} vs eps_hat {eps_hat.shape}")
    alpha = s.alpha[k - 1]
    abar = s.alpha_bar[k - 1]
    return (ak - (1.0 - alpha) / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)


def estimate_clean(s: NoiseSchedule, ak: np.ndarray, eps_hat: np.ndarray, k: int,
                   clamp: bool = True) -> np.ndarray:
    """Closed-form clean-trajectory estimate from a noisy one.

    Returns (ak - sqrt(1-abar_k)*eps_hat) / sqrt(abar_k). With `clamp` the
    result is clipped to the normalized action range [-1, 1]; disable for
    algebraic-identity checks.
    """
    s._check_k(k)
    ak = np.asarray(ak, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if ak.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: ak {ak.shape} vs eps_hat {eps_hat.shape}")
    abar = s.alpha_bar[k - 1]
    a0 = (ak - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)
    if clamp:
        a0 = np.clip(a0, -1.0, 1.0)
    return a0
