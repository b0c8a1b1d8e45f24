"""Denoising objective and Adam loop.

A batch is a dict of normalized float64 arrays: ``clouds`` (B, T_o, P, d),
``states`` (B, T_o, state_dim), ``actions`` (B, n, action_dim). Each step
draws one diffusion index and one noise array per item, noises the clean
action sequence, and regresses the network output onto the noise
(epsilon mode) or the clean sequence (sample mode).

Training is single threaded and deterministic given the generator's seed:
the only draws per step are the indices, k, and eps, in that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import denoiser
from .denoiser import DenoiserParams
from .errors import DivergenceError
from .schedule import NoiseSchedule


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: DenoiserParams) -> AdamState:
    state = AdamState()
    for name, arr in params.items():
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_update(params: DenoiserParams, grads: dict[str, np.ndarray],
                state: AdamState, lr: float = 1e-3,
                beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> None:
    """One bias-corrected Adam step, applied in place."""
    state.step += 1
    t = state.step
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    for name, arr in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        denom = np.sqrt(v / bias2)
        denom += eps
        arr -= (lr / bias1) * m / denom


def train_step(params: DenoiserParams, opt_state: AdamState, s: NoiseSchedule,
               batch: dict[str, np.ndarray], rng: np.random.Generator,
               lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
               ) -> tuple[DenoiserParams, AdamState, float]:
    """One SGD step; mutates params/opt_state in place and returns the loss."""
    a0 = batch["actions"]
    b = a0.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    k = rng.integers(1, s.K + 1, size=b)
    eps = rng.standard_normal(a0.shape)
    abar = s.alpha_bar[k - 1][:, None, None]
    ak = np.sqrt(abar) * a0 + np.sqrt(1.0 - abar) * eps

    out, caches = denoiser._forward(params, ak, k, batch["clouds"], batch["states"])
    target = eps if params.prediction_type == "epsilon" else a0
    resid = out - target
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise DivergenceError(
            f"non-finite training loss at optimizer step {opt_state.step + 1} "
            f"(|out| max {np.abs(out).max():.3e})", step=opt_state.step + 1)

    grads = denoiser._backward(params, caches, 2.0 * resid / resid.size)
    adam_update(params, grads, opt_state, lr=lr, beta1=beta1, beta2=beta2)
    return params, opt_state, loss


def train(params: DenoiserParams, s: NoiseSchedule, sampler, steps: int,
          batch_size: int, rng: np.random.Generator, lr: float = 1e-3,
          log_every: int = 0) -> np.ndarray:
    """Run `steps` optimizer steps; `sampler(rng, batch_size)` yields batches.

    Returns the per-step loss history.
    """
    opt_state = init_adam(params)
    losses = np.empty(steps)
    for i in range(steps):
        batch = sampler(rng, batch_size)
        _, _, losses[i] = train_step(params, opt_state, s, batch, rng, lr=lr)
        if log_every and (i + 1) % log_every == 0:
            window = losses[max(0, i + 1 - log_every):i + 1]
            print(f"step {i + 1}/{steps}  loss {window.mean():.4f}")
    return losses
