"""Conditional noise-prediction network.

Architecture: a permutation-invariant per-point MLP encoder over the object
cloud (optional additive skip around the second block, then max-pool and a
linear projection), a FiLM head that maps the fused observation feature to
per-layer scale/shift pairs, and an MLP trunk over the flattened trajectory
concatenated with a sinusoidal timestep embedding. Each trunk hidden layer h
is modulated gamma * h + beta.

Everything is float64 numpy with hand-written reverse mode; gradients are
verified against central finite differences in the test suite. The network
output is the predicted noise in `epsilon` mode, or the predicted clean
trajectory in `sample` mode (converted to implied noise by `predict_noise`
so samplers have a single code path).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .observation import Observation
from .schedule import NoiseSchedule

PREDICTION_TYPES = ("epsilon", "sample")
ENCODER_MODES = ("mlp", "mlp-residual")


@dataclass(frozen=True)
class NetDims:
    """Layer sizes; all weight shapes derive from these."""

    cloud_dim: int = 2
    state_dim: int = 3
    obs_horizon: int = 2
    horizon: int = 16
    action_dim: int = 2
    encoder_hidden: int = 32
    feature_dim: int = 64
    film_hidden: int = 64
    time_embed_dim: int = 64
    trunk_widths: tuple[int, ...] = (256, 256, 256)

    @property
    def cond_dim(self) -> int:
        return self.obs_horizon * (self.feature_dim + self.state_dim)

    @property
    def trunk_in(self) -> int:
        return self.time_embed_dim + self.horizon * self.action_dim

    @property
    def flat_action(self) -> int:
        return self.horizon * self.action_dim

    def validate(self) -> None:
        if self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be even")
        for name in ("cloud_dim", "state_dim", "obs_horizon", "horizon",
                     "action_dim", "encoder_hidden", "feature_dim",
                     "film_hidden", "time_embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if len(self.trunk_widths) < 1 or any(w < 1 for w in self.trunk_widths):
            raise ValueError("trunk_widths must be a nonempty tuple of positive ints")


@dataclass
class DenoiserParams:
    """All trainable arrays. Field order is the checkpoint declaration order."""

    dims: NetDims
    prediction_type: str
    encoder_mode: str
    enc_w1: np.ndarray
    enc_b1: np.ndarray
    enc_w2: np.ndarray
    enc_b2: np.ndarray
    enc_wp: np.ndarray
    enc_bp: np.ndarray
    film_w1: np.ndarray
    film_b1: np.ndarray
    film_wg: list[np.ndarray] = field(default_factory=list)
    film_bg: list[np.ndarray] = field(default_factory=list)
    film_wb: list[np.ndarray] = field(default_factory=list)
    film_bb: list[np.ndarray] = field(default_factory=list)
    trunk_w: list[np.ndarray] = field(default_factory=list)
    trunk_b: list[np.ndarray] = field(default_factory=list)
    out_w: np.ndarray = None
    out_b: np.ndarray = None

    def items(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in declaration order; layer lists are expanded."""
        out = [("enc_w1", self.enc_w1), ("enc_b1", self.enc_b1),
               ("enc_w2", self.enc_w2), ("enc_b2", self.enc_b2),
               ("enc_wp", self.enc_wp), ("enc_bp", self.enc_bp),
               ("film_w1", self.film_w1), ("film_b1", self.film_b1)]
        for i in range(len(self.trunk_w)):
            out += [(f"film_wg{i}", self.film_wg[i]), (f"film_bg{i}", self.film_bg[i]),
                    (f"film_wb{i}", self.film_wb[i]), (f"film_bb{i}", self.film_bb[i]),
                    (f"trunk_w{i}", self.trunk_w[i]), (f"trunk_b{i}", self.trunk_b[i])]
        out += [("out_w", self.out_w), ("out_b", self.out_b)]
        return out

    def get(self, name: str) -> np.ndarray:
        return dict(self.items())[name]

    def set_(self, name: str, value: np.ndarray) -> None:
        for prefix, lst in (("film_wg", self.film_wg), ("film_bg", self.film_bg),
                            ("film_wb", self.film_wb), ("film_bb", self.film_bb),
                            ("trunk_w", self.trunk_w), ("trunk_b", self.trunk_b)):
            if name.startswith(prefix) and name[len(prefix):].isdigit():
                lst[int(name[len(prefix):])] = value
                return
        setattr(self, name, value)


def init_params(dims: NetDims, rng: np.random.Generator,
                prediction_type: str = "epsilon",
                encoder_mode: str = "mlp-residual") -> DenoiserParams:
    """Glorot-uniform init; FiLM heads start at identity (gamma 1, beta 0)
    and the output layer at zero, so the untrained net predicts zeros and
    ignores the observation."""
    dims.validate()
    if prediction_type not in PREDICTION_TYPES:
        raise ValueError(f"prediction_type must be one of {PREDICTION_TYPES}")
    if encoder_mode not in ENCODER_MODES:
        raise ValueError(f"encoder_mode must be one of {ENCODER_MODES}")

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    d, he, f = dims.cloud_dim, dims.encoder_hidden, dims.feature_dim
    hf, c = dims.film_hidden, dims.cond_dim
    p = DenoiserParams(
        dims=dims, prediction_type=prediction_type, encoder_mode=encoder_mode,
        enc_w1=glorot(d, he), enc_b1=np.zeros(he),
        enc_w2=glorot(he, he), enc_b2=np.zeros(he),
        enc_wp=glorot(he, f), enc_bp=np.zeros(f),
        film_w1=glorot(c, hf), film_b1=np.zeros(hf),
    )
    prev = dims.trunk_in
    for width in dims.trunk_widths:
        p.film_wg.append(np.zeros((hf, width)))
        p.film_bg.append(np.ones(width))
        p.film_wb.append(np.zeros((hf, width)))
        p.film_bb.append(np.zeros(width))
        p.trunk_w.append(glorot(prev, width))
        p.trunk_b.append(np.zeros(width))
        prev = width
    p.out_w = np.zeros((prev, dims.flat_action))
    p.out_b = np.zeros(dims.flat_action)
    return p


def timestep_embedding(k: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer diffusion steps, shape (B, dim)."""
    k = np.asarray(k, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = k[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def encode_points(params: DenoiserParams, cloud: np.ndarray) -> np.ndarray:
    """Order-independent feature of one cloud (P, d) -> (feature_dim,)."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[0] == 0:
        raise ValueError(f"cloud must be (P, d) with P >= 1, got {cloud.shape}")
    feats, _ = _encode_clouds(params, cloud[None])
    return feats[0]


def _encode_clouds(params: DenoiserParams, clouds: np.ndarray):
    """Batched encoder over (M, P, d) -> (M, F) plus backward cache."""
    h1 = np.tanh(clouds @ params.enc_w1 + params.enc_b1)       # (M, P, He)
    h2 = np.tanh(h1 @ params.enc_w2 + params.enc_b2)           # (M, P, He)
    h = h1 + h2 if params.encoder_mode == "mlp-residual" else h2
    arg = h.argmax(axis=1)                                     # (M, He)
    pooled = np.take_along_axis(h, arg[:, None, :], axis=1)[:, 0, :]
    feats = pooled @ params.enc_wp + params.enc_bp             # (M, F)
    cache = dict(clouds=clouds, h1=h1, h2=h2, arg=arg, pooled=pooled)
    return feats, cache


def _films_from_cond(params: DenoiserParams, cond: np.ndarray):
    """Fused observation feature (B, cond_dim) -> per-layer (gamma, beta)."""
    u = np.tanh(cond @ params.film_w1 + params.film_b1)        # (B, Hf)
    films = [(u @ wg + bg, u @ wb + bb)
             for wg, bg, wb, bb in zip(params.film_wg, params.film_bg,
                                       params.film_wb, params.film_bb)]
    return films, u


def _condition(params: DenoiserParams, clouds: np.ndarray, states: np.ndarray):
    """Observation -> per-layer FiLM pairs. clouds (B,T_o,P,d), states (B,T_o,sd).

    Static scenes repeat the same cloud in every history frame; when frames
    are bit-identical the encoder runs once per item and the feature is
    tiled (the backward pass sums the frame cotangents accordingly).
    """
    b, t_o = clouds.shape[:2]
    dedup = t_o > 1 and all(np.array_equal(clouds[:, 0], clouds[:, i])
                            for i in range(1, t_o))
    if dedup:
        feats0, enc_cache = _encode_clouds(params, clouds[:, 0])
        feats = np.tile(feats0[:, None, :], (1, t_o, 1)).reshape(b, -1)
    else:
        f, enc_cache = _encode_clouds(params, clouds.reshape((-1,) + clouds.shape[2:]))
        feats = f.reshape(b, -1)
    cond = np.concatenate([feats, states.reshape(b, -1)], axis=1)
    films, u = _films_from_cond(params, cond)
    cache = dict(enc=enc_cache, cond=cond, u=u, batch=b, t_o=t_o, dedup=dedup)
    return films, cache


def _trunk_forward(params: DenoiserParams, ak: np.ndarray, k: np.ndarray, films):
    """Trunk pass. ak (B, n, a), k (B,), films list of (gamma, beta) or None
    for the unmodulated trunk. Returns (out (B, n, a), cache)."""
    dims = params.dims
    b = ak.shape[0]
    emb = timestep_embedding(k, dims.time_embed_dim)
    t_in = np.concatenate([emb, ak.reshape(b, -1)], axis=1)
    h = t_in
    inputs, acts = [], []
    for i, (w, bias) in enumerate(zip(params.trunk_w, params.trunk_b)):
        inputs.append(h)
        a = np.tanh(h @ w + bias)
        acts.append(a)
        if films is not None:
            gamma, beta = films[i]
            h = gamma * a + beta
        else:
            h = a
    inputs.append(h)
    out = h @ params.out_w + params.out_b
    cache = dict(t_in=t_in, inputs=inputs, acts=acts, films=films, batch=b)
    return out.reshape(b, dims.horizon, dims.action_dim), cache


def _forward(params: DenoiserParams, ak: np.ndarray, k: np.ndarray,
             clouds: np.ndarray, states: np.ndarray):
    """Full batched forward; returns raw output (B, n, a) and caches."""
    films, cond_cache = _condition(params, clouds, states)
    out, trunk_cache = _trunk_forward(params, ak, k, films)
    return out, (cond_cache, trunk_cache)


def _trunk_input_vjp(params: DenoiserParams, trunk_cache, cot: np.ndarray) -> np.ndarray:
    """Cotangent (B, n, a) of the raw output -> gradient w.r.t. ak only."""
    dims = params.dims
    b = trunk_cache["batch"]
    dh = cot.reshape(b, -1) @ params.out_w.T
    films = trunk_cache["films"]
    for i in reversed(range(len(params.trunk_w))):
        a = trunk_cache["acts"][i]
        da = dh * films[i][0] if films is not None else dh
        dz = da * (1.0 - a * a)
        dh = dz @ params.trunk_w[i].T
    return dh[:, dims.time_embed_dim:].reshape(b, dims.horizon, dims.action_dim)


def _backward(params: DenoiserParams, caches, cot: np.ndarray) -> dict[str, np.ndarray]:
    """Full parameter gradients for cotangent (B, n, a) on the raw output."""
    cond_cache, trunk_cache = caches
    dims = params.dims
    b = trunk_cache["batch"]
    grads: dict[str, np.ndarray] = {}

    dflat = cot.reshape(b, -1)
    h_last = trunk_cache["inputs"][-1]
    grads["out_w"] = h_last.T @ dflat
    grads["out_b"] = dflat.sum(axis=0)
    dh = dflat @ params.out_w.T

    u = cond_cache["u"]
    du = np.zeros_like(u)
    for i in reversed(range(len(params.trunk_w))):
        a = trunk_cache["acts"][i]
        gamma, _ = trunk_cache["films"][i]
        dgamma = dh * a
        dbeta = dh
        grads[f"film_wg{i}"] = u.T @ dgamma
        grads[f"film_bg{i}"] = dgamma.sum(axis=0)
        grads[f"film_wb{i}"] = u.T @ dbeta
        grads[f"film_bb{i}"] = dbeta.sum(axis=0)
        du += dgamma @ params.film_wg[i].T + dbeta @ params.film_wb[i].T
        da = dh * gamma
        dz = da * (1.0 - a * a)
        grads[f"trunk_w{i}"] = trunk_cache["inputs"][i].T @ dz
        grads[f"trunk_b{i}"] = dz.sum(axis=0)
        dh = dz @ params.trunk_w[i].T

    cond = cond_cache["cond"]
    dz_u = du * (1.0 - u * u)
    grads["film_w1"] = cond.T @ dz_u
    grads["film_b1"] = dz_u.sum(axis=0)
    dcond = dz_u @ params.film_w1.T

    feat_width = dims.obs_horizon * dims.feature_dim
    dfeats = dcond[:, :feat_width].reshape(-1, dims.feature_dim)
    if cond_cache["dedup"]:
        dfeats = dfeats.reshape(b, cond_cache["t_o"], dims.feature_dim).sum(axis=1)

    enc = cond_cache["enc"]
    grads["enc_wp"] = enc["pooled"].T @ dfeats
    grads["enc_bp"] = dfeats.sum(axis=0)
    dpooled = dfeats @ params.enc_wp.T                         # (M, He)

    h1, h2, arg = enc["h1"], enc["h2"], enc["arg"]
    dh_points = np.zeros_like(h1)
    np.put_along_axis(dh_points, arg[:, None, :], dpooled[:, None, :], axis=1)
    if params.encoder_mode == "mlp-residual":
        dh1 = dh_points.copy()
        dh2 = dh_points
    else:
        dh1 = np.zeros_like(dh_points)
        dh2 = dh_points
    dz2 = dh2 * (1.0 - h2 * h2)
    grads["enc_w2"] = h1.reshape(-1, h1.shape[-1]).T @ dz2.reshape(-1, dz2.shape[-1])
    grads["enc_b2"] = dz2.sum(axis=(0, 1))
    dh1 += dz2 @ params.enc_w2.T
    dz1 = dh1 * (1.0 - h1 * h1)
    x = enc["clouds"]
    grads["enc_w1"] = x.reshape(-1, x.shape[-1]).T @ dz1.reshape(-1, dz1.shape[-1])
    grads["enc_b1"] = dz1.sum(axis=(0, 1))
    return grads


def _obs_batch(obs: Observation) -> tuple[np.ndarray, np.ndarray]:
    return obs.clouds[None].astype(np.float64), obs.states[None].astype(np.float64)


def _to_implied_noise(s: NoiseSchedule, ak: np.ndarray, k: int,
                      raw: np.ndarray) -> np.ndarray:
    """sample-mode output is a clean-trajectory prediction; invert the
    forward relation so downstream code always consumes noise."""
    abar = s.alpha_bar[k - 1]
    return (ak - np.sqrt(abar) * raw) / np.sqrt(1.0 - abar)


def predict_noise(params: DenoiserParams, s: NoiseSchedule, ak: np.ndarray,
                  k: int, obs: Observation) -> np.ndarray:
    """Predicted noise for one normalized trajectory (n, action_dim)."""
    s._check_k(k)
    dims = params.dims
    ak = np.asarray(ak, dtype=np.float64)
    if ak.shape != (dims.horizon, dims.action_dim):
        raise ValueError(f"trajectory shape {ak.shape} != "
                         f"({dims.horizon}, {dims.action_dim})")
    clouds, states = _obs_batch(obs)
    raw, _ = _forward(params, ak[None], np.array([k]), clouds, states)
    raw = raw[0]
    if params.prediction_type == "sample":
        return _to_implied_noise(s, ak, k, raw)
    return raw


def denoiser_vjp(params: DenoiserParams, s: NoiseSchedule, ak: np.ndarray, k: int,
                 obs: Observation, cotangent: np.ndarray) -> np.ndarray:
    """(d predict_noise / d ak)^T @ cotangent, observation and k held fixed."""
    s._check_k(k)
    ak = np.asarray(ak, dtype=np.float64)
    cotangent = np.asarray(cotangent, dtype=np.float64)
    clouds, states = _obs_batch(obs)
    films, _ = _condition(params, clouds, states)
    _, trunk_cache = _trunk_forward(params, ak[None], np.array([k]), films)
    if params.prediction_type == "sample":
        abar = s.alpha_bar[k - 1]
        raw_vjp = _trunk_input_vjp(params, trunk_cache, cotangent[None])[0]
        return (cotangent - np.sqrt(abar) * raw_vjp) / np.sqrt(1.0 - abar)
    return _trunk_input_vjp(params, trunk_cache, cotangent[None])[0]
