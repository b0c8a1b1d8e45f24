import numpy as np
import pytest

from trajdiff.denoiser import NetDims, init_params
from trajdiff.observation import Observation

# small enough that exhaustive finite differences stay fast
TINY_DIMS = NetDims(cloud_dim=2, state_dim=3, obs_horizon=2, horizon=3,
                    action_dim=2, encoder_hidden=6, feature_dim=5,
                    film_hidden=8, time_embed_dim=8, trunk_widths=(10, 9))


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise relative error with a small absolute floor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def random_observation(rng: np.random.Generator, dims: NetDims,
                       n_points: int = 4) -> Observation:
    clouds = rng.uniform(-1, 1, size=(dims.obs_horizon, n_points, dims.cloud_dim))
    states = rng.uniform(-1, 1, size=(dims.obs_horizon, dims.state_dim))
    return Observation(clouds=clouds, states=states)


@pytest.fixture
def tiny_params():
    rng = np.random.default_rng(42)
    p = init_params(TINY_DIMS, rng, prediction_type="epsilon")
    # break the zero/identity init so gradients flow everywhere
    scramble = np.random.default_rng(43)
    for name, arr in p.items():
        arr += 0.1 * scramble.standard_normal(arr.shape)
    return p
