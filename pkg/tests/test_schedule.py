import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trajdiff.schedule import (NoiseSchedule, estimate_clean, forward_diffuse,
                               make_schedule, posterior_mean)

from conftest import rel_err


def python_float_schedule(K, beta_start, beta_end):
    """Independent scalar oracle: plain-float linear betas and running product."""
    if K == 1:
        betas = [beta_start]
    else:
        betas = [beta_start + (beta_end - beta_start) * i / (K - 1) for i in range(K)]
    abars = []
    prod = 1.0
    for b in betas:
        prod *= (1.0 - b)
        abars.append(prod)
    return betas, abars


class TestMakeSchedule:
    def test_single_step(self):
        s = make_schedule(1, "linear", 1e-4, 1e-4)
        assert s.beta[0] == pytest.approx(1e-4)
        assert s.alpha[0] == pytest.approx(0.9999)
        assert s.alpha_bar[0] == pytest.approx(0.9999)

    def test_two_step_product(self):
        s = make_schedule(2, "linear", 0.1, 0.3)
        assert s.alpha_bar[1] == pytest.approx(0.9 * 0.7)

    @pytest.mark.parametrize("beta_end,expect_small", [(0.1, True), (0.02, False)])
    def test_k100_against_scalar_oracle(self, beta_end, expect_small):
        s = make_schedule(100, "linear", 1e-4, beta_end)
        _, abars = python_float_schedule(100, 1e-4, beta_end)
        assert rel_err(s.alpha_bar, np.array(abars)) < 1e-12
        assert np.all(np.diff(s.alpha_bar) < 0)
        # terminal signal: the default range drives abar below 0.01 at K=100,
        # the 0.02 range does not (oracle value 0.3636)
        assert (s.alpha_bar[-1] < 0.01) == expect_small
        if not expect_small:
            assert s.alpha_bar[-1] == pytest.approx(0.36356324805549217, rel=1e-12)

    def test_sigma_convention(self):
        s = make_schedule(5, "linear", 0.1, 0.3)
        assert s.sigma[0] == 0.0
        for k in range(2, 6):
            expected = math.sqrt(s.beta[k - 1] * (1 - s.alpha_bar[k - 2])
                                 / (1 - s.alpha_bar[k - 1]))
            assert s.sigma[k - 1] == pytest.approx(expected, rel=1e-12)
        assert np.all(s.sigma >= 0)

    @pytest.mark.parametrize("bad", [
        dict(K=0, kind="linear", beta_start=1e-4, beta_end=0.02),
        dict(K=10, kind="linear", beta_start=0.0, beta_end=0.02),
        dict(K=10, kind="linear", beta_start=0.03, beta_end=0.02),
        dict(K=10, kind="linear", beta_start=0.1, beta_end=1.0),
        dict(K=10, kind="cosine", beta_start=1e-4, beta_end=0.02),
    ])
    def test_rejects_bad_parameters(self, bad):
        with pytest.raises(ValueError):
            make_schedule(**bad)

    @given(K=st.integers(1, 200),
           beta_start=st.floats(1e-6, 0.05),
           spread=st.floats(0.0, 0.4))
    @settings(max_examples=50, deadline=None)
    def test_invariants_hold_for_any_schedule(self, K, beta_start, spread):
        s = make_schedule(K, "linear", beta_start, min(beta_start + spread, 0.999))
        assert np.all((s.beta > 0) & (s.beta < 1))
        assert np.array_equal(s.alpha, 1.0 - s.beta)
        assert rel_err(s.alpha_bar, np.cumprod(s.alpha)) == 0.0
        if K > 1:
            assert np.all(np.diff(s.alpha_bar) < 0)
        assert 0 < s.alpha_bar[-1] < 1
        assert s.sigma[0] == 0.0


class TestForwardAndInverse:
    def test_degenerate_coefficient_returns_clean(self):
        s = make_schedule(1, "linear", 1e-15, 1e-15)
        a0 = np.array([[0.4, -0.7]])
        eps = np.array([[2.0, -3.0]])
        assert np.allclose(forward_diffuse(s, a0, 1, eps), a0, atol=1e-6)

    def test_known_coefficient(self):
        s = make_schedule(2, "linear", 0.5, 0.5)  # abar_2 = 0.25
        out = forward_diffuse(s, np.array([2.0]), 2, np.array([0.0]))
        assert out == pytest.approx(1.0)

    def test_shape_mismatch_rejected(self):
        s = make_schedule(3, "linear", 0.1, 0.3)
        with pytest.raises(ValueError):
            forward_diffuse(s, np.zeros((2, 2)), 1, np.zeros((3, 2)))
        with pytest.raises(ValueError):
            forward_diffuse(s, np.zeros(2), 4, np.zeros(2))

    @given(arrays(np.float64, (4, 2), elements=st.floats(-1, 1)),
           arrays(np.float64, (4, 2), elements=st.floats(-5, 5)),
           st.integers(1, 9))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_identity(self, a0, eps, k):
        s = make_schedule(9, "linear", 1e-3, 0.4)
        ak = forward_diffuse(s, a0, k, eps)
        rec = estimate_clean(s, ak, eps, k, clamp=False)
        assert rel_err(rec, a0) < 1e-10 or np.allclose(rec, a0, atol=1e-10)


class TestPosteriorMean:
    def test_zero_noise_prediction(self):
        s = make_schedule(4, "linear", 0.2, 0.4)
        ak = np.array([[1.0, -2.0]])
        for k in (1, 4):
            expected = ak / math.sqrt(s.alpha[k - 1])
            assert np.allclose(posterior_mean(s, ak, np.zeros_like(ak), k), expected,
                               rtol=1e-14)

    def test_alpha_one_limit_is_identity(self):
        s = make_schedule(1, "linear", 1e-15, 1e-15)
        ak = np.array([0.3, -0.8])
        eps = np.array([1.0, 1.0])
        assert np.allclose(posterior_mean(s, ak, eps, 1), ak, atol=1e-6)

    def test_matches_hand_rolled_scalars(self):
        # three random inputs against a per-element plain-float evaluation
        s = make_schedule(3, "linear", 0.1, 0.3)
        rng = np.random.default_rng(7)
        for k in (1, 2, 3):
            ak = rng.standard_normal((2, 2))
            eps = rng.standard_normal((2, 2))
            alpha = 1.0 - (0.1 + (0.3 - 0.1) * (k - 1) / 2)
            abar = 1.0
            for i in range(k):
                abar *= 1.0 - (0.1 + (0.3 - 0.1) * i / 2)
            expected = np.empty_like(ak)
            for i in range(2):
                for j in range(2):
                    expected[i, j] = (ak[i, j] - (1.0 - alpha)
                                      / math.sqrt(1.0 - abar) * eps[i, j]) \
                                     / math.sqrt(alpha)
            assert rel_err(posterior_mean(s, ak, eps, k), expected) < 1e-12


class TestEstimateClean:
    def test_zero_noise_with_and_without_clamp(self):
        s = make_schedule(2, "linear", 0.5, 0.5)  # abar_2 = 0.25
        ak = np.array([1.0])
        zero = np.zeros(1)
        assert estimate_clean(s, ak, zero, 2, clamp=False) == pytest.approx(2.0)
        assert estimate_clean(s, ak, zero, 2) == pytest.approx(1.0)

    def test_requires_valid_step(self):
        s = make_schedule(2, "linear", 0.1, 0.2)
        with pytest.raises(ValueError):
            estimate_clean(s, np.zeros(1), np.zeros(1), 3)

    @given(arrays(np.float64, (3, 2), elements=st.floats(-2, 2)),
           arrays(np.float64, (3, 2), elements=st.floats(-2, 2)),
           st.integers(1, 6), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=50, deadline=None)
    def test_linearity_of_both_maps(self, x, y, k, a, b):
        s = make_schedule(6, "linear", 0.05, 0.3)
        for f in (lambda v, e: posterior_mean(s, v, e, k),
                  lambda v, e: estimate_clean(s, v, e, k, clamp=False)):
            lhs = f(a * x + b * y, a * y + b * x)
            rhs = a * f(x, y) + b * f(y, x)
            assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)
