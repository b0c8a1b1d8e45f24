import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trajdiff.costs import (GuidanceConfig, base_rho, closest_point,
                            cost_gradient, guidance_gradient, trajectory_cost)
from trajdiff.denoiser import init_params
from trajdiff.normalize import NormalizationStats
from trajdiff.sampling import ConditionedDenoiser
from trajdiff.schedule import estimate_clean, make_schedule

from conftest import TINY_DIMS, random_observation, rel_err

MASK = (0, 1)
SCHED = make_schedule(4, "linear", 0.5, 0.5)  # abar = 0.5, 0.25, 0.125, 0.0625
IDENTITY = NormalizationStats.identity(2, 3, 2)


class RefusingModel:
    """Stub that fails the test if the guidance path touches the denoiser."""

    shape = (3, 2)

    def predict(self, ak, k):
        raise AssertionError("denoiser consulted")

    def vjp(self, ak, k, cot):
        raise AssertionError("denoiser consulted")


class TestClosestPoint:
    def test_smallest_norm_wins(self):
        clouds = [np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 3.0]])]
        assert np.array_equal(closest_point(clouds, np.zeros(2)), [1.0, 0.0])

    def test_singleton(self):
        pt = np.array([[0.3, -0.4]])
        for ee in ([0, 0], [5, 5], [-1, 2]):
            assert np.array_equal(closest_point([pt], np.array(ee)), pt[0])

    def test_empty_signals_no_obstacle(self):
        assert closest_point([], np.zeros(2)) is None
        assert closest_point([np.zeros((0, 2))], np.zeros(2)) is None

    def test_matches_brute_force_with_stable_ties(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(1000, 2)).round(1)  # rounding forces ties
        clouds = [pts[:400], pts[400:]]
        ee = np.array([0.05, -0.05])
        best_i, best_d = 0, np.inf
        for i, p in enumerate(pts):
            d = float(np.sum((p - ee) ** 2))
            if d < best_d:
                best_i, best_d = i, d
        assert np.array_equal(closest_point(clouds, ee), pts[best_i])


class TestTrajectoryCost:
    def test_hinge_arithmetic(self):
        a = np.array([[0.3, 0.0]])
        assert trajectory_cost(a, np.zeros(2), 0.5, MASK) == pytest.approx(0.2)

    def test_zero_beyond_safety_distance(self):
        a = np.array([[2.0, 0.0], [0.0, -3.0]])
        assert trajectory_cost(a, np.zeros(2), 0.5, MASK) == 0.0

    def test_matches_per_waypoint_sum(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-1, 1, size=(16, 2))
        c = np.array([0.1, -0.2])
        expected = 0.0
        for w in a:
            d = float(np.hypot(w[0] - c[0], w[1] - c[1]))
            expected += max(0.0, 0.6 - d)
        assert trajectory_cost(a, c, 0.6, MASK) == pytest.approx(expected, rel=1e-12)

    def test_masked_dimensions_only(self):
        a = np.array([[0.0, 5.0]])
        assert trajectory_cost(a, np.zeros(2), 0.5, (0,)) == pytest.approx(0.5)

    @given(arrays(np.float64, (5, 2), elements=st.floats(-2, 2)),
           st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=50, deadline=None)
    def test_translation_invariance(self, a, tx, ty):
        t = np.array([tx, ty])
        c = np.array([0.2, -0.1])
        assert trajectory_cost(a + t, c + t, 0.5, MASK) == pytest.approx(
            trajectory_cost(a, c, 0.5, MASK), rel=1e-9, abs=1e-9)

    @given(arrays(np.float64, (5, 2), elements=st.floats(-2, 2)))
    @settings(max_examples=50, deadline=None)
    def test_nonnegative_and_zero_iff_clear(self, a):
        c = np.array([0.0, 0.0])
        cost = trajectory_cost(a, c, 0.4, MASK)
        assert cost >= 0.0
        violated = np.any(np.hypot(a[:, 0], a[:, 1]) < 0.4)
        assert (cost > 0) == bool(violated)


class TestCostGradient:
    def test_unit_vector_pushes_away(self):
        g = cost_gradient(np.array([[1.0, 0.0]]), np.zeros(2), 2.0, MASK)
        assert np.allclose(g, [[-1.0, 0.0]])
        # subtracting rho*g moves the waypoint toward +x, away from the obstacle

    def test_zero_rows_beyond_safety_distance(self):
        a = np.array([[3.0, 0.0], [0.1, 0.0]])
        g = cost_gradient(a, np.zeros(2), 0.5, MASK)
        assert np.array_equal(g[0], [0.0, 0.0])
        assert np.any(g[1] != 0)

    def test_boundary_is_inclusive(self):
        g = cost_gradient(np.array([[0.5, 0.0]]), np.zeros(2), 0.5, MASK)
        assert np.allclose(g, [[-1.0, 0.0]])

    def test_unmasked_dimension_gets_zero(self):
        g = cost_gradient(np.array([[0.1, 0.7]]), np.zeros(2), 1.0, (0,))
        assert g[0, 1] == 0.0
        assert g[0, 0] == pytest.approx(-1.0)

    def test_degenerate_distance_fallback(self, caplog):
        g = cost_gradient(np.array([[0.0, 0.0]]), np.zeros(2), 0.5, MASK)
        assert np.array_equal(g, [[-1.0, 0.0]])

    def test_matches_finite_differences_away_from_kink(self):
        rng = np.random.default_rng(2)
        c = np.array([0.05, -0.1])
        q = 0.5
        a = rng.uniform(-1, 1, size=(12, 2))
        # keep points away from both the hinge kink and the center
        d = np.hypot(a[:, 0] - c[0], a[:, 1] - c[1])
        a = a[(np.abs(d - q) > 0.05) & (d > 0.05)]
        g = cost_gradient(a, c, q, MASK)
        h = 1e-6
        for i in range(len(a)):
            for j in range(2):
                up, down = a.copy(), a.copy()
                up[i, j] += h
                down[i, j] -= h
                fd = (trajectory_cost(up, c, q, MASK)
                      - trajectory_cost(down, c, q, MASK)) / (2 * h)
                assert rel_err(fd, g[i, j]) < 1e-6 or abs(fd - g[i, j]) < 1e-9


class TestGuidanceGradient:
    def cfg(self, **kw):
        base = dict(rho=1.0, q_star=0.5, mode="clean_estimate",
                    grad_mode="full_vjp", coord_mask=MASK)
        base.update(kw)
        return GuidanceConfig(**base)

    def model(self, seed=0, scramble=True):
        params = init_params(TINY_DIMS, np.random.default_rng(seed))
        if scramble:
            rng = np.random.default_rng(seed + 1)
            for _, arr in params.items():
                arr += 0.1 * rng.standard_normal(arr.shape)
        obs = random_observation(np.random.default_rng(3), TINY_DIMS)
        return ConditionedDenoiser(params, SCHED, obs)

    def test_zero_cost_gradient_gives_zero_everywhere(self):
        ak = np.full((3, 2), 5.0)  # clean estimate clamps to 1, far from c_ob
        c = np.array([100.0, 100.0])
        for mode in ("clean_estimate", "noisy_baseline"):
            for gm in ("full_vjp", "frozen_eps"):
                g = guidance_gradient(self.cfg(mode=mode, grad_mode=gm), SCHED,
                                      self.model(), ak, 2, c, IDENTITY)
                assert np.array_equal(g, np.zeros((3, 2)))

    def test_zero_jacobian_makes_full_vjp_equal_frozen(self):
        # untouched init has a zero output head, so the denoiser Jacobian is 0
        model = self.model(scramble=False)
        ak = np.array([[0.2, 0.0], [0.0, 0.1], [-0.2, -0.1]])
        c = np.zeros(2)
        full = guidance_gradient(self.cfg(), SCHED, model, ak, 2, c, IDENTITY)
        frozen = guidance_gradient(self.cfg(grad_mode="frozen_eps"), SCHED, model,
                                   ak, 2, c, IDENTITY)
        assert np.array_equal(full, frozen)
        assert np.any(full != 0)

    def test_frozen_eps_scales_by_inverse_sqrt_abar(self):
        model = self.model(scramble=False)  # predicts zero noise
        ak = np.array([[0.2, 0.0], [0.0, 0.1], [-0.2, -0.1]])
        c = np.zeros(2)
        k = 2  # abar = 0.25 -> factor 2
        a0 = estimate_clean(SCHED, ak, np.zeros_like(ak), k)
        expected = 2.0 * cost_gradient(a0, c, 0.5, MASK)
        g = guidance_gradient(self.cfg(grad_mode="frozen_eps"), SCHED, model,
                              ak, k, c, IDENTITY)
        assert np.allclose(g, expected, rtol=1e-12)

    def test_noisy_baseline_never_consults_denoiser(self):
        ak = np.array([[0.1, 0.0], [0.6, 0.6], [0.0, -0.2]])
        g = guidance_gradient(self.cfg(mode="noisy_baseline"), SCHED,
                              RefusingModel(), ak, 3, np.zeros(2), IDENTITY)
        expected = cost_gradient(ak, np.zeros(2), 0.5, MASK)
        assert np.array_equal(g, expected)

    def test_mode_none_rejected(self):
        with pytest.raises(ValueError):
            guidance_gradient(self.cfg(mode="none"), SCHED, self.model(),
                              np.zeros((3, 2)), 1, np.zeros(2), IDENTITY)

    def test_unresolved_q_star_rejected(self):
        with pytest.raises(ValueError):
            guidance_gradient(self.cfg(q_star=None), SCHED, self.model(),
                              np.zeros((3, 2)), 1, np.zeros(2), IDENTITY)

    def test_world_gradient_mapped_through_action_scale(self):
        # action range [0, 2] -> scale 1 per unit, offset: normalized 0 = world 1
        stats = NormalizationStats(np.zeros(2), np.full(2, 2.0),
                                   -np.ones(3), np.ones(3),
                                   -np.ones(2), np.ones(2))
        ak = np.zeros((3, 2))  # world position (1, 1)
        c = np.array([1.0, 0.5])
        g = guidance_gradient(self.cfg(mode="noisy_baseline"), SCHED,
                              RefusingModel(), ak, 1, c, stats)
        world = cost_gradient(np.ones((3, 2)), c, 0.5, MASK)
        assert np.allclose(g, stats.action_scale() * world)


def test_base_rho_reference_displacement():
    stats = NormalizationStats(np.zeros(2), np.full(2, 2.0),
                               -np.ones(3), np.ones(3), -np.ones(2), np.ones(2))
    rho = base_rho(stats, q_star=0.12, K=100, coord_mask=MASK)
    assert rho == pytest.approx(0.12 / 100.0)
