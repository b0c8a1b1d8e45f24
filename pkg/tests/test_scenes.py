import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajdiff.errors import ObjectAbsentError
from trajdiff.scenes import (Disc, Polygon, Rect, Scene, SceneObject,
                             effective_radius, generate_scene, object_cloud,
                             observe, point_segment_distance,
                             sample_object_cloud, shape_centroid)


class TestSceneGeneration:
    def test_same_seed_identical(self):
        for task in ("reach", "reach_with_distractors", "reach_around"):
            assert generate_scene(task, 11) == generate_scene(task, 11)

    def test_unknown_task_rejected(self):
        with pytest.raises(ValueError):
            generate_scene("juggle", 0)

    def test_obstacle_centroid_on_segment(self):
        for seed in range(30):
            scene = generate_scene("reach_around", seed)
            obstacle = scene.object("obstacle")
            start = np.asarray(scene.start)
            target = scene.target_centroid()
            d = point_segment_distance(obstacle.centroid()[None], start, target)[0]
            assert d <= scene.ee_radius + 1e-9

    def test_hundred_seeds_distinct_targets(self):
        targets = {tuple(generate_scene("reach", s).target_centroid().round(12))
                   for s in range(100)}
        assert len(targets) == 100

    def test_target_position_shared_with_distractor_task(self):
        for seed in (0, 5, 9):
            a = generate_scene("reach", seed)
            b = generate_scene("reach_with_distractors", seed)
            assert np.allclose(a.target_centroid(), b.target_centroid())
            assert len(b.objects) > len(a.objects)

    def test_scene_invariants(self):
        for seed in range(20):
            scene = generate_scene("reach_around", seed)
            labels = [o.label for o in scene.objects]
            assert len(set(labels)) == len(labels)
            assert not set(scene.target_labels) & set(scene.obstacle_labels)
            x0, y0, x1, y1 = scene.workspace
            assert x0 <= scene.start[0] <= x1 and y0 <= scene.start[1] <= y1
            for o in scene.objects:
                c = o.centroid()
                assert x0 <= c[0] <= x1 and y0 <= c[1] <= y1
            assert scene.q_star > 0

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError):
            Scene(task="reach", seed=0, workspace=(0, 0, 1, 1), start=(0.1, 0.1),
                  ee_radius=0.03, q_star=0.1,
                  objects=(SceneObject("a", Disc(0.1), (0.5, 0.5, 0.0)),
                           SceneObject("a", Disc(0.1), (0.6, 0.5, 0.0))),
                  target_labels=("a",), obstacle_labels=())


class TestObjectClouds:
    def test_disc_points_within_radius(self):
        pts = sample_object_cloud(Disc(1.0), 512, seed=3)
        assert np.all(np.linalg.norm(pts, axis=1) <= 1.0)

    def test_rect_points_within_bounds(self):
        pts = sample_object_cloud(Rect(0.4, 0.2), 256, seed=4)
        assert np.all(np.abs(pts[:, 0]) <= 0.2) and np.all(np.abs(pts[:, 1]) <= 0.1)

    def test_polygon_points_inside(self):
        tri = Polygon(((0, 0), (1, 0), (0, 1)))
        pts = sample_object_cloud(tri, 128, seed=5)
        assert np.all(pts[:, 0] + pts[:, 1] <= 1.0 + 1e-12)
        assert np.all(pts >= -1e-12)

    def test_same_seed_reproducible(self):
        a = sample_object_cloud(Disc(0.5), 64, seed=9)
        b = sample_object_cloud(Disc(0.5), 64, seed=9)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("shape", [
        Disc(0.7), Rect(0.8, 0.3), Polygon(((-0.2, -0.1), (0.4, -0.1), (0.1, 0.5))),
    ])
    def test_monte_carlo_centroid(self, shape):
        pts = sample_object_cloud(shape, 1024, seed=6)
        true = shape_centroid(shape)
        scale = effective_radius(shape)
        assert np.linalg.norm(pts.mean(axis=0) - true) < 0.05 * scale


class TestObserve:
    def states(self):
        return np.array([[0.2, 0.5, 0.0], [0.25, 0.5, 0.0]])

    def test_distractor_insertion_is_invisible(self):
        plain = generate_scene("reach", 21)
        cluttered = generate_scene("reach_with_distractors", 21)
        a = observe(plain, ("target",), self.states())
        b = observe(cluttered, ("target",), self.states())
        assert np.array_equal(a.clouds, b.clouds)
        assert np.array_equal(a.states, b.states)

    def test_single_label_equals_object_cloud(self):
        scene = generate_scene("reach", 2)
        obs = observe(scene, ("target",), self.states(), n_points=64)
        assert np.array_equal(obs.clouds[0], object_cloud(scene, "target", 64))
        assert np.array_equal(obs.clouds[0], obs.clouds[1])

    def test_downsample_is_deterministic_and_sized(self):
        scene = generate_scene("reach_with_distractors", 3)
        labels = tuple(o.label for o in scene.objects)
        a = observe(scene, labels, self.states(), n_points=64)
        b = observe(scene, labels, self.states(), n_points=64)
        assert a.clouds.shape == (2, 64, 2)
        assert np.array_equal(a.clouds, b.clouds)

    def test_absent_label_signals(self):
        scene = generate_scene("reach", 4)
        with pytest.raises(ObjectAbsentError):
            observe(scene, ("kettle",), self.states())

    def test_obstacle_not_in_observation(self):
        around = generate_scene("reach_around", 8)
        obs = observe(around, ("target",), self.states())
        cloud = object_cloud(around, "obstacle", 64)
        # no observed point belongs to the obstacle cloud
        d = np.min(np.linalg.norm(obs.clouds[0][:, None] - cloud[None], axis=2))
        assert d > 0


class TestPointSegmentDistance:
    def test_matches_scalar_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
            pts = rng.uniform(-1, 1, (20, 2))
            got = point_segment_distance(pts, a, b)
            ts = np.linspace(0, 1, 20001)
            seg = a + ts[:, None] * (b - a)
            brute = np.min(np.linalg.norm(pts[:, None] - seg[None], axis=2), axis=1)
            assert np.max(np.abs(got - brute)) < 1e-4

    def test_degenerate_segment(self):
        d = point_segment_distance(np.array([[3.0, 4.0]]), np.zeros(2), np.zeros(2))
        assert d[0] == pytest.approx(5.0)

    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    @settings(max_examples=30, deadline=None)
    def test_endpoints_bound_the_distance(self, ax, ay, bx, by):
        a, b = np.array([ax, ay]), np.array([bx, by])
        pts = np.random.default_rng(1).uniform(-2, 2, (8, 2))
        d = point_segment_distance(pts, a, b)
        ends = np.minimum(np.linalg.norm(pts - a, axis=1),
                          np.linalg.norm(pts - b, axis=1))
        assert np.all(d <= ends + 1e-12)
