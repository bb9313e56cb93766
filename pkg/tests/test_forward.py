import math

import numpy as np
import pytest

from se3diffreg import data, lie
from se3diffreg.errors import EmptyCloud, PerturbationResampleExceeded
from se3diffreg.forward import (DiffusionConfig, TrainingEpisode, diffuse, make_episode,
                                perturbation_from_noise, sample_perturbation, training_loss)
from se3diffreg.lie import RigidTransform
from se3diffreg.schedule import make_schedule, respace

from oracles import naive_l1_loss

I = RigidTransform.identity()
COSINE = make_schedule("cosine", 200)


def rz(theta, t=(0.0, 0.0, 0.0)):
    c, s = math.cos(theta), math.sin(theta)
    return RigidTransform([[c, -s, 0], [s, c, 0], [0, 0, 1]], t)


@pytest.fixture
def pair():
    spec = data.GenSpec(shape="composite", n_source=64, n_model=256, max_rot=1.5,
                        max_trans=0.1, seed=3)
    return data.generate_pair(spec)


def test_default_config():
    cfg = DiffusionConfig()
    assert cfg.gamma == 0.1
    assert cfg.schedule.kind == "cosine" and cfg.schedule.T == 200


class TestPerturbation:
    def test_zero_gamma_is_identity(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.0)
        rng = np.random.default_rng(0)
        for t in (1, 100, 200):
            assert sample_perturbation(cfg, t, rng).allclose(I, atol=0.0)

    def test_zero_noise_vector_is_identity(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.1)
        assert perturbation_from_noise(cfg, 1, np.zeros(6)).allclose(I, atol=0.0)

    def test_scale_vanishes_as_alpha_bar_reaches_one(self):
        sched = make_schedule("linear", 3, beta_start=1e-15, beta_end=1e-15)
        cfg = DiffusionConfig(schedule=sched, gamma=0.5)
        p = sample_perturbation(cfg, 2, np.random.default_rng(1))
        assert p.allclose(I, atol=1e-6)

    def test_mean_angle_matches_monte_carlo(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.1)
        t = 200
        sigma = 0.1 * math.sqrt(1.0 - COSINE.alpha_bar[t - 1])
        n = 100_000
        # standalone Monte-Carlo of |sigma * z| for z ~ N(0, I_3)
        ref = sigma * np.linalg.norm(np.random.default_rng(99).standard_normal((n, 3)), axis=1)
        rng = np.random.default_rng(7)
        eps = rng.standard_normal((n, 6))
        # rotation angle of exp(xi) is |rho|; the sampler draws the same stream
        angles = np.array([lie.rotation_angle(perturbation_from_noise(cfg, t, e).rotation)
                           for e in eps[:5000]])
        np.testing.assert_allclose(angles, sigma * np.linalg.norm(eps[:5000, :3], axis=1),
                                   atol=1e-12)
        drawn = np.array([lie.rotation_angle(sample_perturbation(cfg, t, rng).rotation)
                          for _ in range(20_000)])
        se = math.sqrt(drawn.var() / len(drawn) + ref.var() / n)
        assert abs(drawn.mean() - ref.mean()) < 3 * se

    def test_redraw_limit(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=1e6)
        with pytest.raises(PerturbationResampleExceeded):
            sample_perturbation(cfg, 200, np.random.default_rng(0))

    def test_per_block_scales(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.1, gamma_rot=0.0, gamma_trans=0.5)
        p = sample_perturbation(cfg, 150, np.random.default_rng(2))
        np.testing.assert_array_equal(p.rotation, np.eye(3))
        assert np.linalg.norm(p.translation) > 0

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            DiffusionConfig(gamma=-0.1)


class TestDiffuse:
    def test_zero_noise_first_step_close_to_h0(self):
        sched = make_schedule("linear", 3, beta_start=1e-15, beta_end=1e-15)
        cfg = DiffusionConfig(schedule=sched, gamma=0.0)
        h0 = rz(1.0, (0.1, 0.2, 0.3))
        assert diffuse(cfg, h0, 1, np.random.default_rng(0)).allclose(h0, atol=1e-12)

    @pytest.mark.parametrize("t", [1, 50, 120, 200])
    def test_zero_gamma_is_pure_interpolation(self, t):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.0)
        h0 = lie.exp(lie.twist([0.3, -1.2, 0.8], [0.05, 0.1, -0.2]))
        expected = lie.interpolate(math.sqrt(COSINE.alpha_bar[t - 1]), h0)
        assert diffuse(cfg, h0, t, np.random.default_rng(0)).allclose(expected, atol=0.0)

    def test_same_axis_shrinks_toward_identity(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.0)
        theta0 = 2.0
        prev = theta0
        for t in range(1, 201):
            h = diffuse(cfg, rz(theta0), t, np.random.default_rng(t))
            angle = lie.rotation_angle(h.rotation)
            assert math.isclose(angle, math.sqrt(COSINE.alpha_bar[t - 1]) * theta0, abs_tol=1e-12)
            assert angle <= prev + 1e-15
            prev = angle

    def test_left_perturbation_factorises(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.1)
        h0 = lie.exp(lie.twist([0.9, 0.1, -0.4], [0.05, 0.0, 0.02]))
        t = 77
        eps = np.random.default_rng(5).standard_normal(6)
        h = diffuse(cfg, h0, t, np.random.default_rng(5))
        mid = lie.interpolate(math.sqrt(COSINE.alpha_bar[t - 1]), h0)
        p = lie.compose(h, lie.inverse(mid))
        assert p.allclose(perturbation_from_noise(cfg, t, eps), atol=1e-12)

    def test_right_perturbation_option(self):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.1, perturb_side="right")
        h0 = rz(0.5, (0.1, 0, 0))
        t = 120
        eps = np.random.default_rng(6).standard_normal(6)
        h = diffuse(cfg, h0, t, np.random.default_rng(6))
        mid = lie.interpolate(math.sqrt(COSINE.alpha_bar[t - 1]), h0)
        assert h.allclose(lie.compose(mid, perturbation_from_noise(cfg, t, eps)), atol=1e-12)


class TestEpisode:
    def test_forced_clean_step(self, pair):
        sched = make_schedule("linear", 3, beta_start=1e-15, beta_end=1e-15)
        cfg = DiffusionConfig(schedule=sched, gamma=0.0)
        ep = make_episode(cfg, pair, np.random.default_rng(0), t=1)
        assert ep.h_t.allclose(pair.h0, atol=1e-12)
        assert ep.target.allclose(I, atol=1e-12)

    @pytest.mark.parametrize("t", [3, 100, 200])
    def test_forced_noise_free_target(self, pair, t):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.0)
        ep = make_episode(cfg, pair, np.random.default_rng(0), t=t)
        mid = lie.interpolate(math.sqrt(COSINE.alpha_bar[t - 1]), pair.h0)
        assert ep.target.allclose(lie.compose(pair.h0, lie.inverse(mid)), atol=1e-12)
        np.testing.assert_allclose(ep.xt_cloud, lie.apply(ep.h_t, pair.source), atol=0)

    def test_target_maps_xt_onto_model_frame(self, pair):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.1)
        ep = make_episode(cfg, pair, np.random.default_rng(1))
        np.testing.assert_allclose(lie.apply(ep.target, ep.xt_cloud),
                                   lie.apply(pair.h0, pair.source), atol=1e-12)
        assert 1 <= ep.t <= 200

    def test_seeded_determinism(self, pair):
        cfg = DiffusionConfig(schedule=COSINE, gamma=0.1)
        a = make_episode(cfg, pair, np.random.default_rng(42))
        b = make_episode(cfg, pair, np.random.default_rng(42))
        assert a.t == b.t
        assert np.array_equal(a.h_t.matrix, b.h_t.matrix)
        assert np.array_equal(a.xt_cloud, b.xt_cloud)

    def test_step_is_uniform(self, pair):
        cfg = DiffusionConfig(schedule=respace(COSINE, 4), gamma=0.0)
        rng = np.random.default_rng(3)
        ts = [make_episode(cfg, pair, rng).t for _ in range(2000)]
        counts = np.bincount(ts, minlength=5)[1:]
        assert counts.min() > 400


class TestLoss:
    def _episode(self, pts, target):
        return TrainingEpisode(1, pts, pts, I, target)

    def test_zero_for_exact_prediction(self):
        pts = np.random.default_rng(0).normal(size=(20, 3))
        target = rz(0.4, (1, 2, 3))
        assert training_loss(self._episode(pts, target), target) == 0.0

    def test_shift_adds_abs_offset(self):
        pts = np.random.default_rng(1).normal(size=(20, 3))
        target = rz(0.4, (1, 2, 3))
        shifted = lie.compose(RigidTransform.from_translation([-0.25, 0, 0]), target)
        assert math.isclose(training_loss(self._episode(pts, target), shifted), 0.25, rel_tol=1e-12)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(512, 3))
        target = lie.exp(rng.normal(size=6))
        pred = lie.exp(rng.normal(size=6))
        expected = naive_l1_loss(target.matrix.tolist(), pred.matrix.tolist(), pts.tolist())
        assert math.isclose(training_loss(self._episode(pts, target), pred), expected,
                            rel_tol=0, abs_tol=1e-12)

    def test_zero_iff_same_on_noncollinear(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
        target = rz(0.3)
        other = rz(0.3 + 1e-6)
        assert training_loss(self._episode(pts, target), other) > 0

    def test_empty_cloud(self):
        with pytest.raises(EmptyCloud):
            training_loss(self._episode(np.empty((0, 3)), I), I)
