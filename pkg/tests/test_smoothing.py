"""Ball-average smoothing: sampler geometry, estimator statistics, checks."""

import numpy as np
import pytest

from gengap.errors import OutOfRange
from gengap.instance_smallstep import SmallstepParams, grad_smallstep, \
    loss_smallstep
from gengap.smoothing import (
    SmoothingConfig,
    ball_sample,
    smoothed_grad,
    smoothed_value,
    sphere_sample,
    verify_trajectory_preservation,
)


def test_sphere_samples_have_unit_norm():
    rng = np.random.default_rng(0)
    pts = sphere_sample(7, rng, size=500)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=-1), 1.0, atol=1e-12)
    assert sphere_sample(7, rng).shape == (7,)


def test_ball_samples_stay_inside_and_fill_the_ball():
    rng = np.random.default_rng(1)
    pts = ball_sample(4, rng, size=4000)
    r = np.linalg.norm(pts, axis=-1)
    assert r.max() <= 1.0 + 1e-12
    # mean radius of a uniform ball draw is d/(d+1)
    assert abs(r.mean() - 4.0 / 5.0) < 0.01


def test_sphere_mean_is_near_zero():
    rng = np.random.default_rng(2)
    pts = sphere_sample(3, rng, size=20000)
    assert np.abs(pts.mean(axis=0)).max() < 0.02


def test_constant_loss_is_estimated_exactly():
    cfg = SmoothingConfig(0.2, 128, seed=0)

    def loss(w):
        w = np.asarray(w)
        return 3.25 if w.ndim == 1 else np.full(w.shape[0], 3.25)

    val, stderr = smoothed_value(loss, np.zeros(5), cfg)
    assert val == 3.25
    assert stderr == 0.0


def test_linear_loss_estimate_is_unbiased():
    a = np.array([1.0, -2.0, 0.5])
    w = np.array([0.3, 0.1, -0.2])
    cfg = SmoothingConfig(0.1, 4000, seed=0)
    val, stderr = smoothed_value(lambda v: v @ a, w, cfg)
    # the ball average of a linear function is its center value
    assert abs(val - w @ a) <= 3.0 * stderr
    assert stderr > 0.0


def test_quadratic_moment_matches_the_ball_average():
    # ball average of ||v||^2 at the origin is delta^2 * d/(d+2)
    d, delta = 6, 0.5
    cfg = SmoothingConfig(delta, 60000, seed=3)
    val, stderr = smoothed_value(lambda v: (v * v).sum(axis=-1), np.zeros(d),
                                 cfg)
    want = delta**2 * d / (d + 2)
    assert abs(val - want) <= 3.0 * stderr


def test_stderr_shrinks_like_root_n():
    a = np.array([2.0, 1.0])
    _, se1 = smoothed_value(lambda v: v @ a, np.zeros(2),
                            SmoothingConfig(0.3, 5000, seed=4))
    _, se2 = smoothed_value(lambda v: v @ a, np.zeros(2),
                            SmoothingConfig(0.3, 10000, seed=4))
    ratio = se2 / se1
    assert 0.6 < ratio < 0.82  # ~1/sqrt(2) with sampling noise


def test_smoothed_grad_recovers_a_linear_gradient():
    a = np.array([1.0, -2.0, 0.5, 3.0])
    cfg = SmoothingConfig(0.2, 20000, seed=5)
    est, stderr = smoothed_grad(lambda v: v @ a, np.zeros(4), cfg)
    assert est.shape == (4,) and stderr.shape == (4,)
    assert np.all(np.abs(est - a) <= 3.0 * stderr)


def test_smoothed_grad_needs_enough_samples():
    with pytest.raises(OutOfRange):
        smoothed_grad(lambda v: v.sum(axis=-1), np.zeros(2),
                      SmoothingConfig(0.1, 2, seed=0))


def test_estimates_are_reproducible_per_seed():
    loss = lambda v: np.abs(v).sum(axis=-1)
    cfg = SmoothingConfig(0.1, 1000, seed=7)
    assert smoothed_value(loss, np.ones(3), cfg) \
        == smoothed_value(loss, np.ones(3), cfg)
    g1, s1 = smoothed_grad(loss, np.ones(3), cfg)
    g2, s2 = smoothed_grad(loss, np.ones(3), cfg)
    assert np.array_equal(g1, g2) and np.array_equal(s1, s2)


def test_smallstep_value_agrees_below_the_designed_radius():
    p = SmallstepParams(eta=0.1, steps=10)
    cfg = SmoothingConfig(p.smoothing_delta, 4000, seed=0)
    w = np.zeros(p.dim)
    val, stderr = smoothed_value(lambda v: loss_smallstep(v, p), w, cfg)
    plain = loss_smallstep(w, p)
    assert abs(val - plain) <= 1.0 * cfg.delta + 3.0 * stderr


def test_preservation_check_passes_at_the_designed_radius():
    p = SmallstepParams(eta=0.1, steps=10)
    cfg = SmoothingConfig(p.smoothing_delta, 20000, seed=1)
    rep = verify_trajectory_preservation(None, None, p, cfg, steps=(1, 2, 3))
    assert rep.ok
    assert [s.step for s in rep.steps] == [1, 2, 3]


def test_preservation_check_detects_an_oversized_radius():
    p = SmallstepParams(eta=0.1, steps=10)
    w = np.zeros(p.dim)
    big = SmoothingConfig(0.3, 20000, seed=0)
    est, stderr = smoothed_grad(lambda v: loss_smallstep(v, p), w, big)
    exact = grad_smallstep(w, p)
    sigma = np.abs(est - exact) / np.where(stderr > 0, stderr, np.inf)
    assert sigma.max() > 3.0


if __name__ == "__main__":
    p = SmallstepParams(eta=0.1, steps=10)
    cfg = SmoothingConfig(p.smoothing_delta, 100000, seed=0)
    print(smoothed_value(lambda v: loss_smallstep(v, p), np.zeros(p.dim), cfg))
