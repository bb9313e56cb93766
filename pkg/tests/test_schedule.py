import io
import math

import mpmath
import numpy as np
import pytest

from se3diffreg.errors import InvalidStepCount, StepOutOfRange
from se3diffreg.schedule import (coefficients_at, make_schedule, respace, respaced_indices,
                                 write_csv)

from oracles import euclidean_posterior_mc


@pytest.fixture(scope="module")
def cosine():
    return make_schedule("cosine", 200)


@pytest.mark.parametrize("kind", ["cosine", "linear"])
def test_first_step(kind):
    s = make_schedule(kind, 50)
    assert s.alpha_bar[0] == s.alpha[0] == 1.0 - s.beta[0]
    c = coefficients_at(s, 1)
    assert c.lambda0 == 1.0
    assert c.lambda1 == 0.0
    assert c.beta_tilde == 0.0


def test_default_step_count(cosine):
    assert cosine.T == 200 and len(cosine.beta) == 200


@pytest.mark.parametrize("kind", ["cosine", "linear"])
@pytest.mark.parametrize("T", [1, 2, 7, 200, 1000])
def test_invariants(kind, T):
    s = make_schedule(kind, T)
    assert np.all((s.beta > 0) & (s.beta < 1))
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert np.all(s.beta_tilde[1:] > 0)
    assert np.all(s.lambda0 >= 0) and np.all(s.lambda1 >= 0)


def test_cosine_alpha_bar_extended_precision(cosine):
    mpmath.mp.dps = 40
    off = mpmath.mpf("0.008")
    T = 200
    f = lambda t: mpmath.cos((mpmath.mpf(t) / T + off) / (1 + off) * mpmath.pi / 2) ** 2  # noqa: E731
    # every beta below T is unclipped, so alpha_bar_t = f(t)/f(0) there
    for t in (1, 50, 100, 199):
        assert math.isclose(cosine.alpha_bar[t - 1], float(f(t) / f(0)), rel_tol=1e-12)
    # the last beta is clipped to 0.999
    expected_T = f(T - 1) / f(0) * mpmath.mpf("0.001")
    assert math.isclose(cosine.alpha_bar[T - 1], float(expected_T), rel_tol=1e-12)
    assert cosine.beta[T - 1] == 0.999


def test_linear_endpoints():
    s = make_schedule("linear", 100)
    assert s.beta[0] == 1e-4
    assert math.isclose(s.beta[-1], 0.02)


def test_coefficients_at_last_step_recomputed_from_beta(cosine):
    beta = np.asarray(cosine.beta)
    ab = np.cumprod(1.0 - beta)
    t = 200
    ab_prev = ab[t - 2]
    c = coefficients_at(cosine, t)
    assert math.isclose(c.alpha_bar, ab[t - 1], rel_tol=1e-12)
    assert math.isclose(c.lambda0, math.sqrt(ab_prev) * beta[t - 1] / (1 - ab[t - 1]), rel_tol=1e-12)
    assert math.isclose(c.lambda1, math.sqrt(1 - beta[t - 1]) * (1 - ab_prev) / (1 - ab[t - 1]),
                        rel_tol=1e-12)
    assert math.isclose(c.beta_tilde, (1 - ab_prev) / (1 - ab[t - 1]) * beta[t - 1], rel_tol=1e-12)


@pytest.mark.parametrize("t", [0, 201, -3])
def test_step_out_of_range(cosine, t):
    with pytest.raises(StepOutOfRange):
        coefficients_at(cosine, t)


@pytest.mark.parametrize("T", [0, -1, 2.5])
def test_invalid_step_count(T):
    with pytest.raises(InvalidStepCount):
        make_schedule("cosine", T)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_schedule("quadratic", 10)


class TestRespace:
    def test_identity_respacing_is_bit_exact(self, cosine):
        r = respace(cosine, 200)
        for name in ("beta", "alpha", "alpha_bar", "beta_tilde", "lambda0", "lambda1"):
            assert np.array_equal(getattr(r, name), getattr(cosine, name))

    def test_single_step(self, cosine):
        r = respace(cosine, 1)
        assert r.T == 1
        assert r.alpha_bar[0] == cosine.alpha_bar[-1]
        assert r.lambda0[0] == 1.0 and r.lambda1[0] == 0.0

    def test_five_steps_lookup(self, cosine):
        r = respace(cosine, 5)
        assert list(r.timesteps) == [40, 80, 120, 160, 200]
        for k, t in enumerate(r.timesteps):
            assert r.alpha_bar[k] == cosine.alpha_bar[t - 1]
        np.testing.assert_allclose(r.alpha[1:], r.alpha_bar[1:] / r.alpha_bar[:-1], rtol=1e-15)
        assert r.alpha[0] == r.alpha_bar[0]
        assert np.all(np.diff(r.alpha_bar) < 0)
        assert r.lambda0[0] == 1.0 and r.lambda1[0] == 0.0

    @pytest.mark.parametrize("T,K", [(200, 5), (200, 7), (10, 3), (9, 9), (1000, 50), (5, 4)])
    def test_indices_spread_and_end_at_T(self, T, K):
        idx = respaced_indices(T, K)
        assert len(idx) == K and idx[-1] == T and idx[0] >= 1
        assert np.all(np.diff(idx) >= 1)

    @pytest.mark.parametrize("K", [0, 201])
    def test_invalid(self, cosine, K):
        with pytest.raises(InvalidStepCount):
            respace(cosine, K)


@pytest.mark.parametrize("t", [3, 27, 88, 150, 199])
def test_euclidean_posterior_matches_monte_carlo(cosine, t):
    """Posterior mean lambda0*x0 + lambda1*x_t and variance beta_tilde vs simulation."""
    rng = np.random.default_rng(1000 + t)
    x0 = 0.8
    c = coefficients_at(cosine, t)
    ab_prev = cosine.alpha_bar[t - 2]
    mc = euclidean_posterior_mc(ab_prev, cosine.alpha[t - 1], x0, 100_000, rng)
    n = mc["n"]
    se_slope = math.sqrt(mc["var"] / mc["sxx"])
    assert abs(mc["slope"] - c.lambda1) < 3 * se_slope
    # the conditional mean at x_t = mean(x_t) carries the intercept's noise only
    x_eval = mc["xm"]
    mean_mc = mc["intercept"] + mc["slope"] * x_eval
    se_mean = math.sqrt(mc["var"] / n)
    assert abs(mean_mc - (c.lambda0 * x0 + c.lambda1 * x_eval)) < 3 * se_mean
    se_var = c.beta_tilde * math.sqrt(2.0 / (n - 2))
    assert abs(mc["var"] - c.beta_tilde) < 3 * se_var


def test_csv_dump(cosine):
    buf = io.StringIO()
    write_csv(cosine, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,beta,alpha_bar,beta_tilde,lambda0,lambda1"
    assert len(lines) == 201
    first = lines[1].split(",")
    assert first[0] == "1" and float(first[4]) == 1.0 and float(first[5]) == 0.0
