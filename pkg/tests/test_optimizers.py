import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svrdqn.environments import logistic_finite_sum, quadratic_finite_sum
from svrdqn.optimizers import (AdamState, SvrgConfig, adam_step, composite_gradient_no_rescale_check,
                               sgd_minibatch_step, svr_dqn_outer_step, svrg_anchor,
                               svrg_direction, svrg_inner_step)


def quad_grads(a):
    a = np.asarray(a, dtype=float).reshape(-1, 1)
    return lambda w, ids: w[None, :] - a[ids]


# -- minibatch SGD ---------------------------------------------------------

def test_sgd_zero_rate_and_single_gradient():
    w = np.array([1.0, -2.0])
    g = np.array([[0.5, 0.25]])
    np.testing.assert_array_equal(sgd_minibatch_step(w, g, 0.0), w)
    np.testing.assert_array_equal(sgd_minibatch_step(w, g, 1.0), w - g[0])


def test_sgd_two_quadratics():
    # f_i = 0.5 (w - a_i)^2, a = {0, 2}: gradients at 0 are 0 and -2
    grads = quad_grads([0.0, 2.0])(np.zeros(1), np.array([0, 1]))
    np.testing.assert_allclose(sgd_minibatch_step(np.zeros(1), grads, 0.5), [0.5])


def test_sgd_empty_batch():
    with pytest.raises(ValueError):
        sgd_minibatch_step(np.zeros(2), np.zeros((0, 2)), 0.1)


# -- Adam ----------------------------------------------------------------------

def test_adam_first_step_moves_alpha_against_gradient():
    c = np.array([3.0, -0.2, 1e-4])
    w = np.array([1.0, 1.0, 1.0])
    w1, s1 = adam_step(AdamState.zeros(3, alpha=0.01, epsilon=0.0), w, c)
    np.testing.assert_allclose(w1, w - 0.01 * np.sign(c), rtol=0, atol=1e-15)
    assert s1.t == 1


def test_adam_zero_gradient_fixed_point():
    s = AdamState.zeros(4, epsilon=0.0)
    w = np.arange(4.0)
    w1, s1 = adam_step(s, w, np.zeros(4))
    np.testing.assert_array_equal(w1, w)
    assert not s1.m.any() and not s1.v.any()


def scalar_adam_trace(grads, alpha, beta1, beta2, eps, w=0.0):
    """Plain-float Adam, written out line by line."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        w = w - alpha * m_hat / (math.sqrt(v_hat) + eps)
        out.append(w)
    return out


def test_adam_two_step_scalar_trace():
    expected = scalar_adam_trace([1.0, 1.0], 0.1, 0.9, 0.999, 1e-8)
    s = AdamState.zeros(1, alpha=0.1, beta1=0.9, beta2=0.999, epsilon=1e-8)
    w = np.zeros(1)
    for want in expected:
        w, s = adam_step(s, w, np.ones(1))
        assert abs(w[0] - want) <= 1e-12
    assert s.t == 2


def test_adam_state_invariants(rng):
    s = AdamState.zeros(5)
    w = rng.normal(size=5)
    for k in range(20):
        w, s2 = adam_step(s, w, rng.normal(size=5))
        assert s2.t == s.t + 1
        assert (s2.v >= 0).all()
        s = s2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-6), min_size=1, max_size=6),
       st.sampled_from([0.25, 0.5, 2.0, 4.0, 1024.0]))
def test_adam_scale_invariance_power_of_two(g, c):
    g = np.array(g)
    s = AdamState.zeros(g.size, alpha=0.1, epsilon=0.0)
    w1, _ = adam_step(s, np.zeros(g.size), g)
    w2, _ = adam_step(s, np.zeros(g.size), c * g)
    np.testing.assert_array_equal(w1, w2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-6), min_size=1, max_size=6),
       st.floats(1e-3, 1e3))
def test_adam_scale_invariance_any_positive_scale(g, c):
    # exact in real arithmetic; scaling by a non power of two rounds differently
    g = np.array(g)
    s = AdamState.zeros(g.size, alpha=0.1, epsilon=0.0)
    w1, _ = adam_step(s, np.zeros(g.size), g)
    w2, _ = adam_step(s, np.zeros(g.size), c * g)
    np.testing.assert_allclose(w1, w2, rtol=1e-14, atol=0)


def test_adam_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros(3), np.zeros(3), np.zeros(2))


# -- no-rescale pass-through ----------------------------------------------------

def test_no_rescale_is_identity(rng):
    g = rng.normal(size=7)
    out = composite_gradient_no_rescale_check(g)
    assert out.tobytes() == g.tobytes()


def test_doubled_gradient_same_update_eps_zero(rng):
    g, w = rng.normal(size=6), rng.normal(size=6)
    s = AdamState.zeros(6, alpha=0.01, epsilon=0.0)
    np.testing.assert_array_equal(adam_step(s, w, g)[0], adam_step(s, w, 2 * g)[0])


def test_doubled_gradient_close_update_default_eps(rng):
    g = rng.choice([-1, 1], size=50) * rng.uniform(1e-3, 10, size=50)
    w = np.zeros(50)
    s = AdamState.zeros(50, alpha=0.01, epsilon=1e-8)
    d1 = adam_step(s, w, g)[0] - w
    d2 = adam_step(s, w, 2 * g)[0] - w
    np.testing.assert_allclose(d2, d1, rtol=1e-6)


# -- SVRG pieces -----------------------------------------------------------------

def test_svrg_config_guards():
    SvrgConfig(B=4, b=2, m=2, eta=0.1)
    with pytest.raises(ValueError, match="b\\*m"):
        SvrgConfig(B=64, b=8, m=7)
    with pytest.raises(ValueError):
        SvrgConfig(B=4, b=8, m=1)
    with pytest.raises(ValueError):
        SvrgConfig(B=0, b=0, m=1)


def test_anchor_values():
    f = quad_grads([1.0, 3.0])
    snap = svrg_anchor(f, np.zeros(1), [0, 1])
    np.testing.assert_array_equal(snap.mu, [-2.0])
    single = svrg_anchor(f, np.zeros(1), [1])
    np.testing.assert_array_equal(single.mu, f(np.zeros(1), np.array([1]))[0])
    same = svrg_anchor(lambda w, ids: np.tile([0.5, -1.0], (len(ids), 1)), np.zeros(2), [0, 1, 2])
    np.testing.assert_array_equal(same.mu, [0.5, -1.0])
    with pytest.raises(ValueError):
        svrg_anchor(f, np.zeros(1), [])


def test_inner_step_hand_value():
    f = quad_grads([1.0, 3.0])
    snap = svrg_anchor(f, np.zeros(1), [0, 1])
    eta = 0.1
    # direction = grad f_1(1) - grad f_1(0) + mu = 0 - (-1) + (-2) = -1
    np.testing.assert_allclose(svrg_inner_step(np.ones(1), snap, [0], eta, f), [1.0 + eta])
    np.testing.assert_array_equal(svrg_inner_step(np.ones(1), snap, [0], 0.0, f), [1.0])
    with pytest.raises(ValueError):
        svrg_inner_step(np.ones(1), snap, [], eta, f)


def test_first_inner_step_independent_of_minibatch(rng):
    X = rng.normal(size=(10, 3))
    y = np.where(rng.normal(size=10) > 0, 1.0, -1.0)
    p = logistic_finite_sum(X, y, 0.1)
    w = rng.normal(size=3)
    snap = svrg_anchor(p.grads, w, np.arange(10))
    outs = {svrg_inner_step(w, snap, rng.integers(10, size=3), 0.3, p.grads).tobytes()
            for _ in range(50)}
    assert outs == {(w - 0.3 * snap.mu).tobytes()}


@pytest.mark.parametrize("b", [1, 2, 3])
def test_unbiased_by_enumeration_logistic(b):
    rng = np.random.default_rng(b)
    X = rng.normal(size=(6, 4))
    y = np.array([1, -1, 1, 1, -1, -1.0])
    p = logistic_finite_sum(X, y, 0.05)
    w_tilde, w = rng.normal(size=4), rng.normal(size=4)
    snap = svrg_anchor(p.grads, w_tilde, np.arange(6))
    dirs = [svrg_direction(w, snap, np.array(mb), p.grads)
            for mb in itertools.product(range(6), repeat=b)]
    np.testing.assert_allclose(np.mean(dirs, axis=0), p.full_grad(w), rtol=0, atol=1e-12)


# -- SVR-DQN outer step ----------------------------------------------------------

def test_outer_step_zero_eta_keeps_parameters(rng):
    f = quad_grads(rng.normal(size=8))
    w = rng.normal(size=1)
    cfg = SvrgConfig(B=8, b=2, m=4, eta=0.0)
    w_new, adam, g = svr_dqn_outer_step(w, cfg, AdamState.zeros(1), f, 8, rng)
    np.testing.assert_array_equal(g, [0.0])
    np.testing.assert_array_equal(w_new, w)
    assert adam.t == 1 and not adam.m.any()


def test_outer_step_matches_scalar_hand_trace():
    a = [0.5, -1.0, 2.0, 3.5, 0.0, 1.5]
    cfg = SvrgConfig(B=4, b=2, m=2, eta=0.1)
    alpha, beta1, beta2, eps = 0.05, 0.9, 0.999, 1e-8
    w_tilde = 4.0

    # oracle: replay the same random draws with scalar arithmetic
    rng = np.random.default_rng(7)
    batch = [int(i) for i in rng.choice(len(a), size=4, replace=False)]
    mu = sum(w_tilde - a[i] for i in batch) / 4
    w = w_tilde
    for _ in range(2):
        mb = [batch[int(j)] for j in rng.integers(0, 4, size=2)]
        direction = (sum(w - a[i] for i in mb) / 2 - sum(w_tilde - a[i] for i in mb) / 2 + mu)
        w = w - 0.1 * direction
    g = w_tilde - w
    expected = scalar_adam_trace([g], alpha, beta1, beta2, eps, w=w_tilde)[0]

    trace = []
    w_new, adam, g_impl = svr_dqn_outer_step(
        np.array([w_tilde]), cfg, AdamState.zeros(1, alpha, beta1, beta2, eps),
        quad_grads(a), len(a), np.random.default_rng(7), inner_trace=trace)
    assert len(trace) == 3
    assert abs(trace[-1][0] - w) < 1e-14
    assert abs(g_impl[0] - g) < 1e-14
    assert abs(w_new[0] - expected) < 1e-14


def test_outer_step_requires_enough_samples(rng):
    with pytest.raises(ValueError):
        svr_dqn_outer_step(np.zeros(1), SvrgConfig(8, 2, 4, 0.1), AdamState.zeros(1),
                           quad_grads(np.zeros(4)), 4, rng)


def test_outer_step_descends_on_strongly_convex_quadratic():
    rng = np.random.default_rng(3)
    p = quadratic_finite_sum(rng.normal(size=(64, 5)))
    cfg = SvrgConfig(B=64, b=8, m=8, eta=0.05)
    w = p.w_star + rng.normal(size=5)
    adam = AdamState.zeros(5, alpha=0.005)
    values = []
    for _ in range(200):
        w, adam, _ = svr_dqn_outer_step(w, cfg, adam, p.grads, p.n, rng)
        values.append(p.f(w))
    tail = np.array(values[20:])
    assert (np.diff(tail) < 0).all()


def test_convergence_sanity_scaled_defaults():
    rng = np.random.default_rng(0)
    p = quadratic_finite_sum(rng.normal(size=(64, 5)))
    cfg = SvrgConfig(B=64, b=8, m=8, eta=0.05)
    d = rng.normal(size=5)
    w = p.w_star + d / np.linalg.norm(d)
    adam = AdamState.zeros(5, alpha=0.01)
    for _ in range(200):
        w, adam, _ = svr_dqn_outer_step(w, cfg, adam, p.grads, p.n, rng)
    assert p.suboptimality(w) < 1e-6
