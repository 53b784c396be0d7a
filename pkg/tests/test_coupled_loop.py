import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from cotrain.coupled_loop import (
    CoupledConfig, LogisticConfig, RidgeFitter, cross_entropy, disagreement, f_block_objective,
    g_block_objective, logistic_baseline, run_coupled_logistic, run_coupled_square,
)
from cotrain.dataset import Dataset
from cotrain.linear_coupled import RidgeConfig, add_intercept, coupled_objective, fit_ridge, solve_coupled_linear
from helpers import random_dataset

LONG = CoupledConfig(max_iters=20000, patience=5, disagreement_tol=1e-15)


def _objective_gap(ds, lam, alpha_f, alpha_g):
    ff, fg = RidgeFitter(alpha_f), RidgeFitter(alpha_g)
    beta, gamma, trace = run_coupled_square(ds, lam, ff, fg, LONG)
    exact = solve_coupled_linear(ds, lam, RidgeConfig(alpha_f, alpha_g))
    ridge = RidgeConfig(alpha_f, alpha_g)
    loop_obj = coupled_objective(beta, gamma, ds, lam, ridge)
    best = coupled_objective(exact.beta, exact.gamma, ds, lam, ridge)
    return loop_obj, best, trace


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_converges_to_closed_form(lam):
    ds = random_dataset(np.random.default_rng(0), n=15, m=40)
    loop_obj, best, trace = _objective_gap(ds, lam, 1e-3, 1e-3)
    assert abs(loop_obj - best) <= 1e-8 * max(1.0, best)
    assert trace.objective[-1] * ds.N == pytest.approx(loop_obj, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-2, 1e2))
def test_objective_trace_nonincreasing(seed, lam):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n=int(rng.integers(5, 20)), m=int(rng.integers(1, 40)))
    _, _, trace = run_coupled_square(ds, lam, RidgeFitter(1e-3), RidgeFitter(1e-2),
                                     CoupledConfig(max_iters=50, disagreement_tol=0.0))
    obj = np.array(trace.objective)
    assert np.all(np.diff(obj) <= 1e-12 * np.maximum(1.0, obj[:-1]))


def test_single_iteration_is_one_pseudo_label_fit():
    ds = random_dataset(np.random.default_rng(1))
    f, g, trace = run_coupled_square(ds, 2.0, RidgeFitter(1e-3), RidgeFitter(1e-3), CoupledConfig(max_iters=1))
    expected = fit_ridge(add_intercept(ds.x_all), np.concatenate([ds.y_labeled, np.zeros(ds.m)]),
                         np.ones(ds.N), 1e-3)
    np.testing.assert_allclose(f, expected, atol=1e-12)
    assert len(trace.objective) == 1 and trace.iterations == 1


def test_fixed_point_of_closed_form():
    ds = random_dataset(np.random.default_rng(2), n=20, m=50)
    ridge = RidgeConfig(1e-3, 1e-2)
    exact = solve_coupled_linear(ds, 1.5, ridge)
    ff, fg = RidgeFitter(1e-3), RidgeFitter(1e-2)
    gv = fg.predict(exact.gamma, ds.z_all)
    beta = ff.fit(ds.x_all, np.concatenate([ds.y_labeled, gv[ds.n:]]), np.ones(ds.N))
    fv = ff.predict(beta, ds.x_all)
    gamma = fg.fit(ds.z_all, np.concatenate([ds.y_labeled, fv[ds.n:]]),
                   np.concatenate([np.full(ds.n, 1.5), np.ones(ds.m)]))
    np.testing.assert_allclose(beta, exact.beta, atol=1e-10)
    np.testing.assert_allclose(gamma, exact.gamma, atol=1e-10)
    before = coupled_objective(exact.beta, exact.gamma, ds, 1.5, ridge)
    assert abs(coupled_objective(beta, gamma, ds, 1.5, ridge) - before) <= 1e-10


def test_early_stop_on_stable_disagreement():
    ds = random_dataset(np.random.default_rng(3))
    _, _, trace = run_coupled_square(ds, 1.0, RidgeFitter(), RidgeFitter(), CoupledConfig())
    assert trace.iterations <= 15
    assert trace.metadata["disagreement_tol"] == 1e-4
    assert len(trace.disagreement) == len(trace.objective) == trace.iterations


def test_no_unlabeled_and_zero_lambda_rejected():
    ds = random_dataset(np.random.default_rng(4), m=0)
    with pytest.raises(ValueError):
        run_coupled_square(ds, 0.0, RidgeFitter(), RidgeFitter())


def test_determinism():
    ds = random_dataset(np.random.default_rng(5))
    a = run_coupled_square(ds, 1.0, RidgeFitter(), RidgeFitter())[2]
    b = run_coupled_square(ds, 1.0, RidgeFitter(), RidgeFitter())[2]
    assert a.objective == b.objective and a.disagreement == b.disagreement


def test_disagreement_values():
    ds = random_dataset(np.random.default_rng(6))
    f = lambda X: X[:, 0]
    assert disagreement(f, lambda Z: Z[:, 0], ds) == 0.0
    assert disagreement(f, lambda Z: Z[:, 0] + 3.0, ds) == pytest.approx(9.0)
    g = lambda Z: Z.sum(axis=1)
    naive = sum((g(ds.z_unlabeled[j:j + 1])[0] - f(ds.x_unlabeled[j:j + 1])[0]) ** 2 for j in range(ds.m)) / ds.m
    assert disagreement(f, g, ds) == pytest.approx(naive, rel=1e-12)
    with pytest.raises(ValueError):
        disagreement(f, g, random_dataset(np.random.default_rng(0), m=0))


# --- cross-entropy variant -------------------------------------------------

def test_cross_entropy_values():
    assert cross_entropy(1.0, 0.5) == pytest.approx(np.log(2))
    assert np.isfinite(cross_entropy(1.0, 0.0))


def _binary_ds(seed, n=10, m=10):
    return random_dataset(np.random.default_rng(seed), n=n, m=m, dx=3, dw=2, kind="binary")


def _central_diff(fun, v, h=1e-5):
    return np.array([(fun(v + h * e) - fun(v - h * e)) / (2 * h) for e in np.eye(v.size)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 10.0))
def test_block_gradients_match_finite_differences(seed, lam):
    ds = _binary_ds(seed % 1000)
    rng = np.random.default_rng(seed)
    beta, gamma = rng.standard_normal(ds.dx + 1), rng.standard_normal(ds.dx + ds.dw + 1)
    _, gb = f_block_objective(beta, gamma, ds, with_grad=True)
    fd = _central_diff(lambda b: f_block_objective(b, gamma, ds), beta)
    assert np.max(np.abs(gb - fd)) <= 1e-6
    _, gg = g_block_objective(gamma, beta, ds, lam, with_grad=True)
    fd = _central_diff(lambda c: g_block_objective(c, beta, ds, lam), gamma)
    assert np.max(np.abs(gg - fd)) <= 1e-6


def test_zero_steps_return_initialization():
    ds = _binary_ds(0, n=30, m=20)
    cfg = LogisticConfig(outer=0)
    beta, gamma, trace = run_coupled_logistic(ds, 1.0, cfg)
    np.testing.assert_array_equal(beta, logistic_baseline(ds, cfg))
    np.testing.assert_array_equal(gamma, np.zeros(ds.dx + ds.dw + 1))
    assert trace.iterations == 0
    beta2, gamma2, _ = run_coupled_logistic(ds, 1.0, LogisticConfig(inner=0))
    np.testing.assert_array_equal(beta2, beta)
    np.testing.assert_array_equal(gamma2, gamma)


def test_g_update_is_pure_shrinkage_without_data_terms():
    ds = _binary_ds(1, n=20, m=0)
    _, gamma, _ = run_coupled_logistic(ds, 0.0, LogisticConfig(outer=2, inner=20))
    np.testing.assert_array_equal(gamma, np.zeros(ds.dx + ds.dw + 1))
    # from a nonzero start the g objective is alpha/2 ||gamma_-0||^2, whose gradient is alpha * gamma_-0
    g0 = np.arange(1.0, ds.dx + ds.dw + 2)
    value, grad = g_block_objective(g0, np.zeros(ds.dx + 1), ds, 0.0, with_grad=True)
    assert value == pytest.approx(0.5 * 0.1 * np.sum(g0[1:] ** 2))
    np.testing.assert_allclose(grad, np.concatenate([[0.0], 0.1 * g0[1:]]))


def test_labels_outside_binary_rejected():
    ds = random_dataset(np.random.default_rng(2))
    with pytest.raises(ValueError):
        run_coupled_logistic(ds, 1.0)


def test_logistic_trace_and_determinism():
    ds = _binary_ds(3, n=30, m=40)
    b1, g1, t1 = run_coupled_logistic(ds, 2.0, LogisticConfig(outer=3, inner=20))
    b2, g2, t2 = run_coupled_logistic(ds, 2.0, LogisticConfig(outer=3, inner=20))
    assert t1.objective == t2.objective and len(t1.objective) == 3
    np.testing.assert_array_equal(b1, b2)
    p = expit(add_intercept(ds.x_all) @ b1)
    assert np.all((p > 0) & (p < 1))
