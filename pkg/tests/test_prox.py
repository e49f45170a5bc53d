import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odlglm import _kernels
from odlglm.errors import SolverDivergence
from odlglm.family import GAUSSIAN
from odlglm.lasso import LassoState, kkt_residual, solve_surrogate
from odlglm.batch import Batch
from odlglm.prox import ProxConfig, check_kernel_status, prox_solve, soft_threshold

from conftest import cd_lasso


def test_soft_threshold_examples():
    assert soft_threshold(0.3, 0.1) == pytest.approx(0.2)
    assert soft_threshold(-0.05, 0.1) == 0
    assert soft_threshold(-0.3, 0.1) == pytest.approx(-0.2)
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@settings(max_examples=300, deadline=None)
@given(z=st.floats(-1e3, 1e3), w=st.floats(-1e3, 1e3), t=st.floats(0, 1e3))
def test_soft_threshold_lipschitz_and_odd(z, w, t):
    assert abs(soft_threshold(z, t) - soft_threshold(w, t)) <= abs(z - w) + 1e-12
    assert soft_threshold(-z, t) == -soft_threshold(z, t)


def test_prox_solve_scalar_closed_form():
    res = prox_solve(lambda b: b - 1.0, np.zeros(1), 0.5, ProxConfig(0.5, 1e-12, 10_000))
    assert res.converged
    assert res.x[0] == pytest.approx(0.5, abs=1e-10)


def test_prox_solve_zero_when_penalty_dominates():
    c = np.array([0.3, -0.2, 0.1])
    res = prox_solve(lambda b: b - c, np.ones(3), 0.31, ProxConfig(0.5, 1e-12, 10_000))
    assert np.all(res.x == 0)


def test_prox_solve_matches_coordinate_descent(rng):
    n, p = 20, 5
    X = rng.standard_normal((n, p))
    y = X @ np.array([1.0, -0.5, 0, 0, 0.2]) + 0.3 * rng.standard_normal(n)
    lam = 0.05
    grad = lambda b: -X.T @ (y - X @ b) / (2 * n)
    res = prox_solve(grad, np.zeros(p), lam, ProxConfig(0.5, 1e-13, 500_000))
    assert res.converged
    np.testing.assert_allclose(res.x, cd_lasso(X, y, lam, scale=4), atol=1e-6)


def test_kernel_matches_generic_solver(rng):
    b = Batch(rng.standard_normal((20, 5)), rng.standard_normal(20))
    lam = 0.05
    cfg = ProxConfig(0.3, 1e-12, 100_000)
    ker = solve_surrogate(LassoState(5), b, lam, cfg, GAUSSIAN, init=np.zeros(5))
    grad = lambda v: -b.X.T @ (b.y - b.X @ v) / (2 * b.n)
    gen = prox_solve(grad, np.zeros(5), lam, cfg)
    assert ker.converged and gen.converged
    np.testing.assert_allclose(ker.x, gen.x, atol=1e-10)
    np.testing.assert_allclose(ker.x, cd_lasso(b.X, b.y, lam, scale=4), atol=1e-6)


def test_monotone_objective_on_quadratic(rng):
    A = rng.standard_normal((30, 6))
    H = A.T @ A / 30
    c = rng.standard_normal(6)
    f = lambda v: 0.5 * v @ H @ v - c @ v
    lam = 0.1
    eta = 0.9 / np.linalg.eigvalsh(H).max()
    values = []
    prox_solve(lambda v: H @ v - c, np.zeros(6), lam, ProxConfig(eta, 1e-12, 5000), objective=f,
               callback=lambda k, v: values.append(f(v) + lam * np.abs(v).sum()))
    assert np.all(np.diff(values) <= 1e-12)


def test_fixed_point_satisfies_kkt(rng):
    A = rng.standard_normal((40, 8))
    H = A.T @ A / 40
    c = rng.standard_normal(8)
    lam = 0.2
    cfg = ProxConfig(0.5 / np.linalg.eigvalsh(H).max(), 1e-9, 100_000)
    res = prox_solve(lambda v: H @ v - c, np.zeros(8), lam, cfg)
    assert res.converged
    assert kkt_residual(H @ res.x - c, res.x, lam) <= 10 * cfg.stop_tol / cfg.learning_rate


def test_penalty_mask_leaves_coordinate_free():
    c = np.array([0.05, 0.05])
    cfg = ProxConfig(0.5, 1e-12, 10_000, penalty_mask=[False, True])
    res = prox_solve(lambda b: b - c, np.zeros(2), 0.1, cfg)
    np.testing.assert_allclose(res.x, [0.05, 0.0], atol=1e-10)


def test_non_finite_gradient_raises():
    with pytest.raises(SolverDivergence) as info:
        prox_solve(lambda b: np.full_like(b, np.nan), np.ones(2), 0.1, ProxConfig(0.1, 1e-9, 100))
    assert info.value.iteration == 0


def test_divergence_detector():
    # step far beyond 2/L makes the quadratic blow up
    with pytest.raises(SolverDivergence):
        prox_solve(lambda b: 10 * b, np.ones(2), 0.0, ProxConfig(1.0, 1e-12, 1000),
                   objective=lambda b: 5 * b @ b)
    b = Batch(np.eye(3) * 10, np.ones(3))
    with pytest.raises(SolverDivergence):
        solve_surrogate(LassoState(3), b, 0.0, ProxConfig(5.0, 1e-12, 1000), GAUSSIAN,
                        init=np.ones(3))


def test_max_iter_reports_unconverged():
    res = prox_solve(lambda b: b - 1.0, np.zeros(1), 0.0, ProxConfig(1e-4, 1e-12, 10))
    assert not res.converged and res.iterations == 10


def test_config_validation():
    for kw in ({"learning_rate": 0}, {"stop_tol": -1}, {"max_iter": 0}):
        with pytest.raises(ValueError):
            ProxConfig(**kw)
    assert check_kernel_status(_kernels.CONVERGED, 3, "x")
    assert not check_kernel_status(_kernels.MAX_ITER, 3, "x")
    with pytest.raises(SolverDivergence):
        check_kernel_status(_kernels.NONFINITE, 3, "x")
