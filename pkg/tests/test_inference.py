import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odlglm.batch import Batch
from odlglm.errors import DegenerateProjection, DimensionError
from odlglm.family import BERNOULLI, GAUSSIAN, batch_information
from odlglm.inference import (CoordAccumulator, VarianceMode, accumulate, confidence_interval,
                              debiased_estimate, neglog10_pvalue, normal_cdf, normal_quantile,
                              standard_error, wald_pvalue)
from odlglm.lasso import LassoState, update_lasso
from odlglm.projection import extend, solve_projection, tau

from conftest import FAST, logistic_batch


def test_zero_residual_increments(rng):
    X = rng.standard_normal((10, 4))
    beta = rng.standard_normal(4)
    acc = accumulate(CoordAccumulator(1, 4), Batch(X, X @ beta), beta,
                     rng.standard_normal(3), GAUSSIAN)
    assert acc.s1 == 0 and acc.v == 0


def test_zero_gamma_row(rng):
    b = logistic_batch(rng, 12, 5)
    beta = 0.2 * rng.standard_normal(5)
    acc = accumulate(CoordAccumulator(3, 5), b, beta, np.zeros(4), BERNOULLI)
    np.testing.assert_allclose(acc.S_row, -batch_information(BERNOULLI, b.X, beta)[3],
                               rtol=1e-14)


def test_increments_match_raw_formulas(rng):
    b = logistic_batch(rng, 15, 6)
    beta = 0.3 * rng.standard_normal(6)
    gamma = 0.2 * rng.standard_normal(5)
    r = 2
    mu = 1 / (1 + np.exp(-b.X @ beta))
    res = b.y - mu
    z = b.X[:, r] - np.delete(b.X, r, axis=1) @ gamma
    J = (b.X * (mu * (1 - mu))[:, None]).T @ b.X
    gt = np.insert(gamma, r, -1.0)
    for mode in VarianceMode:
        acc = accumulate(CoordAccumulator(r, 6), b, beta, gamma, BERNOULLI, variance_mode=mode)
        assert acc.s1 == pytest.approx(z @ res, rel=1e-10, abs=1e-12)
        np.testing.assert_allclose(acc.S_row, gt @ J, rtol=1e-10, atol=1e-12)
        assert acc.s2 == pytest.approx(gt @ J @ beta, rel=1e-10, abs=1e-12)
        v = (z @ res) ** 2 if mode is VarianceMode.AS_WRITTEN else np.sum(z ** 2 * res ** 2)
        assert acc.v == pytest.approx(v, rel=1e-10)


def test_three_batch_streaming_equals_direct(rng):
    p, r, lam = 6, 1, 0.02
    beta0 = np.r_[1.0, 0.5, 0, 0, 0, 0]
    state = LassoState(p)
    acc = CoordAccumulator(r, p)
    kept = []
    gamma = np.zeros(p - 1)
    for _ in range(3):
        b = logistic_batch(rng, 25, p, beta0)
        state = update_lasso(state, b, lam, FAST, BERNOULLI)
        gamma = solve_projection(state.info_agg, state.n_total, lam, r, gamma, FAST).x
        acc = accumulate(acc, b, state.beta_hat, gamma, BERNOULLI)
        kept.append((b, state.beta_hat.copy(), gamma.copy()))
    t = tau(state.info_agg, gamma, r)
    beta_b = state.beta_hat
    total, var = 0.0, 0.0
    for b, beta_j, gamma_j in kept:
        mu = 1 / (1 + np.exp(-b.X @ beta_j))
        z = b.X[:, r] - np.delete(b.X, r, axis=1) @ gamma_j
        Jj = (b.X * (mu * (1 - mu))[:, None]).T @ b.X
        total += z @ (b.y - mu) + extend(gamma_j, r) @ Jj @ (beta_b - beta_j)
        var += (z @ (b.y - mu)) ** 2
    direct = beta_b[r] + total / t
    assert debiased_estimate(acc, beta_b, t) == pytest.approx(direct, rel=1e-10, abs=1e-10)
    assert standard_error(acc, t) == pytest.approx(np.sqrt(var) / t, rel=1e-10)


def test_first_batch_has_no_correction(rng):
    b = logistic_batch(rng, 20, 4)
    state = update_lasso(LassoState(4), b, 0.05, FAST, BERNOULLI)
    gamma = solve_projection(state.info_agg, 20, 0.05, 0, config=FAST).x
    acc = accumulate(CoordAccumulator(0, 4), b, state.beta_hat, gamma, BERNOULLI)
    assert acc.S_row @ state.beta_hat - acc.s2 == pytest.approx(0, abs=1e-12)
    X = rng.standard_normal((5, 4))
    beta = rng.standard_normal(4)
    acc = accumulate(CoordAccumulator(0, 4), Batch(X, X @ beta), beta, np.zeros(3), GAUSSIAN)
    assert debiased_estimate(acc, beta, 2.0) == pytest.approx(beta[0], abs=1e-12)


def test_standard_error_examples():
    acc = CoordAccumulator(0, 2, v=0.0)
    assert standard_error(acc, 3.0) == 0.0
    assert standard_error(CoordAccumulator(0, 2, v=4.0), 8.0) == 0.25
    with pytest.raises(DegenerateProjection):
        standard_error(acc, 0.0)
    with pytest.raises(DegenerateProjection):
        debiased_estimate(acc, np.zeros(2), -1.0)


def test_confidence_interval_examples():
    lo, hi = confidence_interval(0.0, 1.0, 0.95)
    assert lo == pytest.approx(-1.959964, abs=1e-6) and hi == pytest.approx(1.959964, abs=1e-6)
    assert confidence_interval(2.0, 0.0) == (2.0, 2.0)
    with pytest.raises(ValueError):
        confidence_interval(0.0, 1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(est=st.floats(-1e3, 1e3), se=st.floats(0, 1e3), level=st.floats(0.5, 0.999))
def test_interval_identity(est, se, level):
    lo, hi = confidence_interval(est, se, level)
    assert lo <= est <= hi
    z = normal_quantile(0.5 + level / 2)
    assert hi - lo == pytest.approx(2 * z * se, rel=1e-12, abs=1e-9)


def test_quantile_and_cdf_against_mpmath():
    mpmath.mp.dps = 30
    for q in np.linspace(0.001, 0.999, 41):
        exact = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(q) - 1))
        assert abs(normal_quantile(q) - exact) < 1e-8
    for x in np.linspace(-8, 8, 33):
        exact = float(mpmath.ncdf(x))
        assert abs(normal_cdf(x) - exact) <= 1e-14 + 1e-12 * exact


def test_wald_pvalue_examples():
    assert wald_pvalue(0.0, 1.0) == 1.0
    assert wald_pvalue(0.0, 0.0) == 1.0
    assert wald_pvalue(1.0, 0.0) == 0.0
    assert wald_pvalue(1.959964, 1.0) == pytest.approx(0.05, abs=1e-7)
    mpmath.mp.dps = 30
    exact = float(mpmath.erfc(3 / mpmath.sqrt(2)))
    assert wald_pvalue(-3.0, 1.0) == pytest.approx(exact, rel=1e-12)
    assert wald_pvalue(3.0, 1.0) == pytest.approx(0.0026998, abs=1e-7)
    assert 0 < wald_pvalue(30.0, 1.0) < 1e-190
    with pytest.raises(ValueError):
        wald_pvalue(1.0, -1.0)


def test_neglog10_floor():
    assert neglog10_pvalue(1.0) == 0.0
    assert neglog10_pvalue(0.0) == 300.0
    assert neglog10_pvalue(0.01) == pytest.approx(2.0)


def test_accumulator_invariants(rng):
    acc = CoordAccumulator(0, 3)
    vs = []
    for _ in range(5):
        b = logistic_batch(rng, 8, 3)
        acc = accumulate(acc, b, 0.1 * rng.standard_normal(3), 0.1 * rng.standard_normal(2),
                         BERNOULLI)
        vs.append(acc.v)
    assert all(v >= 0 for v in vs) and np.all(np.diff(vs) >= 0)
    with pytest.raises(DimensionError):
        accumulate(acc, logistic_batch(rng, 4, 4), np.zeros(4), np.zeros(3), BERNOULLI)
    with pytest.raises(FloatingPointError):
        accumulate(acc, Batch(np.full((2, 3), 1e200), np.ones(2)), np.zeros(3),
                   np.ones(2) * 1e200, BERNOULLI)
