import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg, stats

from conftest import random_correlation
from hsvar.model import VarData, ols_from_design
from hsvar.shrinkage import (
    _draw_square_root,
    KAPPA_BINS,
    HorseshoeState,
    ScalarShrinkState,
    ShrinkageProfile,
    kappa_from_lambda,
    kappa_histogram,
    map_kappa,
    normal_means_oracle,
    sample_horseshoe_prior,
    sample_horseshoe_scales,
    sample_laplace_variance,
    sample_scalar_scales,
    sample_theta,
    theta_precision,
)
from hsvar.volatility import VolatilityState


def test_kappa_examples():
    assert kappa_from_lambda(0.0) == 1.0
    assert kappa_from_lambda(1.0) == 0.5
    assert kappa_from_lambda(3.0) == pytest.approx(0.1, abs=1e-15)
    for bad in (-1.0, np.inf, np.nan):
        with pytest.raises(ValueError):
            kappa_from_lambda(bad)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_kappa_monotone(a, b):
    lo, hi = sorted((a, b))
    if hi > lo and kappa_from_lambda(hi) < 1.0:
        assert kappa_from_lambda(lo) >= kappa_from_lambda(hi)
    if hi > lo * (1 + 1e-6) and 1e-6 < hi < 1e6:
        assert kappa_from_lambda(lo) > kappa_from_lambda(hi)


def test_normal_means_oracle_examples():
    assert normal_means_oracle(2.0, 1.0) == 1.0
    assert normal_means_oracle(2.0, 0.0) == 0.0
    assert normal_means_oracle(5.0, 9.0) == pytest.approx(4.5, abs=1e-14)
    with pytest.raises(ValueError):
        normal_means_oracle(np.nan, 1.0)


def _normal_means_data(y):
    # one observation of a scalar mean with unit noise: the normal-means problem
    return VarData(np.array([[1.0]]), np.array([[y]]), 1)


@pytest.mark.parametrize("y", [0.5, 1.0, 2.0, 4.0])
def test_sampler_posterior_mean_matches_normal_means_formula(y):
    lambda_sq = 1.5
    draws = sample_theta(_normal_means_data(y), np.full((1, 1, 1), lambda_sq), None,
                         np.random.default_rng(11), size=400_000)
    est = draws.mean()
    assert abs(est / normal_means_oracle(y, lambda_sq) - 1) < 0.02


def test_horseshoe_zero_theta_gives_inverse_gamma_local_scale():
    rng = np.random.default_rng(1)
    nu = np.full((1, 20, 5000), 0.7)
    state = HorseshoeState(np.ones(nu.shape), np.ones(1), nu, np.ones(1))
    new = sample_horseshoe_scales(np.zeros(nu.shape), state, rng)
    inv = 1.0 / new.lambda_sq
    # lambda^2 ~ IG(1, 1/nu)  =>  1/lambda^2 ~ Gamma(1, scale=nu): mean nu, sd nu
    se = 0.7 / np.sqrt(inv.size)
    assert abs(inv.mean() - 0.7) < 3 * se


def test_horseshoe_large_theta_dominates_prior():
    rng = np.random.default_rng(2)
    n, P = 40, 25
    state = HorseshoeState.ones(n, P)
    theta = np.full((n, n, P), 8.0)
    post = sample_horseshoe_scales(theta, state, rng).lam.ravel()
    prior = np.sqrt(sample_horseshoe_prior(n, P, rng).lambda_sq).ravel()
    assert stats.mannwhitneyu(post, prior, alternative="greater").pvalue < 1e-6


def test_horseshoe_outputs_positive_and_validate():
    rng = np.random.default_rng(3)
    state = sample_horseshoe_scales(rng.standard_normal((3, 3, 2)), HorseshoeState.ones(3, 2), rng)
    state.validate()
    with pytest.raises(ValueError):
        sample_horseshoe_scales(np.full((3, 3, 2), np.nan), state, rng)


def test_horseshoe_prior_kappa_is_beta_half_half():
    rng = np.random.default_rng(4)
    n, P = 224, 2                                 # 100,352 coefficients
    state = sample_horseshoe_prior(n, P, rng)
    for _ in range(3):                            # successive conditionals keep the prior
        theta = np.sqrt(state.prior_variance()) * rng.standard_normal((n, n, P))
        state = sample_horseshoe_scales(theta, state, rng)
    assert stats.kstest(state.kappa.ravel(), stats.beta(0.5, 0.5).cdf).pvalue > 0.01


def test_ridge_scales_unchanged():
    st_ = ScalarShrinkState.initial("ridge", 2, 2)
    assert np.all(st_.lambda_sq == 9.0)
    out = sample_scalar_scales(np.ones((2, 2, 2)), st_, np.random.default_rng(0))
    assert out is st_


def test_unknown_scheme():
    with pytest.raises(ValueError):
        ScalarShrinkState.initial("cauchy", 2, 1)


def test_student_t_zero_theta_moment():
    rng = np.random.default_rng(5)
    st_ = ScalarShrinkState.initial("t", 1, 100_000)
    out = sample_scalar_scales(np.zeros((1, 1, 100_000)), st_, rng)
    inv = 1.0 / out.lambda_sq.ravel()
    # IG(1, 1/2): 1/lambda^2 ~ Gamma(1, scale=2), sd 2
    assert abs(inv.mean() - 2.0) < 3 * 2.0 / np.sqrt(inv.size)


def test_laplace_prior_predictive_is_double_exponential():
    rng = np.random.default_rng(6)
    rate = 2.0
    lam = rng.exponential(1.0 / rate, 100_000)
    theta = np.sqrt(lam) * rng.standard_normal(lam.size)
    # N(0, lambda^2) with lambda^2 ~ Exp(rate) is Laplace with scale 1/sqrt(2 rate)
    assert stats.kstest(theta, stats.laplace(scale=1 / np.sqrt(2 * rate)).cdf).pvalue > 0.01


@pytest.mark.parametrize("scheme", ["t", "lap"])
def test_scale_conditional_leaves_prior_invariant(scheme):
    rng = np.random.default_rng(7)
    m = 100_000
    if scheme == "t":
        prior = stats.invgamma(0.5, scale=0.5)
        lam = prior.rvs(m, random_state=rng)
    else:
        prior = stats.expon(scale=0.5)
        lam = rng.exponential(0.5, m)
    theta = np.sqrt(lam) * rng.standard_normal(m)
    st_ = ScalarShrinkState.initial(scheme, 1, m)
    new = sample_scalar_scales(theta.reshape(1, 1, m), st_, rng).lambda_sq.ravel()
    assert stats.kstest(new, prior.cdf).pvalue > 0.01


def test_laplace_variance_at_zero_is_gamma():
    rng = np.random.default_rng(8)
    out = sample_laplace_variance(np.zeros(100_000), 2.0, rng)
    assert stats.kstest(out, stats.gamma(0.5, scale=0.5).cdf).pvalue > 0.01


def _toy_data(rng, T=30, n=2, P=2):
    y = rng.standard_normal((T + P, n))
    return VarData.from_panel(y, P)


def test_flat_prior_mean_is_ols():
    rng = np.random.default_rng(9)
    data = _toy_data(rng, T=60)
    Q, b = theta_precision(data, np.full((2, 2, 2), 1e20), None)
    mean = linalg.solve(Q, b).reshape(2, 2, 2)
    ols = ols_from_design(data.X, data.Y, 2)
    assert np.max(np.abs(mean - ols)) <= 1e-4 * np.max(np.abs(ols))


def test_dogmatic_prior_draw_is_zero():
    rng = np.random.default_rng(10)
    draw = sample_theta(_toy_data(rng), np.zeros((2, 2, 2)), None, rng)
    assert np.max(np.abs(draw)) < 1e-5


def test_conjugate_scalar_regression():
    rng = np.random.default_rng(11)
    y = rng.standard_normal(9)
    data = VarData.from_panel(y[:, None], 1)
    x, z = y[:-1], y[1:]
    v0 = 2.5
    post_var = 1.0 / (x @ x + 1.0 / v0)
    post_mean = post_var * (x @ z)
    Q, b = theta_precision(data, np.full((1, 1, 1), v0), None)
    assert abs(1.0 / Q[0, 0] - post_var) < 1e-10
    assert abs(b[0] / Q[0, 0] - post_mean) < 1e-10
    draws = sample_theta(data, np.full((1, 1, 1), v0), None, rng, size=100_000).ravel()
    se = np.sqrt(post_var / draws.size)
    assert abs(draws.mean() - post_mean) < 4 * se
    # sample variance SE ~ var * sqrt(2 / m)
    assert abs(draws.var() - post_var) < 4 * post_var * np.sqrt(2.0 / draws.size)


def test_heteroskedastic_precision_matches_dense_sum():
    rng = np.random.default_rng(12)
    n, P, T = 3, 2, 15
    data = _toy_data(rng, T=T, n=n, P=P)
    psi = random_correlation(n, rng)
    vol = VolatilityState(0.3 * rng.standard_normal((n, T)), psi, np.full(n, 0.1))
    pv = rng.uniform(0.5, 2.0, (n, n, P))
    Q, b = theta_precision(data, pv, vol)
    Qd = np.diag(1.0 / pv.ravel())
    bd = np.zeros(n * n * P)
    for t in range(T):
        d = np.exp(vol.omega[:, t])
        oi = np.linalg.inv(psi * np.outer(d, d))
        Xt = np.kron(np.eye(n), data.X[t][None, :])     # (n, n^2 P), rows are equations
        Qd += Xt.T @ oi @ Xt
        bd += Xt.T @ oi @ data.Y[t]
    assert np.allclose(Q, Qd, rtol=1e-10, atol=1e-10)
    assert np.allclose(b, bd, rtol=1e-10, atol=1e-10)


def test_square_root_draw_matches_cholesky_draw():
    rng = np.random.default_rng(14)
    n, P, T = 2, 2, 25
    data = _toy_data(rng, T=T, n=n, P=P)
    vol = VolatilityState(0.5 * rng.standard_normal((n, T)), random_correlation(n, rng), np.full(n, 0.1))
    pv = rng.uniform(0.2, 3.0, (n, n, P))
    Q, b = theta_precision(data, pv, vol)
    cov = np.linalg.inv(Q)
    draws = _draw_square_root(data, pv, vol, rng, size=200_000)
    se = np.sqrt(np.diag(cov) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - cov @ b) < 4 * se)
    assert np.allclose(np.cov(draws.T), cov, atol=0.02 * np.abs(cov).max())


def test_sample_theta_falls_back_when_cholesky_fails(monkeypatch):
    import hsvar.shrinkage as sh

    def fail(*args, **kw):
        raise np.linalg.LinAlgError("forced")

    monkeypatch.setattr(sh, "draw_gaussian", fail)
    data = _toy_data(np.random.default_rng(15))
    draw = sh.sample_theta(data, np.ones((2, 2, 2)), None, np.random.default_rng(1))
    ref = _draw_square_root(data, np.ones((2, 2, 2)), None, np.random.default_rng(1))
    assert np.array_equal(draw.ravel(), ref)


def test_sample_theta_reproducible():
    data = _toy_data(np.random.default_rng(13))
    pv = np.ones((2, 2, 2))
    a = sample_theta(data, pv, None, np.random.default_rng(99))
    b = sample_theta(data, pv, None, np.random.default_rng(99))
    assert np.array_equal(a, b)


def test_map_kappa_examples():
    assert map_kappa(np.full(200, 0.95)) == pytest.approx(0.95, abs=0.01)
    u = np.random.default_rng(14).uniform(1e-9, 1, 1000)
    mids = (np.arange(KAPPA_BINS) + 0.5) / KAPPA_BINS
    assert np.min(np.abs(mids - map_kappa(u))) < 1e-12
    b = np.random.default_rng(15).beta(0.5, 0.5, 10_000)
    assert map_kappa(b) in (mids[0], mids[-1])
    with pytest.raises(ValueError):
        map_kappa([])
    with pytest.raises(ValueError):
        map_kappa([0.0, 0.5])
    with pytest.raises(ValueError):
        map_kappa([1.2])


def test_map_kappa_tie_goes_toward_one():
    s = np.array([0.05] * 10 + [0.85] * 10)
    assert map_kappa(s) == pytest.approx(0.85)


def test_histogram_bins_are_right_closed():
    h = kappa_histogram(np.array([[0.02], [0.02 + 1e-12], [1.0]]))
    assert h[0, 0] == 1 and h[1, 0] == 1 and h[-1, 0] == 1


def test_shrinkage_profile_matches_per_entry_map():
    rng = np.random.default_rng(16)
    k = rng.beta(2, 5, (300, 2, 2, 1))
    prof = ShrinkageProfile(k)
    for idx in np.ndindex(2, 2, 1):
        assert prof.map_estimate[idx] == map_kappa(k[(slice(None),) + idx])
    assert prof.histogram.sum(axis=0).min() == 300
