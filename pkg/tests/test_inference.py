import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sarp import inference as inf
from sarp.market_data import DataError, FactorSeries, MacroSeries
from sarp.sorts import BinSeries, LEGS, N_BINS

MONTHS = np.arange(np.datetime64("2000-01"), np.datetime64("2020-01")).astype("datetime64[D]")


def brute_force_hac(X, e, lags):
    """Direct double sum over all (t, s) pairs with Bartlett weights."""
    T, k = X.shape
    S = np.zeros((k, k))
    for t in range(T):
        for s in range(T):
            d = abs(t - s)
            if d <= lags:
                S += (1.0 - d / (lags + 1.0)) * e[t] * e[s] * np.outer(X[t], X[s])
    B = np.linalg.inv(X.T @ X)
    return B @ S @ B


# --------------------------------------------------------------------------
# OLS
# --------------------------------------------------------------------------


def test_ols_exact_fit():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    b0 = np.array([0.5, -1.0, 2.0])
    res = inf.ols(X @ b0, X, include_intercept=False)
    assert np.max(np.abs(res.coefficients - b0)) <= 1e-10


def test_ols_orthogonal_response():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 2))
    y = rng.normal(size=60)
    Z = np.column_stack([np.ones(60), X])
    y = y - Z @ np.linalg.lstsq(Z, y, rcond=None)[0] + 0.7
    res = inf.ols(y, X)
    assert np.max(np.abs(res.coefficients[1:])) <= 1e-12
    assert res.coefficients[0] == pytest.approx(y.mean(), abs=1e-12)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 3))
    y = X @ [1.0, 0.2, -0.4] + rng.normal(size=50)
    Z = np.column_stack([np.ones(50), X])
    # textbook route: explicit inverse of Z'Z
    want = np.linalg.inv(Z.T @ Z) @ (Z.T @ y)
    res = inf.ols(y, X)
    assert np.max(np.abs(res.coefficients - want)) <= 1e-10
    assert np.max(np.abs(Z.T @ res.residuals)) <= 1e-8 * np.abs(Z).max() * np.abs(y).max()
    s2 = res.residuals @ res.residuals / (50 - 4)
    assert np.allclose(res.covariance, s2 * np.linalg.inv(Z.T @ Z), rtol=1e-10, atol=0)
    assert np.allclose(res.t_statistics, res.coefficients / np.sqrt(np.diag(res.covariance)))


def test_ols_rank_deficiency():
    X = np.ones((20, 2))
    with pytest.raises(np.linalg.LinAlgError):
        inf.ols(np.arange(20.0), X, include_intercept=False)
    with pytest.raises(np.linalg.LinAlgError):
        inf.ols(np.arange(3.0), np.ones((3, 4)))


# --------------------------------------------------------------------------
# Newey-West
# --------------------------------------------------------------------------


def test_hac_small_instance_matches_double_sum():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(12, 2))
    y = X @ [0.3, -0.2] + rng.normal(size=12)
    res = inf.newey_west(inf.ols(y, X), 6)
    want = brute_force_hac(res.X, res.residuals, 6)
    assert np.max(np.abs(res.hac_covariance - want)) <= 1e-12 * np.abs(want).max()
    assert np.allclose(res.hac_covariance, res.hac_covariance.T, rtol=0, atol=0)
    assert np.all(np.linalg.eigvalsh(res.hac_covariance) >= -1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_hac_lag_zero_is_white(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    y = X @ [1, 2, 3] + rng.normal(size=30) * (1 + np.abs(X[:, 0]))
    res = inf.ols(y, X)
    nw = inf.newey_west(res, 0)
    assert np.array_equal(nw.covariance, inf.white_covariance(res.X, res.residuals))
    g = res.X * res.residuals[:, None]
    B = np.linalg.inv(res.X.T @ res.X)
    assert np.allclose(nw.covariance, B @ g.T @ g @ B, rtol=1e-12, atol=0)


def test_hac_lag_bounds():
    res = inf.ols(np.arange(8.0) ** 2, np.arange(8.0))
    with pytest.raises(ValueError):
        inf.newey_west(res, 8)
    with pytest.raises(ValueError):
        inf.newey_west(res, -1)


def test_hac_close_to_classical_under_iid():
    hits = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(2000, 2))
        y = X @ [0.5, 0.5] + rng.normal(size=2000)
        res = inf.ols(y, X)
        nw = inf.newey_west(res, 6)
        ratio = nw.standard_errors / res.standard_errors
        hits += bool(np.all(np.abs(ratio - 1) <= 0.15))
    assert hits >= 0.95 * 40


def test_mean_test_constant_series():
    m = inf.mean_test(np.full(24, 0.004))
    assert m.mean == 0.004 and m.se_zero and math.isnan(m.t)


def test_mean_test_size():
    small = 0
    for seed in range(400):
        x = np.random.default_rng(seed).normal(0, 0.05, 480)
        small += abs(inf.mean_test(x, 6).t) < 2
    assert small >= 0.95 * 400


def test_mean_test_drops_nan_and_matches_regression():
    x = np.random.default_rng(4).normal(0.01, 0.05, 100)
    x[[5, 50]] = np.nan
    m = inf.mean_test(x, 6)
    y = x[~np.isnan(x)]
    want = brute_force_hac(np.ones((98, 1)), y - y.mean(), 6)
    assert m.n == 98 and m.mean == pytest.approx(y.mean(), abs=1e-15)
    assert m.se == pytest.approx(math.sqrt(want[0, 0]), rel=1e-12)


# --------------------------------------------------------------------------
# factor alphas
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def factors():
    rng = np.random.default_rng(5)
    return FactorSeries(MONTHS, rng.normal(0.005, 0.04, (MONTHS.size, 6)))


def test_alpha_of_market_is_zero(factors):
    res = inf.factor_alpha(MONTHS, factors.values[:, 0], factors, "FF3")
    assert abs(res.coef("alpha")) <= 1e-10
    assert res.coef("mktrf") == pytest.approx(1.0, abs=1e-10)


def test_alpha_of_constant_plus_orthogonal_noise(factors):
    rng = np.random.default_rng(6)
    Z = np.column_stack([np.ones(MONTHS.size), factors.select(inf.FF_MODELS["FF5"])])
    u = rng.normal(0, 0.02, MONTHS.size)
    u -= Z @ np.linalg.lstsq(Z, u, rcond=None)[0]
    res = inf.factor_alpha(MONTHS, 0.005 + u, factors, "FF5")
    assert res.coef("alpha") == pytest.approx(0.005, abs=1e-12)
    assert res.hac_lags == 6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=5, max_size=5))
def test_alpha_of_factor_combination_is_zero(weights):
    rng = np.random.default_rng(5)
    F = FactorSeries(MONTHS, rng.normal(0.005, 0.04, (MONTHS.size, 6)))
    y = F.select(inf.FF_MODELS["FF5"]) @ np.asarray(weights)
    res = inf.factor_alpha(MONTHS, y, F, "FF5")
    assert abs(res.coef("alpha")) <= 1e-10


def test_alpha_needs_aligned_factors(factors):
    late = MONTHS + 400 * 31
    with pytest.raises(DataError):
        inf.factor_alpha(late.astype("datetime64[M]").astype("datetime64[D]"),
                         np.zeros(MONTHS.size), factors)
    with pytest.raises(ValueError):
        inf.factor_alpha(MONTHS, np.zeros(MONTHS.size), factors, "FF4")


# --------------------------------------------------------------------------
# Fama-MacBeth
# --------------------------------------------------------------------------


def test_fm_self_pricing():
    rng = np.random.default_rng(7)
    T, K = 120, 2
    F = rng.normal([0.01, 0.004], 0.03, (T, K))
    B = np.vstack([np.eye(K), rng.normal(1.0, 0.5, (8, K))])
    R = F @ B.T
    for intercept in (False, True):
        res = inf.fama_macbeth(R, F, intercept=intercept)
        lam = res.lambdas[int(intercept):]
        assert np.allclose(lam, F.mean(axis=0), rtol=0, atol=1e-12)
        assert np.allclose(res.betas, B, rtol=0, atol=1e-10)
        if intercept:
            assert abs(res.lambdas[0]) <= 1e-12


def test_fm_one_factor_market():
    rng = np.random.default_rng(8)
    T, M = 600, 25
    f = rng.normal(0.006, 0.045, T)
    beta = rng.uniform(0.5, 1.5, M)
    R = np.outer(f, beta) + rng.normal(0, 0.03, (T, M))
    mkt = R.mean(axis=1)
    res = inf.fama_macbeth(R, mkt)
    assert abs(res.lambdas[1] - mkt.mean()) <= 2 * res.fm_standard_errors[1]
    assert res.names == ("const", "f0")


def test_fm_outputs_are_consistent():
    rng = np.random.default_rng(9)
    T, M = 100, 12
    F = rng.normal(0.005, 0.04, (T, 2))
    R = F @ rng.normal(1, 0.4, (2, M)) + rng.normal(0, 0.02, (T, M))
    res = inf.fama_macbeth(R, F, names=("mkt", "sar"))
    assert res.lambdas.shape == (3,) and res.monthly_lambdas.shape == (T, 3)
    assert np.allclose(res.lambdas, res.monthly_lambdas.mean(0), rtol=0, atol=1e-15)
    se = res.monthly_lambdas.std(0, ddof=1) / math.sqrt(T)
    assert np.allclose(res.fm_t_statistics, res.lambdas / se)
    assert 0 <= res.chi2_p_value <= 1 and res.chi2_df == M - 3
    # chi-square recomputed directly from the pricing errors
    Z = np.column_stack([np.ones(M), res.betas])
    A = R - res.monthly_lambdas @ Z.T
    abar = A.mean(0)
    S = np.cov(A, rowvar=False)
    want = T * abar @ np.linalg.pinv(S, rcond=1e-10) @ abar
    assert res.chi2_statistic == pytest.approx(want, rel=1e-6)


def test_fm_errors():
    with pytest.raises(ValueError):
        inf.fama_macbeth(np.zeros((10, 2)), np.zeros((10, 2)))
    with pytest.raises(ValueError):
        inf.fama_macbeth(np.zeros((10, 5)), np.zeros((9, 1)))
    R = np.random.default_rng(0).normal(size=(30, 5))
    with pytest.raises(np.linalg.LinAlgError):
        inf.fama_macbeth(R, np.column_stack([R[:, 0], R[:, 0]]))


# --------------------------------------------------------------------------
# SAR factor and performance
# --------------------------------------------------------------------------


def _bins(lo, hi):
    n = len(lo)
    vals = {leg: np.zeros((n, N_BINS + 2)) for leg in LEGS}
    vals["ls"][:, 0] = lo
    vals["ls"][:, N_BINS - 1] = hi
    return BinSeries(MONTHS[:n], vals)


def test_sar_factor_examples():
    f = inf.sar_factor(_bins(np.full(5, 0.01), np.full(5, 0.01)))
    assert np.all(f.values == 0)
    f = inf.sar_factor(_bins(np.full(5, 0.02), np.full(5, 0.005)))
    assert np.allclose(f.values, 0.015, rtol=0, atol=1e-17)
    assert np.array_equal(f.values, f.lo - f.hi)


def test_performance_flat_series():
    p = inf.performance_stats(np.full(12, 0.01))
    assert p.final_value == pytest.approx(100 * 1.01 ** 12, rel=1e-14)
    assert not p.sharpe_defined and math.isnan(p.sharpe)
    assert p.rolling[12].size == 1 and p.rolling[36].size == 0


def test_performance_matches_direct_formulas():
    rng = np.random.default_rng(10)
    r = rng.normal(0.008, 0.05, 90)
    rf = np.full(90, 0.002)
    p = inf.performance_stats(r, rf)
    n = r.size
    mean = sum(r) / n
    m2 = sum((x - mean) ** 2 for x in r) / n
    m3 = sum((x - mean) ** 3 for x in r) / n
    m4 = sum((x - mean) ** 4 for x in r) / n
    sd = math.sqrt(m2 * n / (n - 1))
    ex = r - rf
    ex_sd = math.sqrt(sum((x - ex.mean()) ** 2 for x in ex) / (n - 1))
    assert p.mean == pytest.approx(mean, abs=1e-12)
    assert p.sd == pytest.approx(sd, abs=1e-12)
    assert p.skewness == pytest.approx(m3 / m2 ** 1.5, abs=1e-12)
    assert p.kurtosis == pytest.approx(m4 / m2 ** 2, abs=1e-12)
    assert p.sharpe == pytest.approx(ex.mean() / ex_sd * math.sqrt(12), abs=1e-12)
    value = 100.0
    for x in r:
        value *= 1 + x
    assert p.final_value == pytest.approx(value, rel=1e-12)
    assert p.rolling[36][-1] == pytest.approx(100 * np.prod(1 + r[-36:]), rel=1e-12)
    assert p.rolling[60].size == n - 59
    assert np.allclose(p.log_cumulative, np.log(p.cumulative))


# --------------------------------------------------------------------------
# ARMA(1,1)
# --------------------------------------------------------------------------


def _arma(c, a, b, T, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(0, 0.01, T + 200)
    r = np.zeros(T + 200)
    for t in range(1, T + 200):
        r[t] = c + a * r[t - 1] + b * e[t - 1] + e[t]
    return r[200:]


def test_arma_recovers_parameters():
    res = inf.arma11_fit(_arma(0.0, 0.5, -0.3, 2000, 11))
    assert abs(res.c) <= 0.1 and abs(res.a - 0.5) <= 0.1 and abs(res.b + 0.3) <= 0.1
    assert res.converged and res.css > 0


def test_arma_white_noise():
    """On white noise the CSS surface has a near-flat ridge along a = -b."""
    ok = 0
    for seed in range(40):
        r = np.random.default_rng(seed).normal(0.005, 0.04, 500)
        res = inf.arma11_fit(r)
        ok += abs(res.a) < 0.2 and abs(res.b) < 0.2
    assert ok >= 0.9 * 40


def test_arma_errors():
    with pytest.raises(ValueError):
        inf.arma11_fit(np.full(40, 0.01))
    with pytest.raises(ValueError):
        inf.arma11_fit(np.arange(10.0))


def test_arma_css_minimum():
    r = _arma(0.001, 0.3, 0.2, 400, 12)
    res = inf.arma11_fit(r)
    base = inf._css(r, res.c, res.a, res.b)
    for d in ([1e-4, 0, 0], [0, 1e-3, 0], [0, 0, 1e-3], [0, -1e-3, 0], [0, 0, -1e-3]):
        assert inf._css(r, res.c + d[0], res.a + d[1], res.b + d[2]) >= base - 1e-15


# --------------------------------------------------------------------------
# macro regressions
# --------------------------------------------------------------------------


def _macro(values, names=("indpro", "pce")):
    return MacroSeries(MONTHS[: values.shape[0]], names, values)


def test_macro_exact_copy():
    rng = np.random.default_rng(13)
    T = 120
    levels = np.cumsum(rng.normal(size=(T, 2)), axis=0)
    r2 = 0.3 + levels[:, 1] - levels[0, 1]
    res = inf.macro_regression(MONTHS[:T], r2, _macro(levels), rng.normal(0, 0.04, T))
    assert res.result.coef("d_pce") == pytest.approx(1.0, abs=1e-10)
    assert res.result.r_squared == pytest.approx(1.0, abs=1e-12)
    assert res.n_dropped == 2  # the first difference and its lag


def test_macro_lag_alignment():
    rng = np.random.default_rng(14)
    T = 200
    levels = np.cumsum(rng.normal(size=(T, 2)), axis=0)
    d = np.diff(levels[:, 0], prepend=np.nan)
    dr2 = np.zeros(T)
    dr2[2:] = d[1:-1]  # respond to last month's shock
    r2 = np.cumsum(dr2)
    res = inf.macro_regression(MONTHS[:T], r2, _macro(levels), rng.normal(0, 0.04, T)).result
    assert res.coef("d_indpro_lag1") == pytest.approx(1.0, abs=1e-10)
    assert abs(res.coef("d_indpro")) <= 1e-10


def test_macro_listwise_deletion():
    rng = np.random.default_rng(15)
    T = 60
    levels = np.cumsum(rng.normal(size=(T, 2)), axis=0)
    months = np.delete(MONTHS[:T], 30)
    r2 = rng.random(T - 1)
    res = inf.macro_regression(months, r2, _macro(levels), rng.normal(size=T - 1))
    # the month after the gap loses its change; month 30 is absent
    assert res.n_dropped == 3
    assert np.datetime64(MONTHS[31]) not in res.months


def test_macro_null():
    counts = None
    trials = 100
    for seed in range(trials):
        rng = np.random.default_rng(1000 + seed)
        T = 240
        levels = np.cumsum(rng.normal(size=(T, 4)), axis=0)
        macro = _macro(levels, ("indpro", "pce", "umcsent", "unrate"))
        res = inf.macro_regression(MONTHS[:T], rng.normal(0.3, 0.02, T).cumsum(), macro,
                                   rng.normal(0, 0.04, T)).result
        small = np.abs(res.t_statistics[1:]) < 2
        counts = small.astype(int) if counts is None else counts + small
    assert np.all(counts >= 0.9 * trials)


# --------------------------------------------------------------------------
# correlations
# --------------------------------------------------------------------------


def test_correlation_examples():
    rng = np.random.default_rng(16)
    x = rng.normal(size=50)
    y = 0.5 * x + rng.normal(size=50)
    C = inf.correlation_matrix(np.column_stack([x, -x, y, np.ones(50)]))
    assert C[0, 0] == 1.0 and C[0, 1] == pytest.approx(-1.0, abs=1e-15)
    num = sum((a - x.mean()) * (b - y.mean()) for a, b in zip(x, y))
    den = math.sqrt(sum((a - x.mean()) ** 2 for a in x) * sum((b - y.mean()) ** 2 for b in y))
    assert abs(C[0, 2] - num / den) <= 1e-12
    assert np.array_equal(C, C.T, equal_nan=True)
    assert np.all(np.isnan(C[3])) and np.all(np.isnan(C[:, 3]))
