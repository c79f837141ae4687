import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sarp import synth


def _noiseless(**kw):
    base = dict(n_assets=11, n_factors=3, idio_vol=0.0, n_days=500, seed=0)
    base.update(kw)
    return synth.generate(synth.EconomyConfig(**base))


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    dict(n_assets=4, n_factors=3),          # N = 3 = K
    dict(n_factors=0),
    dict(idio_vol=-0.1),
    dict(cluster_fraction=1.5),
    dict(isolated_idio_range=(3.0, 2.0)),
    dict(n_factors=2, factor_cov=((1e-4, 2e-4), (2e-4, 1e-4))),   # indefinite
    dict(n_factors=2, factor_cov=((1e-4, 1e-5), (0.0, 1e-4))),    # asymmetric
    dict(n_factors=2, factor_mean=(1e-4,)),
])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        synth.EconomyConfig(**kw)


def test_default_factor_moments():
    cfg = synth.EconomyConfig(n_factors=3)
    assert np.all(cfg.mean_vector() == synth.DEFAULT_FACTOR_MEAN)
    cov = cfg.cov_matrix()
    assert np.allclose(np.sqrt(np.diag(cov)), synth.DEFAULT_FACTOR_VOL, rtol=1e-14)
    assert cov[0, 1] / cov[0, 0] == pytest.approx(synth.DEFAULT_FACTOR_CORR)


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def test_noiseless_panel_has_factor_rank():
    truth = _noiseless(n_assets=25)
    assert np.linalg.matrix_rank(truth.daily_returns, tol=1e-12) == 3


def test_same_seed_is_bytewise_identical():
    cfg = synth.EconomyConfig(n_assets=15, n_months=4, seed=11)
    a, b = synth.generate(cfg), synth.generate(cfg)
    assert a.daily_returns.tobytes() == b.daily_returns.tobytes()
    assert a.monthly_returns.tobytes() == b.monthly_returns.tobytes()
    c = synth.generate(dataclasses.replace(cfg, seed=12))
    assert a.daily_returns.tobytes() != c.daily_returns.tobytes()


def test_one_factor_equal_betas_perfectly_correlated():
    truth = synth.generate(synth.EconomyConfig(
        n_assets=8, n_factors=1, beta_scale=0.0, idio_vol=0.0, alpha_scale=0.0,
        cluster_fraction=0.5, seed=2))
    corr = np.corrcoef(truth.daily_returns.T)
    assert np.max(np.abs(corr - 1.0)) <= 1e-12


def test_returns_follow_the_factor_equation():
    truth = synth.generate(synth.EconomyConfig(n_assets=12, alpha_scale=1e-4, seed=5))
    rebuilt = truth.alphas + truth.factor_draws @ truth.betas.T + truth.idio_draws
    assert np.array_equal(rebuilt, truth.daily_returns)


def test_monthly_returns_are_compounded():
    truth = synth.generate(synth.EconomyConfig(n_assets=6, n_months=3, seed=1))
    keys = truth.calendar.astype("datetime64[M]")
    for m, end in enumerate(truth.months):
        rows = keys == np.datetime64(end, "M")
        want = np.prod(1.0 + truth.daily_returns[rows], axis=0) - 1.0
        assert np.allclose(truth.monthly_returns[m], want, rtol=0, atol=1e-15)
        assert truth.calendar[rows][-1] == end
    assert truth.months.size == 3


def test_idiosyncratic_draws_mean_zero_and_independent():
    truth = synth.generate(synth.EconomyConfig(n_assets=30, n_days=5000, seed=8))
    eps, f = truth.idio_draws, truth.factor_draws
    z = eps.mean(0) / (eps.std(0, ddof=1) / np.sqrt(eps.shape[0]))
    assert np.all(np.abs(z) < 4.5)
    # correlations with factors and between assets are O(1/sqrt(T))
    c = np.corrcoef(np.column_stack([eps, f]).T)[:30]  # factors correlate among themselves
    c[:, :30][np.diag_indices(30)] = 0.0
    assert np.max(np.abs(c)) < 5.0 / np.sqrt(eps.shape[0])


def test_cluster_factors_leave_isolated_exposure_unhedgeable():
    truth = synth.generate(synth.EconomyConfig(n_assets=30, n_factors=4, cluster_factors=2,
                                               seed=1))
    assert np.all(truth.betas[truth.in_cluster, 2:] == 0.0)
    assert np.all(truth.betas[~truth.in_cluster, :2] == 0.0)
    with pytest.raises(ValueError):
        synth.EconomyConfig(n_factors=3, cluster_factors=4)


def test_two_cluster_design():
    truth = synth.generate(synth.EconomyConfig(n_assets=40, cluster_fraction=0.5, seed=3))
    assert truth.in_cluster.sum() == 20
    iso = truth.betas[~truth.in_cluster]
    assert np.all(np.count_nonzero(iso, axis=1) == 1)
    assert np.all(truth.idio_scale[truth.in_cluster] == 1.0)
    lo, hi = truth.config.isolated_idio_range
    assert np.all((truth.idio_scale[~truth.in_cluster] >= lo)
                  & (truth.idio_scale[~truth.in_cluster] <= hi))


# --------------------------------------------------------------------------
# oracle replication
# --------------------------------------------------------------------------


def test_noiseless_spanning():
    truth = _noiseless()
    for a in truth.assets:
        rep = synth.oracle_replication(truth, a)
        assert np.max(np.abs(rep.residual)) <= 1e-8


def test_duplicated_asset_gets_unit_weight():
    truth = synth.generate(synth.EconomyConfig(n_assets=10, n_days=300, seed=4))
    R = truth.daily_returns.copy()
    R[:, 7] = R[:, 2]
    dup = dataclasses.replace(truth, daily_returns=R)
    rep = synth.oracle_replication(dup, 2)
    want = np.zeros(9)
    want[6] = 1.0  # column 7 is index 6 once column 2 is removed
    assert np.max(np.abs(rep.b - want)) <= 1e-10
    assert np.max(np.abs(rep.residual)) <= 1e-12
    assert not rep.degenerate


def test_degenerate_flag_on_singular_design():
    truth = _noiseless(n_assets=8)
    rep = synth.oracle_replication(truth, 0)
    assert rep.degenerate and rep.rank == 3


def test_residual_variance_bounded_below():
    sigma = 0.01
    truth = synth.generate(synth.EconomyConfig(n_assets=20, n_days=50_000, idio_vol=sigma,
                                               cluster_fraction=1.0, seed=6))
    for i in range(5):
        rep = synth.oracle_replication(truth, i)
        assert rep.residual.var() >= sigma ** 2 * (1 - 1e-2)


def test_oracle_needs_tall_system():
    truth = synth.generate(synth.EconomyConfig(n_assets=30, n_days=20, seed=0))
    with pytest.raises(ValueError):
        synth.oracle_replication(truth, 0)


# --------------------------------------------------------------------------
# empirical SARP
# --------------------------------------------------------------------------


def test_sarp_with_zero_weights_is_own_mean():
    truth = synth.generate(synth.EconomyConfig(n_assets=6, n_months=5, seed=2))
    est = synth.empirical_sarp_oracle(truth, 3, np.zeros(5))
    assert est == pytest.approx(truth.monthly_returns[:, 3].mean(), abs=1e-15)
    with pytest.raises(ValueError):
        synth.empirical_sarp_oracle(truth, 3, np.zeros(4))


def _ls(truth, i, b):
    M = truth.monthly_returns
    return M[:, i] - np.delete(M, i, axis=1) @ b


def test_sarp_zero_premium_economy():
    truth = synth.generate(synth.EconomyConfig(
        n_assets=12, n_months=240, factor_mean=(0.0,) * 3, alpha_scale=0.0, seed=9))
    for i in (0, 5, 11):
        b = synth.oracle_replication(truth, i).b
        ls = _ls(truth, i, b)
        se = ls.std(ddof=1) / np.sqrt(ls.size)
        assert abs(synth.empirical_sarp_oracle(truth, i, b)) <= 3 * se


def test_sarp_of_exact_hedge_is_alpha():
    cfg = synth.EconomyConfig(n_assets=6, n_factors=1, n_months=600, factor_mean=(5e-4,),
                              factor_cov=((1e-4,),), idio_vol=0.005, seed=12)
    truth = synth.generate(cfg)
    alphas = np.zeros(6)
    alphas[0] = 2e-4
    daily = alphas + truth.factor_draws @ truth.betas.T + truth.idio_draws
    monthly = synth._compound(truth.calendar, daily)
    truth = dataclasses.replace(truth, alphas=alphas, daily_returns=daily,
                                monthly_returns=monthly)
    b = np.zeros(5)
    b[0] = truth.betas[0, 0] / truth.betas[1, 0]
    est = synth.empirical_sarp_oracle(truth, 0, b)
    ls = _ls(truth, 0, b)
    se = ls.std(ddof=1) / np.sqrt(ls.size)
    days = np.unique(truth.calendar.astype("datetime64[M]"), return_counts=True)[1]
    want = np.mean((1 + alphas[0]) ** days - 1)
    assert abs(est - want) <= 3 * se


def test_r2_and_premium_rank_negatively():
    """Assets the others span well earn a smaller long-short premium."""
    rhos = []
    for seed in range(8):
        truth = synth.generate(synth.EconomyConfig(
            n_assets=40, n_factors=4, cluster_factors=1, cluster_fraction=0.7, n_months=240,
            factor_mean=(1e-3,) * 4, isolated_idio_range=(1.0, 3.0), beta_scale=0.1,
            seed=seed))
        r2, prem = [], []
        for i in range(40):
            rep = synth.oracle_replication(truth, i)
            y = truth.daily_returns[:, i]
            r2.append(1 - rep.residual @ rep.residual / (y @ y))
            prem.append(synth.empirical_sarp_oracle(truth, i, rep.b))
        rhos.append(stats.spearmanr(r2, prem).statistic)
    rhos = np.array(rhos)
    t = rhos.mean() / (rhos.std(ddof=1) / np.sqrt(rhos.size))
    assert rhos.mean() < 0
    assert stats.t.cdf(t, rhos.size - 1) < 0.05


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(0, 6))
def test_noiseless_spanning_property(seed, k, extra):
    truth = synth.generate(synth.EconomyConfig(n_assets=k + 2 + extra, n_factors=k,
                                               idio_vol=0.0, n_days=200, seed=seed))
    rep = synth.oracle_replication(truth, seed % truth.betas.shape[0])
    assert np.max(np.abs(rep.residual)) <= 1e-8


# --------------------------------------------------------------------------
# side files
# --------------------------------------------------------------------------


def test_factor_files_carry_economy_factors():
    truth = synth.generate(synth.EconomyConfig(n_assets=6, n_factors=3, n_months=3, seed=1))
    fd, fm = synth.factor_files(truth)
    assert np.array_equal(fd.values[:, :3], truth.factor_draws)
    assert fm.values.shape == (3, 6)
    assert np.all(np.isfinite(fd.values))


def test_characteristics_consistent_with_returns():
    truth = synth.generate(synth.EconomyConfig(n_assets=6, n_months=3, seed=1))
    table = synth.characteristics_table(truth)
    gross = table.close_price[1:] / table.close_price[:-1] - 1.0
    assert np.allclose(gross, truth.daily_returns[1:], rtol=0, atol=1e-12)
    assert np.all(table.market_cap > 0)
