"""
Synthetic linear factor economies with known ground truth.

Daily returns follow

    R[d, i] = alpha[i] + F[d] @ beta[i] + eps[d, i]

with Gaussian factors ``F ~ N(factor_mean, factor_cov)`` and independent
Gaussian idiosyncratic noise. Loadings come from a two-cluster design:

* a dense cluster of assets whose loading rows scatter tightly around a
  common centre and whose idiosyncratic volatility is ``idio_vol``;
* isolated assets, each loading on a single factor, with idiosyncratic
  volatility scaled up by a per-asset factor drawn uniformly from
  ``isolated_idio_range``.

With ``cluster_factors`` set, cluster loadings are restricted to the
leading ``cluster_factors`` factors and isolated assets load only on the
remaining ones, so their factor exposure has no hedge among the cluster.

Cluster assets are easy to mimic with a portfolio of peers; isolated ones
are not, which gives the economy both regimes of projection R^2.

Monthly returns are compounded from daily returns within each calendar
month. The daily calendar is the run of weekdays starting at ``start``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .market_data import (FACTOR_NAMES, MACRO_NAMES, CharacteristicsTable, DailyReturnPanel,
                          FactorSeries, MacroSeries, MonthlyReturnPanel, month_ends, month_key)

__all__ = [
    "EconomyConfig",
    "EconomyGroundTruth",
    "OracleReplication",
    "asset_ids",
    "empirical_sarp_oracle",
    "two_cluster_config",
    "generate",
    "oracle_replication",
]


DEFAULT_FACTOR_MEAN = 4e-4
DEFAULT_FACTOR_VOL = 0.01
DEFAULT_FACTOR_CORR = 0.3


def asset_ids(n: int) -> tuple:
    width = max(4, len(str(n - 1)))
    return tuple(f"A{i:0{width}d}" for i in range(n))


@dataclass(frozen=True)
class EconomyConfig:
    """Parameters of a synthetic economy.

    ``n_assets`` counts every risky asset (N + 1 in the usual notation).
    If ``n_months`` is given the daily sample covers exactly that many
    calendar months and ``n_days`` is ignored; otherwise ``n_days`` weekdays
    are simulated and every calendar month they touch gets a monthly row.
    ``factor_mean`` and ``factor_cov`` default to 4e-4 daily means, 1%
    daily volatility and 0.3 pairwise correlation.
    """

    n_assets: int = 50
    n_factors: int = 3
    n_days: int = 500
    n_months: int | None = None
    factor_mean: tuple | None = None
    factor_cov: tuple | None = None
    alpha_scale: float = 0.0
    beta_scale: float = 0.2
    idio_vol: float = 0.01
    seed: int = 0
    cluster_fraction: float = 0.6
    cluster_loading: float = 1.0
    cluster_factors: int | None = None
    cluster_idio_range: tuple = (1.0, 1.0)
    isolated_beta: float = 1.0
    isolated_idio_range: tuple = (2.0, 5.0)
    rf_daily: float = 1e-4
    start: str = "2000-01-03"

    def __post_init__(self):
        if not self.n_factors >= 1:
            raise ValueError("need at least one factor")
        if not self.n_assets - 1 > self.n_factors:
            raise ValueError("need strictly more risky assets than factors (N > K)")
        if self.idio_vol < 0 or self.alpha_scale < 0 or self.beta_scale < 0:
            raise ValueError("idio_vol, alpha_scale and beta_scale must be nonnegative")
        if not 0.0 <= self.cluster_fraction <= 1.0:
            raise ValueError("cluster_fraction must lie in [0, 1]")
        for name in ("isolated_idio_range", "cluster_idio_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be an ordered nonnegative pair")
        if self.cluster_factors is not None and not 1 <= self.cluster_factors <= self.n_factors:
            raise ValueError("cluster_factors must lie in [1, n_factors]")
        if self.n_months is None and self.n_days < 2:
            raise ValueError("n_days must be at least 2")
        if self.n_months is not None and self.n_months < 1:
            raise ValueError("n_months must be positive")
        mu, cov = self.mean_vector(), self.cov_matrix()
        if mu.shape != (self.n_factors,) or cov.shape != (self.n_factors, self.n_factors):
            raise ValueError("factor_mean / factor_cov have the wrong shape")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-15):
            raise ValueError("factor_cov must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("factor_cov must be positive definite") from None

    def mean_vector(self) -> np.ndarray:
        if self.factor_mean is None:
            return np.full(self.n_factors, DEFAULT_FACTOR_MEAN)
        return np.asarray(self.factor_mean, dtype=np.float64).reshape(-1)

    def cov_matrix(self) -> np.ndarray:
        if self.factor_cov is None:
            k = self.n_factors
            corr = np.full((k, k), DEFAULT_FACTOR_CORR)
            np.fill_diagonal(corr, 1.0)
            return corr * DEFAULT_FACTOR_VOL ** 2
        return np.atleast_2d(np.asarray(self.factor_cov, dtype=np.float64))

    @property
    def n_cluster(self) -> int:
        return int(round(self.cluster_fraction * self.n_assets))


def two_cluster_config(n_assets: int = 400, n_months: int = 48, seed: int = 0,
                       **overrides) -> EconomyConfig:
    """Two-cluster economy with positively priced, correlated factors.

    Cluster assets carry modest idiosyncratic noise and are easy to hedge
    with peers. Isolated assets load on one factor each and are buried in
    four to eight times the base noise, so their replicates track poorly
    and a large share of their priced exposure stays unhedged. Both
    regimes of projection R^2 are present in every formation month.
    """
    params = dict(n_assets=n_assets, n_months=n_months, seed=seed,
                  factor_mean=(1.5e-3,) * 3, beta_scale=0.05, isolated_beta=1.0,
                  cluster_idio_range=(0.5, 2.0), isolated_idio_range=(4.0, 8.0))
    params.update(overrides)
    return EconomyConfig(**params)


@dataclass(frozen=True, eq=False)
class EconomyGroundTruth:
    """Parameters, raw draws and the panels they generate."""

    config: EconomyConfig
    assets: tuple
    alphas: np.ndarray
    betas: np.ndarray
    idio_scale: np.ndarray
    in_cluster: np.ndarray
    calendar: np.ndarray
    factor_draws: np.ndarray
    idio_draws: np.ndarray
    daily_returns: np.ndarray
    months: np.ndarray
    monthly_returns: np.ndarray
    rf_daily: np.ndarray
    rf_monthly: np.ndarray
    extras: dict = field(default_factory=dict)

    def daily_panel(self) -> DailyReturnPanel:
        return DailyReturnPanel(self.assets, self.calendar, self.daily_returns)

    def monthly_panel(self) -> MonthlyReturnPanel:
        return MonthlyReturnPanel(self.assets, self.months, self.monthly_returns, self.rf_monthly)

    def index(self, asset) -> int:
        if isinstance(asset, (int, np.integer)):
            return int(asset)
        return self.assets.index(asset)


def _calendar(config: EconomyConfig) -> np.ndarray:
    start = np.datetime64(config.start, "D")
    if config.n_months is not None:
        first = start.astype("datetime64[M]")
        stop = (first + config.n_months).astype("datetime64[D]")
        days = np.arange(start, stop, dtype="datetime64[D]")
        return days[np.is_busday(days)]
    # enough calendar days to hold n_days weekdays
    days = np.arange(start, start + int(config.n_days * 7 // 5 + 14), dtype="datetime64[D]")
    return days[np.is_busday(days)][: config.n_days]


def _compound(calendar, daily):
    keys = month_key(calendar)
    bounds = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1], True])
    out = np.empty((bounds.size - 1,) + daily.shape[1:])
    for m in range(bounds.size - 1):
        out[m] = np.prod(1.0 + daily[bounds[m]:bounds[m + 1]], axis=0) - 1.0
    return out


def generate(config: EconomyConfig) -> EconomyGroundTruth:
    """Simulate one economy; deterministic in ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    n, k = config.n_assets, config.n_factors
    mu, cov = config.mean_vector(), config.cov_matrix()
    chol = np.linalg.cholesky(cov)
    calendar = _calendar(config)
    n_days = calendar.size

    n_cl = config.n_cluster
    in_cluster = np.zeros(n, dtype=bool)
    in_cluster[:n_cl] = True
    # interleave cluster and isolated assets so ids carry no information
    perm = rng.permutation(n)
    in_cluster = in_cluster[perm]

    alphas = config.alpha_scale * rng.standard_normal(n)
    centre = np.full(k, float(config.cluster_loading))
    betas = centre + config.beta_scale * rng.standard_normal((n, k))
    kc = k if config.cluster_factors is None else int(config.cluster_factors)
    iso = np.flatnonzero(~in_cluster)
    if kc < k:
        # the cluster spans only the leading factors; isolated assets load
        # on the others, which no cluster portfolio can hedge
        betas[:, kc:] = 0.0
        iso_factor = kc + np.arange(iso.size) % (k - kc)
    else:
        iso_factor = np.arange(iso.size) % k
    iso_load = config.isolated_beta * (1.0 + config.beta_scale * rng.standard_normal(iso.size))
    betas[iso] = 0.0
    betas[iso, iso_factor] = iso_load
    lo, hi = config.isolated_idio_range
    idio_scale = np.ones(n)
    idio_scale[iso] = rng.uniform(lo, hi, iso.size)
    clo, chi = config.cluster_idio_range
    if clo != chi:
        cl = np.flatnonzero(in_cluster)
        idio_scale[cl] = rng.uniform(clo, chi, cl.size)
    elif clo != 1.0:
        idio_scale[in_cluster] = clo

    factors = mu + rng.standard_normal((n_days, k)) @ chol.T
    eps = config.idio_vol * idio_scale * rng.standard_normal((n_days, n))
    daily = alphas + factors @ betas.T + eps
    if np.any(daily <= -1.0):
        raise ValueError("simulated return at or below -100%; reduce volatilities")

    months = month_ends(calendar)
    monthly = _compound(calendar, daily)
    rf_daily = np.full(n_days, float(config.rf_daily))
    rf_monthly = _compound(calendar, rf_daily[:, None])[:, 0]

    return EconomyGroundTruth(
        config=config, assets=asset_ids(n), alphas=alphas, betas=betas,
        idio_scale=idio_scale, in_cluster=in_cluster, calendar=calendar,
        factor_draws=factors, idio_draws=eps, daily_returns=daily, months=months,
        monthly_returns=monthly, rf_daily=rf_daily, rf_monthly=rf_monthly,
        extras={"rng_state": rng.bit_generator.state},
    )


# ---------------------------------------------------------------------------
# side data written by the ``gen`` command
# ---------------------------------------------------------------------------


def factor_files(truth: EconomyGroundTruth) -> tuple[FactorSeries, FactorSeries]:
    """Daily and monthly factor files in the standard six-column layout.

    The economy's factors fill the leading columns. Remaining columns hold
    independent zero-mean placebo draws (0.5% daily volatility), so that
    five-factor regressions stay nonsingular.
    """
    k = truth.config.n_factors
    if k > len(FACTOR_NAMES):
        raise ValueError(f"at most {len(FACTOR_NAMES)} factors can be written")
    rng = np.random.default_rng([truth.config.seed, 1])
    daily = np.empty((truth.calendar.size, len(FACTOR_NAMES)))
    daily[:, :k] = truth.factor_draws
    daily[:, k:] = 0.005 * rng.standard_normal((truth.calendar.size, len(FACTOR_NAMES) - k))
    monthly = _compound(truth.calendar, daily)
    return (FactorSeries(truth.calendar, daily, FACTOR_NAMES),
            FactorSeries(truth.months, monthly, FACTOR_NAMES))


def characteristics_table(truth: EconomyGroundTruth, breakpoint_share: float = 0.4
                          ) -> CharacteristicsTable:
    """Daily firm data consistent with the simulated returns.

    Prices follow the compounded return path from a random initial price,
    share counts are fixed per asset, book equity is fixed per asset and
    daily share volume is lognormal around a per-asset turnover.
    """
    rng = np.random.default_rng([truth.config.seed, 2])
    n = len(truth.assets)
    p0 = np.exp(rng.normal(3.0, 0.5, n))
    shares = np.exp(rng.normal(17.0, 1.0, n))
    book = np.exp(rng.normal(0.0, 0.6, n)) * p0 * shares / 1e6
    turnover = np.exp(rng.normal(-5.5, 0.5, n))
    flags = rng.random(n) < breakpoint_share
    price = p0 * np.cumprod(1.0 + truth.daily_returns, axis=0)
    mcap = price * shares / 1e6
    volume = np.round(shares * turnover * np.exp(rng.normal(0.0, 0.4, price.shape)))
    volume = np.maximum(volume, 1.0)
    shape = price.shape
    return CharacteristicsTable(truth.calendar, truth.assets, mcap, book / mcap, volume, price,
                                np.broadcast_to(flags, shape), np.ones(shape, dtype=bool))


def macro_series(truth: EconomyGroundTruth) -> MacroSeries:
    """Independent random-walk macro variables, one row per simulated month."""
    rng = np.random.default_rng([truth.config.seed, 3])
    m = truth.months.size
    levels = np.array([100.0, 10000.0, 5.0, 80.0])
    steps = np.array([0.5, 30.0, 0.1, 2.0])
    vals = levels + np.cumsum(steps * rng.standard_normal((m, len(MACRO_NAMES))), axis=0)
    return MacroSeries(truth.months, MACRO_NAMES, vals)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OracleReplication:
    """Least-squares projection of one asset on all the others."""

    b: np.ndarray
    residual: np.ndarray
    rank: int
    degenerate: bool


def oracle_replication(truth: EconomyGroundTruth, asset) -> OracleReplication:
    """OLS of R_i on R_{-i} over the daily sample, without intercept.

    Singular normal equations give the minimum-norm solution and set the
    ``degenerate`` flag.
    """
    i = truth.index(asset)
    R = truth.daily_returns
    if R.shape[0] <= R.shape[1] - 1:
        raise ValueError("oracle replication needs more days than peers")
    y = R[:, i]
    X = np.delete(R, i, axis=1)
    b, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    return OracleReplication(b, y - X @ b, int(rank), bool(rank < X.shape[1]))


def empirical_sarp_oracle(truth: EconomyGroundTruth, asset, b) -> float:
    """Sample mean over the monthly panel of R_i - b' R_{-i}."""
    i = truth.index(asset)
    M = truth.monthly_returns
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (M.shape[1] - 1,):
        raise ValueError(f"b must have length {M.shape[1] - 1}")
    ls = M[:, i] - np.delete(M, i, axis=1) @ b
    return float(math.fsum(ls) / ls.size)
