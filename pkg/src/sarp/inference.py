"""
Time-series and cross-sectional inference on monthly bin returns.

Newey-West covariances use Bartlett weights ``1 - l / (L + 1)`` on the
moment series ``x_t * e_t`` and no small-sample correction:

    cov = (X'X)^-1 [ sum_t g_t g_t' + sum_l w_l (G_l + G_l') ] (X'X)^-1,
    G_l = sum_{t > l} g_t g_{t-l}'

With ``lags=0`` this is White's heteroskedasticity-robust covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy import optimize, stats

__all__ = [
    "ArmaResult",
    "FamaMacbethResult",
    "MeanTest",
    "PerformanceStats",
    "RegressionResult",
    "SarFactorSeries",
    "arma11_fit",
    "correlation_matrix",
    "factor_alpha",
    "fama_macbeth",
    "macro_regression",
    "mean_test",
    "newey_west",
    "ols",
    "performance_stats",
    "sar_factor",
    "white_covariance",
]

NW_LAGS = 6


@dataclass(frozen=True, eq=False)
class RegressionResult:
    coefficients: np.ndarray
    residuals: np.ndarray
    covariance: np.ndarray
    t_statistics: np.ndarray
    r_squared: float
    n_observations: int
    X: np.ndarray
    y: np.ndarray
    names: tuple = ()
    hac_lags: int | None = None

    @property
    def hac_covariance(self) -> np.ndarray:
        return self.covariance

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def tstat(self, name: str) -> float:
        return float(self.t_statistics[self.names.index(name)])


def ols(y, X, include_intercept: bool = True, names=None) -> RegressionResult:
    """Least squares by QR; classical covariance until ``newey_west`` is applied."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if include_intercept:
        X = np.column_stack([np.ones(y.size), X])
    if X.shape[0] != y.size:
        raise ValueError("X and y have different numbers of rows")
    n, p = X.shape
    if n < p:
        raise np.linalg.LinAlgError("more regressors than observations")
    Q, R = np.linalg.qr(X)
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= 1e-12 * max(d.max(), 1e-300) or np.linalg.matrix_rank(X) < p:
        raise np.linalg.LinAlgError("regressor matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    e = y - X @ beta
    dof = n - p
    s2 = float(e @ e) / dof if dof > 0 else math.nan
    bread = np.linalg.inv(X.T @ X)
    cov = s2 * bread
    if names is None:
        k = X.shape[1] - int(include_intercept)
        names = (("const",) if include_intercept else ()) + tuple(f"x{i}" for i in range(k))
    return RegressionResult(beta, e, cov, _tstats(beta, cov), _r2(y, e, include_intercept),
                            n, X, y, tuple(names))


def _r2(y, e, centered):
    sst = float(((y - y.mean()) ** 2).sum()) if centered else float(y @ y)
    return 1.0 - float(e @ e) / sst if sst > 0 else math.nan


def _tstats(beta, cov):
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.nan)


def _bread(X):
    return np.linalg.inv(X.T @ X)


def _sym(a: np.ndarray) -> np.ndarray:
    # sandwich products are symmetric only up to rounding
    return 0.5 * (a + a.T)


def white_covariance(X, e) -> np.ndarray:
    """Heteroskedasticity-robust (HC0) covariance."""
    X = np.asarray(X, dtype=np.float64)
    g = X * np.asarray(e, dtype=np.float64)[:, None]
    bread = _bread(X)
    return _sym(bread @ (g.T @ g) @ bread)


def hac_meat(g: np.ndarray, lags: int) -> np.ndarray:
    """Bartlett-weighted sum of autocovariances of the moment series g (T x k)."""
    meat = g.T @ g
    for lag in range(1, lags + 1):
        w = 1.0 - lag / (lags + 1.0)
        gl = g[lag:].T @ g[:-lag]
        meat = meat + w * (gl + gl.T)
    return meat


def newey_west(result: RegressionResult, lags: int = NW_LAGS) -> RegressionResult:
    """Replace the covariance and t-statistics with Newey-West versions."""
    lags = int(lags)
    if lags < 0:
        raise ValueError("lags must be nonnegative")
    if lags >= result.n_observations:
        raise ValueError(f"lags ({lags}) must be smaller than the sample size "
                         f"({result.n_observations})")
    X, e = result.X, result.residuals
    if lags == 0:
        cov = white_covariance(X, e)
    else:
        g = X * e[:, None]
        bread = _bread(X)
        cov = _sym(bread @ hac_meat(g, lags) @ bread)
    return replace(result, covariance=cov, t_statistics=_tstats(result.coefficients, cov),
                   hac_lags=lags)


@dataclass(frozen=True)
class MeanTest:
    mean: float
    t: float
    se: float
    n: int
    se_zero: bool = False


def mean_test(series, lags: int = NW_LAGS) -> MeanTest:
    """Mean of a series with a Newey-West t-statistic (regression on a constant).

    NaN entries are dropped. A constant series has zero standard error: the
    flag ``se_zero`` is set and ``t`` is NaN.
    """
    x = np.asarray(series, dtype=np.float64)
    x = x[~np.isnan(x)]
    if x.size == 0:
        raise ValueError("empty series")
    if np.all(x == x[0]):
        return MeanTest(float(x[0]), math.nan, 0.0, int(x.size), True)
    lags = min(int(lags), x.size - 1)
    res = newey_west(ols(x, np.empty((x.size, 0)), include_intercept=True), lags)
    se = float(np.sqrt(res.covariance[0, 0]))
    if not se > 0:
        return MeanTest(float(res.coefficients[0]), math.nan, 0.0, int(x.size), True)
    return MeanTest(float(res.coefficients[0]), float(res.coefficients[0]) / se, se, int(x.size))


FF_MODELS = {"FF3": ("mktrf", "smb", "hml"), "FF5": ("mktrf", "smb", "hml", "cma", "rmw")}


def factor_alpha(months, series, factors, model: str = "FF3", lags: int = NW_LAGS
                 ) -> RegressionResult:
    """Time-series regression of a bin series on Fama-French factors.

    ``months`` are the series dates; ``factors`` is a monthly FactorSeries
    matched by calendar month. A month missing from the factor file raises.
    Includes an intercept (the alpha) and uses Newey-West errors.
    """
    if model not in FF_MODELS:
        raise ValueError(f"model must be one of {sorted(FF_MODELS)}")
    y = np.asarray(series, dtype=np.float64)
    months = np.asarray(months, dtype="datetime64[D]")
    keep = ~np.isnan(y)
    F = factors.aligned(months[keep], FF_MODELS[model], by_month=True)
    res = ols(y[keep], F, include_intercept=True, names=("alpha",) + FF_MODELS[model])
    return newey_west(res, lags)


@dataclass(frozen=True, eq=False)
class FamaMacbethResult:
    names: tuple
    lambdas: np.ndarray
    fm_t_statistics: np.ndarray
    fm_standard_errors: np.ndarray
    chi2_statistic: float
    chi2_p_value: float
    chi2_df: int
    betas: np.ndarray
    monthly_lambdas: np.ndarray
    mean_pricing_errors: np.ndarray
    cross_sectional_r2: float


def fama_macbeth(test_returns, factors, intercept: bool = True, names=None
                 ) -> FamaMacbethResult:
    """Two-pass Fama-MacBeth regression.

    Parameters
    ----------
    test_returns : (T, M) excess returns of the test assets.
    factors : (T, K) factor returns.
    intercept : include a constant in the monthly cross-sectional regression.

    First pass: full-sample time-series OLS of each asset on the factors
    (with intercept). Second pass: each month, OLS of the M returns on the
    betas. Prices of risk are the time means of the monthly estimates with
    t = mean / (SD / sqrt(T)). The chi-square statistic is
    T * abar' pinv(S) abar on the monthly pricing errors, with degrees of
    freedom equal to the rank of their covariance S.
    """
    R = np.asarray(test_returns, dtype=np.float64)
    F = np.asarray(factors, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    T, M = R.shape
    K = F.shape[1]
    if F.shape[0] != T:
        raise ValueError("test returns and factors differ in length")
    if not M > K:
        raise ValueError("need more test assets than factors")
    if np.isnan(R).any() or np.isnan(F).any():
        raise ValueError("missing values in Fama-MacBeth inputs")
    X1 = np.column_stack([np.ones(T), F])
    coef, *_ = np.linalg.lstsq(X1, R, rcond=None)
    betas = coef[1:].T                                   # M x K
    Z = np.column_stack([np.ones(M), betas]) if intercept else betas
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise np.linalg.LinAlgError("second-pass regressors are rank deficient")
    lam_t = np.linalg.lstsq(Z, R.T, rcond=None)[0].T     # T x (K + intercept)
    alpha_t = R - lam_t @ Z.T                            # T x M pricing errors
    lam = lam_t.mean(axis=0)
    sd = lam_t.std(axis=0, ddof=1)
    se = sd / math.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, lam / np.where(se > 0, se, 1.0), np.nan)
    abar = alpha_t.mean(axis=0)
    S = np.cov(alpha_t, rowvar=False, ddof=1)
    w, V = np.linalg.eigh((S + S.T) / 2)
    tol = max(w.max(), 0.0) * M * np.finfo(float).eps
    keep = w > tol
    df = int(keep.sum())
    proj = V[:, keep].T @ abar
    chi2 = float(T * np.sum(proj ** 2 / w[keep])) if df else math.nan
    pval = float(stats.chi2.sf(chi2, df)) if df else math.nan
    rbar = R.mean(axis=0)
    fitted = Z @ lam
    sst = float(((rbar - rbar.mean()) ** 2).sum())
    cs_r2 = 1.0 - float(((rbar - fitted) ** 2).sum()) / sst if sst > 0 else math.nan
    if names is None:
        names = tuple(f"f{k}" for k in range(K))
    names = (("const",) if intercept else ()) + tuple(names)
    return FamaMacbethResult(names, lam, t, se, chi2, pval, df, betas, lam_t, abar, cs_r2)


@dataclass(frozen=True, eq=False)
class SarFactorSeries:
    months: np.ndarray
    values: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def sar_factor(bins) -> SarFactorSeries:
    """Lo-bin long-short return minus Hi-bin long-short return, each month."""
    lo = np.asarray(bins.leg("ls", 1), dtype=np.float64)
    hi = np.asarray(bins.leg("ls", 10), dtype=np.float64)
    return SarFactorSeries(np.asarray(bins.months), lo - hi, lo, hi)


@dataclass(frozen=True, eq=False)
class PerformanceStats:
    n: int
    final_value: float
    cumulative: np.ndarray
    log_cumulative: np.ndarray
    mean: float
    sd: float
    skewness: float
    kurtosis: float
    p5: float
    p95: float
    sharpe: float
    sharpe_defined: bool
    rolling: dict


def performance_stats(series, rf=None, windows=(12, 36, 60), initial: float = 100.0
                      ) -> PerformanceStats:
    """Investment statistics of a monthly return series.

    The cumulative path starts at ``initial`` dollars and compounds the
    monthly total return. Sharpe is mean / SD * sqrt(12) of returns in
    excess of ``rf`` (if given); with zero SD it is NaN and flagged.
    Skewness and kurtosis are the central-moment ratios m3/m2^1.5 and
    m4/m2^2. ``rolling[w]`` holds, for each month from the w-th on, the
    value of ``initial`` dollars invested over the trailing w months.
    """
    r = np.asarray(series, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty series")
    cum = initial * np.cumprod(1.0 + r)
    ex = r - (0.0 if rf is None else np.asarray(rf, dtype=np.float64))
    mean = float(np.mean(r))
    sd = float(np.std(r, ddof=1)) if r.size > 1 else 0.0
    d = r - mean
    m2 = float(np.mean(d * d))
    flat = bool(np.all(r == r[0]))
    skew = math.nan if flat or m2 == 0 else float(np.mean(d ** 3) / m2 ** 1.5)
    kurt = math.nan if flat or m2 == 0 else float(np.mean(d ** 4) / m2 ** 2)
    ex_flat = ex.size < 2 or bool(np.all(ex == ex[0]))
    ex_sd = 0.0 if ex_flat else float(np.std(ex, ddof=1))
    sharpe = math.nan if ex_sd == 0 else float(np.mean(ex) / ex_sd * math.sqrt(12.0))
    growth = 1.0 + r
    rolling = {}
    for w in windows:
        if r.size >= w:
            rolling[w] = np.array([initial * np.prod(growth[i - w + 1:i + 1])
                                   for i in range(w - 1, r.size)])
        else:
            rolling[w] = np.array([])
    p5, p95 = np.percentile(r, [5, 95])
    return PerformanceStats(int(r.size), float(cum[-1]), cum, np.log(cum), mean, sd, skew, kurt,
                            float(p5), float(p95), sharpe, not math.isnan(sharpe), rolling)


@njit(cache=True)
def _css(r, c, a, b):
    e_prev = 0.0
    s = 0.0
    for t in range(1, r.shape[0]):
        e = r[t] - c - a * r[t - 1] - b * e_prev
        s += e * e
        e_prev = e
    return s


@dataclass(frozen=True)
class ArmaResult:
    c: float
    a: float
    b: float
    t_c: float
    t_a: float
    t_b: float
    sigma2: float
    css: float
    converged: bool


def arma11_fit(series) -> ArmaResult:
    """ARMA(1,1) ``r_t = c + a r_{t-1} + b e_{t-1} + e_t`` by conditional sum of squares.

    The recursion starts at the second observation with e_0 = 0. Nelder-Mead
    searches over (c, atanh a, atanh b), which keeps |a|, |b| < 1. Standard
    errors come from a central-difference Hessian H of the sum of squares,
    cov = 2 sigma^2 H^-1.
    """
    r = np.ascontiguousarray(np.asarray(series, dtype=np.float64))
    if r.size < 20:
        raise ValueError("ARMA(1,1) needs at least 20 observations")
    if np.all(r == r[0]) or not np.std(r) > 0:
        raise ValueError("degenerate variance: constant series")
    scale = float(np.std(r))

    def f(p):
        return _css(r, p[0] * scale, math.tanh(p[1]), math.tanh(p[2])) / (scale * scale)

    best = None
    for a0 in (0.0, 0.5, -0.5):
        x0 = np.array([float(np.mean(r)) * (1 - a0) / scale, math.atanh(a0), 0.0])
        res = optimize.minimize(f, x0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000,
                                         "maxfev": 40000})
        if best is None or res.fun < best.fun:
            best = res
    c, a, b = best.x[0] * scale, math.tanh(best.x[1]), math.tanh(best.x[2])
    theta = np.array([c, a, b])
    css = _css(r, c, a, b)
    n_eff = r.size - 1
    sigma2 = css / (n_eff - 3)

    def g(p):
        return _css(r, p[0], p[1], p[2])

    H = np.empty((3, 3))
    h = 1e-4 * np.maximum(np.abs(theta), np.array([scale, 0.1, 0.1]))
    for i in range(3):
        for j in range(3):
            ei = np.zeros(3)
            ej = np.zeros(3)
            ei[i] = h[i]
            ej[j] = h[j]
            H[i, j] = (g(theta + ei + ej) - g(theta + ei - ej) - g(theta - ei + ej)
                       + g(theta - ei - ej)) / (4 * h[i] * h[j])
    converged = bool(best.success) and abs(a) < 1 and abs(b) < 1
    try:
        cov = 2.0 * sigma2 * np.linalg.inv((H + H.T) / 2)
        with np.errstate(invalid="ignore"):
            se = np.sqrt(np.diag(cov))
        if not np.all(np.isfinite(se)) or np.any(se <= 0):
            raise np.linalg.LinAlgError
        tc, ta, tb = theta / se
    except np.linalg.LinAlgError:
        tc = ta = tb = math.nan
        converged = False
    return ArmaResult(float(c), float(a), float(b), float(tc), float(ta), float(tb),
                      float(sigma2), float(css), converged)


@dataclass(frozen=True, eq=False)
class MacroRegression:
    result: RegressionResult
    months: np.ndarray
    n_dropped: int


def macro_regression(months, mean_r2, macro, market, names=None, lags: int = NW_LAGS
                     ) -> MacroRegression:
    """Regress the change in cross-sectional mean R^2 on macro shocks.

    Regressors: for each macro variable its first difference and the lag of
    that difference, plus the market factor (same month). Intercept and
    Newey-West errors. Months with any missing value, including those
    lost to differencing, are dropped listwise and counted.

    Parameters
    ----------
    months : month-end dates of ``mean_r2`` and ``market`` (consecutive
        calendar months are required for differencing; gaps count as
        missing).
    macro : MacroSeries.
    names : subset of macro series to use (default all).
    """
    months = np.asarray(months, dtype="datetime64[D]")
    keys = months.astype("datetime64[M]")
    y_level = np.asarray(mean_r2, dtype=np.float64)
    mkt = np.asarray(market, dtype=np.float64)
    names = tuple(macro.names if names is None else names)
    full = np.arange(keys.min(), keys.max() + 1) if keys.size else keys
    T = full.size

    def on_grid(k_src, v_src):
        out = np.full(T, np.nan)
        idx = np.searchsorted(full, k_src)
        ok = (idx < T)
        ok[ok] = full[idx[ok]] == k_src[ok]
        out[idx[ok]] = v_src[ok]
        return out

    def diff(x):
        d = np.full_like(x, np.nan)
        d[1:] = x[1:] - x[:-1]
        return d

    def lag(x):
        out = np.full_like(x, np.nan)
        out[1:] = x[:-1]
        return out

    y = diff(on_grid(keys, y_level))
    cols, col_names = [], []
    mkeys = macro.months.astype("datetime64[M]")
    for name in names:
        dx = diff(on_grid(mkeys, macro.series(name)))
        cols += [dx, lag(dx)]
        col_names += [f"d_{name}", f"d_{name}_lag1"]
    cols.append(on_grid(keys, mkt))
    col_names.append("mktrf")
    X = np.column_stack(cols)
    present = on_grid(keys, np.ones(keys.size))
    ok = ~np.isnan(y) & ~np.isnan(X).any(axis=1) & ~np.isnan(present)
    n_dropped = int(keys.size - ok.sum())
    res = ols(y[ok], X[ok], include_intercept=True, names=("const", *col_names))
    res = newey_west(res, min(lags, int(ok.sum()) - 1))
    return MacroRegression(res, full[ok].astype("datetime64[D]"), n_dropped)


def correlation_matrix(series) -> np.ndarray:
    """Pearson correlations between the columns of a (T, k) array.

    Constant columns give NaN rows/columns; the diagonal of non-constant
    columns is exactly 1.
    """
    X = np.asarray(series, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-d array with one series per column")
    D = X - X.mean(axis=0)
    ss = np.sqrt((D * D).sum(axis=0))
    flat = np.array([np.all(X[:, j] == X[0, j]) for j in range(X.shape[1])])
    with np.errstate(divide="ignore", invalid="ignore"):
        C = (D.T @ D) / np.outer(ss, ss)
    C[flat, :] = np.nan
    C[:, flat] = np.nan
    idx = np.flatnonzero(~flat)
    C[idx, idx] = 1.0
    return C
