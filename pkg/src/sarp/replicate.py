"""
Projection windows, elastic-net replicates and their one-month-ahead returns.

For each formation month-end ``m`` and each eligible focal asset ``i``:

1. the window holds the focal's trading days in ``(m - 1 year, m]`` and
   every peer that traded on all of those days (columns in ascending id);
2. the focal's daily returns are projected on the peers by cross-validated
   elastic net (no intercept);
3. the coefficients are scaled to unit L1 norm and the remainder
   ``1 - sum(w)`` is held in the risk-free asset;
4. over the following calendar month the replicate earns
   ``(1 - sum(w)) * rf + sum_j w_j * R_j`` and the long-short position
   earns ``R_i - replicate``.

The cycle is a map over formation months. Inside a month, all focals that
share the same set of window days reuse one set of per-fold Gram blocks;
since every Gram entry is accumulated independently in a fixed row order
this gives bitwise the same numbers as projecting each focal on its own.
"""
from __future__ import annotations

import logging
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import enet
from .market_data import (DailyReturnPanel, DataError, FactorSeries, MonthlyReturnPanel,
                          month_key, to_day, trailing_year_mask)

logger = logging.getLogger(__name__)

MISSING_POLICIES = ("riskfree", "drop")
FF_FACTORS = {3: ("mktrf", "smb", "hml"), 5: ("mktrf", "smb", "hml", "cma", "rmw")}


class WindowError(ValueError):
    """A single projection window cannot be built or solved."""


class MissingReturnError(ValueError):
    """A replicate peer has no return in the realization month."""


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProjectionWindow:
    focal: str
    month_end: np.datetime64
    days: np.ndarray
    y: np.ndarray
    X: np.ndarray
    peer_ids: tuple


@dataclass(frozen=True, eq=False)
class ProjectionRecord:
    """Outcome of one projection; coefficients are stored sparsely.

    ``peer_ids``, ``beta_hat`` and ``beta_tilde`` list only the peers with a
    nonzero coefficient, in ascending id order.
    """

    focal: str
    month_end: np.datetime64
    r_squared: float
    peer_ids: tuple
    beta_hat: np.ndarray
    beta_tilde: np.ndarray
    lambda_selected: float
    n_peers: int = 0
    n_days: int = 0
    converged: bool = True

    @property
    def n_nonzero(self) -> int:
        return len(self.peer_ids)

    @property
    def equity_proportion(self) -> float:
        return math.fsum(self.beta_tilde) if len(self.beta_tilde) else 0.0

    @property
    def weights(self) -> dict:
        return dict(zip(self.peer_ids, (float(w) for w in self.beta_tilde)))


@dataclass(frozen=True)
class ReturnLeg:
    """Realized returns of one record over the month after formation."""

    month_end: np.datetime64
    month: np.datetime64
    focal: str
    foc: float
    rep: float
    ls: float
    rf: float


@dataclass
class CycleResult:
    records: list = field(default_factory=list)
    legs: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    ff: dict = field(default_factory=dict)
    n_regressors: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# single-window operations
# ---------------------------------------------------------------------------


def build_window(panel: DailyReturnPanel, focal: str, month_end, min_days: int = 60
                 ) -> ProjectionWindow:
    """Focal returns and fully overlapping peer returns for one formation date."""
    end = to_day(month_end)
    panel.date_index(end)
    j = panel.column(focal)
    rows = np.flatnonzero(trailing_year_mask(panel.calendar, end))
    y_all = panel.returns[rows, j]
    days_mask = ~np.isnan(y_all)
    if np.count_nonzero(days_mask) < min_days:
        raise WindowError(f"{focal} is not eligible at {end}: "
                          f"{np.count_nonzero(days_mask)} < {min_days} days")
    rows = rows[days_mask]
    block = panel.returns[rows]
    full = ~np.isnan(block).any(axis=0)
    full[j] = False
    peers = np.flatnonzero(full)
    if peers.size == 0:
        raise WindowError(f"no spanning universe for {focal} at {end}")
    return ProjectionWindow(
        focal=focal, month_end=end, days=panel.calendar[rows],
        y=np.ascontiguousarray(block[:, j]), X=np.ascontiguousarray(block[:, peers]),
        peer_ids=tuple(panel.assets[p] for p in peers))


def normalize_weights(beta_hat) -> np.ndarray:
    """Scale to unit L1 norm; the zero vector stays zero."""
    b = np.asarray(beta_hat, dtype=np.float64)
    norm = math.fsum(np.abs(b))
    if norm == 0.0:
        return np.zeros_like(b)
    return b / norm


def _record(focal, month_end, X, y, peer_ids, cv: enet.CvResult) -> ProjectionRecord:
    sol = cv.solution
    r2 = enet.r_squared(X, y, sol.beta)
    idx = sol.indices
    return ProjectionRecord(
        focal=focal, month_end=month_end, r_squared=float(r2),
        peer_ids=tuple(peer_ids[k] for k in idx), beta_hat=sol.values.copy(),
        beta_tilde=normalize_weights(sol.values), lambda_selected=float(cv.lambda_),
        n_peers=len(peer_ids), n_days=int(y.shape[0]), converged=sol.converged)


def project_window(window: ProjectionWindow, config: enet.CvConfig = enet.CvConfig()
                   ) -> ProjectionRecord:
    """Cross-validated elastic-net projection of one window."""
    cv = enet.cross_validate(window.X, window.y, config)
    return _record(window.focal, window.month_end, window.X, window.y, window.peer_ids, cv)


def replicate_return(record: ProjectionRecord, monthly: MonthlyReturnPanel, month_t,
                     policy: str = "riskfree") -> float:
    """Return of the replicate over ``month_t``, the month after formation.

    Under the ``riskfree`` policy a peer without a return in ``month_t``
    contributes the risk-free rate in its place (its weight moves to the
    risk-free leg); under ``drop`` a MissingReturnError is raised.
    """
    if policy not in MISSING_POLICIES:
        raise ValueError(f"unknown missing-return policy {policy!r}")
    t = monthly.month_index(month_t)
    if month_key(np.array([monthly.months[t]]))[0] != month_key(np.array([record.month_end]))[0] + 1:
        raise ValueError("month_t must be the month right after the formation month")
    rf = monthly.rf_at(month_t)
    terms = []
    for peer, w in zip(record.peer_ids, record.beta_tilde):
        try:
            r = monthly.returns[t, monthly.column(peer)]
        except KeyError:
            r = math.nan
        if math.isnan(r):
            if policy == "drop":
                raise MissingReturnError(f"peer {peer} has no return in {monthly.months[t]}")
            r = rf
        terms.append(float(w) * float(r))
    rf_weight = 1.0 - math.fsum(record.beta_tilde) if len(record.beta_tilde) else 1.0
    terms.append(rf_weight * rf)
    return math.fsum(terms)


def long_short_return(focal_return: float, replicate: float) -> float:
    return float(focal_return) - float(replicate)


def ff_ols_replicate(y, factors_daily, z: int, factors_month, rf: float):
    """OLS (no intercept) replicate on the first ``z`` Fama-French factors.

    Parameters
    ----------
    y : (D,) focal daily returns.
    factors_daily : (D, z) daily factor returns on the focal's window days.
    z : 3 or 5.
    factors_month : (z,) factor returns over the realization month.
    rf : risk-free rate over the realization month.

    Returns
    -------
    r_squared, beta_tilde, replicate return
    """
    if z not in FF_FACTORS:
        raise ValueError("z must be 3 or 5")
    y = np.asarray(y, dtype=np.float64)
    F = np.ascontiguousarray(np.asarray(factors_daily, dtype=np.float64)[:, :z])
    if F.shape[0] != y.shape[0]:
        raise ValueError("factor window and focal window differ in length")
    # an identically zero factor column carries no information; it gets a
    # zero coefficient so that FF5 nests FF3 when CMA and RMW vanish
    live = np.flatnonzero(np.any(F != 0.0, axis=0))
    if live.size == 0 or np.linalg.matrix_rank(F[:, live]) < live.size:
        raise np.linalg.LinAlgError("singular X'X in factor replicate")
    beta = np.zeros(z)
    beta[live] = np.linalg.lstsq(F[:, live], y, rcond=None)[0]
    r2 = enet.r_squared(F, y, beta)
    w = normalize_weights(beta)
    fm = np.asarray(factors_month, dtype=np.float64)[:z]
    rep = math.fsum([(1.0 - math.fsum(w)) * rf] + [float(a) * float(b) for a, b in zip(w, fm)])
    return float(r2), w, rep


# ---------------------------------------------------------------------------
# the cycle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _CycleSettings:
    cv: enet.CvConfig
    min_days: int
    policy: str
    ff_models: tuple


_STATE: dict = {}


def _realization_row(monthly: MonthlyReturnPanel, month_end):
    nxt = month_key(np.array([to_day(month_end)]))[0] + 1
    return monthly.month_index(nxt.astype("datetime64[D]"))


def _project_month(month_end):
    panel: DailyReturnPanel = _STATE["daily"]
    monthly: MonthlyReturnPanel = _STATE["monthly"]
    settings: _CycleSettings = _STATE["settings"]
    fd: FactorSeries | None = _STATE.get("factors_daily")
    fm: FactorSeries | None = _STATE.get("factors_monthly")
    end = to_day(month_end)

    rows = np.flatnonzero(trailing_year_mask(panel.calendar, end))
    sub = panel.returns[rows]
    present = ~np.isnan(sub)
    counts = present.sum(axis=0)
    focal_cols = np.flatnonzero(counts >= settings.min_days)

    t = _realization_row(monthly, end)
    month_t = monthly.months[t]
    rf_t = monthly.rf_at(month_t)
    ff_month = {z: fm.aligned([month_t], FF_FACTORS[z], by_month=True)[0] for z in settings.ff_models}

    records, legs, failures = [], [], []
    ff_out = {z: ([], []) for z in settings.ff_models}
    n_regressors = 0

    groups: dict = {}
    for j in focal_cols:
        groups.setdefault(present[:, j].tobytes(), []).append(j)
    by_focal = {}
    for key, members in groups.items():
        mask = present[:, members[0]]
        day_rows = np.flatnonzero(mask)
        universe = np.flatnonzero(present[day_rows].all(axis=0))
        n_regressors = max(n_regressors, universe.size - 1)
        A = np.ascontiguousarray(sub[day_rows][:, universe])
        n_days = A.shape[0]
        try:
            bounds = enet.fold_bounds(n_days, settings.cv.n_folds)
        except ValueError as exc:
            for j in members:
                by_focal[j] = ("fail", str(exc))
            continue
        grams = [enet._gram(A[a:b]) for a, b in bounds]
        pos = {int(u): k for k, u in enumerate(universe)}
        F_win = None
        if settings.ff_models:
            try:
                F_win = fd.aligned(panel.calendar[rows][day_rows], FF_FACTORS[5])
            except DataError as exc:
                F_win = exc
        for j in members:
            fi = pos[int(j)]
            pp = np.array([k for k in range(universe.size) if k != fi], dtype=np.int64)
            if pp.size == 0:
                by_focal[j] = ("fail", "no spanning universe")
                continue
            X = np.ascontiguousarray(A[:, pp])
            y = np.ascontiguousarray(A[:, fi])
            peer_ids = tuple(panel.assets[universe[k]] for k in pp)
            try:
                g_sub = [np.ascontiguousarray(g[np.ix_(pp, pp)]) for g in grams]
                c_sub = [np.ascontiguousarray(g[pp, fi]) for g in grams]
                cv = enet.cross_validate_blocks(X, y, g_sub, c_sub, bounds, settings.cv)
                rec = _record(panel.assets[j], end, X, y, peer_ids, cv)
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                by_focal[j] = ("fail", str(exc))
                continue
            ff = {}
            for z in settings.ff_models:
                if isinstance(F_win, Exception):
                    ff[z] = F_win
                    continue
                try:
                    ff[z] = ff_ols_replicate(y, F_win, z, ff_month[z], rf_t)
                except (ValueError, np.linalg.LinAlgError) as exc:
                    ff[z] = exc
            by_focal[j] = ("ok", rec, ff)

    for j in focal_cols:
        entry = by_focal[j]
        asset = panel.assets[j]
        if entry[0] == "fail":
            failures.append((end, asset, entry[1]))
            continue
        rec, ff = entry[1], entry[2]
        records.append(rec)
        foc = monthly.returns[t, monthly.column(asset)] if asset in _STATE["monthly_cols"] else math.nan
        if math.isnan(foc):
            failures.append((end, asset, "no focal return in realization month"))
        else:
            try:
                rep = replicate_return(rec, monthly, month_t, settings.policy)
                legs.append(ReturnLeg(end, month_t, asset, float(foc), rep,
                                      long_short_return(foc, rep), rf_t))
            except MissingReturnError as exc:
                failures.append((end, asset, f"leg dropped: {exc}"))
        for z in settings.ff_models:
            res = ff[z]
            if isinstance(res, Exception):
                failures.append((end, asset, f"FF{z} replicate: {res}"))
                continue
            r2, w, rep_ff = res
            ff_out[z][0].append(ProjectionRecord(
                focal=asset, month_end=end, r_squared=r2, peer_ids=FF_FACTORS[z],
                beta_hat=w, beta_tilde=w, lambda_selected=0.0, n_peers=z, n_days=rec.n_days))
            if not math.isnan(foc):
                ff_out[z][1].append(ReturnLeg(end, month_t, asset, float(foc), rep_ff,
                                              long_short_return(foc, rep_ff), rf_t))
    return records, legs, failures, ff_out, n_regressors


def _warm_up(config: enet.CvConfig):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((12, 4))
    enet.cross_validate(X, X @ np.ones(4) + rng.standard_normal(12),
                        enet.CvConfig(n_folds=config.n_folds, grid_size=3))


def formation_months(panel: DailyReturnPanel, monthly: MonthlyReturnPanel,
                     start=None, stop=None, full_history: bool = True) -> np.ndarray:
    """Month-ends usable for formation.

    A month-end qualifies when its next calendar month is in the monthly
    panel and, with ``full_history``, the daily calendar starts at or before
    the opening of its twelve-month window. ``start`` / ``stop`` restrict
    the range by calendar month (inclusive).
    """
    ends = panel.month_ends()
    keys = month_key(ends)
    ok = np.array([monthly.has_month((k + 1).astype("datetime64[D]")) for k in keys], dtype=bool)
    if full_history and ends.size:
        first = month_key(panel.calendar[:1])[0]
        # a partially covered first month does not count toward the history
        first_weekday = np.busday_offset(first.astype("datetime64[D]"), 0, roll="forward")
        if panel.calendar[0] > first_weekday:
            first = first + 1
        ok &= keys >= first + 11
    if start is not None:
        ok &= keys >= np.datetime64(start, "M")
    if stop is not None:
        ok &= keys <= np.datetime64(stop, "M")
    return ends[ok]


def run_projection_cycle(daily: DailyReturnPanel, monthly: MonthlyReturnPanel, months,
                         cv_config: enet.CvConfig = enet.CvConfig(), min_days: int = 60,
                         workers: int = 1, missing_policy: str = "riskfree",
                         factors_daily: FactorSeries | None = None,
                         factors_monthly: FactorSeries | None = None) -> CycleResult:
    """Project every eligible asset at every formation month-end.

    Records, legs and failures come back in canonical order (month, then
    asset id) whatever the number of workers. Window-level failures are
    collected in ``failures`` and never abort the cycle. When both factor
    series are supplied, FF3 and FF5 OLS replicates are built alongside
    and returned in ``ff[3]`` / ``ff[5]`` as (records, legs).
    """
    if missing_policy not in MISSING_POLICIES:
        raise ValueError(f"unknown missing-return policy {missing_policy!r}")
    if int(workers) < 1:
        raise ValueError("workers must be at least 1")
    if min_days < 1:
        raise ValueError("min_days must be at least 1")
    months = [to_day(m) for m in months]
    for m in months:
        daily.date_index(m)
        try:
            t = _realization_row(monthly, m)
        except DataError:
            raise DataError(f"no realization month after {m} in the monthly panel") from None
        monthly.rf_at(monthly.months[t])
    use_ff = factors_daily is not None and factors_monthly is not None
    settings = _CycleSettings(cv_config, int(min_days), missing_policy, (3, 5) if use_ff else ())

    _STATE.clear()
    _STATE.update(daily=daily, monthly=monthly, settings=settings, factors_daily=factors_daily,
                  factors_monthly=factors_monthly, monthly_cols=frozenset(monthly.assets))
    out = CycleResult(ff={z: ([], []) for z in settings.ff_models})
    try:
        with threadpool_limits(limits=1):
            if workers == 1 or len(months) <= 1:
                results = [_project_month(m) for m in months]
            else:
                _warm_up(cv_config)
                ctx = mp.get_context("fork")
                with ProcessPoolExecutor(max_workers=int(workers), mp_context=ctx) as pool:
                    results = list(pool.map(_project_month, months, chunksize=1))
    finally:
        _STATE.clear()
    for m, (recs, legs, fails, ff, n_reg) in zip(months, results):
        out.records.extend(recs)
        out.legs.extend(legs)
        out.failures.extend(fails)
        out.n_regressors[m] = n_reg
        for z in settings.ff_models:
            out.ff[z][0].extend(ff[z][0])
            out.ff[z][1].extend(ff[z][1])
    logger.info("projected %d records over %d months (%d failures)",
                len(out.records), len(months), len(out.failures))
    return out
