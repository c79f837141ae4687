"""
Firm characteristics used as controls and in the per-bin summaries.

Daily quantities use the focal's trading days in the trailing twelve
months ``(month_end - 1 year, month_end]``:

* TotalVol: sample SD (ddof=1) of daily returns.
* IdioVol: sample SD (ddof=1) of residuals from OLS of daily returns on
  MktRF, SMB, HML with an intercept.
* TotalSkew / IdioSkew: Pearson moment coefficient m3 / m2**1.5 (no small
  sample adjustment) of returns / of the same residuals.
* AmihudIlliq: mean over days of |R_d| / VOLD_d, where VOLD_d is dollar
  volume in millions; days without a positive VOLD are skipped.

Monthly quantities:

* MktCap, B/M, VOLD: from the latest characteristics row in the
  formation month (VOLD = volume * close / 1e6).
* Mom: compounded return over the eleven months ending one month before
  the formation month.
* STR: 100 times the formation month's return.

Anything that cannot be computed is NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .market_data import (CharacteristicsTable, DailyReturnPanel, FactorSeries,
                          MonthlyReturnPanel, month_key, to_day, trailing_year_mask)

NAMES = ("mktcap", "bm", "idiovol", "totalvol", "idioskew", "totalskew",
         "amihud", "mom", "str", "vold")


@dataclass(frozen=True)
class CharacteristicVector:
    mktcap: float = math.nan
    bm: float = math.nan
    idiovol: float = math.nan
    totalvol: float = math.nan
    idioskew: float = math.nan
    totalskew: float = math.nan
    amihud: float = math.nan
    mom: float = math.nan
    str: float = math.nan
    vold: float = math.nan

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _is_flat(x: np.ndarray) -> bool:
    return x.size == 0 or bool(np.all(x == x[0]))


def total_vol(r) -> float:
    r = np.asarray(r, dtype=np.float64)
    if r.size < 2:
        return math.nan
    if _is_flat(r):
        return 0.0
    return float(np.std(r, ddof=1))


def skewness(x) -> float:
    """m3 / m2**1.5 with central moments m_k = mean((x - mean)**k)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3 or _is_flat(x):
        return math.nan
    d = x - x.mean()
    m2 = np.mean(d * d)
    # differences at rounding level are not a real spread
    if m2 <= (1e-12 * np.max(np.abs(x))) ** 2:
        return math.nan
    return float(np.mean(d ** 3) / m2 ** 1.5)


def ff3_residuals(r, factors) -> np.ndarray:
    """Residuals of OLS of r on [1, factors]; NaN-free inputs required."""
    r = np.asarray(r, dtype=np.float64)
    F = np.asarray(factors, dtype=np.float64)
    X = np.column_stack([np.ones(r.size), F])
    if r.size <= X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        return np.array([])
    b, *_ = np.linalg.lstsq(X, r, rcond=None)
    return r - X @ b


def idio_vol(r, factors) -> float:
    e = ff3_residuals(r, factors)
    if e.size < 2:
        return math.nan
    if np.all(np.abs(e) <= 1e-12 * max(np.max(np.abs(r)), 1e-300)):
        return 0.0
    return float(np.std(e, ddof=1))


def idio_skew(r, factors) -> float:
    e = ff3_residuals(r, factors)
    if e.size < 3:
        return math.nan
    d = e - e.mean()
    m2 = np.mean(d * d)
    if m2 <= (1e-12 * np.max(np.abs(np.asarray(r)))) ** 2:
        return math.nan
    return float(np.mean(d ** 3) / m2 ** 1.5)


def dollar_volume(volume, close) -> np.ndarray:
    """VOLD in millions of currency units."""
    return np.asarray(volume, dtype=np.float64) * np.asarray(close, dtype=np.float64) / 1e6


def amihud(r, vold) -> float:
    r = np.asarray(r, dtype=np.float64)
    v = np.asarray(vold, dtype=np.float64)
    ok = ~np.isnan(r) & np.isfinite(v) & (v > 0)
    if not ok.any():
        return math.nan
    return math.fsum(np.abs(r[ok]) / v[ok]) / int(ok.sum())


def momentum(monthly_returns) -> float:
    """Compounded return of the given months (NaN if any is missing)."""
    x = np.asarray(monthly_returns, dtype=np.float64)
    if x.size == 0 or np.isnan(x).any():
        return math.nan
    return float(np.prod(1.0 + x) - 1.0)


def short_term_reversal(monthly_return: float) -> float:
    return 100.0 * float(monthly_return)


def compute_characteristics(daily: DailyReturnPanel, monthly: MonthlyReturnPanel,
                            table: CharacteristicsTable | None, ff_daily: FactorSeries | None,
                            month_end, assets=None) -> dict:
    """Characteristic vector per asset at one formation month-end.

    ``assets`` defaults to every asset with a daily return in the window.
    ``table`` and ``ff_daily`` may be None, leaving the dependent
    characteristics missing.
    """
    end = to_day(month_end)
    rows = np.flatnonzero(trailing_year_mask(daily.calendar, end))
    window = daily.returns[rows]
    days = daily.calendar[rows]
    if assets is None:
        assets = [daily.assets[j] for j in np.flatnonzero(~np.isnan(window).all(axis=0))]

    ff = None
    if ff_daily is not None:
        have = np.searchsorted(ff_daily.dates, days)
        ok = have < ff_daily.dates.size
        ok[ok] = ff_daily.dates[have[ok]] == days[ok]
        ff = np.full((days.size, 3), np.nan)
        ff[ok] = ff_daily.select(("mktrf", "smb", "hml"))[have[ok]]

    mkey = month_key(np.array([end]))[0]
    m_row = None
    if monthly.months.size:
        keys = month_key(monthly.months)
        i = int(np.searchsorted(keys, mkey))
        m_row = i if i < keys.size and keys[i] == mkey else None
        keys_list = keys

    snap = vold_daily = t_rows = None
    if table is not None and len(table.assets):
        snap = table.snapshot_rows(end)
        pos = np.searchsorted(table.dates, days)
        t_ok = pos < table.dates.size
        t_ok[t_ok] = table.dates[pos[t_ok]] == days[t_ok]
        t_rows = np.where(t_ok, pos, -1)
        vold_daily = table.vold()

    out = {}
    for a in assets:
        j = daily.column(a)
        r_all = window[:, j]
        have_r = ~np.isnan(r_all)
        r = r_all[have_r]
        vals = {}
        vals["totalvol"] = total_vol(r)
        vals["totalskew"] = skewness(r)
        if ff is not None:
            use = have_r & ~np.isnan(ff).any(axis=1)
            vals["idiovol"] = idio_vol(r_all[use], ff[use])
            vals["idioskew"] = idio_skew(r_all[use], ff[use])
        if m_row is not None and a in monthly.assets:
            mj = monthly.column(a)
            vals["str"] = short_term_reversal(monthly.returns[m_row, mj])
            start = mkey - 11
            lo = int(np.searchsorted(keys_list, start))
            if lo < keys_list.size and keys_list[lo] == start and keys_list[m_row - 1] == mkey - 1 \
                    and m_row - lo == 11:
                vals["mom"] = momentum(monthly.returns[lo:m_row, mj])
        if table is not None and a in table.assets:
            tj = table.column(a)
            sr = snap[tj]
            if sr >= 0:
                vals["mktcap"] = table.market_cap[sr, tj]
                vals["bm"] = table.book_to_market[sr, tj]
                vals["vold"] = vold_daily[sr, tj]
            vd = np.full(days.size, np.nan)
            okr = t_rows >= 0
            vd[okr] = vold_daily[t_rows[okr], tj]
            vals["amihud"] = amihud(r_all, vd)
        out[a] = CharacteristicVector(**{k: float(v) for k, v in vals.items()})
    return out
