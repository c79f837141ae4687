"""
CSV contracts and in-memory panels for returns, factors, characteristics
and macro series.

All files are UTF-8, comma separated, with a mandatory header row and ISO
dates (``YYYY-MM-DD``). Returns are simple returns in decimals. Panels are
stored densely (dates x assets) with NaN marking "no stored value"; their
arrays are made read-only on construction so they can be shared by many
worker processes without copying or locking.

Floats are written with ``repr`` (shortest round-trip form), so writing a
panel and loading it back reproduces it exactly.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FACTOR_NAMES = ("mktrf", "smb", "hml", "cma", "rmw", "mom")
CHARACTERISTIC_HEADER = ("date", "asset_id", "market_cap", "book_to_market",
                         "volume", "close_price", "breakpoint_universe")
MACRO_NAMES = ("indpro", "pce", "unrate", "umcsent")


class DataError(ValueError):
    """Raised when an input file violates its contract."""


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def to_day(value) -> np.datetime64:
    """Coerce a date-like value to ``datetime64[D]``."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]")
    if isinstance(value, dt.date):
        return np.datetime64(value.isoformat(), "D")
    return np.datetime64(dt.date.fromisoformat(str(value)).isoformat(), "D")


def month_key(dates) -> np.ndarray:
    """Calendar month of each date as ``datetime64[M]``."""
    return np.asarray(dates, dtype="datetime64[D]").astype("datetime64[M]")


def one_year_before(day) -> np.datetime64:
    """Same calendar date one year earlier (29 Feb maps to 28 Feb)."""
    d = to_day(day).astype(dt.date)
    try:
        prev = d.replace(year=d.year - 1)
    except ValueError:
        prev = d.replace(year=d.year - 1, day=28)
    return np.datetime64(prev.isoformat(), "D")


def trailing_year_mask(calendar: np.ndarray, month_end) -> np.ndarray:
    """Boolean mask of calendar dates in ``(month_end - 1 year, month_end]``."""
    end = to_day(month_end)
    start = one_year_before(end)
    return (calendar > start) & (calendar <= end)


def month_ends(calendar: np.ndarray) -> np.ndarray:
    """Last calendar date within each calendar month."""
    calendar = np.asarray(calendar, dtype="datetime64[D]")
    if calendar.size == 0:
        return calendar
    keys = month_key(calendar)
    last = np.r_[keys[1:] != keys[:-1], True]
    return calendar[last]


def fmt_float(x: float) -> str:
    return repr(float(x))


def fmt_day(d) -> str:
    return str(to_day(d))


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _parse_date(text: str, line: int, path) -> np.datetime64:
    try:
        return np.datetime64(dt.date.fromisoformat(text).isoformat(), "D")
    except ValueError:
        raise DataError(f"malformed date {text!r} at line {line} of {path}") from None


def _parse_float(text: str, line: int, path, name: str, allow_empty=False) -> float:
    if text == "" and allow_empty:
        return math.nan
    try:
        if "_" in text or text != text.strip():
            raise ValueError
        x = float(text)
    except ValueError:
        raise DataError(f"malformed {name} {text!r} at line {line} of {path}") from None
    if not math.isfinite(x):
        raise DataError(f"non-finite {name} at line {line} of {path}")
    return x


def _rows(path, header):
    """Yield (line number, fields) for the data rows of a CSV file."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"missing header in {path}") from None
        first = [h.strip().lstrip("﻿") for h in first]
        if tuple(first) != tuple(header):
            raise DataError(
                f"bad header in {path}: expected {','.join(header)}, got {','.join(first)}")
        for fields in reader:
            line = reader.line_num
            if not fields:
                continue
            if len(fields) != len(header):
                raise DataError(
                    f"malformed row at line {line} of {path}: "
                    f"expected {len(header)} fields, got {len(fields)}")
            yield line, fields


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _pivot(dates, assets, values, what, path):
    """Dense (dates x assets) array from long records; rejects duplicates."""
    if len(dates) == 0:
        return (np.array([], dtype="datetime64[D]"), (), np.empty((0, 0)))
    dates = np.asarray(dates, dtype="datetime64[D]")
    cal, di = np.unique(dates, return_inverse=True)
    ids, ai = np.unique(np.asarray(assets, dtype=object).astype(str), return_inverse=True)
    flat = di * len(ids) + ai
    order = np.argsort(flat, kind="stable")
    dup = np.flatnonzero(flat[order][1:] == flat[order][:-1])
    if dup.size:
        k = order[dup[0] + 1]
        raise DataError(f"duplicate (asset, date) {what} for {ids[ai[k]]} on "
                        f"{cal[di[k]]} in {path}")
    out = np.full((len(cal), len(ids)), np.nan)
    out[di, ai] = values
    return cal, tuple(str(a) for a in ids), out


# ---------------------------------------------------------------------------
# panels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DailyReturnPanel:
    """Daily simple returns, one column per asset.

    Attributes
    ----------
    assets : tuple of str
        Asset ids in ascending order.
    calendar : ndarray of datetime64[D]
        Strictly increasing trading dates; every date carries at least one
        stored return.
    returns : ndarray, shape (len(calendar), len(assets))
        NaN where the asset has no return on that date.
    """

    assets: tuple
    calendar: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        assets = tuple(str(a) for a in self.assets)
        cal = np.asarray(self.calendar, dtype="datetime64[D]").copy()
        ret = np.array(self.returns, dtype=np.float64, copy=True).reshape(len(cal), len(assets))
        if list(assets) != sorted(set(assets)):
            raise DataError("asset ids must be unique and sorted")
        if cal.size > 1 and not np.all(cal[1:] > cal[:-1]):
            raise DataError("calendar dates must be strictly increasing")
        stored = ~np.isnan(ret)
        if np.any(np.isinf(ret)):
            raise DataError("returns must be finite")
        if np.any(ret[stored] <= -1.0):
            raise DataError("returns must exceed -1")
        if ret.size and (not stored.any(axis=1).all() or not stored.any(axis=0).all()):
            raise DataError("every date and asset must carry at least one return")
        _freeze(cal, ret)
        object.__setattr__(self, "assets", assets)
        object.__setattr__(self, "calendar", cal)
        object.__setattr__(self, "returns", ret)

    @classmethod
    def from_records(cls, dates, assets, values, path="<records>"):
        cal, ids, mat = _pivot(dates, assets, values, "return", path)
        return cls(ids, cal, mat)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def n_observations(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.returns)))

    def column(self, asset: str) -> int:
        i = int(np.searchsorted(np.array(self.assets, dtype=object), asset))
        if i >= len(self.assets) or self.assets[i] != asset:
            raise KeyError(asset)
        return i

    def date_index(self, day) -> int:
        d = to_day(day)
        i = int(np.searchsorted(self.calendar, d))
        if i >= self.calendar.size or self.calendar[i] != d:
            raise DataError(f"{d} is not on the trading calendar")
        return i

    def month_ends(self) -> np.ndarray:
        return month_ends(self.calendar)

    def equals(self, other) -> bool:
        return (self.assets == other.assets
                and np.array_equal(self.calendar, other.calendar)
                and np.array_equal(self.returns, other.returns, equal_nan=True))


@dataclass(frozen=True, eq=False)
class MonthlyReturnPanel:
    """Monthly simple returns keyed by month-end date, plus the risk-free rate.

    Months are matched across files by calendar month, so the stored
    month-end may be the last trading day or the last calendar day.
    """

    assets: tuple
    months: np.ndarray
    returns: np.ndarray
    rf: np.ndarray

    def __post_init__(self):
        assets = tuple(str(a) for a in self.assets)
        months = np.asarray(self.months, dtype="datetime64[D]").copy()
        ret = np.array(self.returns, dtype=np.float64, copy=True).reshape(len(months), len(assets))
        rf = np.array(self.rf, dtype=np.float64, copy=True).reshape(len(months))
        if list(assets) != sorted(set(assets)):
            raise DataError("asset ids must be unique and sorted")
        keys = month_key(months)
        if months.size > 1 and not np.all(keys[1:] > keys[:-1]):
            raise DataError("month-ends must be strictly increasing, one per month")
        stored = ~np.isnan(ret)
        if np.any(np.isinf(ret)) or np.any(np.isinf(rf)):
            raise DataError("returns must be finite")
        if np.any(ret[stored] <= -1.0):
            raise DataError("returns must exceed -1")
        _freeze(months, ret, rf)
        object.__setattr__(self, "assets", assets)
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "returns", ret)
        object.__setattr__(self, "rf", rf)

    def month_index(self, month) -> int:
        """Row of the given calendar month (any date within it)."""
        key = month_key(np.array([to_day(month)]))[0]
        keys = month_key(self.months)
        i = int(np.searchsorted(keys, key))
        if i >= keys.size or keys[i] != key:
            raise DataError(f"month {key} not in the monthly panel")
        return i

    def has_month(self, month) -> bool:
        try:
            self.month_index(month)
        except DataError:
            return False
        return True

    def rf_at(self, month) -> float:
        r = self.rf[self.month_index(month)]
        if np.isnan(r):
            raise DataError(f"risk-free rate missing for {month_key(np.array([to_day(month)]))[0]}")
        return float(r)

    def column(self, asset: str) -> int:
        i = int(np.searchsorted(np.array(self.assets, dtype=object), asset))
        if i >= len(self.assets) or self.assets[i] != asset:
            raise KeyError(asset)
        return i

    def equals(self, other) -> bool:
        return (self.assets == other.assets
                and np.array_equal(self.months, other.months)
                and np.array_equal(self.returns, other.returns, equal_nan=True)
                and np.array_equal(self.rf, other.rf, equal_nan=True))


@dataclass(frozen=True, eq=False)
class FactorSeries:
    """Factor returns at one frequency (daily or monthly), in decimals."""

    dates: np.ndarray
    values: np.ndarray
    names: tuple = FACTOR_NAMES

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]").copy()
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(len(dates), len(self.names))
        if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
            raise DataError("factor dates must be strictly increasing")
        if np.any(np.isinf(vals)):
            raise DataError("factor values must be finite")
        _freeze(dates, vals)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self):
        return int(self.dates.size)

    def select(self, names) -> np.ndarray:
        idx = [self.names.index(n) for n in names]
        return self.values[:, idx]

    def aligned(self, dates, names=FACTOR_NAMES[:3], by_month=False) -> np.ndarray:
        """Factor rows matching ``dates`` exactly (or by calendar month).

        Raises DataError on any missing date or missing value, i.e. a gap
        inside the requested window.
        """
        want = np.asarray(dates, dtype="datetime64[D]")
        have = self.dates
        if by_month:
            want, have = month_key(want), month_key(have)
        idx = np.searchsorted(have, want)
        ok = (idx < have.size)
        ok[ok] = have[idx[ok]] == want[ok]
        if not ok.all():
            raise DataError(f"factor series has no row for {want[~ok][0]}")
        out = self.select(names)[idx]
        if np.isnan(out).any():
            bad = want[np.isnan(out).any(axis=1)][0]
            raise DataError(f"factor series has a missing value on {bad}")
        return out

    def equals(self, other) -> bool:
        return (self.names == other.names and np.array_equal(self.dates, other.dates)
                and np.array_equal(self.values, other.values, equal_nan=True))


@dataclass(frozen=True, eq=False)
class CharacteristicsTable:
    """Per (date, asset) firm data; rows may be daily or monthly.

    Dense (dates x assets) arrays; ``present`` marks which cells came from
    a file row. Market cap is in millions, volume in shares.
    """

    dates: np.ndarray
    assets: tuple
    market_cap: np.ndarray
    book_to_market: np.ndarray
    volume: np.ndarray
    close_price: np.ndarray
    breakpoint_universe: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]").copy()
        assets = tuple(str(a) for a in self.assets)
        shape = (len(dates), len(assets))
        arrs = {}
        for name in ("market_cap", "book_to_market", "volume", "close_price"):
            arrs[name] = np.array(getattr(self, name), dtype=np.float64, copy=True).reshape(shape)
        bp = np.array(self.breakpoint_universe, dtype=bool, copy=True).reshape(shape)
        present = np.array(self.present, dtype=bool, copy=True).reshape(shape)
        mc = arrs["market_cap"]
        if np.any(mc[~np.isnan(mc)] <= 0):
            raise DataError("market_cap must be positive where present")
        for name, a in arrs.items():
            if np.any(np.isinf(a)):
                raise DataError(f"{name} must be finite where present")
        _freeze(dates, bp, present, *arrs.values())
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "assets", assets)
        object.__setattr__(self, "breakpoint_universe", bp)
        object.__setattr__(self, "present", present)
        for name, a in arrs.items():
            object.__setattr__(self, name, a)

    def column(self, asset: str) -> int:
        i = int(np.searchsorted(np.array(self.assets, dtype=object), asset))
        if i >= len(self.assets) or self.assets[i] != asset:
            raise KeyError(asset)
        return i

    def snapshot_rows(self, month_end) -> np.ndarray:
        """For each asset, row index of its latest entry on or before
        ``month_end`` within the same calendar month (-1 if none)."""
        end = to_day(month_end)
        in_month = (month_key(self.dates) == month_key(np.array([end]))[0]) & (self.dates <= end)
        rows = np.flatnonzero(in_month)
        out = np.full(len(self.assets), -1, dtype=np.int64)
        for r in rows:  # ascending, so the last write wins
            out[self.present[r]] = r
        return out

    def vold(self) -> np.ndarray:
        """Dollar volume in millions: volume * close / 1e6."""
        return self.volume * self.close_price / 1e6

    def equals(self, other) -> bool:
        same = self.assets == other.assets and np.array_equal(self.dates, other.dates)
        if not same:
            return False
        for name in ("market_cap", "book_to_market", "volume", "close_price"):
            if not np.array_equal(getattr(self, name), getattr(other, name), equal_nan=True):
                return False
        return (np.array_equal(self.breakpoint_universe, other.breakpoint_universe)
                and np.array_equal(self.present, other.present))


@dataclass(frozen=True, eq=False)
class MacroSeries:
    """Monthly macro variables in native units, one column per series."""

    months: np.ndarray
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        months = np.asarray(self.months, dtype="datetime64[D]").copy()
        names = tuple(str(n) for n in self.names)
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(len(months), len(names))
        if len(set(names)) != len(names):
            raise DataError("macro series names must be unique")
        # columns in name order, the order a file round trip produces
        order = sorted(range(len(names)), key=lambda j: names[j])
        names = tuple(names[j] for j in order)
        vals = np.ascontiguousarray(vals[:, order])
        keys = month_key(months)
        if months.size > 1 and not np.all(keys[1:] > keys[:-1]):
            raise DataError("macro dates must be increasing, one per month")
        _freeze(months, vals)
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", vals)

    def series(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def gaps(self) -> dict:
        """Missing calendar months per series between its first and last value."""
        keys = month_key(self.months)
        out = {}
        for j, name in enumerate(self.names):
            have = keys[~np.isnan(self.values[:, j])]
            if have.size == 0:
                out[name] = []
                continue
            full = np.arange(have[0], have[-1] + 1)
            out[name] = [str(m) for m in np.setdiff1d(full, have)]
        return out

    def has_gaps(self) -> bool:
        return any(self.gaps().values())

    def equals(self, other) -> bool:
        return (self.names == other.names and np.array_equal(self.months, other.months)
                and np.array_equal(self.values, other.values, equal_nan=True))


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------


def _load_long_returns(path):
    dates, assets, values = [], [], []
    for line, (d, a, r) in _rows(path, ("date", "asset_id", "return")):
        day = _parse_date(d, line, path)
        if a == "":
            raise DataError(f"empty asset_id at line {line} of {path}")
        x = _parse_float(r, line, path, "return")
        if x <= -1.0:
            raise DataError(f"return out of range at line {line} of {path}")
        dates.append(day)
        assets.append(a)
        values.append(x)
    return dates, assets, values


def load_daily_panel(path) -> DailyReturnPanel:
    """Read ``date,asset_id,return`` rows into a daily panel."""
    dates, assets, values = _load_long_returns(path)
    panel = DailyReturnPanel.from_records(dates, assets, values, path)
    logger.info("loaded %d daily returns for %d assets from %s",
                len(values), panel.n_assets, path)
    return panel


def load_riskfree(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``date,rf`` rows; returns (dates, rates)."""
    dates, rates = [], []
    for line, (d, r) in _rows(path, ("date", "rf")):
        dates.append(_parse_date(d, line, path))
        rates.append(_parse_float(r, line, path, "rf"))
    dates = np.array(dates, dtype="datetime64[D]")
    keys = month_key(dates)
    if dates.size > 1 and not np.all(keys[1:] > keys[:-1]):
        raise DataError(f"risk-free dates in {path} must be increasing, one per month")
    return dates, np.array(rates)


def load_monthly_panel(path, rf_path=None) -> MonthlyReturnPanel:
    """Read monthly ``date,asset_id,return`` rows and, optionally, ``date,rf``.

    Risk-free rates are matched to return months by calendar month; months
    without a rate hold NaN.
    """
    dates, assets, values = _load_long_returns(path)
    if dates:
        keys = month_key(np.array(dates, dtype="datetime64[D]"))
        by_month = {}
        for line_date, k in zip(dates, keys):
            prev = by_month.setdefault(k, line_date)
            if prev != line_date:
                raise DataError(f"two different dates ({prev}, {line_date}) for month {k} in {path}")
    months, ids, mat = _pivot(dates, assets, values, "return", path)
    rf = np.full(len(months), np.nan)
    if rf_path is not None:
        rd, rv = load_riskfree(rf_path)
        pos = {k: i for i, k in enumerate(month_key(months))}
        for k, v in zip(month_key(rd), rv):
            if k in pos:
                rf[pos[k]] = v
    logger.info("loaded %d monthly returns for %d assets from %s", len(values), len(ids), path)
    return MonthlyReturnPanel(ids, months, mat, rf)


def load_factors(path) -> FactorSeries:
    """Read ``date,mktrf,smb,hml,cma,rmw,mom``; empty cells become NaN."""
    header = ("date",) + FACTOR_NAMES
    dates, rows = [], []
    for line, fields in _rows(path, header):
        dates.append(_parse_date(fields[0], line, path))
        rows.append([_parse_float(f, line, path, n, allow_empty=True)
                     for f, n in zip(fields[1:], FACTOR_NAMES)])
    dates = np.array(dates, dtype="datetime64[D]")
    if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
        raise DataError(f"factor dates in {path} must be strictly increasing")
    vals = np.array(rows, dtype=np.float64).reshape(len(dates), len(FACTOR_NAMES))
    return FactorSeries(dates, vals, FACTOR_NAMES)


def _parse_flag(text, line, path):
    t = text.strip().lower()
    if t in ("1", "true"):
        return True
    if t in ("0", "false"):
        return False
    raise DataError(f"malformed breakpoint_universe {text!r} at line {line} of {path}")


def load_characteristics(path) -> CharacteristicsTable:
    """Read the characteristics CSV; numeric cells may be empty (missing)."""
    recs = []
    for line, f in _rows(path, CHARACTERISTIC_HEADER):
        day = _parse_date(f[0], line, path)
        if f[1] == "":
            raise DataError(f"empty asset_id at line {line} of {path}")
        mc = _parse_float(f[2], line, path, "market_cap", allow_empty=True)
        if not math.isnan(mc) and mc <= 0:
            raise DataError(f"market_cap must be positive at line {line} of {path}")
        bm = _parse_float(f[3], line, path, "book_to_market", allow_empty=True)
        vol = _parse_float(f[4], line, path, "volume", allow_empty=True)
        px = _parse_float(f[5], line, path, "close_price", allow_empty=True)
        recs.append((day, f[1], mc, bm, vol, px, _parse_flag(f[6], line, path)))
    if not recs:
        e = np.empty((0, 0))
        return CharacteristicsTable(np.array([], dtype="datetime64[D]"), (), e, e, e, e,
                                    e.astype(bool), e.astype(bool))
    dates = [r[0] for r in recs]
    assets = [r[1] for r in recs]
    cal, ids, idx = _pivot(dates, assets, np.arange(len(recs), dtype=float), "characteristic", path)
    present = ~np.isnan(idx)
    take = idx[present].astype(np.int64)
    fields = []
    for j in range(2, 7):
        col = np.array([r[j] for r in recs], dtype=np.float64)
        mat = np.full(idx.shape, np.nan if j < 6 else 0.0)
        mat[present] = col[take]
        fields.append(mat)
    return CharacteristicsTable(cal, ids, fields[0], fields[1], fields[2], fields[3],
                                fields[4].astype(bool), present)


def load_macro(path) -> MacroSeries:
    """Read ``date,series,value`` rows; gap months are allowed and flagged."""
    dates, names, values = [], [], []
    for line, (d, s, v) in _rows(path, ("date", "series", "value")):
        dates.append(_parse_date(d, line, path))
        if s == "":
            raise DataError(f"empty series name at line {line} of {path}")
        names.append(s)
        values.append(_parse_float(v, line, path, "value"))
    if not dates:
        return MacroSeries(np.array([], dtype="datetime64[D]"), (), np.empty((0, 0)))
    keys = month_key(np.array(dates, dtype="datetime64[D]"))
    first_date = {}
    for d, k in zip(dates, keys):
        prev = first_date.setdefault(k, d)
        if prev != d:
            raise DataError(f"two different dates ({prev}, {d}) for month {k} in {path}")
    months, series, mat = _pivot(dates, names, values, "macro value", path)
    out = MacroSeries(months, series, mat)
    gaps = {k: v for k, v in out.gaps().items() if v}
    if gaps:
        logger.warning("macro series with gap months: %s", gaps)
    return out


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------


def _long_rows(dates, assets, mat):
    for i, d in enumerate(dates):
        ds = fmt_day(d)
        row = mat[i]
        for j in np.flatnonzero(~np.isnan(row)):
            yield ds, assets[j], fmt_float(row[j])


def write_daily_panel(panel: DailyReturnPanel, path):
    _write(path, ("date", "asset_id", "return"),
           _long_rows(panel.calendar, panel.assets, panel.returns))


def write_monthly_panel(panel: MonthlyReturnPanel, path, rf_path=None):
    _write(path, ("date", "asset_id", "return"),
           _long_rows(panel.months, panel.assets, panel.returns))
    if rf_path is not None:
        write_riskfree(panel.months, panel.rf, rf_path)


def write_riskfree(dates, rates, path):
    _write(path, ("date", "rf"),
           ((fmt_day(d), fmt_float(r)) for d, r in zip(dates, rates) if not np.isnan(r)))


def write_factors(series: FactorSeries, path):
    if series.names != FACTOR_NAMES:
        raise DataError("factor files carry exactly the columns " + ",".join(FACTOR_NAMES))

    def cell(x):
        return "" if np.isnan(x) else fmt_float(x)

    _write(path, ("date",) + FACTOR_NAMES,
           ((fmt_day(d), *(cell(x) for x in row)) for d, row in zip(series.dates, series.values)))


def write_characteristics(table: CharacteristicsTable, path):
    def cell(x):
        return "" if np.isnan(x) else fmt_float(x)

    def rows():
        for i, d in enumerate(table.dates):
            ds = fmt_day(d)
            for j in np.flatnonzero(table.present[i]):
                yield (ds, table.assets[j], cell(table.market_cap[i, j]),
                       cell(table.book_to_market[i, j]), cell(table.volume[i, j]),
                       cell(table.close_price[i, j]),
                       "1" if table.breakpoint_universe[i, j] else "0")

    _write(path, CHARACTERISTIC_HEADER, rows())


def write_macro(macro: MacroSeries, path):
    _write(path, ("date", "series", "value"),
           _long_rows(macro.months, macro.names, macro.values))


# ---------------------------------------------------------------------------
# eligibility
# ---------------------------------------------------------------------------


def eligible_assets(panel: DailyReturnPanel, month_end, min_days: int = 60) -> frozenset:
    """Assets with at least ``min_days`` returns in the trailing twelve months.

    The window is the calendar interval ``(month_end - 1 year, month_end]``
    and ``month_end`` must be a trading date of the panel.
    """
    if int(min_days) < 1:
        raise ValueError("min_days must be at least 1")
    panel.date_index(month_end)
    rows = trailing_year_mask(panel.calendar, month_end)
    counts = np.count_nonzero(~np.isnan(panel.returns[rows]), axis=0)
    return frozenset(panel.assets[j] for j in np.flatnonzero(counts >= int(min_days)))
