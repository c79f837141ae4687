"""
Decile sorts on projection R^2, equal-weighted bin returns, dependent
double sorts and per-bin characteristic summaries.

Bins are numbered 1 ("Lo", smallest score) to 10 ("Hi"). Within a month
assets are ordered by (score, asset id); when the count does not divide
evenly the lowest-numbered bins take one extra asset each.

Focal and replicate bin returns are excess returns over the risk-free
rate; the long-short leg is their difference and is not re-excessed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

N_BINS = 10
LEGS = ("foc", "rep", "ls")

__all__ = [
    "BinAssignment",
    "BinSeries",
    "bin_returns",
    "bin_series",
    "bin_summary",
    "bivariate_dependent_sort",
    "decile_sort",
    "min_risky_filter",
    "rank_bins",
]


@dataclass(frozen=True)
class BinAssignment:
    month_end: np.datetime64
    bins: dict
    sizes: tuple

    def members(self, k: int) -> list:
        return sorted(a for a, b in self.bins.items() if b == k)


def rank_bins(n: int, n_bins: int = N_BINS) -> np.ndarray:
    """Bin index (1-based) for ranks 0..n-1.

    With n >= n_bins, sizes differ by at most one and the remainder goes to
    the lowest bins. With fewer assets than bins each asset gets its own
    bin, spread evenly over 1..n_bins, and the other bins stay empty.
    """
    if n >= n_bins:
        base, extra = divmod(n, n_bins)
        sizes = [base + (1 if k < extra else 0) for k in range(n_bins)]
        return np.repeat(np.arange(1, n_bins + 1), sizes)
    return (np.arange(n) * n_bins) // n + 1 if n else np.array([], dtype=np.int64)


def _ordered(scores: dict) -> list:
    for a, s in scores.items():
        if s is None or not math.isfinite(s):
            raise ValueError(f"score for {a} is not finite")
    return sorted(scores, key=lambda a: (scores[a], a))


def decile_sort(scores: dict, month_end=None) -> BinAssignment:
    """Ascending decile assignment; ties broken by asset id."""
    if len(scores) < N_BINS:
        raise ValueError(f"decile sort needs at least {N_BINS} assets, got {len(scores)}")
    order = _ordered(scores)
    bins = rank_bins(len(order))
    sizes = tuple(int(np.count_nonzero(bins == k)) for k in range(1, N_BINS + 1))
    return BinAssignment(month_end, {a: int(b) for a, b in zip(order, bins)}, sizes)


def _mean(xs) -> float:
    return math.fsum(xs) / len(xs)


def bin_returns(assignment: BinAssignment, legs: dict, rf: float) -> dict:
    """One month of bin returns.

    Parameters
    ----------
    assignment : formation-month decile assignment.
    legs : asset -> (focal return, replicate return) over the next month.
    rf : risk-free rate over that month.

    Returns
    -------
    dict with keys "foc", "rep", "ls", each an array of 12 values: bins
    1..10, then "Avg" (mean of the ten bins) and "Lo-Hi" (bin 1 - bin 10).
    Empty bins give NaN.
    """
    out = {leg: np.full(N_BINS + 2, np.nan) for leg in LEGS}
    for k in range(1, N_BINS + 1):
        members = assignment.members(k)
        if not members:
            continue
        missing = [a for a in members if a not in legs]
        if missing:
            raise KeyError(f"no realized legs for {missing[0]}")
        out["foc"][k - 1] = _mean([legs[a][0] - rf for a in members])
        out["rep"][k - 1] = _mean([legs[a][1] - rf for a in members])
        out["ls"][k - 1] = out["foc"][k - 1] - out["rep"][k - 1]
    for leg in LEGS:
        v = out[leg]
        if not np.isnan(v[:N_BINS]).any():
            v[N_BINS] = _mean(v[:N_BINS])
        v[N_BINS + 1] = v[0] - v[N_BINS - 1]
    return out


BIN_LABELS = tuple(str(k) for k in range(1, N_BINS + 1)) + ("avg", "lo_hi")


@dataclass(frozen=True, eq=False)
class BinSeries:
    """Monthly bin returns: ``values[leg]`` has shape (n_months, 12).

    Columns are bins 1..10, "avg" and "lo_hi"; rows are realization months.
    """

    months: np.ndarray
    values: dict

    def leg(self, leg: str, label) -> np.ndarray:
        return self.values[leg][:, BIN_LABELS.index(str(label))]

    def rows(self):
        """Long-format rows (month, bin, leg, return), skipping NaN cells."""
        for i, m in enumerate(self.months):
            for c, lab in enumerate(BIN_LABELS):
                for leg in LEGS:
                    v = self.values[leg][i, c]
                    if not np.isnan(v):
                        yield str(m), lab, leg, v


def _group_legs(legs):
    """Group ReturnLeg-like objects by formation month."""
    by_month = {}
    for leg in legs:
        by_month.setdefault(leg.month_end, []).append(leg)
    return dict(sorted(by_month.items()))


def bin_series(scores_by_month: dict, legs) -> tuple[BinSeries, list]:
    """Univariate decile sort every month.

    ``scores_by_month`` maps formation month-end -> {asset: score}. Only
    assets with a realized leg are sorted. Months with fewer than ten such
    assets are skipped.

    Returns the series and the list of BinAssignment objects used.
    """
    grouped = _group_legs(legs)
    months, rows, assignments = [], {leg: [] for leg in LEGS}, []
    for m, lg in grouped.items():
        scores = scores_by_month.get(m, {})
        legmap = {x.focal: (x.foc, x.rep) for x in lg if x.focal in scores}
        if len(legmap) < N_BINS:
            continue
        rf = lg[0].rf
        a = decile_sort({k: scores[k] for k in legmap}, m)
        r = bin_returns(a, legmap, rf)
        months.append(lg[0].month)
        assignments.append(a)
        for leg in LEGS:
            rows[leg].append(r[leg])
    vals = {leg: np.array(rows[leg]).reshape(len(months), N_BINS + 2) for leg in LEGS}
    return BinSeries(np.array(months, dtype="datetime64[D]"), vals), assignments


def _quintiles(values: dict, breakpoint_assets=None) -> dict:
    """Quintile (1..5) per asset.

    With ``breakpoint_assets`` the 20/40/60/80th percentiles of the
    breakpoint subset define the cut points (a value equal to a cut point
    goes to the lower quintile); otherwise assets are ranked with the
    same remainder rule as the decile sort.
    """
    if breakpoint_assets is not None:
        ref = np.array([values[a] for a in sorted(breakpoint_assets) if a in values])
        if ref.size == 0:
            return {}
        cuts = np.percentile(ref, [20, 40, 60, 80])
        return {a: int(np.searchsorted(cuts, v, side="left")) + 1 for a, v in values.items()}
    order = _ordered(values)
    q = rank_bins(len(order), 5)
    return {a: int(b) for a, b in zip(order, q)}


def bivariate_dependent_sort(control_by_month: dict, r2_by_month: dict, legs,
                             breakpoints_by_month: dict | None = None) -> BinSeries:
    """Quintiles on a control characteristic, then R^2 deciles inside each.

    Each of the ten output bins is, every month, the simple mean of the
    matching within-quintile decile cells over the quintiles where that
    cell is nonempty.

    Parameters
    ----------
    control_by_month, r2_by_month : month-end -> {asset: value}.
    legs : realized ReturnLeg objects.
    breakpoints_by_month : month-end -> set of assets whose control values
        set the quintile cut points (size and book-to-market); None for
        rank-based quintiles.
    """
    grouped = _group_legs(legs)
    months, rows = [], {leg: [] for leg in LEGS}
    for m, lg in grouped.items():
        ctrl = control_by_month.get(m, {})
        r2 = r2_by_month.get(m, {})
        legmap = {x.focal: (x.foc, x.rep) for x in lg
                  if x.focal in r2 and x.focal in ctrl and math.isfinite(ctrl[x.focal])}
        if not legmap:
            continue
        rf = lg[0].rf
        bp = None if breakpoints_by_month is None else breakpoints_by_month.get(m, set())
        quint = _quintiles({a: ctrl[a] for a in legmap}, bp)
        cells = {leg: [[] for _ in range(N_BINS)] for leg in LEGS}
        for q in range(1, 6):
            members = {a: r2[a] for a in legmap if quint.get(a) == q}
            if not members:
                continue
            order = _ordered(members)
            bins = rank_bins(len(order))
            for k in range(1, N_BINS + 1):
                names = [a for a, b in zip(order, bins) if b == k]
                if not names:
                    continue
                foc = _mean([legmap[a][0] - rf for a in names])
                rep = _mean([legmap[a][1] - rf for a in names])
                cells["foc"][k - 1].append(foc)
                cells["rep"][k - 1].append(rep)
                cells["ls"][k - 1].append(foc - rep)
        row = {leg: np.full(N_BINS + 2, np.nan) for leg in LEGS}
        for leg in LEGS:
            for k in range(N_BINS):
                if cells[leg][k]:
                    row[leg][k] = _mean(cells[leg][k])
            if not np.isnan(row[leg][:N_BINS]).any():
                row[leg][N_BINS] = _mean(row[leg][:N_BINS])
            row[leg][N_BINS + 1] = row[leg][0] - row[leg][N_BINS - 1]
        months.append(lg[0].month)
        for leg in LEGS:
            rows[leg].append(row[leg])
    vals = {leg: np.array(rows[leg]).reshape(len(months), N_BINS + 2) for leg in LEGS}
    return BinSeries(np.array(months, dtype="datetime64[D]"), vals)


@dataclass(frozen=True)
class BinStat:
    mean: float
    sd: float
    p5: float
    p95: float
    n_months: int


def bin_summary(assignments, characteristic_by_month: dict) -> dict:
    """Time-series statistics of within-bin average characteristics.

    Each month the characteristic is averaged over the bin's members that
    have a finite value; the per-bin monthly averages are then summarised
    by their time-series mean, SD (ddof=1; a single month gives 0) and
    5th/95th percentiles (linear interpolation).

    Returns {bin: BinStat} for bins 1..10 (bins never populated are absent).
    """
    series = {k: [] for k in range(1, N_BINS + 1)}
    for a in assignments:
        vals = characteristic_by_month.get(a.month_end, {})
        for k in range(1, N_BINS + 1):
            xs = [vals[x] for x in a.members(k) if x in vals and math.isfinite(vals[x])]
            if xs:
                series[k].append(_mean(xs))
    out = {}
    for k, xs in series.items():
        if not xs:
            continue
        arr = np.array(xs)
        sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        p5, p95 = np.percentile(arr, [5, 95])
        out[k] = BinStat(_mean(xs), sd, float(p5), float(p95), arr.size)
    return out


def min_risky_filter(records) -> list:
    """Keep records whose replicate holds at least one risky peer."""
    return [r for r in records if r.n_nonzero >= 1]
