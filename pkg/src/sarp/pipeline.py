"""
File-to-file steps behind the command line: ``gen``, ``project``, ``sort``,
``report`` and ``verify``.

Each step reads CSV inputs from the run configuration and writes CSV
outputs into ``config.out``. Floats are written with ``repr`` so that a
file written and read back gives the same numbers, and rows are always in
a canonical order; together with the schedule-independent projection
cycle this makes every output byte a function of inputs and settings.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import characteristics as chars
from . import enet, inference, replicate, sorts, synth
from .market_data import (DataError, FactorSeries, _rows, _write, fmt_day, fmt_float,
                          load_characteristics, load_daily_panel, load_factors, load_macro,
                          load_monthly_panel, to_day, write_characteristics, write_daily_panel,
                          write_factors, write_macro, write_monthly_panel)

logger = logging.getLogger(__name__)

INPUT_FILES = {
    "daily": "daily.csv",
    "monthly": "monthly.csv",
    "rf": "rf.csv",
    "factors_daily": "factors_daily.csv",
    "factors_monthly": "factors_monthly.csv",
    "characteristics": "characteristics.csv",
    "macro": "macro.csv",
}

PROJECTION_HEADER = ("month_end", "asset_id", "r2", "n_nonzero", "equity_proportion", "lambda")
WEIGHT_HEADER = ("month_end", "asset_id", "peer_id", "weight")
LEG_HEADER = ("month_end", "month", "asset_id", "foc", "rep", "ls", "rf")
BIN_HEADER = ("month", "bin", "leg", "return")


@dataclass
class RunConfig:
    """Resolved settings of one command.

    Input paths left as None resolve to the standard file names inside
    ``out``. ``months`` is an inclusive (first, last) pair of calendar
    months restricting formation months, or None for all of them.
    """

    out: str = "."
    seed: int = 0
    workers: int = 1
    months: tuple | None = None
    min_days: int = 60
    nw_lags: int = 6
    missing_policy: str = "riskfree"
    min_risky: bool = False
    # elastic-net cross-validation
    cv_folds: int = 3
    cv_ell: float = 0.5
    cv_grid_size: int = 100
    cv_grid_decay: float = 1e-3
    cv_tolerance: float = 1e-7
    cv_max_iterations: int = 10_000
    # synthetic economy
    n_assets: int = 400
    n_factors: int = 3
    n_months: int = 49
    idio_vol: float = synth.EconomyConfig.idio_vol
    beta_scale: float = synth.EconomyConfig.beta_scale
    alpha_scale: float = 0.0
    factor_mean: float = synth.DEFAULT_FACTOR_MEAN
    factor_vol: float = synth.DEFAULT_FACTOR_VOL
    factor_corr: float = synth.DEFAULT_FACTOR_CORR
    cluster_fraction: float = synth.EconomyConfig.cluster_fraction
    cluster_loading: float = synth.EconomyConfig.cluster_loading
    cluster_factors: int | None = None
    cluster_idio_lo: float = synth.EconomyConfig.cluster_idio_range[0]
    cluster_idio_hi: float = synth.EconomyConfig.cluster_idio_range[1]
    isolated_beta: float = synth.EconomyConfig.isolated_beta
    isolated_idio_lo: float = synth.EconomyConfig.isolated_idio_range[0]
    isolated_idio_hi: float = synth.EconomyConfig.isolated_idio_range[1]
    rf_daily: float = synth.EconomyConfig.rf_daily
    start: str = synth.EconomyConfig.start
    # inputs
    daily: str | None = None
    monthly: str | None = None
    rf: str | None = None
    factors_daily: str | None = None
    factors_monthly: str | None = None
    characteristics: str | None = None
    macro: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.workers) < 1:
            raise ValueError("workers must be at least 1")
        if self.months is not None:
            lo, hi = self.months
            if np.datetime64(lo, "M") > np.datetime64(hi, "M"):
                raise ValueError("month range is empty")
        if self.missing_policy not in replicate.MISSING_POLICIES:
            raise ValueError(f"missing_policy must be one of {replicate.MISSING_POLICIES}")
        if int(self.min_days) < 1:
            raise ValueError("min_days must be at least 1")
        if int(self.nw_lags) < 0:
            raise ValueError("nw_lags must be nonnegative")

    def path(self, name: str) -> Path:
        given = getattr(self, name)
        return Path(given) if given else Path(self.out) / INPUT_FILES[name]

    def output(self, name: str) -> Path:
        return Path(self.out) / name

    def cv_config(self) -> enet.CvConfig:
        return enet.CvConfig(n_folds=int(self.cv_folds), ell=float(self.cv_ell),
                             grid_size=int(self.cv_grid_size),
                             grid_decay=float(self.cv_grid_decay),
                             tolerance=float(self.cv_tolerance),
                             max_iterations=int(self.cv_max_iterations))

    def economy(self) -> synth.EconomyConfig:
        k = int(self.n_factors)
        corr = np.full((k, k), float(self.factor_corr))
        np.fill_diagonal(corr, 1.0)
        cov = corr * float(self.factor_vol) ** 2
        return synth.EconomyConfig(
            n_assets=int(self.n_assets), n_factors=k, n_months=int(self.n_months),
            factor_mean=(float(self.factor_mean),) * k,
            factor_cov=tuple(map(tuple, cov)), alpha_scale=float(self.alpha_scale),
            beta_scale=float(self.beta_scale), idio_vol=float(self.idio_vol),
            seed=int(self.seed), cluster_fraction=float(self.cluster_fraction),
            cluster_loading=float(self.cluster_loading),
            cluster_factors=None if self.cluster_factors is None else int(self.cluster_factors),
            cluster_idio_range=(float(self.cluster_idio_lo), float(self.cluster_idio_hi)),
            isolated_beta=float(self.isolated_beta),
            isolated_idio_range=(float(self.isolated_idio_lo), float(self.isolated_idio_hi)),
            rf_daily=float(self.rf_daily), start=str(self.start))


def config_items(config: RunConfig) -> list:
    """(key, value) pairs describing a configuration, excluding the worker count."""
    out = []
    for f in fields(config):
        if f.name in ("workers", "extra"):
            continue
        v = getattr(config, f.name)
        if f.name == "months" and v is not None:
            v = f"{v[0]}:{v[1]}"
        out.append((f.name, "" if v is None else str(v)))
    return out


# ---------------------------------------------------------------------------
# small CSV helpers
# ---------------------------------------------------------------------------


def _f(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else fmt_float(x)


def _read(path, header):
    return [fields for _, fields in _rows(path, header)]


def _optional(path: Path):
    return path if path.exists() else None


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(config: RunConfig) -> list:
    """Simulate an economy and write it in the input-file formats."""
    truth = synth.generate(config.economy())
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_daily_panel(truth.daily_panel(), config.path("daily"))
    write_monthly_panel(truth.monthly_panel(), config.path("monthly"), config.path("rf"))
    fd, fm = synth.factor_files(truth)
    write_factors(fd, config.path("factors_daily"))
    write_factors(fm, config.path("factors_monthly"))
    write_characteristics(synth.characteristics_table(truth), config.path("characteristics"))
    write_macro(synth.macro_series(truth), config.path("macro"))
    k = truth.config.n_factors
    header = ("asset_id", "in_cluster", "alpha", "idio_scale") + tuple(f"beta_{j + 1}"
                                                                        for j in range(k))
    _write(config.output("truth.csv"), header,
           ((a, "1" if truth.in_cluster[i] else "0", _f(truth.alphas[i]),
             _f(truth.idio_scale[i]), *(_f(b) for b in truth.betas[i]))
            for i, a in enumerate(truth.assets)))
    return [config.path(n) for n in INPUT_FILES] + [config.output("truth.csv")]


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------


def _load_monthly(config):
    return load_monthly_panel(config.path("monthly"), config.path("rf"))


def _load_factor_pair(config):
    pd_, pm = _optional(config.path("factors_daily")), _optional(config.path("factors_monthly"))
    if pd_ is None or pm is None:
        return None, None
    return load_factors(pd_), load_factors(pm)


def _write_records(path_proj, path_w, records):
    _write(path_proj, PROJECTION_HEADER,
           ((fmt_day(r.month_end), r.focal, _f(r.r_squared), str(r.n_nonzero),
             _f(r.equity_proportion), _f(r.lambda_selected)) for r in records))
    _write(path_w, WEIGHT_HEADER,
           ((fmt_day(r.month_end), r.focal, p, _f(w))
            for r in records for p, w in zip(r.peer_ids, r.beta_tilde)))


def _write_legs(path, legs):
    _write(path, LEG_HEADER,
           ((fmt_day(x.month_end), fmt_day(x.month), x.focal, _f(x.foc), _f(x.rep), _f(x.ls),
             _f(x.rf)) for x in legs))


def cmd_project(config: RunConfig) -> list:
    """Run the projection cycle and write records, weights and return legs."""
    daily = load_daily_panel(config.path("daily"))
    monthly = _load_monthly(config)
    fd, fm = _load_factor_pair(config)
    lo, hi = config.months if config.months else (None, None)
    months = replicate.formation_months(daily, monthly, lo, hi)
    if months.size == 0:
        raise DataError("no formation month in range with a following month of returns")
    res = replicate.run_projection_cycle(
        daily, monthly, months, cv_config=config.cv_config(), min_days=config.min_days,
        workers=config.workers, missing_policy=config.missing_policy,
        factors_daily=fd, factors_monthly=fm)
    if not res.records:
        logger.warning("no eligible asset in any formation month (min_days=%d)", config.min_days)
    written = []
    _write_records(config.output("projections.csv"), config.output("weights.csv"), res.records)
    _write_legs(config.output("legs.csv"), res.legs)
    _write(config.output("failures.csv"), ("month_end", "asset_id", "reason"),
           ((fmt_day(m), a, why) for m, a, why in res.failures))
    written += [config.output(n) for n in ("projections.csv", "weights.csv", "legs.csv",
                                           "failures.csv")]
    for z, (recs, legs) in sorted(res.ff.items()):
        _write_records(config.output(f"projections_ff{z}.csv"),
                       config.output(f"weights_ff{z}.csv"), recs)
        _write_legs(config.output(f"legs_ff{z}.csv"), legs)
        written += [config.output(f"{n}_ff{z}.csv") for n in ("projections", "weights", "legs")]
    return written


# ---------------------------------------------------------------------------
# sort
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoredRecord:
    focal: str
    month_end: np.datetime64
    r_squared: float
    n_nonzero: int
    equity_proportion: float
    lambda_selected: float


def read_projections(path) -> list:
    return [StoredRecord(a, to_day(m), float(r2), int(nnz), float(eq), float(lam))
            for m, a, r2, nnz, eq, lam in _read(path, PROJECTION_HEADER)]


def read_legs(path) -> list:
    return [replicate.ReturnLeg(to_day(m), to_day(t), a, float(f), float(r), float(ls), float(rf))
            for m, t, a, f, r, ls, rf in _read(path, LEG_HEADER)]


def _scores(records, attr="r_squared") -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(r.month_end, {})[r.focal] = float(getattr(r, attr))
    return out


def _write_bins(path, series: sorts.BinSeries):
    _write(path, BIN_HEADER, ((m, b, leg, _f(v)) for m, b, leg, v in series.rows()))


def read_bins(path) -> sorts.BinSeries:
    rows = _read(path, BIN_HEADER)
    months = sorted({r[0] for r in rows})
    pos = {m: i for i, m in enumerate(months)}
    vals = {leg: np.full((len(months), len(sorts.BIN_LABELS)), np.nan) for leg in sorts.LEGS}
    for m, b, leg, v in rows:
        vals[leg][pos[m], sorts.BIN_LABELS.index(b)] = float(v)
    return sorts.BinSeries(np.array(months, dtype="datetime64[D]"), vals)


def _characteristics_by_month(config, months) -> dict:
    """month_end -> {asset: CharacteristicVector} with whatever inputs exist."""
    daily = load_daily_panel(config.path("daily"))
    monthly = _load_monthly(config)
    table = _optional(config.path("characteristics"))
    table = load_characteristics(table) if table else None
    fd = _optional(config.path("factors_daily"))
    fd = load_factors(fd) if fd else None
    return {m: chars.compute_characteristics(daily, monthly, table, fd, m) for m in months}


def _breakpoint_sets(config, months) -> dict | None:
    path = _optional(config.path("characteristics"))
    if path is None:
        return None
    table = load_characteristics(path)
    out = {}
    for m in months:
        rows = table.snapshot_rows(m)
        out[m] = {a for j, a in enumerate(table.assets)
                  if rows[j] >= 0 and table.breakpoint_universe[rows[j], j]}
    return out


BREAKPOINT_CONTROLS = ("mktcap", "bm")


def cmd_sort(config: RunConfig) -> list:
    """Univariate, robustness and bivariate R^2 sorts plus the bin summary."""
    records = read_projections(config.output("projections.csv"))
    legs = read_legs(config.output("legs.csv"))
    risky = sorts.min_risky_filter(records)
    main = risky if config.min_risky else records
    written = []

    uni, assignments = sorts.bin_series(_scores(main), legs)
    _write_bins(config.output("bins.csv"), uni)
    mr, _ = sorts.bin_series(_scores(risky), legs)
    _write_bins(config.output("bins_minrisky.csv"), mr)
    written += [config.output("bins.csv"), config.output("bins_minrisky.csv")]

    for z in (3, 5):
        p, lp = config.output(f"projections_ff{z}.csv"), config.output(f"legs_ff{z}.csv")
        if p.exists() and lp.exists():
            ff, _ = sorts.bin_series(_scores(read_projections(p)), read_legs(lp))
            _write_bins(config.output(f"bins_ff{z}.csv"), ff)
            written.append(config.output(f"bins_ff{z}.csv"))

    months = sorted({r.month_end for r in main})
    cvs = _characteristics_by_month(config, months)
    bps = _breakpoint_sets(config, months)
    r2 = _scores(main)
    rows = []
    for name in chars.NAMES:
        control = {m: {a: getattr(v, name) for a, v in cvs[m].items()} for m in months}
        bp = bps if (name in BREAKPOINT_CONTROLS and bps is not None) else None
        bs = sorts.bivariate_dependent_sort(control, r2, legs, bp)
        rows += [(name, m, b, leg, _f(v)) for m, b, leg, v in bs.rows()]
    _write(config.output("bins_bivariate.csv"), ("control",) + BIN_HEADER, rows)
    written.append(config.output("bins_bivariate.csv"))

    by_month = {}
    for attr in ("r_squared", "n_nonzero", "equity_proportion"):
        by_month[attr] = _scores(main, attr)
    for name in chars.NAMES:
        by_month[name] = {m: {a: getattr(v, name) for a, v in cvs[m].items()} for m in months}
    labels = [str(k) for k in range(1, sorts.N_BINS + 1)]
    out_rows = []
    for var, data in by_month.items():
        summary = sorts.bin_summary(assignments, data)
        for stat in ("mean", "sd", "p5", "p95"):
            cells = [_f(getattr(summary[k], stat)) if k in summary else ""
                     for k in range(1, sorts.N_BINS + 1)]
            out_rows.append((var, stat, *cells))
    _write(config.output("characteristics_summary.csv"), ("variable", "statistic", *labels),
           out_rows)
    written.append(config.output("characteristics_summary.csv"))
    return written


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

REPORT_HEADER = ("table", "panel", "row", "column", "estimate", "t")


def _pct(x):
    return _f(100.0 * x) if x is not None and math.isfinite(x) else ""


def _t(x):
    return _f(x) if x is not None and math.isfinite(x) else ""


def _mean_rows(table, panel, series: sorts.BinSeries, lags, legs=sorts.LEGS):
    out = []
    for leg in legs:
        for lab in sorts.BIN_LABELS:
            x = series.leg(leg, lab)
            x = x[~np.isnan(x)]
            if x.size < 2:
                continue
            mt = inference.mean_test(x, min(lags, x.size - 1))
            out.append((table, panel or leg, lab, leg if panel else "mean", _pct(mt.mean),
                        _t(mt.t)))
    return out


def _alpha_rows(series: sorts.BinSeries, fm: FactorSeries, lags):
    out = []
    for model in ("FF3", "FF5"):
        for leg in sorts.LEGS:
            for lab in sorts.BIN_LABELS:
                x = series.leg(leg, lab)
                keep = ~np.isnan(x)
                if keep.sum() < 8:
                    continue
                try:
                    res = inference.factor_alpha(series.months[keep], x[keep], fm, model,
                                                 min(lags, int(keep.sum()) - 1))
                except (np.linalg.LinAlgError, DataError, ValueError) as exc:
                    logger.warning("%s alpha for %s bin %s skipped: %s", model, leg, lab, exc)
                    continue
                out.append(("factor_alpha", f"{model}_{leg}", lab, "alpha",
                            _pct(res.coefficients[0]), _t(res.t_statistics[0])))
    return out


def _fm_rows(sar: inference.SarFactorSeries, test_sets: dict, fm: FactorSeries | None):
    out = []
    if fm is None:
        return out
    months = sar.months
    for set_name, R in test_sets.items():
        keep = ~np.isnan(R).any(axis=1) & ~np.isnan(sar.values)
        if keep.sum() < 12:
            continue
        for model, names in (("MktRF+SAR", ("mktrf",)), ("FF3+SAR", ("mktrf", "smb", "hml")),
                             ("FF5+SAR", ("mktrf", "smb", "hml", "cma", "rmw"))):
            F = np.column_stack([fm.aligned(months[keep], names, by_month=True),
                                 sar.values[keep]])
            if R.shape[1] <= F.shape[1] + 1:
                continue
            try:
                res = inference.fama_macbeth(R[keep], F, names=names + ("sar",))
            except (np.linalg.LinAlgError, ValueError) as exc:
                logger.warning("Fama-MacBeth %s/%s skipped: %s", set_name, model, exc)
                continue
            panel = f"{set_name}:{model}"
            for nm, lam, t in zip(res.names, res.lambdas, res.fm_t_statistics):
                out.append(("fama_macbeth", panel, nm, "lambda", _pct(lam), _t(t)))
            out.append(("fama_macbeth", panel, "chi2", "statistic", _f(res.chi2_statistic),
                        ""))
            out.append(("fama_macbeth", panel, "chi2", "p_value", _f(res.chi2_p_value), ""))
            out.append(("fama_macbeth", panel, "chi2", "df", str(res.chi2_df), ""))
    return out


def cmd_report(config: RunConfig) -> list:
    """Inference tables, correlations, performance statistics and plot data."""
    lags = int(config.nw_lags)
    uni = read_bins(config.output("bins.csv"))
    if uni.months.size == 0:
        raise DataError("bins.csv holds no months")
    fmp = _optional(config.path("factors_monthly"))
    fm = load_factors(fmp) if fmp else None
    monthly = _load_monthly(config)
    rows = []
    rows += _mean_rows("univariate", None, uni, lags)
    for name in ("bins_minrisky", "bins_ff3", "bins_ff5"):
        p = config.output(f"{name}.csv")
        if p.exists():
            rows += _mean_rows(name.replace("bins_", "robust_"), None, read_bins(p), lags)
    if fm is not None:
        rows += _alpha_rows(uni, fm, lags)

    biv_path = config.output("bins_bivariate.csv")
    biv_sets = {}
    if biv_path.exists():
        grouped: dict = {}
        for ctrl, m, b, leg, v in _read(biv_path, ("control",) + BIN_HEADER):
            grouped.setdefault(ctrl, []).append((m, b, leg, v))
        for ctrl in chars.NAMES:
            if ctrl not in grouped:
                continue
            months = sorted({r[0] for r in grouped[ctrl]})
            pos = {m: i for i, m in enumerate(months)}
            vals = {leg: np.full((len(months), len(sorts.BIN_LABELS)), np.nan)
                    for leg in sorts.LEGS}
            for m, b, leg, v in grouped[ctrl]:
                vals[leg][pos[m], sorts.BIN_LABELS.index(b)] = float(v)
            bs = sorts.BinSeries(np.array(months, dtype="datetime64[D]"), vals)
            biv_sets[ctrl] = bs
            rows += _mean_rows("bivariate", ctrl, bs, lags, legs=("ls",))

    sar = inference.sar_factor(uni)
    sar_mt = inference.mean_test(sar.values[~np.isnan(sar.values)], lags)
    rows.append(("sar_factor", "sar", "mean", "mean", _pct(sar_mt.mean), _t(sar_mt.t)))

    def foc_matrix(bs):
        idx = {m: i for i, m in enumerate(bs.months)}
        R = np.full((uni.months.size, sorts.N_BINS), np.nan)
        for i, m in enumerate(uni.months):
            if m in idx:
                R[i] = bs.values["foc"][idx[m], :sorts.N_BINS]
        return R

    test_sets = {"r2_deciles": foc_matrix(uni)}
    for ctrl in ("mktcap", "bm"):
        if ctrl in biv_sets:
            test_sets[f"r2_deciles+{ctrl}"] = np.column_stack(
                [foc_matrix(uni), foc_matrix(biv_sets[ctrl])])
    rows += _fm_rows(sar, test_sets, fm)

    # SAR factor dynamics
    try:
        arma = inference.arma11_fit(sar.values[~np.isnan(sar.values)])
        for nm, est, t in (("c", arma.c, arma.t_c), ("a", arma.a, arma.t_a),
                           ("b", arma.b, arma.t_b)):
            rows.append(("arma11", "sar", nm, "converged" if arma.converged else "flagged",
                         _f(est), _t(t)))
    except ValueError as exc:
        logger.warning("ARMA(1,1) skipped: %s", exc)

    # macro regression on the change in mean R^2
    records = read_projections(config.output("projections.csv"))
    r2_by_month = _scores(records)
    r2_months = np.array(sorted(r2_by_month), dtype="datetime64[D]")
    mean_r2 = np.array([math.fsum(r2_by_month[m].values()) / len(r2_by_month[m])
                        for m in sorted(r2_by_month)])
    macro_path = _optional(config.path("macro"))
    if macro_path is not None and fm is not None and r2_months.size:
        macro = load_macro(macro_path)
        mkt = fm.aligned(r2_months, ("mktrf",), by_month=True)[:, 0]
        try:
            mr = inference.macro_regression(r2_months, mean_r2, macro, mkt, lags=lags)
            res = mr.result
            for nm, est, t in zip(res.names, res.coefficients, res.t_statistics):
                rows.append(("macro", "delta_mean_r2", nm, "coef", _f(est), _t(t)))
            rows.append(("macro", "delta_mean_r2", "r_squared", "value", _f(res.r_squared), ""))
            rows.append(("macro", "delta_mean_r2", "n_observations", "value",
                         str(res.n_observations), ""))
            rows.append(("macro", "delta_mean_r2", "n_dropped", "value", str(mr.n_dropped), ""))
        except (np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("macro regression skipped: %s", exc)
    _write(config.output("report.csv"), REPORT_HEADER, rows)

    # correlations: focal bins against replicate bins, and the SAR factor
    corr_rows = []
    F = uni.values["foc"][:, :sorts.N_BINS]
    Rp = uni.values["rep"][:, :sorts.N_BINS]
    C = inference.correlation_matrix(np.column_stack([F, Rp]))
    for i in range(sorts.N_BINS):
        for j in range(sorts.N_BINS):
            corr_rows.append(("foc_rep", f"foc_{i + 1}", f"rep_{j + 1}",
                              _f(C[i, sorts.N_BINS + j])))
    if fm is not None:
        names = ("sar",) + tuple(fm.names)
        X = np.column_stack([sar.values, fm.aligned(uni.months, fm.names, by_month=True)])
        keep = ~np.isnan(X).any(axis=1)
        C2 = inference.correlation_matrix(X[keep])
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                corr_rows.append(("sar_factors", a, b, _f(C2[i, j])))
    _write(config.output("corr.csv"), ("table", "row", "column", "value"), corr_rows)

    # performance of the zero-cost and market strategies
    rf = np.array([monthly.rf_at(m) for m in uni.months])
    strategies = {"sar_factor": sar.values,
                  "lo_hi_foc": uni.leg("foc", "lo_hi")}
    if fm is not None:
        strategies["market"] = fm.aligned(uni.months, ("mktrf",), by_month=True)[:, 0] + rf
    perf_rows, cum_rows, roll_rows = [], [], []
    for name, x in strategies.items():
        keep = ~np.isnan(x)
        ps = inference.performance_stats(x[keep], rf[keep] if name == "market" else None)
        for stat in ("final_value", "mean", "sd", "skewness", "kurtosis", "p5", "p95",
                     "sharpe"):
            perf_rows.append((name, stat, _f(getattr(ps, stat))))
        perf_rows.append((name, "sharpe_defined", "1" if ps.sharpe_defined else "0"))
        ms = uni.months[keep]
        for m, c, lc in zip(ms, ps.cumulative, ps.log_cumulative):
            cum_rows.append((fmt_day(m), name, _f(c), _f(lc)))
        for w, path in ps.rolling.items():
            for m, v in zip(ms[w - 1:], path):
                roll_rows.append((str(w), fmt_day(m), name, _f(v)))
    _write(config.output("perf.csv"), ("series", "statistic", "value"), perf_rows)
    plot = Path(config.out) / "plotdata"
    _write(plot / "cumulative.csv", ("month", "series", "value", "log_value"), cum_rows)
    _write(plot / "rolling.csv", ("window", "month", "series", "value"), roll_rows)
    _write(plot / "mean_r2.csv", ("month_end", "mean_r2"),
           ((fmt_day(m), _f(v)) for m, v in zip(r2_months, mean_r2)))
    return [config.output(n) for n in ("report.csv", "corr.csv", "perf.csv")] + [
        plot / n for n in ("cumulative.csv", "rolling.csv", "mean_r2.csv")]


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float


def _spanning_check(seed: int) -> Check:
    truth = synth.generate(synth.EconomyConfig(n_assets=10, n_factors=3, idio_vol=0.0,
                                               n_days=500, seed=seed))
    worst = max(float(np.max(np.abs(synth.oracle_replication(truth, a).residual)))
                for a in truth.assets)
    return Check("noiseless_spanning_residual", worst <= 1e-8, worst, 1e-8)


def _solver_check(seed: int) -> Check:
    rng = np.random.default_rng([seed, 7])
    worst = 0.0
    for _ in range(10):
        T, N = int(rng.integers(20, 60)), int(rng.integers(50, 120))
        X = rng.standard_normal((T, N))
        y = X[:, :3] @ np.array([1.0, -0.5, 0.25]) + 0.1 * rng.standard_normal(T)
        lam = 0.1 * float(np.max(np.abs(X.T @ y))) / T
        l1, l2 = enet.penalties(lam, 0.5)
        sol = enet.solve(enet.EnetProblem(X, y, l1, l2))
        worst = max(worst, enet.kkt_violation(X, y, sol.beta, l1, l2))
    return Check("enet_kkt_residual", worst <= 1e-6, worst, 1e-6)


def _output_checks(config: RunConfig) -> list:
    out = []
    legs_path = config.output("legs.csv")
    if legs_path.exists():
        legs = read_legs(legs_path)
        err = max((abs(x.ls - (x.foc - x.rep)) for x in legs), default=0.0)
        out.append(Check("leg_identity_ls", err <= 1e-12, err, 1e-12))
    wpath = config.output("weights.csv")
    ppath = config.output("projections.csv")
    if wpath.exists() and ppath.exists():
        sums: dict = {}
        for m, a, _, w in _read(wpath, WEIGHT_HEADER):
            sums.setdefault((m, a), []).append(abs(float(w)))
        err = max((abs(math.fsum(v) - 1.0) for v in sums.values()), default=0.0)
        out.append(Check("weights_unit_l1", err <= 1e-12, err, 1e-12))
        recs = read_projections(ppath)
        bad = sum(1 for r in recs if (r.n_nonzero > 0) != ((fmt_day(r.month_end), r.focal) in sums))
        out.append(Check("weights_match_records", bad == 0, float(bad), 0.0))
    bpath = config.output("bins.csv")
    if bpath.exists():
        bs = read_bins(bpath)
        ls = np.abs(bs.values["ls"][:, :sorts.N_BINS]
                    - (bs.values["foc"][:, :sorts.N_BINS] - bs.values["rep"][:, :sorts.N_BINS]))
        err = float(np.nanmax(ls)) if ls.size else 0.0
        out.append(Check("bin_identity_ls", err <= 1e-12, err, 1e-12))
        worst = 0.0
        for leg in sorts.LEGS:
            v = bs.values[leg]
            for row in v:
                if not np.isnan(row[:sorts.N_BINS]).any():
                    worst = max(worst, abs(row[sorts.N_BINS]
                                           - math.fsum(row[:sorts.N_BINS]) / sorts.N_BINS))
        out.append(Check("avg_bin_mean", worst <= 1e-12, worst, 1e-12))
    return out


def cmd_verify(config: RunConfig) -> tuple[list, list]:
    """Oracle checks on synthetic economies plus identities on existing outputs."""
    checks = [_spanning_check(int(config.seed)), _solver_check(int(config.seed))]
    checks += _output_checks(config)
    path = config.output("verify.csv")
    _write(path, ("check", "status", "value", "threshold"),
           ((c.name, "pass" if c.passed else "fail", _f(c.value), _f(c.threshold))
            for c in checks))
    return [path], checks
