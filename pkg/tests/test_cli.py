import csv
import logging
from pathlib import Path

import numpy as np
import pytest

from sarp import cli, pipeline
from sarp.market_data import load_daily_panel

ECON = ["--n-assets", "50", "--n-months", "34", "--seed", "3"]
STEPS = ("gen", "project", "sort", "report", "verify")


def run_all(out: Path, workers: int, config=None):
    for step in STEPS:
        argv = [step, "--out", str(out), "--workers", str(workers)]
        if config is not None:
            argv += ["--config", str(config)]
        elif step == "gen":
            argv += ECON
        assert cli.main(argv) == 0, step


def outputs(out: Path) -> dict:
    files = {}
    for p in sorted(out.rglob("*.csv")):
        data = p.read_bytes()
        if p.name == cli.MANIFEST:
            # the output directory itself is part of the echoed settings
            data = b"\n".join(line for line in data.splitlines() if b",out," not in line)
        files[str(p.relative_to(out))] = data
    return files


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    first = tmp_path_factory.mktemp("first")
    run_all(first, workers=1)
    second = tmp_path_factory.mktemp("second")
    run_all(second, workers=2, config=first / cli.MANIFEST)
    return first, second


def test_smoke_outputs_nonempty(runs):
    first, _ = runs
    names = {p.name for p in first.iterdir()}
    for want in ("daily.csv", "projections.csv", "weights.csv", "legs.csv", "bins.csv",
                 "bins_bivariate.csv", "characteristics_summary.csv", "report.csv",
                 "corr.csv", "perf.csv", "verify.csv", cli.MANIFEST):
        assert want in names
    for p in first.rglob("*.csv"):
        with p.open(newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) >= 2 or p.name == "failures.csv", p.name


def test_verify_report_all_pass(runs):
    first, _ = runs
    with (first / "verify.csv").open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["status"] == "pass" for r in rows)


def test_manifest_rerun_is_byte_identical(runs):
    first, second = runs
    a, b = outputs(first), outputs(second)
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name


def test_manifest_echoes_seed_and_inputs(runs):
    first, _ = runs
    with (first / cli.MANIFEST).open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cli.MANIFEST_HEADER
    keys = {(c, k): v for c, k, v in rows[1:]}
    assert keys[("gen", "seed")] == "3" and keys[("gen", "n_assets")] == "50"
    assert keys[("project", "input:daily")].startswith("daily.csv sha256=")
    assert not any(k == "workers" for _, k in keys)


def test_min_days_boundary(tmp_path, runs, caplog):
    first, _ = runs
    daily = load_daily_panel(first / "daily.csv")
    month_end = np.datetime64("2000-12-29")
    keep = np.flatnonzero(daily.calendar <= month_end)[-60:]
    with (first / "daily.csv").open(newline="") as fh:
        rows = list(csv.reader(fh))
    kept_dates = {str(d) for d in daily.calendar[keep]}
    # one early row keeps the calendar's start; its asset gives up a late day
    day0, dropped = str(daily.calendar[0]), str(daily.calendar[keep[0]])
    anchor = daily.assets[0]
    with (tmp_path / "daily.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rows[0])
        w.writerows(r for r in rows[1:]
                    if (r[0] in kept_dates and (r[1], r[0]) != (anchor, dropped))
                    or (r[0], r[1]) == (day0, anchor))
    for name in ("monthly.csv", "rf.csv"):
        (tmp_path / name).write_bytes((first / name).read_bytes())
    with caplog.at_level(logging.WARNING, logger="sarp.pipeline"):
        assert cli.main(["project", "--out", str(tmp_path), "--min-days", "61"]) == 0
    assert any("no eligible asset" in r.getMessage() for r in caplog.records)
    assert pipeline.read_projections(tmp_path / "projections.csv") == []
    assert cli.main(["project", "--out", str(tmp_path), "--min-days", "60",
                     "--months", "2000-12"]) == 0
    records = pipeline.read_projections(tmp_path / "projections.csv")
    # the anchor is eligible but no peer traded on its early day
    failures = (tmp_path / "failures.csv").read_text().splitlines()[1:]
    assert len(records) == 49 and failures == [f"2000-12-29,{anchor},no spanning universe"]


def test_unknown_flag_is_usage_error(capsys):
    assert cli.main(["project", "--no-such-flag"]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err


def test_missing_inputs_give_one_line_error(tmp_path, capsys):
    assert cli.main(["project", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: data:") and "\n" not in err


def test_bad_settings(tmp_path, capsys):
    assert cli.main(["project", "--out", str(tmp_path), "--workers", "0"]) == 1
    assert capsys.readouterr().err.startswith("error: config:")
    conf = tmp_path / "run.conf"
    conf.write_text("seed = 4\nbogus = 1\n")
    assert cli.main(["gen", "--out", str(tmp_path), "--config", str(conf)]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# economy\nn-assets = 12\nseed = 4\nmonths = 2001-01:2001-06\n"
                    "cluster_factors = 1\n")
    args = cli.build_parser().parse_args(["gen", "--config", str(conf), "--seed", "9"])
    config = cli.resolve(args)
    assert config.n_assets == 12 and config.seed == 9
    assert config.months == ("2001-01", "2001-06")
    assert config.economy().cluster_factors == 1


def test_config_rejects_empty_month_range():
    with pytest.raises(ValueError):
        pipeline.RunConfig(months=("2002-01", "2001-01"))
