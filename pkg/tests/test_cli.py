import csv
import json

import pytest
from click.testing import CliRunner

from b2uh.analytics import CSV_COLUMNS
from b2uh.cli import main, parse_floats, parse_ints
from b2uh.experiments import GROUPING_COLUMNS, STABILITY_COLUMNS


@pytest.fixture
def runner():
    return CliRunner()


def header(path):
    with open(path, newline="") as fh:
        return tuple(next(csv.reader(fh)))


def test_parsers():
    assert parse_ints("360, 660") == [360, 660]
    assert parse_ints("60:84:12") == [60, 72, 84]
    assert parse_floats("0:0.2:0.1") == [0.0, 0.1, 0.2]
    assert parse_floats("0.3") == [0.3]


def test_version_and_help(runner):
    assert runner.invoke(main, ["--version"]).exit_code == 0
    res = runner.invoke(main, ["--help"])
    for verb in ("analyze-grouping", "analyze-success", "sim-run", "sim-stability", "verify-overheads"):
        assert verb in res.output


def test_analyze_grouping(runner, tmp_path):
    res = runner.invoke(main, ["analyze-grouping", "--z", "1092", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "x=84 y=12 C=19152" in res.output
    assert header(tmp_path / "grouping.csv") == GROUPING_COLUMNS
    rows = list(csv.DictReader(open(tmp_path / "grouping.csv")))
    assert len(rows) == 7
    best = [r for r in rows if r["optimal"] == "1"]
    assert len(best) == 1 and float(best[0]["reduction_pct"]) == pytest.approx(98.3939, abs=1e-3)


def test_analyze_success(runner, tmp_path):
    res = runner.invoke(main, ["analyze-success", "--z", "360", "--pf", "0.1,0.9", "--trials", "2000",
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert header(tmp_path / "success.csv") == CSV_COLUMNS
    models = {r["model"] for r in csv.DictReader(open(tmp_path / "success.csv"))}
    assert {"P_S1", "P_S2", "I", "P_S2_mc"} <= models
    summary = json.loads((tmp_path / "crossover.json").read_text())
    assert summary["360"] == pytest.approx(0.86512, abs=1e-4)


def test_config_overrides_flags(runner, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"z = 660\nout = {tmp_path / 'from_cfg'}\n")
    res = runner.invoke(main, ["analyze-grouping", "--z", "360", "--config", str(cfg)])
    assert res.exit_code == 0, res.output
    assert "Z=660: x=60 y=10" in res.output
    assert (tmp_path / "from_cfg" / "grouping.csv").exists()


def test_sim_run_small(runner, tmp_path):
    res = runner.invoke(main, ["sim-run", "--z", "40", "--seed", "2", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "registrations 40/40" in res.output
    assert "121 ms / 350 TPS" in res.output
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["timing"]["throughput"]["peak_tps"] > 0
    assert (tmp_path / "events.jsonl").exists()
    assert any(p.suffix == ".jsonl" for p in (tmp_path / "ledgers").iterdir())


def test_sim_run_custom_weights_from_config(runner, tmp_path):
    cfg = tmp_path / "w.cfg"
    cfg.write_text("a = 0.2\nb = 0.2\nc = 0.6\n")
    res = runner.invoke(main, ["sim-run", "--z", "40", "--config", str(cfg), "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["config"]["weights"]["c"] == 0.6


def test_sim_stability_small(runner, tmp_path):
    res = runner.invoke(main, ["sim-stability", "--z", "60", "--seeds", "2", "--scheme", "1,3",
                               "--out", str(tmp_path), "--config", str(_short(tmp_path))])
    assert res.exit_code == 0, res.output
    assert header(tmp_path / "stability.csv") == STABILITY_COLUMNS
    means = json.loads((tmp_path / "stability_summary.json").read_text())
    assert set(means) == {"1", "3", "random"}


def _short(tmp_path):
    p = tmp_path / "short.cfg"
    p.write_text("duration_s = 3\n")
    return p


def test_verify_overheads(runner, tmp_path):
    res = runner.invoke(main, ["verify-overheads", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "ESIA             1              2       2            0" in res.output
    assert "ESIA             164             320    484" in res.output
    assert json.loads((tmp_path / "overheads.json").read_text())["ok"]


@pytest.mark.parametrize("args", [
    ["sim-run", "--scheme", "9"],
    ["sim-run", "--z", "abc"],
    ["analyze-grouping", "--config", "/nonexistent.cfg"],
    ["no-such-verb"],
])
def test_usage_errors_exit_2(runner, args):
    assert runner.invoke(main, args).exit_code == 2


def test_infeasible_z_fails(runner, tmp_path):
    res = runner.invoke(main, ["analyze-grouping", "--z", "61", "--out", str(tmp_path)])
    assert res.exit_code != 0
