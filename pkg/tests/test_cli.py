import csv
import statistics
from pathlib import Path

import pytest

from icasim.cli import AGGREGATE_COLUMNS, RUN_ROW_COLUMNS, SUMMARY_COLUMNS, execute, main, worker_count
from icasim.lars import format_stream, parse_stream
from icasim.workload import ConfigError, load_scenario

ROOT = Path(__file__).resolve().parents[1]
RULES = ROOT / "programs" / "ica_default.rules"
STREAM = ROOT / "programs" / "steady_high.stream"

SMALL = ["--set", "consumers=30", "--set", "phases=[[0, 40, 2.5], [40, 80, 0.4], [80, 120, 2.5]]"]
ROUTERS = [f"n{i}" for i in range(11)]


def read(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def header(path):
    with open(path, newline="", encoding="utf-8") as f:
        return next(csv.reader(f))


# -- run -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def admin_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("admin")
    assert main(["run", "--strategy", "admin", "--seed", "2", "--out", str(out), *SMALL]) == 0
    return out


def test_run_csv_columns(admin_run):
    assert header(admin_run / "run.csv") == [
        "t", "phase", "requests", "hits", "deliveries", "hit_ratio", "hit_distance", "active_downloads",
    ] + [f"policy_{r}" for r in ROUTERS]
    assert header(admin_run / "summary.csv") == SUMMARY_COLUMNS
    assert header(admin_run / "policy_log.csv") == ["router", "ms", "second", "policy"]
    assert len(read(admin_run / "run.csv")) == 120


def test_summary_consistent_with_series(admin_run):
    rows = read(admin_run / "run.csv")
    (s,) = read(admin_run / "summary.csv")
    assert sum(int(r["requests"]) for r in rows) == int(s["requests"])
    assert sum(int(r["hits"]) for r in rows) == int(s["hits"])
    assert float(s["hit_ratio"]) == pytest.approx(int(s["hits"]) / int(s["requests"]), abs=1e-6)


def test_admin_switches_at_boundaries_in_csv(admin_run):
    log = read(admin_run / "policy_log.csv")
    assert {int(r["ms"]) for r in log} == {0, 40_000, 80_000}
    assert len(log) == 3 * len(ROUTERS)
    rows = read(admin_run / "run.csv")
    for r in ROUTERS:
        col = [row[f"policy_{r}"] for row in rows]
        changes = [t for t in range(1, len(col)) if col[t] != col[t - 1]]
        assert changes == [40, 80]


def test_run_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--strategy", "ica", "--seed", "5", "--out", str(tmp_path / d), *SMALL]) == 0
    for name in ("run.csv", "summary.csv", "policy_log.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_topology_exits_2(tmp_path, capsys):
    missing = tmp_path / "gone.topo"
    code = main(["run", "--out", str(tmp_path), "--set", f"topology='{missing}'"])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_field_named(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--set", "consumers=-3"]) == 2
    assert "consumers" in capsys.readouterr().err


# -- batch ---------------------------------------------------------------------


def test_batch_seeds_must_be_positive(tmp_path, capsys):
    assert main(["batch", "--seeds", "0", "--out", str(tmp_path)]) == 2
    assert "seeds" in capsys.readouterr().err


def test_single_cell_normalization(tmp_path):
    for strategy, expected in (("random", "100.000000"), ("lfu", "")):
        out = tmp_path / strategy
        assert main(["batch", "--seeds", "1", "--strategies", strategy, "--jobs", "1", "--out", str(out), *SMALL]) == 0
        (row,) = read(out / "runs.csv")
        assert row["hit_ratio_vs_random"] == expected


@pytest.fixture(scope="module")
def batch_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("batch")
    argv = ["batch", "--seeds", "3", "--strategies", "random,lfu", "--jobs", "1", "--out", str(out), *SMALL]
    assert main(argv) == 0
    return out


def test_batch_rows_and_columns(batch_out):
    assert header(batch_out / "runs.csv") == RUN_ROW_COLUMNS
    assert header(batch_out / "aggregate.csv") == AGGREGATE_COLUMNS
    rows = read(batch_out / "runs.csv")
    assert len(rows) == 6
    assert {r["hit_ratio_vs_random"] for r in rows if r["strategy"] == "random"} == {"100.000000"}


def test_aggregate_matches_recomputation(batch_out):
    rows = read(batch_out / "runs.csv")
    for agg in read(batch_out / "aggregate.csv"):
        mine = [float(r["hit_ratio"]) for r in rows if r["strategy"] == agg["strategy"]]
        rel = [float(r["hit_ratio_vs_random"]) for r in rows if r["strategy"] == agg["strategy"]]
        assert int(agg["runs"]) == len(mine)
        assert float(agg["hit_ratio_mean"]) == pytest.approx(statistics.fmean(mine), abs=1e-6)
        assert float(agg["hit_ratio_median"]) == pytest.approx(statistics.median(mine), abs=1e-6)
        assert float(agg["vs_random_mean"]) == pytest.approx(statistics.fmean(rel), abs=1e-6)


def test_batch_rows_reproducible(batch_out, tmp_path):
    (row,) = [r for r in read(batch_out / "runs.csv") if r["strategy"] == "lfu" and r["seed"] == "2"]
    assert main(["batch", "--seeds", "2", "--strategies", "lfu", "--jobs", "1", "--out", str(tmp_path), *SMALL]) == 0
    again = [r for r in read(tmp_path / "runs.csv") if r["seed"] == "2"][0]
    assert {k: again[k] for k in ("digest", "hit_ratio", "hits")} == {k: row[k] for k in ("digest", "hit_ratio", "hits")}


def test_failed_run_keeps_partial_results(tmp_path):
    good = load_scenario("lhl-desk", consumers=5, phases=((0, 20, 1.0),))
    bad = good.with_overrides(topology=str(tmp_path / "missing.topo"))
    rows, error = execute([good, bad, good], jobs=1)
    assert len(rows) == 1
    assert isinstance(error, ConfigError)


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("CCNSIM_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.setenv("CCNSIM_THREADS", "x")
    with pytest.raises(ConfigError):
        worker_count(2)


def test_cache_sweep_single_cell(tmp_path):
    argv = ["cache-sweep", "--percentages", "4", "--seeds", "1", "--strategies", "lfu", "--jobs", "1", "--out", str(tmp_path), *SMALL]
    assert main(argv) == 0
    (row,) = read(tmp_path / "sweep.csv")
    assert (float(row["cache_percent"]), row["cache_chunks"]) == (4.0, "80")
    assert len(read(tmp_path / "sweep_aggregate.csv")) == 1


# -- report --------------------------------------------------------------------


def test_report_from_batch_and_run(batch_out, admin_run, tmp_path):
    assert main(["report", str(batch_out / "runs.csv"), str(admin_run / "run.csv"), "--out", str(tmp_path)]) == 0
    svgs = sorted(p.name for p in tmp_path.glob("*.svg"))
    assert svgs == ["box_lhl-desk.svg", f"hits_{admin_run.name}.svg"]
    assert (tmp_path / "box_lhl-desk.svg").read_text(encoding="utf-8").lstrip().startswith("<?xml")
    text = (tmp_path / "report.txt").read_text(encoding="utf-8")
    assert "random" in text and "lfu" in text
    assert "phase boundaries at 40, 80" in text


def test_report_empty_input_is_an_error(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    assert main(["report", str(empty), "--out", str(tmp_path / "r")]) == 2
    assert "empty.csv" in capsys.readouterr().err
    assert not list((tmp_path / "r").glob("*.svg"))


def test_report_malformed_row_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("scenario,strategy,seed,hit_ratio\nx,lfu,1,0.2\nx,lfu,2,oops\n", encoding="utf-8")
    assert main(["report", str(bad), "--out", str(tmp_path / "r")]) == 2
    assert "bad.csv:3" in capsys.readouterr().err


# -- lars-eval and validate ----------------------------------------------------


def test_lars_eval_example(capsys):
    assert main(["lars-eval", str(RULES), str(STREAM), "--t", "750"]) == 0
    out = capsys.readouterr().out
    at750 = {line.split(" ", 1)[1] for line in out.splitlines() if line.startswith("750 ")}
    assert at750 == {"alpha(20)", "high", "use(lfu)", "done"}
    assert sum(line.endswith(" high") for line in out.splitlines()) == 31


def test_lars_eval_oracle_agrees(capsys):
    main(["lars-eval", str(RULES), str(STREAM), "--t", "750"])
    fast = capsys.readouterr().out
    assert main(["lars-eval", str(RULES), str(STREAM), "--t", "750", "--oracle"]) == 0
    assert capsys.readouterr().out == fast


def test_lars_eval_empty_program_echoes_stream(tmp_path, capsys):
    (tmp_path / "empty.rules").write_text("% nothing here\n", encoding="utf-8")
    assert main(["lars-eval", str(tmp_path / "empty.rules"), str(STREAM), "--t", "700"]) == 0
    assert capsys.readouterr().out == format_stream(parse_stream(STREAM.read_text(encoding="utf-8")))


def test_lars_eval_errors_exit_2(tmp_path, capsys):
    (tmp_path / "loop.rules").write_text("p :- not q.\nq :- not p.\n", encoding="utf-8")
    assert main(["lars-eval", str(tmp_path / "loop.rules"), str(STREAM), "--t", "700"]) == 2
    assert "stratif" in capsys.readouterr().err
    (tmp_path / "bad.stream").write_text("timeline 0 5\n9 a\n", encoding="utf-8")
    assert main(["lars-eval", str(RULES), str(tmp_path / "bad.stream"), "--t", "1"]) == 2
    assert "line 2" in capsys.readouterr().err


def test_validate(capsys):
    assert main(["validate", "--scenario", str(ROOT / "programs" / "realtime.toml")]) == 0
    assert capsys.readouterr().out.startswith("ok realtime")
    assert main(["validate", "--scenario", "hlh-desk", "--set", "strategy='nope'"]) == 2
