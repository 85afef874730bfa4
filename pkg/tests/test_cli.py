"""End-to-end tests for the hurryup command line."""

import json
import os

import pandas as pd
import pytest

from hurryup import EXIT_CONFIG, EXIT_IO, EXIT_OK, main

from tests.conftest import SNAPSHOT_LINES

SHORT = ["--qps", "5", "--duration-s", "10", "--seed", "3"]


@pytest.fixture(autouse=True)
def no_database(monkeypatch):
    monkeypatch.delenv("DATABASE_URL", raising=False)
    monkeypatch.delenv("HURRYUP_OUT", raising=False)


def read_json(path):
    with open(path) as f:
        return json.load(f)


def test_run_writes_a_run_directory(tmp_path, capsys):
    assert main(["run", *SHORT, "--out", str(tmp_path)]) == EXIT_OK
    run_dir = tmp_path / "hurryup_qps5_seed3"
    assert (run_dir / "report.json").exists()
    assert (run_dir / "latency_cdf.csv").exists()
    out = capsys.readouterr().out
    assert "p90" in out
    assert "✅ Results written to" in out


def test_run_is_reproducible(tmp_path):
    for attempt in ("a", "b"):
        args = ["run", "--policy", "static", "--qps", "8", "--duration-s", "10", "--seed", "7",
                "--out", str(tmp_path / attempt)]
        assert main(args) == EXIT_OK
    first = (tmp_path / "a" / "static_qps8_seed7" / "requests.csv").read_bytes()
    second = (tmp_path / "b" / "static_qps8_seed7" / "requests.csv").read_bytes()
    assert first == second


def test_run_both_policies_compares_them(tmp_path, capsys):
    args = ["run", "--qps", "5", "--duration-s", "30", "--seed", "3", "--policy", "both", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert (tmp_path / "arrivals.csv").exists()
    assert (tmp_path / "hurryup_qps5_seed3" / "report.json").exists()
    assert (tmp_path / "static_qps5_seed3" / "report.json").exists()

    comparison = read_json(tmp_path / "comparison.json")
    hurryup = read_json(tmp_path / "hurryup_qps5_seed3" / "report.json")
    static = read_json(tmp_path / "static_qps5_seed3" / "report.json")
    assert comparison["hurryup_p90_ms"] == hurryup["p90_ms"]
    assert comparison["static_p90_ms"] == static["p90_ms"]
    assert hurryup["request_count"] == static["request_count"]
    assert comparison["tail_reduction_pct"] > 0
    assert "tail reduction" in capsys.readouterr().out


def test_run_replays_an_arrival_file(tmp_path):
    assert main(["run", *SHORT, "--policy", "both", "--out", str(tmp_path / "first")]) == EXIT_OK
    arrivals = str(tmp_path / "first" / "arrivals.csv")
    assert main(["run", *SHORT, "--arrivals", arrivals, "--out", str(tmp_path / "second")]) == EXIT_OK
    first = read_json(tmp_path / "first" / "hurryup_qps5_seed3" / "report.json")
    second = read_json(tmp_path / "second" / "hurryup_qps5_seed3" / "report.json")
    assert first["p90_ms"] == second["p90_ms"]


def test_sweep_covers_the_grid(tmp_path):
    args = ["sweep", "--qps", "5,10", "--policy", "hurryup,static", "--duration-s", "5",
            "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    frame = pd.read_csv(tmp_path / "sweep.csv")
    assert len(frame) == 4
    assert list(frame["qps"]) == [5.0, 5.0, 10.0, 10.0]
    assert list(frame["policy"]) == ["hurryup", "static", "hurryup", "static"]
    assert (frame.loc[frame["policy"] == "static", "migration_count"] == 0).all()
    # both policies of a cell replay one workload
    for qps in (5.0, 10.0):
        counts = frame.loc[frame["qps"] == qps, "request_count"]
        assert counts.nunique() == 1


def test_parallel_sweep_matches_serial(tmp_path):
    base = ["sweep", "--qps", "5,10", "--policy", "hurryup,static", "--duration-s", "5"]
    assert main([*base, "--out", str(tmp_path), "--name", "serial"]) == EXIT_OK
    assert main([*base, "--out", str(tmp_path), "--name", "parallel", "--jobs", "2"]) == EXIT_OK
    pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "serial.csv"), pd.read_csv(tmp_path / "parallel.csv"))


def test_single_cell_sweep_matches_run(tmp_path):
    assert main(["run", *SHORT, "--out", str(tmp_path)]) == EXIT_OK
    assert main(["sweep", *SHORT, "--policy", "hurryup", "--out", str(tmp_path)]) == EXIT_OK
    report = read_json(tmp_path / "hurryup_qps5_seed3" / "report.json")
    frame = pd.read_csv(tmp_path / "sweep.csv")
    assert frame.loc[0, "p90_ms"] == pytest.approx(report["p90_ms"])
    assert frame.loc[0, "migration_count"] == report["migration_count"]


def test_invalid_configuration_exits_2(tmp_path, capsys):
    assert main(["run", "--qps", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "qps" in capsys.readouterr().out
    assert main(["run", "--set", "bogus=1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().out
    assert main(["sweep", "--qps", "5,abc", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_io_failures_exit_3(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    assert main(["run", *SHORT, "--out", str(blocker / "out")]) == EXIT_IO
    assert main(["run", "--config", str(tmp_path / "missing.conf"), "--out", str(tmp_path)]) == EXIT_IO


def test_out_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HURRYUP_OUT", str(tmp_path / "env_out"))
    assert main(["run", *SHORT]) == EXIT_OK
    assert (tmp_path / "env_out" / "hurryup_qps5_seed3" / "report.json").exists()


def test_live_replays_a_recorded_stream(tmp_path, capsys):
    stream = tmp_path / "search.stats"
    stream.write_text("".join(line + "\n" for line in SNAPSHOT_LINES))
    args = ["live", "--pipe", str(stream), "--clock", "stream", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    report = read_json(tmp_path / "live" / "report.json")
    assert report["request_count"] == 1
    assert report["in_flight"] == 4
    assert report["p90_ms"] == 70
    assert "✅ Session report written to" in capsys.readouterr().out


def test_live_on_an_empty_stream(tmp_path):
    stream = tmp_path / "empty.stats"
    stream.write_bytes(b"")
    assert main(["live", "--pipe", str(stream), "--clock", "stream", "--out", str(tmp_path)]) == EXIT_OK
    assert read_json(tmp_path / "live" / "report.json")["request_count"] == 0


def test_live_rejects_a_short_cpu_list(tmp_path):
    stream = tmp_path / "empty.stats"
    stream.write_bytes(b"")
    args = ["live", "--pipe", str(stream), "--cpus", "0,1", "--out", str(tmp_path)]
    assert main(args) == EXIT_CONFIG


def test_log_file_is_written(tmp_path):
    log_file = tmp_path / "hurryup.log"
    assert main(["run", *SHORT, "--out", str(tmp_path), "--log-file", str(log_file)]) == EXIT_OK
    assert log_file.exists()
    assert "Running hurryup" in log_file.read_text()


def test_live_counts_malformed_lines(tmp_path, capsys):
    stream = tmp_path / "noisy.stats"
    stream.write_text("garbage\n" * 3 + "75;ixI.;100\n75;ixI.;160\n")
    assert main(["live", "--pipe", str(stream), "--clock", "stream", "--out", str(tmp_path)]) == EXIT_OK
    assert "❌ 3 malformed line(s) skipped" in capsys.readouterr().out
    assert read_json(tmp_path / "live" / "report.json")["request_count"] == 1
