import csv
import json

import pytest

from codednet import builtin
from codednet.cli import DISCRETE_WARNING, PRIMAL_COLUMNS, main
from codednet.solver import TRACE_COLUMNS

FAST = ["--config", "builtin:relay3", "--iters", "200"]


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["run", *FAST, "--out", str(out), *extra]) == 0
    return out


def test_run_writes_outputs(tmp_path, capsys):
    out = _run(tmp_path, "a")
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS) and len(lines) == 201
    meta = json.loads((out / "meta.json").read_text())
    for key in ("scenario", "seed", "config_hash", "G", "G_bar", "warnings"):
        assert key in meta
    assert meta["scenario"] == "builtin:relay3"
    assert meta["warnings"] == [DISCRETE_WARNING]
    assert "warning:" in capsys.readouterr().err
    with open(out / "final_primal.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == PRIMAL_COLUMNS
    kinds = {r[0] for r in rows[1:]}
    assert kinds == {"a", "z", "x", "c", "p", "p_realized"}


def test_run_is_deterministic(tmp_path):
    a = _run(tmp_path, "a", "--mode", "async", "--window", "5")
    b = _run(tmp_path, "b", "--mode", "async", "--window", "5")
    for f in ("trace.csv", "final_primal.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_continuous_channel_has_no_warning(tmp_path):
    raw = builtin.scenario_dict("link2")
    raw["channel"]["distribution"] = "exponential"
    del raw["channel"]["atoms"], raw["channel"]["probs"]
    path = tmp_path / "link.json"
    path.write_text(json.dumps(raw))
    out = tmp_path / "o"
    assert main(["run", "--config", str(path), "--iters", "20", "--out", str(out)]) == 0
    assert json.loads((out / "meta.json").read_text())["warnings"] == []


def test_missing_config_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2


def test_missing_file_and_unknown_builtin_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", "builtin:nope", "--out", str(tmp_path)]) == 2


def test_bad_scenario_exits_1(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{}")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 1


def test_bad_override_exits_2(tmp_path):
    assert main(["run", *FAST, "--stepsize", "-1", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("windows", ["", "a,b", "0,5"])
def test_sweep_rejects_bad_windows(tmp_path, windows):
    assert main(["sweep", *FAST, "--windows", windows, "--out", str(tmp_path)]) == 2


def test_sweep_single_window_matches_run(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", *FAST, "--windows", "7", "--out", str(out)]) == 0
    run_out = _run(tmp_path, "r", "--mode", "async", "--window", "7")
    sweep = (out / "sweep.csv").read_text().splitlines()
    trace = (run_out / "trace.csv").read_text().splitlines()
    assert sweep[0] == "window," + trace[0]
    assert sweep[1:] == ["7," + r for r in trace[1:]]
    meta = json.loads((out / "sweep_meta.json").read_text())
    assert meta["windows"] == [7] and meta["runs"][0]["window"] == 7


def test_sweep_forces_async(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", *FAST, "--mode", "sync", "--windows", "3,4", "--out", str(out)]) == 0
    runs = json.loads((out / "sweep_meta.json").read_text())["runs"]
    assert [r["window"] for r in runs] == [3, 4]
    assert all(r["max_delay"] >= 1 for r in runs)


def test_validate_quick_passes(capsys):
    assert main(["validate", "--quick"]) == 0
    assert "all" in capsys.readouterr().out


def test_validate_catches_corrupt_tiebreak(capsys):
    assert main(["validate", "--quick", "--corrupt-tiebreak"]) == 1
    out = capsys.readouterr().out
    assert "FAILED" in out and "tie_break_zero_coefficient" in out


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CODEDNET_THREADS", "1")
    _run(tmp_path, "t")
    monkeypatch.setenv("CODEDNET_THREADS", "many")
    assert main(["run", *FAST, "--out", str(tmp_path / "u")]) == 2
