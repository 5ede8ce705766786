from __future__ import annotations

import io
import socket
import sys
import threading
import time
from pathlib import Path

import pytest
from conftest import make_records

from gaitlab import __version__
from gaitlab.cli import run
from gaitlab.learn import read_model
from gaitlab.telemetry import encode_records, read_session

SMALL_PIPELINE = ["--set", "n_control=6", "--set", "n_pd=6", "--set", "duration_s=40",
                  "--set", "folds=3"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small simulated cohort pushed through extract, shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    sessions = root / "sessions"
    assert run(["simulate", "--out", str(sessions), "--seed", "3", "--set", "n_control=8",
                "--set", "n_pd=8", "--set", "duration_s=40"]) == 0
    assert run(["extract", str(sessions), "--out", str(root / "features.csv")]) == 0
    return root


def first_line(path) -> str:
    return Path(path).read_text().splitlines()[0]


# --- exit codes and messages --------------------------------------------------

def test_version_and_help_exit_zero(capsys):
    assert run(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
    assert run(["rank", "--help"]) == 0


def test_unknown_flag_is_input_error(capsys):
    assert run(["rank", "x.csv", "--out", "y", "--bogus"]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "--bogus" in err[0]


def test_no_subcommand_is_input_error():
    assert run([]) == 1


def test_missing_file_names_the_file(tmp_path, capsys):
    assert run(["rank", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "r.csv")]) == 1
    err = capsys.readouterr().err
    assert "file not found" in err and "nope.csv" in err


def test_schema_mismatch_is_input_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,label,x\n1,0,2\n")
    assert run(["rank", str(bad), "--out", str(tmp_path / "r.csv")]) == 1
    assert "schema mismatch" in capsys.readouterr().err


def test_unknown_setting_rejected(tmp_path, workdir):
    assert run(["rank", str(workdir / "features.csv"), "--out", str(tmp_path / "r.csv"),
                "--set", "colour=blue"]) == 1
    assert run(["pipeline", "--out", str(tmp_path / "p"), "--set", "colour=blue"]) == 1


def test_invariant_failure_maps_to_two(monkeypatch, tmp_path, capsys):
    from gaitlab import cli
    from gaitlab.errors import InvariantError

    def broken(args):
        raise InvariantError("deliberate")

    monkeypatch.setattr(cli, "cmd_rank", broken)
    assert run(["rank", "t.csv", "--out", str(tmp_path / "r")]) == 2
    assert "internal error" in capsys.readouterr().err


# --- ingest -------------------------------------------------------------------

def test_ingest_twelve_thousand_frames_gives_6000_rows(tmp_path):
    raw = tmp_path / "frames.bin"
    raw.write_bytes(encode_records(make_records(6000, seed=5)))
    out = tmp_path / "s.csv"
    assert run(["ingest", str(raw), "--subject", "x1", "--out", str(out), "--label", "1"]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2 + 6000
    assert lines[0].startswith("#gaitlab-session")
    assert f"gaitlab={__version__}" in lines[0] and "frames=12000" in lines[0]
    s = read_session(out)
    assert s.n == 6000 and s.label == 1 and s.subject_id == "x1"


def test_ingest_from_stdin(tmp_path, monkeypatch):
    data = encode_records(make_records(500, seed=6))
    monkeypatch.setattr(sys, "stdin", type("In", (), {"buffer": io.BytesIO(data)})())
    out = tmp_path / "s.csv"
    assert run(["ingest", "-", "--subject", "x2", "--out", str(out)]) == 0
    assert read_session(out).n == 500
    assert "source=stdin" in first_line(out)


def test_ingest_over_tcp(tmp_path):
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    data = encode_records(make_records(800, seed=7))
    out = tmp_path / "s.csv"
    result = {}
    t = threading.Thread(target=lambda: result.setdefault(
        "code", run(["ingest", "--tcp", str(port), "--timeout", "10", "--subject", "x3",
                     "--out", str(out)])))
    t.start()
    deadline = time.monotonic() + 10
    while True:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=1) as conn:
                conn.sendall(data)
            break
        except ConnectionRefusedError:
            assert time.monotonic() < deadline
            time.sleep(0.05)
    t.join(15)
    assert result["code"] == 0
    assert read_session(out).n == 800


def test_ingest_figure(tmp_path):
    raw = tmp_path / "f.bin"
    raw.write_bytes(encode_records(make_records(3000, seed=1)))
    fig = tmp_path / "trace.png"
    assert run(["ingest", str(raw), "--subject", "x", "--out", str(tmp_path / "s.csv"),
                "--figure", str(fig)]) == 0
    assert fig.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


# --- table commands -----------------------------------------------------------

def test_simulate_writes_headers_and_cohort_manifest(workdir):
    sessions = workdir / "sessions"
    csvs = sorted(sessions.glob("*.csv"))
    assert len(csvs) == 32
    assert all("seed=3" in first_line(p) for p in csvs)
    manifest = (sessions / "cohort.txt").read_text()
    assert manifest.startswith(f"# gaitlab {__version__} command=simulate seed=3")
    assert "pd.swing_asym=" in manifest


def test_rank_tune_train_evaluate_predict(workdir, tmp_path, capsys):
    table = str(workdir / "features.csv")
    assert first_line(table).startswith(f"# gaitlab {__version__} command=extract")
    assert run(["rank", table, "--out", str(tmp_path / "rank.csv"),
                "--figure", str(tmp_path / "rank.png")]) == 0
    assert "*" in capsys.readouterr().out
    assert run(["tune", table, "--out", str(tmp_path / "tune.csv"), "--seed", "2",
                "--set", "folds=4", "--set", "grid=knn:k=1;knn:k=3;logistic",
                "--figure", str(tmp_path / "tune.png")]) == 0
    assert len((tmp_path / "tune.csv").read_text().splitlines()) == 3 + 3
    model = tmp_path / "m.glm"
    assert run(["train", table, "--spec", "knn:k=3", "--out", str(model),
                "--set", "select_k=4"]) == 0
    assert len(read_model(model).feature_names) == 4
    capsys.readouterr()
    assert run(["evaluate", table, "--model", str(model), "--out", str(tmp_path / "ev.csv")]) == 0
    assert "Held-out accuracy" in capsys.readouterr().out
    for name in ("rank.csv", "tune.csv", "ev.csv"):
        assert first_line(tmp_path / name).startswith(f"# gaitlab {__version__} command=")
    assert "seed=2" in first_line(tmp_path / "tune.csv")


def test_predict_prints_no_accuracy(workdir, tmp_path, capsys):
    table = workdir / "features.csv"
    model = tmp_path / "m.glm"
    assert run(["train", str(table), "--spec", "logistic", "--out", str(model)]) == 0
    unlabeled = tmp_path / "unlabeled.csv"
    lines = table.read_text().splitlines()
    body = [line if line.startswith("#") or i == 0 else _drop_label(line)
            for i, line in enumerate(lines)]
    unlabeled.write_text("\n".join(body) + "\n")
    capsys.readouterr()
    assert run(["predict", str(unlabeled), "--model", str(model),
                "--out", str(tmp_path / "p.csv")]) == 0
    out = capsys.readouterr().out
    assert "accuracy" not in out.lower() and "%" not in out
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0].startswith("# gaitlab") and "row_id,label,score" in rows
    assert run(["evaluate", str(unlabeled), "--model", str(model),
                "--out", str(tmp_path / "e.csv")]) == 1


def _drop_label(line: str) -> str:
    cells = line.split(",")
    if cells[0] == "subject_id":
        return line
    cells[2] = "?"
    return ",".join(cells)


def test_extract_reports_failures(tmp_path, capsys):
    sessions = tmp_path / "s"
    assert run(["simulate", "--out", str(sessions), "--set", "n_control=2", "--set", "n_pd=2",
                "--set", "duration_s=20"]) == 0
    assert run(["extract", str(sessions), "--out", str(tmp_path / "f.csv"),
                "--failures", str(tmp_path / "fail.csv")]) == 1
    err = capsys.readouterr().err
    assert err.count("warning:") == 8


def test_env_seed_is_default(tmp_path, monkeypatch):
    monkeypatch.setenv("GAITLAB_SEED", "17")
    out = tmp_path / "s"
    assert run(["simulate", "--out", str(out), "--set", "n_control=2", "--set", "n_pd=2",
                "--set", "duration_s=12"]) == 0
    assert "seed=17" in (out / "cohort.txt").read_text().splitlines()[0]
    assert run(["simulate", "--out", str(out), "--seed", "4", "--set", "n_control=2",
                "--set", "n_pd=2", "--set", "duration_s=12"]) == 0
    assert "seed=4" in (out / "cohort.txt").read_text().splitlines()[0]


def test_missing_output_directory(tmp_path, workdir):
    assert run(["rank", str(workdir / "features.csv"),
                "--out", str(tmp_path / "no" / "where.csv")]) == 1


# --- pipeline -----------------------------------------------------------------

def test_pipeline_is_deterministic_and_complete(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["pipeline", "--out", str(a), "--seed", "5", *SMALL_PIPELINE]) == 0
    assert run(["pipeline", "--out", str(b), "--seed", "5", *SMALL_PIPELINE]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for name in ("ranking.png", "comparison.png", "tuning.png", "knn_scatter.png"):
        assert (a / name).read_bytes()[:4] == b"\x89PNG"
    for name in names:
        if name.endswith((".csv", ".txt")):
            assert first_line(a / name).startswith(f"# gaitlab {__version__} command=pipeline "
                                                   "seed=5"), name
    assert read_model(a / "model.glm").meta["seed"] == "5"
