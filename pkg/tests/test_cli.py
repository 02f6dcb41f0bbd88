import subprocess
import sys

import pytest

from canids.cli import main

TINY = """\
trace = wheel_speed
duration = 6
lstm_hidden = 6
dense_hidden = 6
epochs = 2
t_start = 2
t_end = 4
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "tiny.cfg").write_text(TINY)
    return tmp_path


def run(*args):
    return main(list(args))


def pipeline(seed="42"):
    assert run("simulate", "--config", "tiny.cfg", "--seed", seed, "--out", "amb.log", "--truth", "amb.csv") == 0
    assert run("simulate", "--config", "tiny.cfg", "--seed", "43", "--out", "tamb.log", "--truth", "tamb.csv") == 0
    assert run("inject", "--config", "tiny.cfg", "--in", "tamb.log", "--out", "test.log", "--truth", "truth.csv") == 0
    assert run("train", "--config", "tiny.cfg", "--seed", seed, "--log", "amb.log", "--aid", "0D0",
               "--model", "m.bin", "--errmodel", "em.txt", "--report", "train.txt") == 0
    assert run("score", "--model", "m.bin", "--errmodel", "em.txt", "--log", "test.log", "--aid", "0D0",
               "--out", "scores.csv") == 0
    assert run("eval", "--scores", "scores.csv", "--truth", "truth.csv", "--report", "report.kv",
               "--series", "series.csv") == 0


def test_full_pipeline(workdir, capsys):
    pipeline()
    kv = dict(l.split(" = ") for l in (workdir / "report.kv").read_text().splitlines())
    assert "auc" in kv and 0.0 <= float(kv["auc"]) <= 1.0
    assert int(kv["n_attack"]) == 200
    assert (workdir / "report.kv.txt").exists()
    series = (workdir / "series.csv").read_text().splitlines()
    assert series[0] == "timestamp,aid,e,z,p,injected"
    assert sum(l.endswith(",1") for l in series[1:]) == 200
    assert "AUC" in capsys.readouterr().out


def test_pipeline_idempotent(workdir):
    pipeline()
    first = {n: (workdir / n).read_bytes() for n in ("amb.log", "test.log", "truth.csv", "m.bin",
                                                     "em.txt", "scores.csv", "report.kv")}
    pipeline()
    for name, blob in first.items():
        assert (workdir / name).read_bytes() == blob, name


def test_score_short_log_gives_header_only(workdir):
    pipeline()
    lines = (workdir / "test.log").read_text().splitlines()[:10]
    (workdir / "short.log").write_text("\n".join(lines) + "\n")
    assert run("score", "--model", "m.bin", "--errmodel", "em.txt", "--log", "short.log", "--aid", "0D0",
               "--out", "short.csv") == 0
    assert (workdir / "short.csv").read_text() == "timestamp,aid,e,z,p,injected\n"


def test_gradcheck_command(capsys):
    assert run("gradcheck") == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    worst = float(out.strip().splitlines()[-1].split("max relative error ")[1].split()[0])
    assert worst < 1e-4


def test_exit_codes(workdir):
    # usage: unknown subcommand, missing flag, unknown config key, bad aid
    assert run_subprocess("frobnicate") == 1
    assert run_subprocess("simulate", "--config", "tiny.cfg") == 1
    (workdir / "bad.cfg").write_text("nonsense = 1\n")
    assert run("simulate", "--config", "bad.cfg", "--out", "x.log", "--truth", "x.csv") == 1
    assert run("train", "--config", "tiny.cfg", "--log", "x.log", "--aid", "ZZZ", "--model", "m",
               "--errmodel", "e") == 1
    # data: missing log, garbage model file, too few frames
    assert run("inject", "--config", "tiny.cfg", "--in", "nope.log", "--out", "o.log", "--truth", "o.csv") == 2
    (workdir / "junk.bin").write_bytes(b"JUNKJUNK")
    (workdir / "em.txt").write_text("mu = 1\nsigma2 = 1\nn = 3\n")
    (workdir / "one.log").write_text("(0.000000) can0 0D0#00\n")
    assert run("score", "--model", "junk.bin", "--errmodel", "em.txt", "--log", "one.log", "--aid", "0D0",
               "--out", "s.csv") == 2
    assert run("train", "--config", "tiny.cfg", "--log", "one.log", "--aid", "0D0", "--model", "m",
               "--errmodel", "e") == 2


def test_numeric_failure_exit_code(workdir, monkeypatch):
    from canids.lstm import network

    assert run("simulate", "--config", "tiny.cfg", "--out", "amb.log", "--truth", "amb.csv") == 0
    real = network.backward

    def poisoned(*a, **kw):
        g, _ = real(*a, **kw)
        return g, float("nan")

    monkeypatch.setattr("canids.lstm.training.backward", poisoned)
    assert run("train", "--config", "tiny.cfg", "--log", "amb.log", "--aid", "0D0", "--model", "m",
               "--errmodel", "e") == 3


def run_subprocess(*args):
    return subprocess.run([sys.executable, "-m", "canids", *args], capture_output=True).returncode
