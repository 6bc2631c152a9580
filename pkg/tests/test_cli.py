import csv
import subprocess
import sys

import pytest

from kgsim.cli import run
from kgsim.store import export_tsv

from conftest import random_store

BEST_CFG = """\
model=complex
dim=300
loss=nll
optimizer=adam
lr=1e-3
reg=l3
reg_lambda=1e-2
negatives=10
epochs=200
batch=512
seed=42
"""

CONFIG_FIELDS = ["model", "dim", "loss", "optimizer", "lr", "reg", "reg_lambda", "negatives",
                 "epochs", "batch", "seed", "init_scale"]


@pytest.fixture
def workdir(tmp_path):
    store = random_store(12, 2, 60, seed=0)
    export_tsv(store, tmp_path / "kg.tsv")
    return tmp_path


def split_files(d):
    assert run(["split", "--in", str(d / "kg.tsv"), "--test-frac", "0.2", "--seed", "42",
                "--out-train", str(d / "train.tsv"), "--out-test", str(d / "test.tsv")]) == 0


def train_small(d, *extra, name="model.kge"):
    argv = ["train", "--train", str(d / "train.tsv"), "--checkpoint", str(d / name),
            "--model", "distmult", "--dim", "4", "--epochs", "2", "--batch", "16", *extra]
    return run(argv)


def test_split_writes_two_files(workdir):
    split_files(workdir)
    n_train = len((workdir / "train.tsv").read_text().splitlines())
    n_test = len((workdir / "test.tsv").read_text().splitlines())
    assert n_train + n_test == 60 and n_test > 0


def test_split_with_validation(workdir):
    d = workdir
    assert run(["split", "--in", str(d / "kg.tsv"), "--valid-frac", "0.1", "--test-frac", "0.1",
                "--out-train", str(d / "a"), "--out-test", str(d / "b"),
                "--out-valid", str(d / "c")]) == 0
    assert (d / "c").exists()


def test_train_winning_cell(workdir):
    split_files(workdir)
    cfg = workdir / "best.cfg"
    cfg.write_text(BEST_CFG)
    # Full cell from the file; epochs and batch cut down by flag to keep the test fast.
    assert run(["train", "--config", str(cfg), "--train", str(workdir / "train.tsv"),
                "--checkpoint", str(workdir / "model.kge"), "--epochs", "1", "--batch", "64"]) == 0
    assert (workdir / "model.kge").read_bytes()[:4] == b"KGE1"


def test_config_echo_all_fields(workdir, capsys):
    split_files(workdir)
    capsys.readouterr()
    assert train_small(workdir) == 0
    err = capsys.readouterr().err
    line = next(ln for ln in err.splitlines() if "config:" in ln)
    for key in CONFIG_FIELDS:
        assert f"{key}=" in line


def test_flag_overrides_file(workdir, capsys):
    split_files(workdir)
    cfg = workdir / "c.cfg"
    cfg.write_text("model=distmult\ndim=4\nepochs=1\nseed=5\n")
    capsys.readouterr()
    assert run(["train", "--config", str(cfg), "--train", str(workdir / "train.tsv"),
                "--checkpoint", str(workdir / "m.kge"), "--seed", "9"]) == 0
    err = capsys.readouterr().err
    assert "seed=9" in err and "seed=5" not in err and "dim=4" in err


def test_no_config_shows_defaults(workdir, capsys):
    split_files(workdir)
    capsys.readouterr()
    assert run(["train", "--train", str(workdir / "train.tsv"), "--checkpoint",
                str(workdir / "m.kge"), "--epochs", "1", "--dim", "2"]) == 0
    err = capsys.readouterr().err
    assert "model=complex" in err and "loss=nll" in err and "batch=512" in err


def test_train_deterministic(workdir):
    split_files(workdir)
    assert train_small(workdir, name="a.kge") == 0
    assert train_small(workdir, name="b.kge") == 0
    assert (workdir / "a.kge").read_bytes() == (workdir / "b.kge").read_bytes()


def test_eval_outputs(workdir, capsys):
    split_files(workdir)
    train_small(workdir)
    capsys.readouterr()
    assert run(["eval", "--checkpoint", str(workdir / "model.kge"), "--test",
                str(workdir / "test.tsv"), "--known", str(workdir / "train.tsv"),
                "--out", str(workdir / "r.csv"), "--ranks-out", str(workdir / "ranks.csv")]) == 0
    out = capsys.readouterr().out
    assert "filtered" in out and "raw" in out
    rows = list(csv.DictReader(open(workdir / "r.csv")))
    assert {r["protocol"] for r in rows} == {"raw", "filtered"}


def test_assess_csv(workdir):
    split_files(workdir)
    train_small(workdir)
    (workdir / "s.tsv").write_text("e0\tr0\te1\ne2\tr1\te3\nbad\tr0\te1\n")
    assert run(["assess", "--checkpoint", str(workdir / "model.kge"), "--statements",
                str(workdir / "s.tsv"), "--known", str(workdir / "train.tsv"),
                "--out", str(workdir / "a.csv")]) == 0
    rows = list(csv.DictReader(open(workdir / "a.csv")))
    assert [r["statement"] for r in rows] == ["e0 r0 e1", "e2 r1 e3", "bad r0 e1"]
    assert rows[2]["error"] and not rows[0]["error"]


def test_similar_top_k(workdir):
    split_files(workdir)
    train_small(workdir)
    assert run(["similar", "--checkpoint", str(workdir / "model.kge"), "--query", "e0",
                "--k", "10", "--out", str(workdir / "t2.csv")]) == 0
    rows = list(csv.DictReader(open(workdir / "t2.csv")))
    assert len(rows) == 10
    ratios = [float(r["ratio"]) for r in rows]
    assert ratios == sorted(ratios, reverse=True)
    assert "e0" not in [r["drug_id"] for r in rows]


def test_similar_with_types(workdir):
    split_files(workdir)
    train_small(workdir)
    (workdir / "types.tsv").write_text("".join(f"e{i}\t{'drug' if i < 6 else 'gene'}\n"
                                               for i in range(12)))
    assert run(["similar", "--checkpoint", str(workdir / "model.kge"), "--query", "e0",
                "--types", str(workdir / "types.tsv"), "--candidate-type", "drug",
                "--entity-type", "gene", "--out", str(workdir / "s.csv")]) == 0
    rows = list(csv.DictReader(open(workdir / "s.csv")))
    assert {r["drug_id"] for r in rows} == {f"e{i}" for i in range(1, 6)}


def test_project(workdir):
    split_files(workdir)
    train_small(workdir)
    assert run(["project", "--checkpoint", str(workdir / "model.kge"),
                "--out", str(workdir / "p.csv")]) == 0
    rows = list(csv.DictReader(open(workdir / "p.csv")))
    assert len(rows) == 12 and rows[0]["type"] == "unknown"


def test_grid(workdir):
    split_files(workdir)
    (workdir / "grid.txt").write_text("model=distmult dim=4 epochs=2\nmodel=complex dim=2 epochs=2\n")
    assert run(["grid", "--grid", str(workdir / "grid.txt"), "--train", str(workdir / "train.tsv"),
                "--test", str(workdir / "test.tsv"), "--out", str(workdir / "g.csv")]) == 0
    rows = list(csv.DictReader(open(workdir / "g.csv")))
    assert len(rows) == 2 and "mrr" in rows[0]


def test_usage_errors(capsys):
    assert run(["train", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert run([]) == 1
    assert run(["frobnicate"]) == 1


def test_data_errors(workdir):
    (workdir / "bad.tsv").write_text("a\tb\n")
    assert run(["split", "--in", str(workdir / "bad.tsv"), "--out-train", "x",
                "--out-test", "y"]) == 2
    (workdir / "junk.kge").write_bytes(b"nope")
    assert run(["project", "--checkpoint", str(workdir / "junk.kge"), "--out", "p.csv"]) == 2
    split_files(workdir)
    train_small(workdir)
    assert run(["similar", "--checkpoint", str(workdir / "model.kge"), "--query", "zzz"]) == 2


def test_divergence_exit_code(workdir):
    split_files(workdir)
    assert train_small(workdir, "--loss", "bce", "--optimizer", "sgd", "--lr", "1e6",
                       "--init-scale", "10", "--epochs", "50", "--batch", "4") == 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "kgsim", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and out.stdout.startswith("kgsim ")
