import hashlib
import json

import numpy as np
import pytest

from modrec import dataset
from modrec.cli import build_parser, main
from modrec.config import ConfigError, RunConfig, parse

TINY = """\
# small enough for unit tests
snrs = 0, 18
classes = BPSK,QPSK,WBFM,AM_DSB
signals_per_cell = 5
windows_per_signal = 3
max_epochs = 2
batch_size = 16
bench_repetitions = 2
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(TINY)
    return p


@pytest.fixture
def tiny_ds(tmp_path, tiny_cfg):
    out = tmp_path / "data" / "ds.rmd"
    assert main(["generate", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    return out


# -- config --

def test_defaults_round_trip():
    d = RunConfig()
    assert parse(d.dumps()) == d


def test_parse_values_and_comments():
    c = parse("snrs = -4,0 # two levels\nfading = false\nsvm_gamma = 0.5\n\n")
    assert c.snrs == (-4, 0) and c.fading is False and c.svm_gamma == 0.5


def test_parse_errors_name_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse("seed = 1\nthis is not a pair\n")
    with pytest.raises(ConfigError, match="line 1.*unknown key"):
        parse("sedd = 1")
    with pytest.raises(ConfigError, match="line 3.*bad value"):
        parse("seed = 1\n\nmax_epochs = many")
    with pytest.raises(ConfigError, match="duplicate"):
        parse("seed = 1\nseed = 2")
    with pytest.raises(ConfigError, match="unknown model"):
        parse("model = lstm")


def test_config_views():
    c = parse("cfo_init_max = 0.002\nsps = 4\ntrain_frac = 0.5\nval_frac = 0.25\ntest_frac = 0.25")
    assert c.channel().cfo_init_max == 0.002
    assert c.generation().modem.sps == 4
    assert c.split_spec().train_frac == 0.5


def test_help_lists_every_key(capsys):
    text = build_parser().format_help()
    for key in RunConfig().as_dict():
        assert f"  {key} " in text


def test_defaults_command(capsys):
    assert main(["defaults"]) == 0
    assert parse(capsys.readouterr().out) == RunConfig()


# -- generate / features --

def test_generate_round_trip_and_hash(tmp_path, tiny_cfg, tiny_ds, capsys):
    ds = dataset.load(tiny_ds)
    assert len(ds) == 4 * 2 * 5 * 3
    again = tmp_path / "again.rmd"
    capsys.readouterr()
    assert main(["generate", "--config", str(tiny_cfg), "--out", str(again)]) == 0
    out = capsys.readouterr().out
    digest = hashlib.sha256(tiny_ds.read_bytes()).hexdigest()
    assert f"sha256 {digest}" in out
    assert "BPSK@0\t15" in out


def test_generate_seed_flag_changes_data(tmp_path, tiny_cfg, tiny_ds):
    other = tmp_path / "o.rmd"
    assert main(["generate", "--config", str(tiny_cfg), "--out", str(other), "--seed", "9"]) == 0
    assert other.read_bytes() != tiny_ds.read_bytes()
    assert json.loads(other.with_suffix(".json").read_text())["generation"]["seed"] == 9


def test_generate_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("seed = 1\nsnrs 0\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x.rmd")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_features_command(tmp_path, tiny_ds):
    out = tmp_path / "f.csv"
    assert main(["features", "--in", str(tiny_ds), "--out", str(out)]) == 0
    first = out.read_bytes()
    rows = first.decode().strip().split("\n")
    assert len(rows) == 1 + 120 and len(rows[0].split(",")) == 34
    assert main(["features", "--in", str(tiny_ds), "--out", str(out)]) == 0
    assert out.read_bytes() == first


# -- train / eval / bench --

@pytest.mark.parametrize("model", ["cnn", "dnn-feat", "tree", "gnb"])
def test_train_then_eval(tmp_path, tiny_cfg, tiny_ds, model):
    tdir, edir = tmp_path / "t", tmp_path / "e"
    assert main(["train", "--config", str(tiny_cfg), "--in", str(tiny_ds), "--model", model,
                 "--out", str(tdir)]) == 0
    assert (tdir / "model.rmm").exists() and (tdir / "history.csv").exists()
    assert parse((tdir / "config.txt").read_text()).model == model
    assert main(["eval", "--in", str(tiny_ds), "--model", str(tdir / "model.rmm"),
                 "--out", str(edir), "--snr", "18"]) == 0
    names = {p.name for p in edir.iterdir()}
    assert {"summary.json", "accuracy_by_snr.csv", "confusion_18.csv", "snr_curve.svg"} <= names
    assert "confusion_0.csv" not in names


def test_train_history_deterministic(tmp_path, tiny_cfg, tiny_ds):
    for d in ("a", "b"):
        assert main(["train", "--config", str(tiny_cfg), "--in", str(tiny_ds),
                     "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_nan_abort(tmp_path, tiny_cfg, tiny_ds, capsys):
    rc = main(["train", "--config", str(tiny_cfg), "--in", str(tiny_ds), "--model", "dnn-feat",
               "--set", "learning_rate=1e300", "--set", "max_epochs=3", "--out", str(tmp_path / "t")])
    assert rc == 2
    assert "non-finite" in capsys.readouterr().err


def test_eval_missing_model(tmp_path, tiny_ds, capsys):
    assert main(["eval", "--in", str(tiny_ds), "--model", str(tmp_path / "none.rmm")]) == 2
    assert "not found" in capsys.readouterr().err


def test_corrupt_dataset_exit_code(tmp_path, tiny_ds):
    blob = bytearray(tiny_ds.read_bytes())
    blob[200] ^= 1
    bad = tmp_path / "bad.rmd"
    bad.write_bytes(bytes(blob))
    assert main(["features", "--in", str(bad), "--out", str(tmp_path / "f.csv")]) == 2


def test_bench_command(tmp_path, tiny_cfg, tiny_ds):
    out = tmp_path / "b"
    assert main(["bench", "--config", str(tiny_cfg), "--in", str(tiny_ds),
                 "--models", "knn1,gnb,tree", "--out", str(out)]) == 0
    rep = json.loads((out / "timing.json").read_text())
    assert [r["model"] for r in rep["rows"]] == ["knn1", "gnb", "tree"]
    assert all(len(r["classify_seconds"]) == 2 for r in rep["rows"])
    assert rep["environment"]


def test_output_root_env(tmp_path, tiny_cfg, monkeypatch):
    monkeypatch.setenv("MODREC_OUT", str(tmp_path / "root"))
    assert main(["generate", "--config", str(tiny_cfg), "--set", "classes=BPSK"]) == 0
    assert (tmp_path / "root" / "dataset.rmd").exists()


def test_usage_error_exit_code():
    assert main(["train"]) == 1
    assert main(["frobnicate"]) == 1
