import numpy as np
import pytest

from mmnet import cli
from mmnet import tensor as T
from mmnet.config import RunConfig
from mmnet.errors import NonFiniteError

TINY = ["--set", "synth_subjects=3", "--set", "synth_classes=2", "--set", "synth_samples_per=1",
        "--set", "num_classes=2", "--set", "width=2", "--set", "n_heads=2", "--set", "epochs=1",
        "--set", "batch_size=2"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["train", *TINY, "--out", str(out / "a")]) == 0
    return out / "a"


def test_train_writes_fold_and_pooled_reports(trained):
    folds = sorted(p.name for p in (trained / "folds").iterdir())
    assert folds == ["s01", "s02", "s03"]
    for f in folds:
        for name in ("checkpoint.bin", "train.log", "report.txt"):
            assert (trained / "folds" / f / name).is_file()
    text = (trained / "pooled_report.txt").read_text()
    assert "samples = 6" in text and "macro_f1 = " in text
    cfg = RunConfig.load(trained / "config.txt")
    assert f"config_digest = {cfg.digest}" in text


def test_train_is_byte_identical(trained, tmp_path):
    assert cli.main(["train", *TINY, "--out", str(tmp_path / "b")]) == 0
    for rel in ["pooled_report.txt"] + [f"folds/s0{i}/{n}" for i in (1, 2, 3)
                                        for n in ("checkpoint.bin", "report.txt", "train.log")]:
        assert (trained / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_eval_and_export(trained, tmp_path, capsys):
    ck = str(trained / "folds" / "s01" / "checkpoint.bin")
    cfg = str(trained / "config.txt")
    assert cli.main(["eval", "--config", cfg, "--checkpoint", ck, "--subject", "s01", "--out", str(tmp_path / "r.txt")]) == 0
    assert "samples = 2" in (tmp_path / "r.txt").read_text()
    assert cli.main(["export-attn", "--config", cfg, "--checkpoint", ck, "--sample", "1", "--out", str(tmp_path / "x")]) == 0
    assert len(list((tmp_path / "x").iterdir())) == 8


def test_synth_command(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "d"), "--subjects", "2", "--classes", "3", "--samples-per", "1"]) == 0
    assert (tmp_path / "d" / "dataset.txt").read_text().startswith("mmnet-dataset 1\nclasses happiness surprise disgust\n")


def test_gradcheck_command(capsys):
    assert cli.main(["gradcheck", "--skip-model", "--instances", "2"]) == 0
    out = capsys.readouterr().out
    assert "conv2d" in out and "FAIL" not in out


def test_gradcheck_fails_on_corrupted_backward(monkeypatch, capsys):
    monkeypatch.setattr(T.ReLU, "backward", lambda self, g: (g,))
    assert cli.main(["gradcheck", "--skip-model", "--instances", "3"]) == 1
    assert "relu" in capsys.readouterr().err


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["train", "--set", "width=0"]) == 2
    assert cli.main(["train", "--set", "bogus"]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "missing.txt")]) == 3
    assert cli.main(["train", "--set", "num_classes=2"]) == 2  # no dataset configured
    err = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith("mmnet: ") for line in err) and len(err) == 4

    def boom(*a, **k):
        raise NonFiniteError("loss is nan")

    monkeypatch.setattr(cli, "run_fold", boom)
    assert cli.main(["train", *TINY, "--out", str(tmp_path / "nan")]) == 4


def test_checkpoint_config_mismatch(trained, tmp_path):
    ck = str(trained / "folds" / "s01" / "checkpoint.bin")
    assert cli.main(["eval", *TINY[:-2], "--set", "batch_size=3", "--checkpoint", ck]) == 2
