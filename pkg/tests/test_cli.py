import json
import os

import pytest
import yaml

from conftest import TINY
from tasnn import arrayio
from tasnn.cli import main


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.yaml"
    cfg.write_text(yaml.safe_dump(TINY))
    mp = pytest.MonkeyPatch()
    mp.setenv("TASNN_CACHE_DIR", str(root / "cache"))
    c = ["--config", str(cfg)]
    assert main(["synth", *c]) == 0
    assert main(["extract", *c]) == 0
    assert main(["train", *c, "--out", str(root / "m.ckpt")]) == 0
    assert main(["eval", *c, "--checkpoint", str(root / "m.ckpt"), "--out", str(root / "ev")]) == 0
    yield root, c
    mp.undo()


def test_default_locations_use_cache_env(work):
    root, _ = work
    names = sorted(os.listdir(root / "cache"))
    assert [n.split("-")[0] for n in names] == ["corpus", "features"]


def test_report_layout(work):
    root, _ = work
    rep = json.loads((root / "ev" / "metrics.json").read_text())
    assert list(rep) == ["format", "config_digest", "checkpoint_digest", "features_digest",
                         "config", "cells", "variants"]
    assert [(c["n_way"], c["k_shot"]) for c in rep["cells"]] == [(3, 1), (3, 2)]
    assert set(rep["variants"]) == {"shuffle", "junk", "split"}
    plots = json.loads((root / "ev" / "plot_data.json").read_text())
    assert "roc_3way1shot" in plots and "pca_3way2shot" in plots
    curve = json.loads((root / "m.loss.json").read_text())
    assert len(curve["train"]) == 2


def test_eval_is_byte_identical(work):
    root, c = work
    assert main(["eval", *c, "--checkpoint", str(root / "m.ckpt"), "--out", str(root / "ev2")]) == 0
    assert (root / "ev" / "metrics.json").read_bytes() == (root / "ev2" / "metrics.json").read_bytes()


def test_eval_without_config_uses_checkpoint_config(work):
    root, _ = work
    assert main(["eval", "--checkpoint", str(root / "m.ckpt"), "--out", str(root / "ev3")]) == 0
    assert (root / "ev" / "metrics.json").read_bytes() == (root / "ev3" / "metrics.json").read_bytes()


def test_infeasible_cell(work, capsys):
    root, c = work
    assert main(["eval", *c, "--checkpoint", str(root / "m.ckpt"), "--ways", "20"]) == 3
    assert "20-way 1-shot" in capsys.readouterr().err


def test_digest_mismatch_refused_unless_forced(work, capsys):
    root, c = work
    args = ["eval", *c, "--set", "split.seed=5", "--checkpoint", str(root / "m.ckpt"),
            "--out", str(root / "ev4")]
    assert main(args) == 3
    assert "config digest" in capsys.readouterr().err
    assert main(args + ["--force"]) == 0


def test_zero_epochs(work):
    root, c = work
    out = root / "zero.ckpt"
    assert main(["train", *c, "--epochs", "0", "--out", str(out)]) == 0
    assert json.loads((root / "zero.loss.json").read_text()) == {"train": [], "val": []}
    _, meta = arrayio.load(out)
    assert meta["step"] == 0


def test_resume_from_cli(work):
    root, c = work
    assert main(["train", *c, "--resume", str(root / "m.ckpt"), "--epochs", "3",
                 "--out", str(root / "r.ckpt")]) == 0
    curve = json.loads((root / "r.loss.json").read_text())
    assert [r["epoch"] for r in curve["train"]] == [0, 1, 2]


def test_toy_run_loss_decreases(work):
    root, c = work
    assert main(["train", *c, "--epochs", "8", "--set", "train.lr_image=0.001",
                 "--out", str(root / "long.ckpt")]) == 0
    curve = json.loads((root / "long.loss.json").read_text())["train"]
    assert curve[-1]["loss"] < curve[0]["loss"]


def test_baseline_flag(work):
    root, c = work
    assert main(["train", *c, "--baseline", "--out", str(root / "b.ckpt")]) == 0
    _, meta = arrayio.load(root / "b.ckpt")
    m = meta["model_config"]
    assert (m["task_conditioning"], m["beta"], m["center_loss_weight"]) == (False, 0.0, 0.0)


def test_augment_and_plot(work):
    root, c = work
    assert main(["augment", *c, "--limit", "2", "--copies", "3", "--out", str(root / "a.tsf")]) == 0
    arrays, meta = arrayio.load(root / "a.tsf")
    assert arrays["images"].shape == (6, 105, 105)
    assert arrays["images"].min() >= 0 and arrays["images"].max() <= 1
    assert len(meta["draws"]) == 6
    out = root / "plots"
    assert main(["plot", "--report", str(root / "ev" / "metrics.json"),
                 "--loss-curve", str(root / "m.loss.json"), "--out", str(out)]) == 0
    series = json.loads((out / "series.json").read_text())
    assert {"loss", "roc_3way1shot", "confusion_3way1shot"} <= set(series)


def test_plot_render(work):
    pytest.importorskip("matplotlib")
    root, _ = work
    out = root / "png"
    assert main(["plot", "--report", str(root / "ev" / "metrics.json"), "--render",
                 "--out", str(out)]) == 0
    assert (out / "roc_3way1shot.png").stat().st_size > 0


def test_synth_is_deterministic(tmp_path):
    args = ["synth", "--families", "2", "--samples", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "manifest.json").read_bytes() == \
        (tmp_path / "b" / "manifest.json").read_bytes()


def test_synth_default_config(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "c")]) == 0
    m = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert len(m["families"]) == 13
    assert {e["provenance"] for e in m["entries"]} == {"original", "shuffle", "junk", "split"}


def test_synth_unwritable_target_leaves_nothing(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--families", "2", "--samples", "7", "--out", str(blocker / "c")]) == 3
    assert sorted(os.listdir(tmp_path)) == ["file"]


def test_synth_refuses_foreign_directory(tmp_path):
    (tmp_path / "keep.txt").write_text("mine")
    assert main(["synth", "--families", "2", "--samples", "7", "--out", str(tmp_path)]) == 3
    assert (tmp_path / "keep.txt").read_text() == "mine"


@pytest.mark.parametrize("argv", [["synth", "--set", "corpus.n_families=0"],
                                  ["synth", "--set", "bad"],
                                  ["synth", "--config", "/nonexistent.yaml"],
                                  ["plot"]])
def test_config_errors(argv, tmp_path):
    assert main(argv + (["--out", str(tmp_path / "x")] if argv[0] == "synth" else [])) == 2


def test_missing_features_is_data_error(tmp_path):
    assert main(["train", "--features", str(tmp_path / "none"), "--out", str(tmp_path / "m")]) == 3


def test_numeric_failure_exit_code(work, monkeypatch):
    from tasnn import training
    root, c = work

    def boom(self, batch):
        raise training.NumericalError("non-finite loss at step 0")

    monkeypatch.setattr(training.Trainer, "train_step", boom)
    assert main(["train", *c, "--out", str(root / "n.ckpt")]) == 4
