import csv
import json

import numpy as np
import pytest

from texrnet.cli import main
from texrnet.config import TrainConfig
from texrnet.reports import activation_report, cossim_report, spearman, stats_report, write_ablation
from texrnet.training import AblationRow, summarize_ablation, train


@pytest.fixture(scope="module")
def tiny_ckpt(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_run")
    cfg = TrainConfig(data_roots=[str(small_dataset)], iterations=4, warmup=1, batch_size=2, crop_size=64,
                      backbone_m=16, backbone_width=8, fuse_width=16, discriminator_loss=False,
                      out_dir=str(out), ckpt_every=0)
    return train(cfg)[2]


def test_spearman_flags():
    assert spearman([0.1, 0.2], [1.0, 0.5]) == (None, "fewer_than_3_images")
    assert spearman([0.3, 0.3, 0.3], [0.1, 0.5, 0.2])[1] == "constant_values"
    rho, flag = spearman([0.1, 0.2, 0.3, 0.4], [0.9, 0.8, 0.85, 0.1])
    assert flag is None and rho == pytest.approx(-0.8)


def test_cossim_report_files(tiny_ckpt, small_dataset, tmp_path):
    rep = cossim_report(tiny_ckpt, small_dataset, "test", tmp_path)
    assert len(rep.rows) == 5
    with open(rep.files["csv"]) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 5 and all(0 <= float(r["cossim_01"]) <= 1 for r in rows)
    summary = json.loads(open(rep.files["json"]).read())
    assert summary["spearman_rho"] is None or -1 <= summary["spearman_rho"] <= 1
    assert (tmp_path / "cossim_test.png").stat().st_size > 0


def test_activation_report(tiny_ckpt, small_dataset, tmp_path):
    files = activation_report(tiny_ckpt, small_dataset, "test", tmp_path, n_images=2)
    npys = [f for f in files if f.endswith(".npy")]
    assert len(npys) == 6
    delta = np.load([f for f in npys if f.endswith("_delta.npy")][0])
    assert delta.shape == (32, 32) and np.all(np.abs(delta) <= 1)
    assert files[-1].endswith("activation_grid.png")


def test_ablation_and_stats_outputs(small_dataset, tmp_path):
    rows = [AblationRow("TexRNet (base)", False, False, False, 0, 80.0, 0.9, 1000),
            AblationRow("TexRNet (final)", True, True, True, 0, 81.0, 0.91, 1000)]
    files = write_ablation(rows, summarize_ablation(rows), tmp_path)
    with open(files["table_csv"]) as f:
        table = list(csv.DictReader(f))
    assert [r["method"] for r in table] == ["TexRNet (base)", "TexRNet (final)"]
    rep, sfiles = stats_report(small_dataset, "train", tmp_path)
    assert rep.n_images == 12 and json.loads(open(sfiles["json"]).read())["n_images"] == 12


def test_cli_end_to_end(tmp_path, capsys, monkeypatch):
    root = tmp_path / "d"
    for split, n in (("train", 6), ("val", 3), ("test", 3)):
        assert main(["synth", "--n", str(n), "--seed", "2", "--preset", "easy", "--out", str(root),
                     "--split", split]) == 0
    assert main(["validate", "--data", str(root)]) == 0
    assert "0 errors" in capsys.readouterr().out
    monkeypatch.setenv("TEXSEG_DATA_ROOT", str(root))
    assert main(["stats", "--out", str(tmp_path / "st")]) == 0
    assert main(["pretrain-glyph", "--epochs", "1", "--out", str(tmp_path / "g.pt")]) == 0
    capsys.readouterr()
    ini = tmp_path / "c.ini"
    ini.write_text(f"[train]\niterations = 3\nwarmup = 1\nbatch_size = 2\ncrop_size = 64\n"
                   f"glyph_ckpt = {tmp_path / 'g.pt'}\nout_dir = {tmp_path / 'run'}\n")
    assert main(["train", "--config", str(ini), "--eval"]) == 0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert out["checkpoint"].endswith("model.pt") and "fgIoU" in out["eval"]
    assert main(["eval", "--ckpt", out["checkpoint"], "--split", "test", "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "eval_test.csv").exists()
    assert main(["report", "cossim", "--ckpt", out["checkpoint"], "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "cossim_test.csv").exists()


def test_cli_requires_data_root(monkeypatch):
    monkeypatch.delenv("TEXSEG_DATA_ROOT", raising=False)
    with pytest.raises(SystemExit):
        main(["stats"])
