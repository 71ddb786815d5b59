import csv
import json

import numpy as np
import pytest

import oracles
from texrnet.metrics import (
    Counts,
    EvalResult,
    MetricAccumulator,
    fg_fscore,
    fg_iou,
    pixel_counts,
    write_results,
)


def test_iou_identity():
    m = np.zeros((4, 4), bool)
    m[1:3, 1:3] = True
    assert fg_iou(m, m) == 1.0


def test_iou_hand_counted():
    pred = np.zeros((4, 4), bool)
    gt = np.zeros((4, 4), bool)
    pred[0, :4] = True
    gt[0, 1:4] = True
    gt[1, :3] = True
    assert pixel_counts(pred, gt) == Counts(3, 1, 3)
    assert fg_iou(pred, gt) == pytest.approx(3 / 7)
    assert oracles.pixel_counts(pred.tolist(), gt.tolist(), np.zeros((4, 4), bool).tolist()) == (3, 1, 3)


def test_iou_all_ignored():
    m = np.ones((3, 3), bool)
    iou, empty = fg_iou(m, ~m, ignore=m, return_flag=True)
    assert iou == 1.0 and empty


def test_fscore_examples():
    m = np.eye(4, dtype=bool)
    assert fg_fscore(m, m) == (1.0, 1.0, 1.0)
    pred = np.zeros((4, 4), bool)
    gt = np.zeros((4, 4), bool)
    pred[0, :4] = True
    gt[0, 1:4] = True
    gt[1, :3] = True
    p, r, f = fg_fscore(pred, gt)
    assert (p, r) == (0.75, 0.5) and f == pytest.approx(0.6)
    p, r, f, flags = fg_fscore(np.zeros((4, 4), bool), gt, return_flags=True)
    assert "precision_undefined" in flags and r == 0.0 and f == 0.0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        fg_iou(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        fg_fscore(np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((2, 3)))


def test_flip_invariance_and_iou_le_f():
    rng = np.random.default_rng(5)
    for _ in range(200):
        pred, gt, ig = rng.random((3, 16, 16)) < [[[0.4]], [[0.3]], [[0.1]]]
        a = fg_iou(pred, gt, ig)
        b = fg_iou(pred[:, ::-1], gt[:, ::-1], ig[:, ::-1])
        assert a == b
        assert fg_fscore(pred, gt, ig) == fg_fscore(pred[:, ::-1], gt[:, ::-1], ig[:, ::-1])
        if pixel_counts(pred, gt, ig).tp > 0:
            assert a <= fg_fscore(pred, gt, ig)[2] + 1e-12


def test_accumulator_is_global_not_mean():
    acc = MetricAccumulator()
    big = np.ones((10, 10), bool)
    acc.update(big, big, image_id="a")
    small_pred = np.zeros((10, 10), bool)
    small_gt = np.zeros((10, 10), bool)
    small_gt[0, 0] = True
    acc.update(small_pred, small_gt, image_id="b")
    res = acc.result("synth", "test")
    assert res.fgIoU == pytest.approx(100 / 101)
    assert [r["fgIoU"] for r in acc.per_image] == [1.0, 0.0]
    assert res.n_images == 2


def test_results_csv_json(tmp_path):
    res = EvalResult.from_counts(Counts(3, 1, 3), "synth", "test", 1)
    rows = write_results([res], tmp_path / "r.csv", tmp_path / "r.json")
    with open(tmp_path / "r.csv") as f:
        got = list(csv.DictReader(f))
    assert list(got[0]) == ["dataset", "split", "fgIoU", "precision", "recall", "F-score", "n_images"]
    assert float(got[0]["fgIoU"]) == pytest.approx(300 / 7, abs=1e-3)
    assert json.loads((tmp_path / "r.json").read_text())[0]["counts"] == {"tp": 3, "fp": 1, "fn": 3}
    assert rows[0]["F-score"] == pytest.approx(0.6)
