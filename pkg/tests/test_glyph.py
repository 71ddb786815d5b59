import math

import numpy as np
import pytest
import torch

import oracles
from texrnet.annotations import CharRecord, QuadPolygon, load_dataset
from texrnet.glyph import (
    CharClassifier,
    char_crop,
    crop_rect,
    discriminator_loss,
    gt_char_dataset,
    param_hash,
    pretrain_classifier,
)

D = torch.float64


def _char(box, text="A"):
    return CharRecord(QuadPolygon.from_box(*box), text, 0)


def test_crop_contract_and_constant_map():
    fg = torch.rand(40, 50)
    patches, labels, keep = char_crop(fg, [_char((10, 10, 20, 24))])
    assert patches.shape == (1, 1, 32, 32) and keep == [0] and labels.tolist() == [0]
    assert patches.min() >= 0 and patches.max() <= 1
    ones, _, _ = char_crop(torch.ones(40, 50), [_char((3, 4, 9, 30))])
    assert torch.allclose(ones, torch.ones_like(ones), atol=1e-6)


def test_crop_rect_padding_and_clamp():
    assert crop_rect(QuadPolygon.from_box(10, 10, 20, 24), 40, 50) == pytest.approx((9, 8.6, 21, 25.4))
    assert crop_rect(QuadPolygon.from_box(0, 0, 10, 10), 40, 50) == pytest.approx((0, 0, 11, 11))
    assert crop_rect(QuadPolygon.from_box(5, 5, 5, 9), 40, 50) is None


def test_crop_matches_scalar_resampler():
    rng = np.random.default_rng(0)
    img = rng.random((40, 50))
    patches, _, _ = char_crop(torch.from_numpy(img), [_char((10, 10, 20, 24)), _char((0, 30, 6, 40))])
    for k, box in enumerate([(9, 8.6, 21, 25.4), (0, 29.0, 6.6, 40)]):
        ref = oracles.crop_resize(img.tolist(), box, 32)
        assert np.abs(patches[k, 0].numpy() - np.array(ref)).max() < 1e-12


def test_degenerate_char_skipped(caplog):
    patches, labels, keep = char_crop(torch.rand(20, 20), [_char((5, 5, 5, 9)), _char((2, 2, 8, 9))])
    assert keep == [1] and patches.shape[0] == 1
    assert "degenerate" in caplog.text


def test_crop_translation_consistent():
    rng = np.random.default_rng(1)
    img = torch.from_numpy(rng.random((48, 48)))
    shifted = torch.zeros(48, 48, dtype=D)
    shifted[5:, 3:] = img[:-5, :-3]
    a, _, _ = char_crop(img, [_char((10, 8, 20, 22))])
    b, _, _ = char_crop(shifted, [CharRecord(QuadPolygon.from_box(10, 8, 20, 22).translated(3, 5), "A", 0)])
    assert torch.allclose(a, b, atol=1e-12)


def _uniform_classifier():
    clf = CharClassifier()
    torch.nn.init.zeros_(clf.fc.weight)
    torch.nn.init.zeros_(clf.fc.bias)
    return clf.freeze()


def test_discriminator_uniform_logits_ln37():
    clf = _uniform_classifier()
    fg = torch.rand(1, 40, 40)
    loss = discriminator_loss(fg, [[_char((4, 4, 14, 18)), _char((20, 4, 30, 18))]], clf)
    assert loss.item() == pytest.approx(math.log(37), abs=1e-6)
    assert math.log(37) == pytest.approx(3.611, abs=1e-3)


def test_discriminator_without_chars_disabled():
    loss, disabled = discriminator_loss(torch.rand(2, 16, 16), [[], []], _uniform_classifier(), return_flag=True)
    assert disabled and loss.item() == 0.0


def test_discriminator_requires_frozen():
    with pytest.raises(RuntimeError, match="frozen"):
        discriminator_loss(torch.rand(1, 16, 16), [[_char((1, 1, 8, 8))]], CharClassifier())


def test_discriminator_gradient_reaches_map_only():
    torch.manual_seed(0)
    clf = CharClassifier().freeze()
    before = param_hash(clf)
    fg = torch.rand(1, 40, 40, requires_grad=True)
    discriminator_loss(fg, [[_char((4, 4, 14, 18))]], clf).backward()
    assert fg.grad is not None and fg.grad.abs().sum() > 0
    assert all(p.grad is None for p in clf.parameters())
    assert param_hash(clf) == before


def test_classifier_size():
    assert 90_000 < sum(p.numel() for p in CharClassifier().parameters()) < 110_000


def test_pretrain_deterministic(small_dataset):
    samples = load_dataset(small_dataset, "train")
    P, L = gt_char_dataset(samples)
    assert P.shape[1:] == (1, 32, 32) and len(P) == len(L) > 0
    a, acc_a = pretrain_classifier(P, L, P, L, epochs=2, seed=4)
    b, acc_b = pretrain_classifier(P, L, P, L, epochs=2, seed=4)
    assert acc_a == acc_b
    assert param_hash(a) == param_hash(b)
    assert a.frozen
