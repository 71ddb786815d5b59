import filecmp
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats

from texrnet.annotations import dataset_stats, errors_only, load_dataset, validate_sample
from texrnet.font import ALPHABET, glyph_atlas
from texrnet.synthdata import SynthConfig, generate_split, preset, render_sample, sample_seed


def test_glyph_atlas_nonempty_and_distinct():
    atlas = glyph_atlas()
    assert len(atlas) == 36
    bitmaps = [bm.tobytes() for bm in atlas.values()]
    assert all(bm.any() for bm in atlas.values())
    assert len(set(bitmaps)) == 36


@pytest.mark.parametrize("kwargs", [dict(height=32), dict(scale=(5, 3)), dict(effect_prob=1.5)])
def test_config_rejects_degenerate(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)


@pytest.mark.parametrize("name", ["easy", "hard"])
def test_render_deterministic(name):
    cfg = preset(name)
    a, ia = render_sample(cfg, 123)
    b, ib = render_sample(cfg, 123)
    assert ia.tobytes() == ib.tobytes()
    assert a.words == b.words and a.masks == b.masks


def test_effects_disabled_masks_equal():
    cfg = preset("easy", effect_prob=0.0)
    for seed in range(20):
        rec, _ = render_sample(cfg, seed)
        assert np.array_equal(rec.masks.word_mask, rec.masks.word_effect_mask)


def test_effects_always_give_strict_superset():
    cfg = preset("easy", effect_prob=1.0)
    rec, _ = render_sample(cfg, 4)
    m = rec.masks
    assert m.word_effect_mask.sum() > m.word_mask.sum()
    assert not np.any(m.word_mask & ~m.word_effect_mask)


@pytest.mark.parametrize("name", ["easy", "hard"])
def test_char_union_equals_word_mask(name):
    cfg = preset(name)
    for seed in range(25):
        rec, _ = render_sample(cfg, seed)
        assert np.array_equal(rec.masks.char_instance_mask > 0, rec.masks.word_mask)
        n_chars = len(rec.chars)
        assert set(np.unique(rec.masks.char_instance_mask)) <= set(range(n_chars + 1))


def test_text_pixels_take_text_colour():
    cfg = preset("easy", noise=0.0, effect_prob=0.0)
    rec, img = render_sample(cfg, 9)
    fg = img[rec.masks.word_mask]
    bg = img[~rec.masks.word_mask]
    assert np.abs(fg.mean(0) - bg.mean(0)).max() > 0.3 * 255


def test_two_hundred_samples_valid_and_effects_cover_words():
    for name in ("easy", "hard"):
        cfg = preset(name, effect_prob=1.0)
        for i in range(100):
            rec, _ = render_sample(cfg, sample_seed(7, i))
            assert errors_only(validate_sample(rec, strict_char_mask=True)) == []
            area = rec.height * rec.width
            assert rec.masks.word_effect_mask.sum() / area >= rec.masks.word_mask.sum() / area


def test_placement_falls_back_to_fewer_words():
    cfg = SynthConfig(height=64, width=64, words_per_image=(6, 6), chars_per_word=(2, 2), scale=(5, 5))
    rec, _ = render_sample(cfg, 0)
    assert 1 <= len(rec.words) < 6
    assert errors_only(validate_sample(rec, strict_char_mask=True)) == []


def test_letter_frequency_matches_uniform_sampling():
    # Characters are drawn uniformly from 36 classes.  Pearson chi-squared on
    # the class counts of 1000 samples must not reject uniformity at p = 0.001.
    cfg = preset("easy")
    counts = np.zeros(37, int)
    for i in range(1000):
        rec, _ = render_sample(cfg, sample_seed(11, i))
        for c in rec.chars:
            counts[c.class_id] += 1
    assert counts[36] == 0
    _, p = stats.chisquare(counts[:36])
    assert p > 1e-3


def test_generate_split_zero(tmp_path):
    m = generate_split(preset("easy"), 0, tmp_path, "test")
    assert m["ids"] == []
    assert (tmp_path / "splits" / "test.txt").read_text() == ""
    assert load_dataset(tmp_path, "test") == []


def test_generate_then_load(tmp_path):
    generate_split(preset("hard", seed=2), 10, tmp_path, "train")
    ds = load_dataset(tmp_path, "train")
    assert len(ds) == 10
    assert all(errors_only(validate_sample(s, strict_char_mask=True)) == [] for s in ds)
    assert dataset_stats(ds).n_images == 10


def test_regenerate_single_index_bitwise(tmp_path):
    cfg = preset("easy", seed=4)
    generate_split(cfg, 10, tmp_path / "full", "train")
    generate_split(cfg, 0, tmp_path / "one", "train", indices=[7])
    sid = "train_00007"
    for rel in (f"images/{sid}.png", f"annotations/{sid}.json", f"masks/{sid}_word.png",
                f"masks/{sid}_effect.png", f"masks/{sid}_char.png"):
        assert filecmp.cmp(tmp_path / "full" / rel, tmp_path / "one" / rel, shallow=False), rel
    assert not os.path.exists(tmp_path / "one" / "images" / "train_00006.png")


def test_parallel_generation_matches_sequential():
    cfg = preset("hard")
    seeds = [sample_seed(1, i) for i in range(8)]
    seq = [render_sample(cfg, s)[1].tobytes() for s in seeds]
    with ThreadPoolExecutor(4) as ex:
        par = list(ex.map(lambda s: render_sample(cfg, s)[1].tobytes(), seeds))
    assert seq == par


def test_splits_differ_for_same_index():
    assert sample_seed(0, 3, "train") != sample_seed(0, 3, "test")


def test_alphabet_is_letters_and_digits():
    assert ALPHABET == "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
