import json

import numpy as np
import pytest

from unisep.synth import (
    SoundClassSpec,
    SynthError,
    build_mixture,
    class_text_prototype,
    class_video_prototype,
    default_class_table,
    load_manifest,
    make_clue_bundle,
    render_source,
)

SR = 8000


def test_sine_spectral_peak_at_440():
    spec = SoundClassSpec(0, "sine", "sine440", {"freq": (440, 440)})
    wav = render_source(spec, seed=7, duration_s=2.0, sample_rate=SR)
    assert len(wav) == 16000
    spectrum = np.abs(np.fft.rfft(wav.samples))
    freqs = np.fft.rfftfreq(16000, d=1 / SR)
    assert freqs[int(np.argmax(spectrum))] == pytest.approx(440.0, abs=1.0)


def test_render_deterministic_and_normalized():
    table = default_class_table()
    for spec in table:
        a = render_source(spec, seed=123, duration_s=0.5, sample_rate=SR)
        b = render_source(spec, seed=123, duration_s=0.5, sample_rate=SR)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert np.max(np.abs(a.samples)) <= 1.0
        assert np.max(np.abs(a.samples)) > 0.1  # not silent


def test_different_seeds_differ():
    spec = default_class_table()[0]
    a = render_source(spec, seed=1, duration_s=0.25)
    b = render_source(spec, seed=2, duration_s=0.25)
    assert not np.array_equal(a.samples, b.samples)


def test_mixture_additivity_exact():
    table = default_class_table()
    item = build_mixture(table[:3], [0.5, -1.0, 2.0], seed=5, duration_s=0.5)
    total = np.sum([s.waveform.samples for s in item.sources], axis=0, dtype=np.float32)
    assert np.max(np.abs(item.mixture.samples - total)) <= 1e-6
    assert len(item.clues) == 3
    assert item.class_ids == [0, 1, 2]


def test_mixture_gain_applied():
    table = default_class_table()
    item = build_mixture([table[0]], [6.0], seed=5, duration_s=0.25)
    raw = render_source(table[0], item.seed and None or 0, 0.25)  # different seed ok
    assert np.max(np.abs(item.sources[0].waveform.samples)) == pytest.approx(
        0.9 * 10 ** (6.0 / 20.0), rel=1e-3
    )


def test_mixture_rejects_duplicate_classes():
    table = default_class_table()
    with pytest.raises(SynthError):
        build_mixture([table[0], table[0]], [0.0, 0.0], seed=1, duration_s=0.25)


def test_uncorrelated_power_sum():
    # two unit-power noise classes at 0 dB: mixture power ~ sum of powers
    noise_a = SoundClassSpec(0, "band_noise", "a", {"band_lo": (300, 300), "band_hi": (1500, 1500)})
    noise_b = SoundClassSpec(1, "band_noise", "b", {"band_lo": (1800, 1800), "band_hi": (3500, 3500)})
    item = build_mixture([noise_a, noise_b], [0.0, 0.0], seed=9, duration_s=2.0)
    powers = [float(np.mean(s.waveform.samples**2)) for s in item.sources]
    mix_power = float(np.mean(item.mixture.samples**2))
    assert mix_power == pytest.approx(sum(powers), rel=0.2)


def test_clue_bundle_quality_one_is_prototype():
    b = make_clue_bundle(3, quality=1.0, seed=11, vocab_size=20, text_len=5,
                         video_frames=2, video_dim=4)
    assert b.tag == 3 and b.target_class == 3
    assert b.text == class_text_prototype(3, 20, 5)
    np.testing.assert_array_equal(b.video, class_video_prototype(3, 2, 4))
    again = make_clue_bundle(3, quality=1.0, seed=999, vocab_size=20, text_len=5,
                             video_frames=2, video_dim=4)
    assert again.text == b.text  # seed only matters for degradation
    np.testing.assert_array_equal(again.video, b.video)


def test_clue_bundle_quality_zero_fully_degraded():
    proto_video = class_video_prototype(2, 2, 4)
    b = make_clue_bundle(2, quality=0.0, seed=3, vocab_size=20, text_len=8,
                         video_frames=2, video_dim=4, noise_scale=1.0)
    assert not np.array_equal(b.video, proto_video)  # noise injected everywhere
    # all token positions redrawn from the vocabulary
    rng = np.random.default_rng(1)
    redraws = [
        make_clue_bundle(2, quality=0.0, seed=int(rng.integers(1 << 30)),
                         vocab_size=20, text_len=8, video_frames=2, video_dim=4).text
        for _ in range(20)
    ]
    proto = class_text_prototype(2, 20, 8)
    matches = [sum(t == p for t, p in zip(r, proto)) for r in redraws]
    assert np.mean(matches) < 3.0  # ~8/20 expected by chance, not 8


def test_quality_validated():
    with pytest.raises(SynthError):
        make_clue_bundle(0, quality=1.5, seed=0)


def test_manifest_roundtrip(tiny_dataset):
    records = tiny_dataset.records
    reloaded = load_manifest(tiny_dataset.manifest_path)
    assert len(reloaded) == len(records)
    for a, b in zip(records, reloaded):
        assert a.to_json_dict() == b.to_json_dict()


def test_manifest_schema_keys(tiny_dataset):
    line = json.loads(
        tiny_dataset.manifest_path.read_text().splitlines()[0]
    )
    assert {"id", "split", "mix_order", "mix", "sources", "clues", "seed"} <= set(line)


def test_unseen_split_holds_out_classes(tiny_dataset, tiny_cfg):
    seen_limit = tiny_cfg.data.num_seen_classes
    for rec in tiny_dataset.records:
        if rec.split == "unseen-test":
            assert all(c >= seen_limit for c in rec.class_ids)
        else:
            assert all(c < seen_limit for c in rec.class_ids)


def test_dataset_counts_and_shapes(tiny_dataset, tiny_cfg):
    counts = {
        "train": tiny_cfg.data.train_items_per_order,
        "valid": tiny_cfg.data.valid_items_per_order,
        "seen-test": tiny_cfg.data.seen_test_items_per_order,
        "unseen-test": tiny_cfg.data.unseen_test_items_per_order,
    }
    for split, per_order in counts.items():
        recs = tiny_dataset.by_split(split)
        assert len(recs) == per_order * len(tiny_cfg.data.mix_orders)
    item = tiny_dataset.load(tiny_dataset.records[0])
    n = int(tiny_cfg.data.duration_s * tiny_cfg.codec.sample_rate)
    assert item.mixture.shape == (n,)
    assert item.sources.shape[1] == n
    total = item.sources.sum(axis=0)
    assert np.max(np.abs(item.mixture - total)) <= 1e-6


def test_items_sorted_by_class_id(tiny_dataset):
    for rec in tiny_dataset.records:
        assert rec.class_ids == sorted(rec.class_ids)


def test_generation_deterministic(tiny_cfg, tmp_path):
    from unisep.synth import generate_dataset

    m1 = generate_dataset(tiny_cfg, tmp_path / "a")
    m2 = generate_dataset(tiny_cfg, tmp_path / "b")
    lines1 = m1.read_text().splitlines()
    lines2 = m2.read_text().splitlines()
    assert lines1 == lines2
    rec = load_manifest(m1)[0]
    wav1 = (tmp_path / "a" / rec.mix_path).read_bytes()
    wav2 = (tmp_path / "b" / rec.mix_path).read_bytes()
    assert wav1 == wav2
