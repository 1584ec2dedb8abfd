"""Parametric synthetic sound classes, mixture building, and the dataset
manifest (JSON lines + WAV stems + clue JSON files).

Twelve classes cover eight generator families; the four unseen classes use
families that never occur in the seen set, so the unseen split genuinely
tests generalization. All generation is a pure function of (spec, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import Waveform, read_wav, write_wav
from .clues import ClueBundle
from .config import GlobalConfig
from .seeding import derive_seed

GENERATOR_KINDS = (
    "sine",
    "harmonic",
    "chirp",
    "am_noise",
    "band_noise",
    "square",
    "click_train",
    "fm_tone",
)

# base entropy for class-conditioned clue prototypes; fixed so clue files
# stay valid across datasets generated from different root seeds
_PROTO_ENTROPY = 0x5EED_C10E

PEAK_LEVEL = 0.9


class SynthError(ValueError):
    """Raised for invalid synthesis parameters."""


@dataclass
class SoundClassSpec:
    """One sound class: a generator kind plus its parameter ranges."""

    class_id: int
    kind: str
    name: str
    params: dict[str, tuple[float, float]] = field(default_factory=dict)

    def sample_params(self, rng: np.random.Generator) -> dict[str, float]:
        return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in sorted(self.params.items())}


def default_class_table(num_classes: int = 12, num_seen: int = 8) -> list[SoundClassSpec]:
    """Twelve classes: seen ids 0..7 (four families, two variants each) and
    unseen ids 8..11 (the four held-out families)."""
    table = [
        SoundClassSpec(0, "sine", "sine_low", {"freq": (200, 500)}),
        SoundClassSpec(1, "sine", "sine_high", {"freq": (900, 1800)}),
        SoundClassSpec(2, "harmonic", "harmonic_low", {"f0": (100, 200), "partials": (5, 5)}),
        SoundClassSpec(3, "harmonic", "harmonic_high", {"f0": (300, 500), "partials": (4, 4)}),
        SoundClassSpec(4, "chirp", "chirp_up", {"f_start": (200, 400), "f_end": (1200, 1800)}),
        SoundClassSpec(5, "chirp", "chirp_down", {"f_start": (1500, 2200), "f_end": (300, 600)}),
        SoundClassSpec(
            6, "am_noise", "am_noise_slow", {"band_lo": (300, 400), "band_hi": (1000, 1200), "mod_rate": (2, 5)}
        ),
        SoundClassSpec(
            7, "am_noise", "am_noise_fast", {"band_lo": (1500, 1700), "band_hi": (2800, 3000), "mod_rate": (18, 35)}
        ),
        SoundClassSpec(8, "band_noise", "band_noise", {"band_lo": (500, 700), "band_hi": (1000, 1300)}),
        SoundClassSpec(9, "square", "square_wave", {"f0": (150, 350)}),
        SoundClassSpec(10, "click_train", "click_train", {"rate": (6, 14), "ring_freq": (600, 1400)}),
        SoundClassSpec(
            11, "fm_tone", "fm_tone", {"carrier": (800, 1500), "deviation": (100, 250), "mod_rate": (3, 8)}
        ),
    ]
    if num_classes != len(table) or num_seen != 8:
        raise SynthError(
            f"default class table is fixed at 12 classes / 8 seen, got "
            f"{num_classes}/{num_seen}"
        )
    return table


def _band_noise(rng: np.random.Generator, n: int, sr: int, lo: float, hi: float) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / sr)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spectrum, n=n)


def _fade(x: np.ndarray, sr: int, ms: float = 10.0) -> np.ndarray:
    n_fade = min(int(sr * ms / 1000.0), x.size // 2)
    if n_fade > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n_fade) / n_fade)
        x[:n_fade] *= ramp
        x[-n_fade:] *= ramp[::-1]
    return x


def render_source(
    spec: SoundClassSpec, seed: int, duration_s: float = 2.0, sample_rate: int = 8000
) -> Waveform:
    """Deterministic class exemplar, peak-normalized to 0.9."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(round(duration_s * sample_rate))
    if n < 2:
        raise SynthError(f"duration too short: {duration_s}s at {sample_rate} Hz")
    t = np.arange(n) / sample_rate
    p = spec.sample_params(rng)
    phase = rng.uniform(0.0, 2.0 * np.pi)

    if spec.kind == "sine":
        x = np.sin(2 * np.pi * p["freq"] * t + phase)
    elif spec.kind == "harmonic":
        x = np.zeros(n)
        for k in range(1, int(p["partials"]) + 1):
            x += np.sin(2 * np.pi * k * p["f0"] * t + rng.uniform(0, 2 * np.pi)) / k
    elif spec.kind == "chirp":
        # linear sweep between the sampled endpoints
        f0, f1 = p["f_start"], p["f_end"]
        inst_phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) * t**2 / t[-1])
        x = np.sin(inst_phase + phase)
    elif spec.kind == "am_noise":
        carrier = _band_noise(rng, n, sample_rate, p["band_lo"], p["band_hi"])
        env = 0.5 * (1.0 + np.sin(2 * np.pi * p["mod_rate"] * t + phase))
        x = carrier * env
    elif spec.kind == "band_noise":
        x = _band_noise(rng, n, sample_rate, p["band_lo"], p["band_hi"])
    elif spec.kind == "square":
        x = np.sign(np.sin(2 * np.pi * p["f0"] * t + phase))
    elif spec.kind == "click_train":
        x = np.zeros(n)
        period = int(sample_rate / p["rate"])
        ring_len = min(int(0.02 * sample_rate), period)
        ring = np.sin(2 * np.pi * p["ring_freq"] * np.arange(ring_len) / sample_rate)
        ring *= np.exp(-np.arange(ring_len) / (0.004 * sample_rate))
        start = int(rng.uniform(0, period))
        for pos in range(start, n, period):
            end = min(pos + ring_len, n)
            x[pos:end] += ring[: end - pos]
    elif spec.kind == "fm_tone":
        mod_index = p["deviation"] / p["mod_rate"]
        x = np.sin(
            2 * np.pi * p["carrier"] * t
            + mod_index * np.sin(2 * np.pi * p["mod_rate"] * t)
            + phase
        )
    else:
        raise SynthError(f"unknown generator kind: {spec.kind}")

    x = _fade(x.astype(np.float64), sample_rate)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x * (PEAK_LEVEL / peak)
    return Waveform(x.astype(np.float32), sample_rate=sample_rate)


@dataclass
class SourceStem:
    waveform: Waveform
    class_id: int
    gain_db: float


@dataclass
class MixtureItem:
    """One dataset item: the mixture, its gain-scaled stems, and per-source
    clue bundles. The mixture is exactly the sample-wise stem sum."""

    mixture: Waveform
    sources: list[SourceStem]
    clues: list[ClueBundle]
    split: str
    seed: int

    @property
    def mix_order(self) -> int:
        return len(self.sources)

    @property
    def class_ids(self) -> list[int]:
        return [s.class_id for s in self.sources]


def _class_prototype_rng(class_id: int, purpose: str) -> np.random.Generator:
    seed = derive_seed(_PROTO_ENTROPY, f"{purpose}-{class_id}")
    return np.random.Generator(np.random.PCG64(seed))


def class_text_prototype(class_id: int, vocab_size: int, text_len: int) -> list[int]:
    rng = _class_prototype_rng(class_id, "text")
    return [int(v) for v in rng.integers(0, vocab_size, size=text_len)]


def class_video_prototype(class_id: int, frames: int, video_dim: int) -> np.ndarray:
    rng = _class_prototype_rng(class_id, "video")
    return rng.standard_normal((frames, video_dim)).astype(np.float32)


def make_clue_bundle(
    class_id: int,
    quality: float,
    seed: int,
    vocab_size: int = 40,
    text_len: int = 6,
    video_frames: int = 4,
    video_dim: int = 16,
    noise_scale: float = 1.0,
) -> ClueBundle:
    """Class-conditioned clue bundle; (1 - quality) controls token dropout
    and video noise."""
    if not 0.0 <= quality <= 1.0:
        raise SynthError(f"quality must lie in [0, 1], got {quality}")
    rng = np.random.Generator(np.random.PCG64(seed))
    tokens = np.array(class_text_prototype(class_id, vocab_size, text_len))
    drop = rng.random(tokens.shape) < (1.0 - quality)
    tokens[drop] = rng.integers(0, vocab_size, size=int(drop.sum()))
    video = class_video_prototype(class_id, video_frames, video_dim).copy()
    if quality < 1.0:
        video += rng.normal(0.0, (1.0 - quality) * noise_scale, size=video.shape).astype(
            np.float32
        )
    return ClueBundle(
        tag=class_id,
        text=[int(v) for v in tokens],
        video=video,
        target_class=class_id,
        quality=quality,
    )


def build_mixture(
    specs: list[SoundClassSpec],
    gains_db: list[float],
    seed: int,
    duration_s: float = 2.0,
    sample_rate: int = 8000,
    clue_quality: float = 0.9,
    split: str = "train",
    clue_kwargs: dict | None = None,
) -> MixtureItem:
    """Render, gain-scale, and sum sources; attach per-source clue bundles."""
    if len(specs) != len(gains_db):
        raise SynthError("one gain per source required")
    ids = [s.class_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SynthError(f"classes within a mixture must be distinct, got {ids}")
    stems: list[SourceStem] = []
    clues: list[ClueBundle] = []
    for i, (spec, gain) in enumerate(zip(specs, gains_db)):
        src_seed = derive_seed(seed, f"source-{i}")
        wav = render_source(spec, src_seed, duration_s, sample_rate)
        scaled = wav.samples * np.float32(10.0 ** (gain / 20.0))
        stems.append(SourceStem(Waveform(scaled, sample_rate), spec.class_id, gain))
        clues.append(
            make_clue_bundle(
                spec.class_id,
                clue_quality,
                derive_seed(seed, f"clue-{i}"),
                **(clue_kwargs or {}),
            )
        )
    mix = np.sum([s.waveform.samples for s in stems], axis=0, dtype=np.float32)
    return MixtureItem(
        mixture=Waveform(mix, sample_rate),
        sources=stems,
        clues=clues,
        split=split,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# manifest + dataset generation


@dataclass
class ManifestRecord:
    item_id: str
    split: str
    mix_order: int
    mix_path: str
    source_paths: list[str]
    class_ids: list[int]
    gains_db: list[float]
    clue_paths: list[str]
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "id": self.item_id,
            "split": self.split,
            "mix_order": self.mix_order,
            "mix": self.mix_path,
            "sources": [
                {"wav": p, "class_id": c, "gain_db": g}
                for p, c, g in zip(self.source_paths, self.class_ids, self.gains_db)
            ],
            "clues": self.clue_paths,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ManifestRecord":
        return cls(
            item_id=data["id"],
            split=data["split"],
            mix_order=data["mix_order"],
            mix_path=data["mix"],
            source_paths=[s["wav"] for s in data["sources"]],
            class_ids=[s["class_id"] for s in data["sources"]],
            gains_db=[s["gain_db"] for s in data["sources"]],
            clue_paths=list(data["clues"]),
            seed=data["seed"],
        )


def emit_manifest(records: list[ManifestRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict()) + "\n")
    return path


def load_manifest(path: str | Path) -> list[ManifestRecord]:
    path = Path(path)
    records = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ManifestRecord.from_json_dict(json.loads(line)))
    return records


SPLITS = ("train", "valid", "seen-test", "unseen-test")


def generate_dataset(cfg: GlobalConfig, out_dir: str | Path) -> Path:
    """Generate WAVs, clue files, and the JSONL manifest for all splits.

    Fully deterministic from cfg.seed; items are independent functions of
    their derived item seeds. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "clues").mkdir(parents=True, exist_ok=True)
    table = default_class_table(cfg.data.num_classes, cfg.data.num_seen_classes)
    seen = [s for s in table if s.class_id < cfg.data.num_seen_classes]
    unseen = [s for s in table if s.class_id >= cfg.data.num_seen_classes]
    counts = {
        "train": cfg.data.train_items_per_order,
        "valid": cfg.data.valid_items_per_order,
        "seen-test": cfg.data.seen_test_items_per_order,
        "unseen-test": cfg.data.unseen_test_items_per_order,
    }
    clue_kwargs = {
        "vocab_size": cfg.clue.vocab_size,
        "text_len": cfg.clue.text_len,
        "video_frames": cfg.clue.video_frames,
        "video_dim": cfg.clue.video_dim,
        "noise_scale": cfg.clue.noise_scale,
    }
    records: list[ManifestRecord] = []
    for split in SPLITS:
        pool = unseen if split == "unseen-test" else seen
        for order in cfg.data.mix_orders:
            if order > len(pool):
                raise SynthError(
                    f"mix order {order} exceeds the {len(pool)} classes of split {split}"
                )
            for idx in range(counts[split]):
                item_seed = derive_seed(cfg.seed, f"item-{split}-{order}-{idx}")
                rng = np.random.Generator(np.random.PCG64(item_seed))
                chosen = sorted(rng.choice(len(pool), size=order, replace=False))
                specs = [pool[i] for i in chosen]
                gains = [
                    float(rng.uniform(-cfg.data.gain_range_db, cfg.data.gain_range_db))
                    for _ in range(order)
                ]
                item = build_mixture(
                    specs,
                    gains,
                    item_seed,
                    duration_s=cfg.data.duration_s,
                    sample_rate=cfg.codec.sample_rate,
                    clue_quality=cfg.data.clue_quality,
                    split=split,
                    clue_kwargs=clue_kwargs,
                )
                item_id = f"{split}_{order}mix_{idx:05d}"
                mix_rel = f"wav/{item_id}_mix.wav"
                write_wav(out_dir / mix_rel, item.mixture)
                src_rels, clue_rels = [], []
                for j, (stem, clue) in enumerate(zip(item.sources, item.clues)):
                    src_rel = f"wav/{item_id}_src{j}.wav"
                    clue_rel = f"clues/{item_id}_src{j}.json"
                    write_wav(out_dir / src_rel, stem.waveform)
                    clue.save(out_dir / clue_rel)
                    src_rels.append(src_rel)
                    clue_rels.append(clue_rel)
                records.append(
                    ManifestRecord(
                        item_id=item_id,
                        split=split,
                        mix_order=order,
                        mix_path=mix_rel,
                        source_paths=src_rels,
                        class_ids=item.class_ids,
                        gains_db=[s.gain_db for s in item.sources],
                        clue_paths=clue_rels,
                        seed=item_seed,
                    )
                )
    return emit_manifest(records, out_dir / "manifest.jsonl")


@dataclass
class LoadedItem:
    item_id: str
    split: str
    mixture: np.ndarray  # [T] float32
    sources: np.ndarray  # [J, T] float32
    class_ids: list[int]
    bundles: list[ClueBundle]


class DataStore:
    """Loads manifest items from disk, with an optional in-memory cache."""

    def __init__(self, manifest_path: str | Path, cache: bool = True):
        self.manifest_path = Path(manifest_path)
        self.root = self.manifest_path.parent
        self.records = load_manifest(self.manifest_path)
        self._cache: dict[str, LoadedItem] | None = {} if cache else None

    def by_split(self, split: str, mix_order: int | None = None) -> list[ManifestRecord]:
        return [
            r
            for r in self.records
            if r.split == split and (mix_order is None or r.mix_order == mix_order)
        ]

    def load(self, rec: ManifestRecord) -> LoadedItem:
        if self._cache is not None and rec.item_id in self._cache:
            return self._cache[rec.item_id]
        mixture = read_wav(self.root / rec.mix_path).samples
        sources = np.stack(
            [read_wav(self.root / p).samples for p in rec.source_paths]
        )
        bundles = [ClueBundle.load(self.root / p) for p in rec.clue_paths]
        item = LoadedItem(
            item_id=rec.item_id,
            split=rec.split,
            mixture=mixture,
            sources=sources,
            class_ids=list(rec.class_ids),
            bundles=bundles,
        )
        if self._cache is not None:
            self._cache[rec.item_id] = item
        return item
