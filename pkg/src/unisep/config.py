"""Global JSON configuration: schema, defaults, presets, validation.

The config is a nested dataclass tree mirroring the JSON layout. Loading
fills defaults, rejects unknown keys, and range-checks values; errors
always name the offending key path (e.g. ``eda.theta``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed config files or invalid values."""


@dataclass
class CodecConfig:
    sample_rate: int = 8000
    kernel_size: int = 16
    stride: int = 8


@dataclass
class SeparatorConfig:
    chunk_size: int = 250
    dual_path_layers: int = 2
    triple_path_layers: int = 1
    num_heads: int = 4
    ffn_mult: int = 4


@dataclass
class EdaConfig:
    theta: float = 0.5
    max_steps: int = 6


@dataclass
class ClueConfig:
    stub_seed: int = 1234
    vocab_size: int = 40
    text_len: int = 6
    video_frames: int = 4
    video_dim: int = 16
    num_heads: int = 4
    # degradation knob for synthetic clues: scale of video noise /
    # token dropout applied at (1 - quality)
    noise_scale: float = 1.0


@dataclass
class LossConfig:
    tau: float = 0.1
    lambda_count: float = 1.0
    lambda_align: float = 1.0
    snr_clamp_db: float = 30.0
    snr_eps: float = 1e-8
    bce_eps: float = 1e-7


@dataclass
class TrainerConfig:
    lr_stage1: float = 1e-4
    lr_stage2: float = 3e-5
    epochs_stage1: int = 70
    epochs_stage2: int = 30
    batch_size: int = 8
    attractor_branch_prob: float = 0.3
    grad_clip: float = 5.0
    val_every: int = 1
    num_threads: int = 0  # 0 = leave torch default


@dataclass
class DataConfig:
    duration_s: float = 2.0
    mix_orders: list[int] = field(default_factory=lambda: [2, 3])
    train_items_per_order: int = 2000
    valid_items_per_order: int = 200
    seen_test_items_per_order: int = 200
    unseen_test_items_per_order: int = 200
    num_classes: int = 12
    num_seen_classes: int = 8
    gain_range_db: float = 2.5
    clue_quality: float = 0.9
    cache_in_memory: bool = True


@dataclass
class EvalConfig:
    batch_size: int = 16
    figures: bool = True


@dataclass
class GlobalConfig:
    seed: int = 0
    embed_dim: int = 256
    codec: CodecConfig = field(default_factory=CodecConfig)
    separator: SeparatorConfig = field(default_factory=SeparatorConfig)
    eda: EdaConfig = field(default_factory=EdaConfig)
    clue: ClueConfig = field(default_factory=ClueConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def model_sections(self) -> dict:
        """Sections that define the network architecture (checkpoint compat)."""
        return {
            "embed_dim": self.embed_dim,
            "codec": dataclasses.asdict(self.codec),
            "separator": dataclasses.asdict(self.separator),
            "eda": dataclasses.asdict(self.eda),
            "clue": dataclasses.asdict(self.clue),
            "num_classes": self.data.num_classes,
        }


# Named presets: `paper` mirrors the reference schedule; `toy` is the
# desk-scale configuration the acceptance suite trains.
PRESETS: dict[str, dict] = {
    "paper": {},
    "toy": {
        "embed_dim": 64,
        "codec": {"kernel_size": 64, "stride": 32},
        "separator": {
            "chunk_size": 50,
            "dual_path_layers": 1,
            "triple_path_layers": 1,
            "num_heads": 2,
        },
        "clue": {"num_heads": 2},
        "trainer": {
            "epochs_stage1": 12,
            "epochs_stage2": 6,
            "lr_stage1": 3e-4,
            "lr_stage2": 1e-4,
        },
        "data": {
            "duration_s": 1.0,
            "train_items_per_order": 1000,
            "valid_items_per_order": 100,
            "seen_test_items_per_order": 200,
            "unseen_test_items_per_order": 200,
        },
    },
}


def _merge_into(obj, data: dict, path: str) -> None:
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"unknown config key: {where}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            _merge_into(current, value, where)
        else:
            setattr(obj, key, _coerce(value, current, where))


def _coerce(value, current, where: str):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(current, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return list(value)
    return value


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate(cfg: GlobalConfig) -> None:
    _check(cfg.seed >= 0, "seed: must be >= 0")
    _check(cfg.embed_dim > 0, "embed_dim: must be positive")
    _check(cfg.codec.sample_rate > 0, "codec.sample_rate: must be positive")
    _check(cfg.codec.kernel_size > 0, "codec.kernel_size: must be positive")
    _check(cfg.codec.stride > 0, "codec.stride: must be positive")
    _check(cfg.separator.chunk_size > 0, "separator.chunk_size: must be positive")
    _check(cfg.separator.chunk_size % 2 == 0, "separator.chunk_size: must be even")
    _check(
        cfg.embed_dim % cfg.separator.num_heads == 0,
        "separator.num_heads: must divide embed_dim",
    )
    _check(
        cfg.embed_dim % cfg.clue.num_heads == 0,
        "clue.num_heads: must divide embed_dim",
    )
    _check(0.0 < cfg.eda.theta < 1.0, "eda.theta: must lie in (0, 1)")
    _check(cfg.eda.max_steps >= 1, "eda.max_steps: must be >= 1")
    _check(cfg.loss.tau > 0.0, "loss.tau: must be positive")
    _check(cfg.loss.snr_clamp_db > 0.0, "loss.snr_clamp_db: must be positive")
    _check(
        0.0 <= cfg.trainer.attractor_branch_prob <= 1.0,
        "trainer.attractor_branch_prob: must lie in [0, 1]",
    )
    _check(cfg.trainer.batch_size >= 1, "trainer.batch_size: must be >= 1")
    _check(cfg.data.duration_s > 0.0, "data.duration_s: must be positive")
    _check(
        0 < cfg.data.num_seen_classes <= cfg.data.num_classes,
        "data.num_seen_classes: must lie in (0, num_classes]",
    )
    _check(
        all(2 <= j <= cfg.eda.max_steps for j in cfg.data.mix_orders),
        "data.mix_orders: each order must lie in [2, eda.max_steps]",
    )
    _check(
        max(cfg.data.mix_orders) <= cfg.data.num_seen_classes,
        "data.mix_orders: order exceeds number of seen classes",
    )
    _check(0.0 <= cfg.data.clue_quality <= 1.0, "data.clue_quality: must lie in [0, 1]")


def make_config(overrides: dict | None = None, preset: str | None = None) -> GlobalConfig:
    """Build a config from defaults, an optional preset, and overrides."""
    cfg = GlobalConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset: {preset!r} (choose from {sorted(PRESETS)})"
            )
        _merge_into(cfg, PRESETS[preset], "")
    if overrides:
        _merge_into(cfg, overrides, "")
    validate(cfg)
    return cfg


def load_config(path: str | Path, preset: str | None = None) -> GlobalConfig:
    """Load a JSON config file, filling defaults and validating."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    # a "preset" key inside the file is honored unless overridden by the caller
    file_preset = raw.pop("preset", None)
    if file_preset is not None and not isinstance(file_preset, str):
        raise ConfigError("preset: expected a string")
    return make_config(raw, preset=preset or file_preset)


def dump_config(cfg: GlobalConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def config_hash(data: dict) -> str:
    """Stable hash of a config dict (key-sorted canonical JSON)."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
