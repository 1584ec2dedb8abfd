"""Waveform container and WAV file I/O (mono, 16-bit PCM or 32-bit float)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile


class AudioError(ValueError):
    """Raised for invalid audio inputs."""


@dataclass
class Waveform:
    """Mono audio: float samples (nominal range [-1, 1]) plus sample rate."""

    samples: np.ndarray
    sample_rate: int = 8000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise AudioError(f"expected mono 1-D samples, got shape {self.samples.shape}")
        if self.samples.size == 0:
            raise AudioError("waveform must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise AudioError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate


def read_wav(path: str | Path) -> Waveform:
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise AudioError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        samples = data
    elif data.dtype == np.float64:
        samples = data.astype(np.float32)
    else:
        raise AudioError(f"{path}: unsupported WAV sample format {data.dtype}")
    return Waveform(samples, sample_rate=int(rate))


def write_wav(path: str | Path, w: Waveform, pcm16: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if pcm16:
        scaled = np.round(np.clip(w.samples, -1.0, 1.0) * 32768.0)
        wavfile.write(
            str(path), w.sample_rate, np.clip(scaled, -32768, 32767).astype(np.int16)
        )
    else:
        wavfile.write(str(path), w.sample_rate, w.samples.astype(np.float32))
