"""Learnable waveform codec and chunk segmentation / overlap-add.

The encoder is a 1-D convolution with ReLU (output is nonnegative); the
decoder is the symmetric transposed convolution. Chunking cuts a frame
sequence into 50%-overlapping chunks; overlap-add inverts it exactly by
normalizing each position with its overlap count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


class CodecError(ValueError):
    """Raised for invalid codec inputs or configuration."""


def num_frames(length: int, kernel_size: int, stride: int) -> int:
    """Frame count of the conv encoder for an input of `length` samples."""
    if length < kernel_size:
        raise CodecError(
            f"waveform too short: {length} samples < kernel {kernel_size}"
        )
    return (length - kernel_size) // stride + 1


class ConvCodec(nn.Module):
    """Encoder/decoder conv pair mapping [B, L] <-> [B, N, D].

    Biases start at zero so a silent waveform encodes to all-zero features
    and all-zero features decode to silence.
    """

    def __init__(self, dim: int, kernel_size: int = 16, stride: int = 8):
        super().__init__()
        if kernel_size <= 0 or stride <= 0:
            raise CodecError("codec kernel_size and stride must be positive")
        self.dim = dim
        self.kernel_size = kernel_size
        self.stride = stride
        self.encoder = nn.Conv1d(1, dim, kernel_size, stride=stride)
        self.decoder = nn.ConvTranspose1d(dim, 1, kernel_size, stride=stride)
        nn.init.zeros_(self.encoder.bias)
        nn.init.zeros_(self.decoder.bias)

    def encode(self, mix: torch.Tensor) -> torch.Tensor:
        """[B, L] -> nonnegative features [B, N, D]."""
        if mix.dim() != 2:
            raise CodecError(f"expected [B, L] waveform batch, got {tuple(mix.shape)}")
        if mix.shape[-1] < self.kernel_size:
            raise CodecError(
                f"waveform too short: {mix.shape[-1]} samples < kernel {self.kernel_size}"
            )
        x = F.relu(self.encoder(mix.unsqueeze(1)))  # [B, D, N]
        return x.transpose(1, 2)

    def decode(self, features: torch.Tensor, length: int) -> torch.Tensor:
        """[B, N, D] -> waveforms [B, length] (trimmed/padded to `length`)."""
        if features.dim() != 3 or features.shape[-1] != self.dim:
            raise CodecError(
                f"expected [B, N, {self.dim}] features, got {tuple(features.shape)}"
            )
        wav = self.decoder(features.transpose(1, 2)).squeeze(1)  # [B, L_out]
        out_len = wav.shape[-1]
        if out_len >= length:
            return wav[..., :length]
        return F.pad(wav, (0, length - out_len))


def chunk_layout(n_frames: int, chunk_size: int) -> tuple[int, int]:
    """Number of chunks and tail padding for 50%-overlap segmentation."""
    if chunk_size <= 0 or chunk_size % 2 != 0:
        raise CodecError(f"chunk size must be a positive even number, got {chunk_size}")
    if n_frames <= 0:
        raise CodecError("cannot segment an empty frame sequence")
    hop = chunk_size // 2
    n_chunks = max(1, math.ceil((n_frames - chunk_size) / hop) + 1)
    pad_tail = (n_chunks - 1) * hop + chunk_size - n_frames
    return n_chunks, pad_tail


@dataclass
class ChunkGrid:
    """Frames segmented into overlapping chunks: values [..., C, K, D]."""

    values: torch.Tensor
    chunk_size: int
    pad_tail: int
    n_frames: int

    @property
    def hop(self) -> int:
        return self.chunk_size // 2

    @property
    def n_chunks(self) -> int:
        return int(self.values.shape[-3])

    def with_values(self, values: torch.Tensor) -> "ChunkGrid":
        return ChunkGrid(values, self.chunk_size, self.pad_tail, self.n_frames)


def segment_chunks(features: torch.Tensor, chunk_size: int) -> ChunkGrid:
    """[..., N, D] -> ChunkGrid with values [..., C, K, D], 50% overlap."""
    n_frames = features.shape[-2]
    n_chunks, pad_tail = chunk_layout(n_frames, chunk_size)
    hop = chunk_size // 2
    if pad_tail:
        pad_shape = list(features.shape)
        pad_shape[-2] = pad_tail
        features = torch.cat(
            [features, features.new_zeros(pad_shape)], dim=-2
        )
    starts = torch.arange(n_chunks, device=features.device) * hop
    index = starts[:, None] + torch.arange(chunk_size, device=features.device)[None, :]
    chunks = features.index_select(-2, index.reshape(-1))
    shape = list(chunks.shape)
    shape[-2:-1] = [n_chunks, chunk_size]
    return ChunkGrid(chunks.reshape(shape), chunk_size, pad_tail, n_frames)


def overlap_add(grid: ChunkGrid) -> torch.Tensor:
    """Invert segment_chunks exactly: [..., C, K, D] -> [..., N, D]."""
    values = grid.values
    n_chunks, chunk_size = values.shape[-3], values.shape[-2]
    if chunk_size != grid.chunk_size:
        raise CodecError(
            f"grid values have chunk size {chunk_size}, expected {grid.chunk_size}"
        )
    hop = grid.chunk_size // 2
    padded_len = (n_chunks - 1) * hop + chunk_size
    starts = torch.arange(n_chunks, device=values.device) * hop
    index = (starts[:, None] + torch.arange(chunk_size, device=values.device)).reshape(-1)

    flat = values.reshape(*values.shape[:-3], n_chunks * chunk_size, values.shape[-1])
    out_shape = list(values.shape[:-3]) + [padded_len, values.shape[-1]]
    out = values.new_zeros(out_shape)
    out.index_add_(-2, index, flat)

    counts = torch.zeros(padded_len, device=values.device, dtype=values.dtype)
    counts.index_add_(0, index, torch.ones_like(index, dtype=values.dtype))
    out = out / counts[:, None]
    return out[..., : grid.n_frames, :]
