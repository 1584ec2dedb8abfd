"""Masking network: dual-path blocks over chunked features, sequence
aggregation into per-chunk summaries, source-conditioned modulation, a
triple-path refinement block, and the gated nonnegative mask head.

No block uses positional encodings, so the network is equivariant to
chunk reordering (dual path) and to reordering of the source
representation rows (triple path onward).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .codec import ChunkGrid, overlap_add, segment_chunks


class SeparatorError(ValueError):
    """Raised for invalid separator inputs."""


class TransformerBlock(nn.Module):
    """Pre-norm self-attention + feed-forward, residual around each."""

    def __init__(self, dim: int, num_heads: int, ffn_mult: int = 4):
        super().__init__()
        if dim % num_heads != 0:
            raise SeparatorError(f"num_heads {num_heads} must divide dim {dim}")
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, num_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim),
            nn.ReLU(),
            nn.Linear(ffn_mult * dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.ffn(self.norm2(x))


class DualPathLayer(nn.Module):
    """Intra-chunk then inter-chunk attention over [B, C, K, D]."""

    def __init__(self, dim: int, num_heads: int, ffn_mult: int = 4):
        super().__init__()
        self.intra = TransformerBlock(dim, num_heads, ffn_mult)
        self.inter = TransformerBlock(dim, num_heads, ffn_mult)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, k, d = x.shape
        h = self.intra(x.reshape(b * c, k, d)).reshape(b, c, k, d)
        h = h.permute(0, 2, 1, 3).reshape(b * k, c, d)
        h = self.inter(h).reshape(b, k, c, d).permute(0, 2, 1, 3)
        return h


class TriplePathLayer(nn.Module):
    """Intra-chunk, inter-chunk, then inter-channel attention on
    [B, J, C, K, D]; the channel axis is the per-source axis."""

    def __init__(self, dim: int, num_heads: int, ffn_mult: int = 4):
        super().__init__()
        self.intra = TransformerBlock(dim, num_heads, ffn_mult)
        self.inter = TransformerBlock(dim, num_heads, ffn_mult)
        self.channel = TransformerBlock(dim, num_heads, ffn_mult)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, j, c, k, d = x.shape
        h = self.intra(x.reshape(b * j * c, k, d)).reshape(b, j, c, k, d)
        h = h.permute(0, 1, 3, 2, 4).reshape(b * j * k, c, d)
        h = self.inter(h).reshape(b, j, k, c, d).permute(0, 1, 3, 2, 4)
        h = h.permute(0, 2, 3, 1, 4).reshape(b * c * k, j, d)
        h = self.channel(h).reshape(b, c, k, j, d).permute(0, 3, 1, 2, 4)
        return h


class SequenceAggregator(nn.Module):
    """Per-chunk summaries from the dual-path layer outputs.

    A softmax-normalized scalar per layer mixes the layer outputs, then a
    learned scoring vector attention-pools each chunk's K positions.
    """

    def __init__(self, dim: int, n_layers: int):
        super().__init__()
        self.layer_logits = nn.Parameter(torch.zeros(n_layers))
        self.score = nn.Linear(dim, 1, bias=False)

    def forward(self, layer_outputs: list[torch.Tensor]) -> torch.Tensor:
        weights = torch.softmax(self.layer_logits, dim=0)
        mixed = sum(w * out for w, out in zip(weights, layer_outputs))
        attn = torch.softmax(self.score(mixed).squeeze(-1), dim=-1)  # [B, C, K]
        return (attn.unsqueeze(-1) * mixed).sum(dim=-2)  # [B, C, D]


class MaskHead(nn.Module):
    """PReLU -> overlap-add -> gated layer -> ReLU-linear mask."""

    def __init__(self, dim: int):
        super().__init__()
        self.prelu = nn.PReLU()
        self.gate_value = nn.Linear(dim, dim)
        self.gate = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, grid: ChunkGrid, refined: torch.Tensor) -> torch.Tensor:
        """refined [B, J, C, K, D] -> masks [B, J, N, D], all >= 0."""
        z = self.prelu(refined)
        frames = overlap_add(grid.with_values(z))  # [B, J, N, D]
        gated = torch.tanh(self.gate_value(frames)) * torch.sigmoid(self.gate(frames))
        return F.relu(self.out(gated))


class Separator(nn.Module):
    """Full masking network from encoded features and source rows."""

    def __init__(
        self,
        dim: int,
        chunk_size: int,
        dual_path_layers: int = 2,
        triple_path_layers: int = 1,
        num_heads: int = 4,
        ffn_mult: int = 4,
    ):
        super().__init__()
        self.dim = dim
        self.chunk_size = chunk_size
        self.pre_norm = nn.LayerNorm(dim)
        self.pre_proj = nn.Linear(dim, dim)
        self.dual_layers = nn.ModuleList(
            DualPathLayer(dim, num_heads, ffn_mult) for _ in range(dual_path_layers)
        )
        self.aggregator = SequenceAggregator(dim, dual_path_layers)
        self.triple_layers = nn.ModuleList(
            TriplePathLayer(dim, num_heads, ffn_mult) for _ in range(triple_path_layers)
        )
        self.mask_head = MaskHead(dim)

    def run_dual_path(self, grid: ChunkGrid) -> tuple[ChunkGrid, torch.Tensor]:
        """Dual-path layers + aggregation on an existing grid."""
        x = grid.values
        outputs = []
        for layer in self.dual_layers:
            x = layer(x)
            outputs.append(x)
        summaries = self.aggregator(outputs)
        return grid.with_values(x), summaries

    def dual_path_forward(self, features: torch.Tensor) -> tuple[ChunkGrid, torch.Tensor]:
        """Features [B, N, D] -> (chunked output V, summaries W [B, C, D])."""
        h = self.pre_proj(self.pre_norm(features))
        return self.run_dual_path(segment_chunks(h, self.chunk_size))

    @staticmethod
    def modulate(values: torch.Tensor, sources: torch.Tensor) -> torch.Tensor:
        """V [B, C, K, D] x A [B, J, D] -> Y [B, J, C, K, D] elementwise."""
        if sources.dim() != 3 or sources.shape[1] < 1:
            raise SeparatorError(
                "need at least one source representation row "
                f"(got shape {tuple(sources.shape)})"
            )
        return values.unsqueeze(1) * sources[:, :, None, None, :]

    def modulate_and_refine(
        self, grid: ChunkGrid, sources: torch.Tensor
    ) -> torch.Tensor:
        """Modulated features through the triple-path block: [B, J, C, K, D]."""
        z = self.modulate(grid.values, sources)
        for layer in self.triple_layers:
            z = layer(z)
        return z

    def emit_masks(self, grid: ChunkGrid, sources: torch.Tensor) -> torch.Tensor:
        """Source-conditioned nonnegative masks [B, J, N, D]."""
        refined = self.modulate_and_refine(grid, sources)
        return self.mask_head(grid, refined)
