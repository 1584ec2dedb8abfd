"""Full model: codec + separator + attractor network + clue network.

One separator backbone serves both inference modes: source rows come
either from inferred attractors (separation with unknown count) or from
pooled clue embeddings (clue-driven extraction).
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .attractors import AttractorNetwork
from .clues import ClueNetwork
from .codec import ChunkGrid, ConvCodec
from .config import GlobalConfig
from .separator import Separator


class SeparationModel(nn.Module):
    def __init__(self, cfg: GlobalConfig):
        super().__init__()
        d = cfg.embed_dim
        self.embed_dim = d
        self.sample_rate = cfg.codec.sample_rate
        self.codec = ConvCodec(d, cfg.codec.kernel_size, cfg.codec.stride)
        self.separator = Separator(
            d,
            cfg.separator.chunk_size,
            dual_path_layers=cfg.separator.dual_path_layers,
            triple_path_layers=cfg.separator.triple_path_layers,
            num_heads=cfg.separator.num_heads,
            ffn_mult=cfg.separator.ffn_mult,
        )
        self.attractor_net = AttractorNetwork(d)
        self.clue_net = ClueNetwork(
            d,
            num_classes=cfg.data.num_classes,
            vocab_size=cfg.clue.vocab_size,
            video_dim=cfg.clue.video_dim,
            num_heads=cfg.clue.num_heads,
            stub_seed=cfg.clue.stub_seed,
        )

    def analyze(self, mix: torch.Tensor) -> tuple[torch.Tensor, ChunkGrid, torch.Tensor]:
        """Mixtures [B, L] -> (features X [B, N, D], dual-path grid V,
        chunk summaries W [B, C, D])."""
        features = self.codec.encode(mix)
        grid, summaries = self.separator.dual_path_forward(features)
        return features, grid, summaries

    def estimates_from(
        self,
        features: torch.Tensor,
        grid: ChunkGrid,
        sources: torch.Tensor,
        length: int,
    ) -> torch.Tensor:
        """Source rows [B, J, D] -> estimated waveforms [B, J, length]."""
        masks = self.separator.emit_masks(grid, sources)  # [B, J, N, D]
        masked = features.unsqueeze(1) * masks
        b, j, n, d = masked.shape
        wavs = self.codec.decode(masked.reshape(b * j, n, d), length)
        return wavs.reshape(b, j, length)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


def build_model(cfg: GlobalConfig, init_seed: int | None = None) -> SeparationModel:
    """Construct a model with a deterministic parameter init."""
    if init_seed is not None:
        torch.manual_seed(init_seed)
    return SeparationModel(cfg)
