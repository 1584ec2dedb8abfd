"""Multi-modal clue encoding and attention fusion.

Any nonempty subset of {tag, text, video} clues is encoded per modality,
concatenated along time, and fused against the separator's chunk-summary
sequence by cross-attention into one clue embedding per target source.

Text and video encoders are frozen random maps seeded once from config
(stand-ins for large pre-trained encoders); only the tag table trains.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

MODALITIES = ("tag", "text", "video")

# fixed cycle of the 7 nonempty modality subsets used in stage-2 training
MODALITY_CYCLE: tuple[tuple[str, ...], ...] = (
    ("tag",),
    ("text",),
    ("video",),
    ("tag", "text"),
    ("tag", "video"),
    ("text", "video"),
    ("tag", "text", "video"),
)


class ClueError(ValueError):
    """Raised for invalid clue payloads."""


@dataclass
class ClueBundle:
    """Optional per-modality clue payloads describing one target source."""

    tag: int | None = None
    text: list[int] | None = None
    video: np.ndarray | None = None  # [T_v, video_dim]
    target_class: int | None = None
    quality: float | None = None

    def present(self) -> tuple[str, ...]:
        mods = []
        if self.tag is not None:
            mods.append("tag")
        if self.text is not None:
            mods.append("text")
        if self.video is not None:
            mods.append("video")
        return tuple(mods)

    def restricted(self, subset) -> "ClueBundle":
        """Copy keeping only the modalities in `subset`."""
        keep = set(subset)
        if not keep & set(self.present()):
            raise ClueError(
                f"restriction {sorted(keep)} removes every present modality"
            )
        return ClueBundle(
            tag=self.tag if "tag" in keep else None,
            text=list(self.text) if self.text is not None and "text" in keep else None,
            video=self.video.copy() if self.video is not None and "video" in keep else None,
            target_class=self.target_class,
            quality=self.quality,
        )

    def to_json_dict(self) -> dict:
        return {
            "tag": self.tag,
            "text": list(self.text) if self.text is not None else None,
            "video": self.video.tolist() if self.video is not None else None,
            "target_class": self.target_class,
            "quality": self.quality,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ClueBundle":
        video = data.get("video")
        return cls(
            tag=data.get("tag"),
            text=list(data["text"]) if data.get("text") is not None else None,
            video=np.asarray(video, dtype=np.float32) if video is not None else None,
            target_class=data.get("target_class"),
            quality=data.get("quality"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClueBundle":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass
class ClueEmbedding:
    """Fused clue sequence [T_a, D] and its time-mean pooled vector [D]."""

    fused_sequence: torch.Tensor
    pooled: torch.Tensor


class ClueNetwork(nn.Module):
    """Encode clue bundles into the attractor embedding space.

    tag -> trainable embedding row; text -> rows of a frozen random token
    table; video -> frames through a frozen random projection. The
    concatenated sequence is fused by cross-attention with the chunk
    summaries as queries (no residual from the query path), then
    layer-normalized; pooling is the time mean.
    """

    def __init__(
        self,
        dim: int,
        num_classes: int,
        vocab_size: int,
        video_dim: int,
        num_heads: int,
        stub_seed: int,
    ):
        super().__init__()
        self.dim = dim
        self.vocab_size = vocab_size
        self.video_dim = video_dim
        self.tag_table = nn.Embedding(num_classes, dim)
        gen = torch.Generator().manual_seed(stub_seed)
        self.register_buffer(
            "text_table", torch.randn(vocab_size, dim, generator=gen)
        )
        self.register_buffer(
            "video_proj", torch.randn(video_dim, dim, generator=gen) * video_dim**-0.5
        )
        self.fusion = nn.MultiheadAttention(dim, num_heads, batch_first=True)
        self.out_norm = nn.LayerNorm(dim)

    def encode_modalities(self, bundle: ClueBundle) -> dict[str, torch.Tensor]:
        """Per-modality embeddings: text [T_t, D], video [T_v, D], tag [1, D]."""
        if not bundle.present():
            raise ClueError("no clue provided: bundle has no modalities")
        parts: dict[str, torch.Tensor] = {}
        if bundle.tag is not None:
            if not 0 <= bundle.tag < self.tag_table.num_embeddings:
                raise ClueError(f"tag id {bundle.tag} outside class table")
            idx = torch.tensor([bundle.tag], device=self.text_table.device)
            parts["tag"] = self.tag_table(idx)
        if bundle.text is not None:
            ids = torch.as_tensor(bundle.text, dtype=torch.long, device=self.text_table.device)
            if ids.numel() == 0:
                raise ClueError("text clue must contain at least one token")
            if ids.min() < 0 or ids.max() >= self.vocab_size:
                raise ClueError("text token id outside vocabulary")
            parts["text"] = self.text_table[ids]
        if bundle.video is not None:
            frames = torch.as_tensor(
                np.asarray(bundle.video, dtype=np.float32),
                device=self.video_proj.device,
            ).to(self.video_proj.dtype)
            if frames.dim() != 2 or frames.shape[1] != self.video_dim:
                raise ClueError(
                    f"video clue must be [T_v, {self.video_dim}], got {tuple(frames.shape)}"
                )
            parts["video"] = frames @ self.video_proj
        return parts

    def concat_clues(self, parts: dict[str, torch.Tensor]) -> torch.Tensor:
        """Concatenate present modalities along time: text; video; tag."""
        if not parts:
            raise ClueError("no clue provided")
        ordered = [parts[m] for m in ("text", "video", "tag") if m in parts]
        return torch.cat(ordered, dim=0)

    def fuse_clues(
        self,
        summary: torch.Tensor,
        clue_seq: torch.Tensor,
        key_padding_mask: torch.Tensor | None = None,
    ) -> ClueEmbedding:
        """Cross-attend summary [C, D] (query) against clue_seq [T, D]."""
        fused, _ = self.fusion(
            summary.unsqueeze(0),
            clue_seq.unsqueeze(0),
            clue_seq.unsqueeze(0),
            key_padding_mask=key_padding_mask,
            need_weights=False,
        )
        fused = self.out_norm(fused[0])
        return ClueEmbedding(fused_sequence=fused, pooled=fused.mean(dim=0))

    def embed_bundle(self, summary: torch.Tensor, bundle: ClueBundle) -> ClueEmbedding:
        """Full per-bundle path: encode, concatenate, fuse with the summary."""
        return self.fuse_clues(summary, self.concat_clues(self.encode_modalities(bundle)))

    def embed_batch(
        self, summary: torch.Tensor, bundles: list[list[ClueBundle]]
    ) -> torch.Tensor:
        """Batched pooled embeddings.

        summary: [B, C, D]; bundles: per item, J bundles. Returns [B, J, D].
        Bundles may present different modality subsets; sequences are padded
        and masked out of the attention softmax.
        """
        n_items = summary.shape[0]
        if len(bundles) != n_items:
            raise ClueError("one bundle list per batch item required")
        n_src = len(bundles[0])
        if n_src < 1 or any(len(bs) != n_src for bs in bundles):
            raise ClueError("every item must carry the same nonzero bundle count")
        seqs = [
            self.concat_clues(self.encode_modalities(b)) for bs in bundles for b in bs
        ]
        max_len = max(s.shape[0] for s in seqs)
        keys = summary.new_zeros(len(seqs), max_len, self.dim)
        mask = torch.ones(len(seqs), max_len, dtype=torch.bool, device=summary.device)
        for i, s in enumerate(seqs):
            keys[i, : s.shape[0]] = s
            mask[i, : s.shape[0]] = False
        queries = summary.repeat_interleave(n_src, dim=0)  # [B*J, C, D]
        fused, _ = self.fusion(
            queries, keys, keys, key_padding_mask=mask, need_weights=False
        )
        fused = self.out_norm(fused)
        pooled = fused.mean(dim=1)  # [B*J, D]
        return pooled.reshape(n_items, n_src, self.dim)
