"""LSTM encoder-decoder attractor network.

Consumes the per-chunk summary sequence, emits one attractor embedding per
decode step (zero-vector decoder input, states seeded from the encoder's
final states) plus an existence probability per attractor. Inference stops
at the first probability <= theta; training decodes a fixed step count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn


class AttractorError(ValueError):
    """Raised for invalid attractor-network inputs."""


@dataclass
class AttractorSet:
    """Accepted attractors of one mixture plus the full decode trace.

    `attractors` holds exactly the accepted rows (count = inferred_count);
    `all_attractors` / `all_probs` keep every decoded step, including the
    one that failed the threshold, for fallback and diagnostics.
    """

    attractors: torch.Tensor  # [J_hat, D]
    existence_probs: torch.Tensor  # [J_hat]
    inferred_count: int
    flags: list[bool] = field(default_factory=list)  # per decoded step
    all_attractors: torch.Tensor | None = None
    all_probs: torch.Tensor | None = None


class AttractorNetwork(nn.Module):
    """LSTM encoder over chunk summaries; LSTM-cell decoder emits attractors.

    Hidden size equals the embedding dimension so attractors live in the
    same space as clue embeddings. Decoder hidden states are the
    attractors, hence every coordinate lies in (-1, 1).
    """

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.encoder = nn.LSTM(dim, dim, batch_first=True)
        self.decoder = nn.LSTMCell(dim, dim)
        self.existence = nn.Linear(dim, 1)

    def encode_sequence(self, summary: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """[B, C, D] -> final (hidden, cell) states, each [B, D]."""
        if summary.dim() != 3 or summary.shape[1] < 1:
            raise AttractorError(
                f"expected [B, C>=1, D] summary sequence, got {tuple(summary.shape)}"
            )
        _, (h, c) = self.encoder(summary)  # states: [1, B, D]
        return h[0], c[0]

    def decode_attractors(
        self, hidden: torch.Tensor, cell: torch.Tensor, steps: int
    ) -> torch.Tensor:
        """Run `steps` decoder steps with zero input -> attractors [B, S, D]."""
        if steps < 1:
            raise AttractorError(f"need at least one decode step, got {steps}")
        zero_in = hidden.new_zeros(hidden.shape[0], self.dim)
        outs = []
        h, c = hidden, cell
        for _ in range(steps):
            h, c = self.decoder(zero_in, (h, c))
            outs.append(h)
        return torch.stack(outs, dim=1)

    def existence_probability(self, attractors: torch.Tensor) -> torch.Tensor:
        """Sigmoid head over attractors [..., D] -> probabilities [...]."""
        return torch.sigmoid(self.existence(attractors).squeeze(-1))

    def run(self, summary: torch.Tensor, steps: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Fixed-step decode: [B, C, D] -> (attractors [B, S, D], probs [B, S])."""
        h, c = self.encode_sequence(summary)
        attractors = self.decode_attractors(h, c, steps)
        return attractors, self.existence_probability(attractors)

    @torch.no_grad()
    def infer_count(
        self, summary: torch.Tensor, theta: float, max_steps: int
    ) -> list[AttractorSet]:
        """Threshold-stopped decoding per item: [B, C, D] -> one set per item.

        An attractor is accepted while its probability exceeds theta; the
        count is the number of steps before the first rejection (capped at
        max_steps).
        """
        if not 0.0 < theta < 1.0:
            raise AttractorError(f"theta must lie in (0, 1), got {theta}")
        attractors, probs = self.run(summary, max_steps)
        out = []
        for b in range(summary.shape[0]):
            flags = (probs[b] > theta).tolist()
            count = 0
            while count < max_steps and flags[count]:
                count += 1
            decoded = max_steps if count == max_steps else count + 1
            out.append(
                AttractorSet(
                    attractors=attractors[b, :count],
                    existence_probs=probs[b, :count],
                    inferred_count=count,
                    flags=flags[:decoded],
                    all_attractors=attractors[b, :decoded],
                    all_probs=probs[b, :decoded],
                )
            )
        return out
