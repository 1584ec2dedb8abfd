"""User-facing inference: clue-free separation (attractor-driven, inferred
source count) and clue-driven extraction, sharing one separator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .audio import Waveform
from .clues import ClueBundle
from .metrics import cosine_similarity_matrix, score_item
from .model import SeparationModel


class NoSourceDetected(RuntimeError):
    """Separation found no source (first existence probability <= theta)."""


class InferenceError(ValueError):
    """Raised for invalid inference requests."""


@dataclass
class SeparationResult:
    estimates: list[Waveform]
    inferred_count: int
    origins: list[str]  # per estimate: "attractor" | "clue" | "attractor-fallback"
    existence_probs: list[float] | None = None


def _prepare(model: SeparationModel, mixture: Waveform):
    samples = np.asarray(mixture.samples, dtype=np.float32)
    dtype = next(model.parameters()).dtype
    mix = torch.from_numpy(samples).unsqueeze(0).to(dtype)
    features, grid, summaries = model.analyze(mix)
    return samples.shape[-1], features, grid, summaries


@torch.no_grad()
def separate(
    model: SeparationModel,
    mixture: Waveform,
    count_override: int | None = None,
    theta: float = 0.5,
    max_steps: int = 6,
    strict: bool = False,
) -> SeparationResult:
    """Separate all sources, inferring the count unless overridden.

    With `strict` a zero inferred count raises NoSourceDetected; otherwise
    the first attractor is used as a single-source fallback.
    """
    model.eval()
    length, features, grid, summaries = _prepare(model, mixture)
    origin = "attractor"
    if count_override is not None:
        if count_override < 1:
            raise InferenceError(f"count override must be >= 1, got {count_override}")
        attractors, probs = model.attractor_net.run(summaries, count_override)
        sources = attractors
        prob_list = [float(p) for p in probs[0]]
        count = count_override
    else:
        result = model.attractor_net.infer_count(summaries, theta, max_steps)[0]
        if result.inferred_count == 0:
            if strict:
                raise NoSourceDetected(
                    f"no source detected (first probability "
                    f"{float(result.all_probs[0]):.4f} <= theta {theta})"
                )
            sources = result.all_attractors[:1].unsqueeze(0)
            prob_list = [float(result.all_probs[0])]
            count = 1
            origin = "attractor-fallback"
        else:
            sources = result.attractors.unsqueeze(0)
            prob_list = [float(p) for p in result.existence_probs]
            count = result.inferred_count
    est = model.estimates_from(features, grid, sources, length)[0]
    return SeparationResult(
        estimates=[Waveform(w.numpy(), mixture.sample_rate) for w in est],
        inferred_count=count,
        origins=[origin] * count,
        existence_probs=prob_list,
    )


@torch.no_grad()
def extract(
    model: SeparationModel, mixture: Waveform, bundles: list[ClueBundle]
) -> SeparationResult:
    """Extract one source per clue bundle; estimates follow bundle order."""
    if not bundles:
        raise InferenceError("extraction needs at least one clue bundle")
    for i, b in enumerate(bundles):
        if not b.present():
            raise InferenceError(f"clue bundle {i} has no modalities")
    model.eval()
    length, features, grid, summaries = _prepare(model, mixture)
    pooled = model.clue_net.embed_batch(summaries, [bundles])  # [1, J, D]
    est = model.estimates_from(features, grid, pooled, length)[0]
    return SeparationResult(
        estimates=[Waveform(w.numpy(), mixture.sample_rate) for w in est],
        inferred_count=len(bundles),
        origins=["clue"] * len(bundles),
        existence_probs=None,
    )


@torch.no_grad()
def hybrid_consistency_check(
    model: SeparationModel,
    mixture: Waveform,
    bundles: list[ClueBundle],
    references: np.ndarray,
) -> dict:
    """Run both modes on one labeled mixture and compare them per source.

    references: [J, T] ground-truth stems in bundle order. The record pairs
    each reference's SS and TSE scores and reports the cosine similarity
    between the attractor and clue embedding matched to it.
    """
    references = np.asarray(references, dtype=np.float32)
    if references.shape[0] != len(bundles):
        raise InferenceError("need one reference per clue bundle")
    model.eval()
    length, features, grid, summaries = _prepare(model, mixture)
    n_src = len(bundles)
    attractors, _ = model.attractor_net.run(summaries, n_src)
    pooled = model.clue_net.embed_batch(summaries, [bundles])
    est_ss = model.estimates_from(features, grid, attractors, length)[0].numpy()
    est_tse = model.estimates_from(features, grid, pooled, length)[0].numpy()
    mix_np = np.asarray(mixture.samples, dtype=np.float32)
    score_ss = score_item(references, est_ss, mix_np)
    score_tse = score_item(references, est_tse, mix_np)
    sims = cosine_similarity_matrix(attractors[0].numpy(), pooled[0].numpy())
    rows = []
    for k in range(n_src):
        a_idx = score_ss.permutation[k]
        c_idx = score_tse.permutation[k]
        rows.append(
            {
                "source": k,
                "snri_ss": score_ss.snri_per_source[k],
                "snri_tse": score_tse.snri_per_source[k],
                "delta_snri": score_tse.snri_per_source[k] - score_ss.snri_per_source[k],
                "attractor_clue_cosine": float(sims[a_idx, c_idx]),
            }
        )
    return {
        "rows": rows,
        "mean_abs_delta_snri": float(
            np.mean([abs(r["delta_snri"]) for r in rows])
        ),
    }
