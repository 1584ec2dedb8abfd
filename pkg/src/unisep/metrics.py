"""Evaluation metrics: SNR / SI-SNR (dB), SNR improvement, and the
count-mismatch scoring protocol (first-k truncation / zero-fill).

Computed in float64 numpy, independent of the torch training losses.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

SNR_EPS = 1e-8
SNR_CLAMP_DB = 30.0


class MetricError(ValueError):
    """Raised for invalid metric inputs."""


def snr(ref, est, eps: float = SNR_EPS, clamp_db: float = SNR_CLAMP_DB) -> float:
    """SNR of `est` against reference `ref`, in dB, clamped at clamp_db."""
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise MetricError(f"length mismatch: {ref.shape} vs {est.shape}")
    ref_pow = float(np.sum(ref**2))
    if ref_pow == 0.0:
        raise MetricError("reference signal is all zero")
    err_pow = float(np.sum((est - ref) ** 2))
    return min(10.0 * np.log10(ref_pow / (err_pow + eps)), clamp_db)


def si_snr(ref, est, eps: float = SNR_EPS, clamp_db: float = SNR_CLAMP_DB) -> float:
    """Scale-invariant SNR: est is projected onto ref before the ratio."""
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise MetricError(f"length mismatch: {ref.shape} vs {est.shape}")
    ref_pow = float(np.sum(ref**2))
    if ref_pow == 0.0:
        raise MetricError("reference signal is all zero")
    alpha = float(np.dot(est, ref)) / ref_pow
    target = alpha * ref
    noise = est - target
    return min(
        10.0 * np.log10(float(np.sum(target**2)) / (float(np.sum(noise**2)) + eps)),
        clamp_db,
    )


@dataclass
class ItemScore:
    """Per-item separation scores under the count-mismatch protocol."""

    snri_per_source: list[float]
    si_snri_per_source: list[float]
    permutation: tuple[int, ...]  # estimate index matched to each target
    n_targets: int
    n_estimates: int

    @property
    def mean_snri(self) -> float:
        return float(np.mean(self.snri_per_source))

    @property
    def mean_si_snri(self) -> float:
        return float(np.mean(self.si_snri_per_source))


def align_estimates(targets: np.ndarray, estimates: np.ndarray) -> np.ndarray:
    """Apply the count-mismatch rules: keep the first k = J estimates when
    over-estimated, pad with silence when under-estimated."""
    n_targets = targets.shape[0]
    if estimates.shape[0] > n_targets:
        return estimates[:n_targets]
    if estimates.shape[0] < n_targets:
        pad = np.zeros((n_targets - estimates.shape[0], targets.shape[1]), targets.dtype)
        if estimates.size == 0:
            return pad
        return np.concatenate([estimates, pad], axis=0)
    return estimates


def score_item(
    targets: np.ndarray,
    estimates: np.ndarray,
    mixture: np.ndarray,
    eps: float = SNR_EPS,
    clamp_db: float = SNR_CLAMP_DB,
) -> ItemScore:
    """Score one mixture: PIT over the aligned estimate set, then per-source
    SNRi = snr(target, estimate) - snr(target, mixture), and SI-SNRi likewise.
    """
    targets = np.asarray(targets, dtype=np.float64)
    estimates = np.asarray(estimates, dtype=np.float64)
    mixture = np.asarray(mixture, dtype=np.float64)
    n_targets, n_estimates = targets.shape[0], estimates.shape[0]
    if n_targets < 1:
        raise MetricError("need at least one target")
    if n_targets > 6:
        raise MetricError("exhaustive permutation search capped at 6 sources")
    aligned = align_estimates(targets, estimates)

    pair_snr = np.array(
        [[snr(t, e, eps, clamp_db) for e in aligned] for t in targets]
    )
    best, best_perm = -np.inf, None
    for perm in permutations(range(n_targets)):
        # sorted sum: bitwise invariant to target ordering
        score = float(np.sum(np.sort([pair_snr[k, perm[k]] for k in range(n_targets)])))
        if score > best:
            best, best_perm = score, perm

    snri, si_snri = [], []
    for k in range(n_targets):
        est = aligned[best_perm[k]]
        mix_snr = snr(targets[k], mixture, eps, clamp_db)
        mix_si = si_snr(targets[k], mixture, eps, clamp_db)
        snri.append(pair_snr[k, best_perm[k]] - mix_snr)
        si_snri.append(si_snr(targets[k], est, eps, clamp_db) - mix_si)
    return ItemScore(
        snri_per_source=snri,
        si_snri_per_source=si_snri,
        permutation=best_perm,
        n_targets=n_targets,
        n_estimates=n_estimates,
    )


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities between rows of a and rows of b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    an = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    bn = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-12)
    return an @ bn.T
