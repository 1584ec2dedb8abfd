"""Training objectives: PIT-SNR separation, counting BCE, and the
attractor-clue alignment pair (MSE + InfoNCE).

Permutation sums are evaluated over value-sorted terms so the PIT loss is
bitwise invariant to target reordering (the summed multiset is identical
either way).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import torch
import torch.nn.functional as F

SNR_EPS = 1e-8
BCE_EPS = 1e-7
SNR_CLAMP_DB = 30.0


class LossError(ValueError):
    """Raised for invalid loss inputs."""


@dataclass
class LossBreakdown:
    """All loss components of one item (or batch mean), plus the PIT match."""

    l_sep: torch.Tensor
    l_count: torch.Tensor
    l_mse: torch.Tensor
    l_infonce: torch.Tensor
    l_align: torch.Tensor
    l_total: torch.Tensor
    best_permutation: tuple[int, ...]

    def detached(self) -> dict[str, float]:
        return {
            "l_sep": float(self.l_sep.detach()),
            "l_count": float(self.l_count.detach()),
            "l_mse": float(self.l_mse.detach()),
            "l_infonce": float(self.l_infonce.detach()),
            "l_align": float(self.l_align.detach()),
            "l_total": float(self.l_total.detach()),
        }


def pairwise_snr_matrix(
    targets: torch.Tensor,
    estimates: torch.Tensor,
    eps: float = SNR_EPS,
    clamp_db: float = SNR_CLAMP_DB,
) -> torch.Tensor:
    """Per-pair SNR in dB: out[..., k, j] = snr(target k, estimate j).

    snr = 10 log10(||s||^2 / (||s_hat - s||^2 + eps)), clamped at clamp_db.
    The target and estimate counts may differ; lengths must match.
    """
    if (
        targets.shape[:-2] != estimates.shape[:-2]
        or targets.shape[-1] != estimates.shape[-1]
    ):
        raise LossError(
            f"target/estimate shape mismatch: {tuple(targets.shape)} vs "
            f"{tuple(estimates.shape)}"
        )
    s_pow = targets.pow(2).sum(-1)  # [..., J]
    diff = targets.unsqueeze(-2) - estimates.unsqueeze(-3)  # [..., K_t, J_e, T]
    err_pow = diff.pow(2).sum(-1)
    snr = 10.0 * torch.log10(s_pow.unsqueeze(-1) / (err_pow + eps))
    return snr.clamp(max=clamp_db)


def _permutation_table(n: int, device) -> torch.Tensor:
    return torch.tensor(list(permutations(range(n))), dtype=torch.long, device=device)


def pit_snr_batch(
    targets: torch.Tensor,
    estimates: torch.Tensor,
    eps: float = SNR_EPS,
    clamp_db: float = SNR_CLAMP_DB,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batched PIT loss over [B, J, T] tensors.

    Returns per-item losses [B] (negated best summed SNR) and the matching
    permutations [B, J], where perm[b, k] is the estimate index assigned to
    target k.
    """
    if targets.dim() != 3:
        raise LossError(f"expected [B, J, T], got {tuple(targets.shape)}")
    if targets.shape != estimates.shape:
        raise LossError(
            f"target/estimate shape mismatch: {tuple(targets.shape)} vs "
            f"{tuple(estimates.shape)}"
        )
    n_src = targets.shape[1]
    if n_src < 1:
        raise LossError("need at least one source")
    if n_src > 6:
        raise LossError(f"exhaustive permutation search capped at J=6, got {n_src}")
    snr = pairwise_snr_matrix(targets, estimates, eps=eps, clamp_db=clamp_db)
    perms = _permutation_table(n_src, targets.device)  # [P, J]
    # vals[b, p, k] = snr[b, k, perms[p, k]]
    gathered = snr.unsqueeze(1).expand(-1, perms.shape[0], -1, -1)
    idx = perms.unsqueeze(0).unsqueeze(-1).expand(snr.shape[0], -1, -1, 1)
    vals = gathered.gather(3, idx).squeeze(3)  # [B, P, J]
    # sort before summing: the summed multiset is order-canonical, so the
    # loss is bitwise invariant under target permutations
    scores = vals.sort(dim=-1).values.sum(-1)  # [B, P]
    best, best_idx = scores.max(dim=1)
    return -best, perms[best_idx]


def pit_snr_loss(
    targets: torch.Tensor,
    estimates: torch.Tensor,
    eps: float = SNR_EPS,
    clamp_db: float = SNR_CLAMP_DB,
) -> tuple[torch.Tensor, tuple[int, ...]]:
    """PIT separation loss for one item: targets/estimates [J, T]."""
    if targets.dim() != 2:
        raise LossError(f"expected [J, T] waveform sets, got {tuple(targets.shape)}")
    losses, perms = pit_snr_batch(
        targets.unsqueeze(0), estimates.unsqueeze(0), eps=eps, clamp_db=clamp_db
    )
    return losses[0], tuple(int(i) for i in perms[0])


def counting_bce(
    labels: torch.Tensor, probs: torch.Tensor, eps: float = BCE_EPS
) -> torch.Tensor:
    """Binary cross-entropy summed over decoder steps.

    labels/probs share shape [..., S]; batched inputs return per-item sums.
    """
    if labels.shape != probs.shape:
        raise LossError(
            f"label/prob shape mismatch: {tuple(labels.shape)} vs {tuple(probs.shape)}"
        )
    y = labels.to(probs.dtype)
    p = probs.clamp(eps, 1.0 - eps)
    return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum(-1)


def align_mse(
    attractors: torch.Tensor, clues: torch.Tensor, perm
) -> torch.Tensor:
    """Mean squared difference between matched attractor/clue rows.

    perm[m] is the attractor index paired with clue m (the PIT match).
    """
    idx = torch.as_tensor(perm, dtype=torch.long, device=attractors.device)
    return (attractors.index_select(0, idx) - clues).pow(2).mean()


def align_infonce(
    attractors: torch.Tensor,
    clues: torch.Tensor,
    perm,
    tau: float = 0.1,
) -> torch.Tensor:
    """Contrastive alignment over L2-normalized rows at temperature tau.

    For each attractor the positive is its PIT-matched clue; the other
    clues of the same mixture act as negatives.
    """
    if tau <= 0:
        raise LossError(f"temperature must be positive, got {tau}")
    n = attractors.shape[0]
    za = F.normalize(attractors, dim=-1)
    zc = F.normalize(clues, dim=-1)
    sims = za @ zc.T / tau  # [N_attr, N_clue]
    idx = torch.as_tensor(perm, dtype=torch.long, device=attractors.device)
    # perm maps clue m -> attractor perm[m]; invert to get each attractor's clue
    inv = torch.empty_like(idx)
    inv[idx] = torch.arange(n, device=idx.device)
    logp = F.log_softmax(sims, dim=1)
    return -logp[torch.arange(n, device=idx.device), inv].mean()


def total_loss(
    l_sep: torch.Tensor,
    l_count: torch.Tensor,
    l_mse: torch.Tensor,
    l_infonce: torch.Tensor,
    stage: int,
    best_permutation: tuple[int, ...],
    lambda_count: float = 1.0,
    lambda_align: float = 1.0,
) -> LossBreakdown:
    """Combine components per training stage (stage 2 adds alignment)."""
    if stage not in (1, 2):
        raise LossError(f"stage must be 1 or 2, got {stage}")
    l_align = l_mse + l_infonce
    total = l_sep + lambda_count * l_count
    if stage == 2:
        total = total + lambda_align * l_align
    return LossBreakdown(
        l_sep=l_sep,
        l_count=l_count,
        l_mse=l_mse,
        l_infonce=l_infonce,
        l_align=l_align,
        l_total=total,
        best_permutation=best_permutation,
    )
