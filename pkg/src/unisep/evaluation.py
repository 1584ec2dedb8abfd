"""Evaluation protocol: separation scoring in three modes, source-counting
accuracy, attractor-clue matching accuracy, and embedding export.

Count mismatches follow the first-k / zero-fill rules in metrics.score_item;
all reported aggregates are plain means of the per-item values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import GlobalConfig
from .metrics import cosine_similarity_matrix, score_item
from .model import SeparationModel
from .synth import DataStore, ManifestRecord

REPORT_SCHEMA_VERSION = 1

MODES = ("ss-fixed-count", "ss-predicted-count", "tse")


class EvalError(ValueError):
    """Raised for invalid evaluation requests."""


@dataclass
class ConditionResult:
    """Aggregate + per-item scores of one (mode, split, order, modalities)."""

    mode: str
    split: str
    mix_order: int
    modalities: list[str] | None
    item_count: int
    mean_snri: float
    mean_si_snri: float
    per_item: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "split": self.split,
            "mix_order": self.mix_order,
            "modalities": self.modalities,
            "item_count": self.item_count,
            "mean_snri": self.mean_snri,
            "mean_si_snri": self.mean_si_snri,
            "per_item": self.per_item,
        }


@dataclass
class EvalReport:
    conditions: list[ConditionResult] = field(default_factory=list)
    counting: dict = field(default_factory=dict)
    matching: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_json_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "info": self.info,
            "conditions": [c.to_json_dict() for c in self.conditions],
            "counting": self.counting,
            "matching": self.matching,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")
        return path

    def write_csv(self, path: str | Path) -> Path:
        """Delimited per-item scores: one row per (condition, item)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write("mode,split,mix_order,modalities,item_id,snri_db,si_snri_db,n_estimates\n")
            for cond in self.conditions:
                mods = "+".join(cond.modalities) if cond.modalities else ""
                for row in cond.per_item:
                    fh.write(
                        f"{cond.mode},{cond.split},{cond.mix_order},{mods},"
                        f"{row['id']},{row['snri']:.4f},{row['si_snri']:.4f},"
                        f"{row['n_estimates']}\n"
                    )
        return path


def _analyze_numpy(model: SeparationModel, mixture: np.ndarray):
    mix = torch.from_numpy(np.asarray(mixture, dtype=np.float32)).unsqueeze(0)
    return mix, *model.analyze(mix)


@torch.no_grad()
def fixed_count_snri(
    model: SeparationModel,
    store: DataStore,
    records: list[ManifestRecord],
    batch_size: int = 16,
) -> float:
    """Mean oracle-count SNRi over `records`, batched for speed (used as the
    validation metric during training)."""
    from .losses import pairwise_snr_matrix, pit_snr_batch

    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    by_order: dict[int, list[ManifestRecord]] = {}
    for rec in records:
        by_order.setdefault(rec.mix_order, []).append(rec)
    for order in sorted(by_order):
        group = by_order[order]
        for start in range(0, len(group), batch_size):
            items = [store.load(r) for r in group[start : start + batch_size]]
            mix = torch.from_numpy(np.stack([it.mixture for it in items]))
            targets = torch.from_numpy(np.stack([it.sources for it in items]))
            features, grid, summaries = model.analyze(mix)
            attractors, _ = model.attractor_net.run(summaries, order)
            est = model.estimates_from(features, grid, attractors, mix.shape[-1])
            neg_best, perms = pit_snr_batch(targets, est)
            mix_snr = pairwise_snr_matrix(targets, mix.unsqueeze(1))[:, :, 0]
            # best summed SNR minus the mixture SNR sum = summed SNRi
            snri_sum = (-neg_best) - mix_snr.sum(dim=1)
            total += float(snri_sum.sum()) / order
            count += len(items)
    if was_training:
        model.train()
    return total / max(count, 1)


@torch.no_grad()
def _item_estimates(
    model: SeparationModel,
    item,
    mode: str,
    modalities: list[str] | None,
    theta: float,
    max_steps: int,
) -> tuple[np.ndarray, int]:
    """Run one inference mode on one item -> (estimates [J_hat, T], J_hat)."""
    length = item.mixture.shape[-1]
    mix, features, grid, summaries = _analyze_numpy(model, item.mixture)
    n_src = item.sources.shape[0]
    if mode == "ss-fixed-count":
        sources, _ = model.attractor_net.run(summaries, n_src)
    elif mode == "ss-predicted-count":
        result = model.attractor_net.infer_count(summaries, theta, max_steps)[0]
        if result.inferred_count == 0:
            return np.zeros((0, length), dtype=np.float32), 0
        sources = result.attractors.unsqueeze(0)
    elif mode == "tse":
        bundles = item.bundles
        if modalities is not None:
            bundles = [b.restricted(modalities) for b in bundles]
        pooled = model.clue_net.embed_batch(summaries, [bundles])
        sources = pooled
    else:
        raise EvalError(f"unknown mode: {mode!r} (choose from {MODES})")
    est = model.estimates_from(features, grid, sources, length)
    return est[0].numpy(), sources.shape[1]


def evaluate_separation(
    model: SeparationModel,
    store: DataStore,
    mode: str,
    split: str,
    mix_order: int,
    cfg: GlobalConfig,
    modalities: list[str] | None = None,
    max_items: int | None = None,
) -> ConditionResult:
    """Score one evaluation condition; returns aggregate + per-item rows."""
    if mode not in MODES:
        raise EvalError(f"unknown mode: {mode!r} (choose from {MODES})")
    records = store.by_split(split, mix_order)
    if max_items is not None:
        records = records[:max_items]
    if not records:
        raise EvalError(f"no items for split={split!r} mix_order={mix_order}")
    model.eval()
    per_item = []
    for rec in records:
        item = store.load(rec)
        est, n_est = _item_estimates(
            model, item, mode, modalities, cfg.eda.theta, cfg.eda.max_steps
        )
        score = score_item(
            item.sources, est, item.mixture,
            eps=cfg.loss.snr_eps, clamp_db=cfg.loss.snr_clamp_db,
        )
        per_item.append(
            {
                "id": rec.item_id,
                "snri": score.mean_snri,
                "si_snri": score.mean_si_snri,
                "n_estimates": n_est,
            }
        )
    return ConditionResult(
        mode=mode,
        split=split,
        mix_order=mix_order,
        modalities=list(modalities) if modalities else None,
        item_count=len(per_item),
        mean_snri=float(np.mean([r["snri"] for r in per_item])),
        mean_si_snri=float(np.mean([r["si_snri"] for r in per_item])),
        per_item=per_item,
    )


@torch.no_grad()
def counting_accuracy(
    model: SeparationModel,
    store: DataStore,
    split: str,
    mix_order: int,
    cfg: GlobalConfig,
    max_items: int | None = None,
) -> dict:
    """Fraction of items whose inferred count equals the true source count."""
    records = store.by_split(split, mix_order)
    if max_items is not None:
        records = records[:max_items]
    if not records:
        raise EvalError(f"no items for split={split!r} mix_order={mix_order}")
    model.eval()
    correct, confusion = 0, {}
    batch = cfg.eval.batch_size
    for start in range(0, len(records), batch):
        items = [store.load(r) for r in records[start : start + batch]]
        mix = torch.from_numpy(np.stack([it.mixture for it in items]))
        _, _, summaries = model.analyze(mix)
        results = model.attractor_net.infer_count(
            summaries, cfg.eda.theta, cfg.eda.max_steps
        )
        for item, res in zip(items, results):
            true_j = item.sources.shape[0]
            correct += int(res.inferred_count == true_j)
            confusion[str(res.inferred_count)] = confusion.get(str(res.inferred_count), 0) + 1
    return {
        "split": split,
        "mix_order": mix_order,
        "accuracy": correct / len(records),
        "item_count": len(records),
        "predicted_count_histogram": confusion,
    }


@torch.no_grad()
def matching_accuracy(
    model: SeparationModel,
    store: DataStore,
    split: str,
    mix_order: int,
    cfg: GlobalConfig,
    max_items: int | None = None,
) -> dict:
    """Attractor-to-clue classification accuracy by maximal cosine similarity.

    Each attractor's ground-truth class comes from the separation PIT match
    of the oracle-count estimates; its prediction is the class of the most
    similar clue embedding within the item.
    """
    records = store.by_split(split, mix_order)
    if max_items is not None:
        records = records[:max_items]
    if not records:
        raise EvalError(f"no items for split={split!r} mix_order={mix_order}")
    model.eval()
    correct, total = 0, 0
    for rec in records:
        item = store.load(rec)
        mix, features, grid, summaries = _analyze_numpy(model, item.mixture)
        n_src = item.sources.shape[0]
        attractors, _ = model.attractor_net.run(summaries, n_src)
        est = model.estimates_from(features, grid, attractors, item.mixture.shape[-1])
        score = score_item(
            item.sources, est[0].numpy(), item.mixture,
            eps=cfg.loss.snr_eps, clamp_db=cfg.loss.snr_clamp_db,
        )
        # attractor perm[k] produced the estimate matched to target k
        attractor_class = {}
        for k in range(n_src):
            attractor_class[score.permutation[k]] = item.class_ids[k]
        pooled = model.clue_net.embed_batch(summaries, [item.bundles])[0]
        sims = cosine_similarity_matrix(attractors[0].numpy(), pooled.numpy())
        assigned = np.argmax(sims, axis=1)
        for j in range(n_src):
            predicted = item.class_ids[int(assigned[j])]
            correct += int(predicted == attractor_class[j])
            total += 1
    return {
        "split": split,
        "mix_order": mix_order,
        "accuracy": correct / total,
        "item_count": len(records),
    }


@torch.no_grad()
def export_embeddings(
    model: SeparationModel,
    store: DataStore,
    records: list[ManifestRecord],
    path: str | Path,
    cfg: GlobalConfig,
) -> Path:
    """Dump attractor and clue embeddings as JSON lines for 2-D projection.

    Rows: {"kind": "attractor"|"clue", "class_id": int, "item_id": str,
    "vector": [D floats]}. Attractor classes follow the separation PIT match.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.eval()
    with path.open("w") as fh:
        for rec in records:
            item = store.load(rec)
            mix, features, grid, summaries = _analyze_numpy(model, item.mixture)
            n_src = item.sources.shape[0]
            attractors, _ = model.attractor_net.run(summaries, n_src)
            est = model.estimates_from(features, grid, attractors, item.mixture.shape[-1])
            score = score_item(
                item.sources, est[0].numpy(), item.mixture,
                eps=cfg.loss.snr_eps, clamp_db=cfg.loss.snr_clamp_db,
            )
            pooled = model.clue_net.embed_batch(summaries, [item.bundles])[0]
            for k in range(n_src):
                fh.write(json.dumps({
                    "kind": "attractor",
                    "class_id": item.class_ids[k],
                    "item_id": rec.item_id,
                    "vector": [round(float(v), 6) for v in attractors[0, score.permutation[k]]],
                }) + "\n")
                fh.write(json.dumps({
                    "kind": "clue",
                    "class_id": item.class_ids[k],
                    "item_id": rec.item_id,
                    "vector": [round(float(v), 6) for v in pooled[k]],
                }) + "\n")
    return path
