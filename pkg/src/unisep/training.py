"""Two-stage training orchestration, checkpointing, and run logs.

Stage 1 jointly trains the separator and attractor network on separation +
counting. Stage 2 adds the clue network: per item a seeded draw feeds the
separator either the attractors (30%) or the clue embeddings (70%), the
clue modality subset cycles through all seven nonempty combinations, and
the alignment loss ties the two embedding families together.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.nn.utils import clip_grad_norm_

from .clues import MODALITY_CYCLE
from .config import GlobalConfig, config_hash
from .losses import (
    LossBreakdown,
    align_infonce,
    align_mse,
    counting_bce,
    pit_snr_batch,
    total_loss,
)
from .model import SeparationModel, build_model
from .seeding import SeedRegistry, seed_everything
from .synth import DataStore, LoadedItem, ManifestRecord

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Raised when training cannot proceed (divergence, bad inputs)."""


class CheckpointError(RuntimeError):
    """Raised for corrupted or incompatible checkpoints."""


# ---------------------------------------------------------------------------
# checkpoints: versioned binary blob + JSON metadata sidecar


def _sidecar_path(blob_path: Path) -> Path:
    return blob_path.with_suffix(".json")


def save_checkpoint(
    path: str | Path,
    model: SeparationModel,
    cfg: GlobalConfig,
    stage: int,
    epoch: int,
    metrics: dict | None = None,
    optimizer: torch.optim.Optimizer | None = None,
    registry: SeedRegistry | None = None,
) -> Path:
    """Write `<path>.bin` + `<path>.json`; returns the blob path."""
    base = Path(path)
    blob_path = base if base.suffix == ".bin" else base.with_suffix(".bin")
    blob_path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "version": CHECKPOINT_VERSION,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "stage": stage,
        "epoch": epoch,
        "torch_rng_state": torch.get_rng_state(),
        "numpy_streams": registry.state() if registry is not None else None,
    }
    torch.save(blob, blob_path)
    sha = hashlib.sha256(blob_path.read_bytes()).hexdigest()
    sidecar = {
        "version": CHECKPOINT_VERSION,
        "blob_sha256": sha,
        "config_hash": config_hash(cfg.to_dict()),
        "model_hash": config_hash(cfg.model_sections()),
        "stage": stage,
        "epoch": epoch,
        "metrics": metrics or {},
        "config": cfg.to_dict(),
    }
    _sidecar_path(blob_path).write_text(json.dumps(sidecar, indent=2) + "\n")
    return blob_path


def load_checkpoint(path: str | Path) -> tuple[dict, dict]:
    """Load and integrity-check a checkpoint pair -> (blob, sidecar)."""
    blob_path = Path(path)
    if blob_path.suffix != ".bin":
        blob_path = blob_path.with_suffix(".bin")
    sidecar_path = _sidecar_path(blob_path)
    if not blob_path.exists():
        raise CheckpointError(f"checkpoint blob not found: {blob_path}")
    if not sidecar_path.exists():
        raise CheckpointError(f"checkpoint sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    sha = hashlib.sha256(blob_path.read_bytes()).hexdigest()
    if sha != sidecar.get("blob_sha256"):
        raise CheckpointError(f"checkpoint blob is corrupted (hash mismatch): {blob_path}")
    try:
        blob = torch.load(blob_path, weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot deserialize checkpoint {blob_path}: {exc}") from exc
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {blob.get('version')} in {blob_path}"
        )
    return blob, sidecar


def load_model_from_checkpoint(path: str | Path) -> tuple[SeparationModel, GlobalConfig, dict]:
    """Rebuild a model (eval mode) from a checkpoint pair."""
    from .config import make_config

    blob, sidecar = load_checkpoint(path)
    cfg = make_config(sidecar["config"])
    model = build_model(cfg)
    model.load_state_dict(blob["model_state"])
    model.eval()
    return model, cfg, sidecar


# ---------------------------------------------------------------------------
# batching


def make_batches(
    records: list[ManifestRecord], batch_size: int, rng: np.random.Generator
) -> list[list[ManifestRecord]]:
    """Shuffled batches, each homogeneous in mix order (uniform J)."""
    order = rng.permutation(len(records))
    by_order: dict[int, list[ManifestRecord]] = {}
    for i in order:
        rec = records[int(i)]
        by_order.setdefault(rec.mix_order, []).append(rec)
    batches = []
    for key in sorted(by_order):
        group = by_order[key]
        for start in range(0, len(group), batch_size):
            batches.append(group[start : start + batch_size])
    perm = rng.permutation(len(batches))
    return [batches[int(i)] for i in perm]


def collate(items: list[LoadedItem]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack items of one batch -> (mixtures [B, L], targets [B, J, T])."""
    mix = torch.from_numpy(np.stack([it.mixture for it in items]))
    targets = torch.from_numpy(np.stack([it.sources for it in items]))
    return mix, targets


# ---------------------------------------------------------------------------
# loss computation


def compute_batch_loss(
    model: SeparationModel,
    items: list[LoadedItem],
    stage: int,
    cfg: GlobalConfig,
    branch_rng: np.random.Generator | None = None,
    cycle_state: list[int] | None = None,
) -> LossBreakdown:
    """Loss of one homogeneous batch (same J across items).

    Stage 2 requires `branch_rng` (attractor/clue branch draws) and
    `cycle_state`, a single-element counter tracking the modality cycle
    position across clue-branch items.
    """
    mix, targets = collate(items)
    dtype = next(model.parameters()).dtype
    mix, targets = mix.to(dtype), targets.to(dtype)
    n_items, n_src, length = targets.shape
    features, grid, summaries = model.analyze(mix)

    attractors, probs = model.attractor_net.run(summaries, n_src + 1)
    labels = torch.zeros_like(probs)
    labels[:, :n_src] = 1.0
    l_count = counting_bce(labels, probs, eps=cfg.loss.bce_eps).mean()

    zero = torch.zeros((), dtype=features.dtype)
    if stage == 1:
        sources = attractors[:, :n_src]
        l_mse, l_nce = zero, zero.clone()
    else:
        if branch_rng is None or cycle_state is None:
            raise TrainingError("stage 2 needs branch RNG and modality cycle state")
        use_attractor = branch_rng.random(n_items) < cfg.trainer.attractor_branch_prob
        restricted = []
        for b in range(n_items):
            if use_attractor[b]:
                subset = ("tag", "text", "video")
            else:
                subset = MODALITY_CYCLE[cycle_state[0] % len(MODALITY_CYCLE)]
                cycle_state[0] += 1
            restricted.append([bd.restricted(subset) for bd in items[b].bundles])
        pooled = model.clue_net.embed_batch(summaries, restricted)  # [B, J, D]
        mask = torch.from_numpy(use_attractor).view(n_items, 1, 1)
        sources = torch.where(mask, attractors[:, :n_src], pooled)

    estimates = model.estimates_from(features, grid, sources, length)
    l_sep_items, perms = pit_snr_batch(
        targets, estimates, eps=cfg.loss.snr_eps, clamp_db=cfg.loss.snr_clamp_db
    )
    l_sep = l_sep_items.mean()

    if stage == 2:
        mse_terms, nce_terms = [], []
        for b in range(n_items):
            perm = tuple(int(i) for i in perms[b])
            mse_terms.append(align_mse(attractors[b, :n_src], pooled[b], perm))
            nce_terms.append(
                align_infonce(attractors[b, :n_src], pooled[b], perm, tau=cfg.loss.tau)
            )
        l_mse = torch.stack(mse_terms).mean()
        l_nce = torch.stack(nce_terms).mean()

    return total_loss(
        l_sep,
        l_count,
        l_mse,
        l_nce,
        stage,
        tuple(int(i) for i in perms[0]),
        lambda_count=cfg.loss.lambda_count,
        lambda_align=cfg.loss.lambda_align,
    )


# ---------------------------------------------------------------------------
# trainer


@dataclass
class StageResult:
    last_checkpoint: Path
    best_checkpoint: Path
    history: list[dict]


class Trainer:
    def __init__(
        self,
        cfg: GlobalConfig,
        store: DataStore,
        run_dir: str | Path,
        model: SeparationModel | None = None,
        registry: SeedRegistry | None = None,
    ):
        self.cfg = cfg
        self.store = store
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        if cfg.trainer.num_threads > 0:
            torch.set_num_threads(cfg.trainer.num_threads)
        self.registry = registry or seed_everything(cfg.seed)
        if model is None:
            model = build_model(cfg, init_seed=self.registry.torch_seed("init"))
        self.model = model

    def _log(self, row: dict, log_path: Path) -> None:
        with log_path.open("a") as fh:
            fh.write(json.dumps(row) + "\n")

    def _validate(self) -> float:
        from .evaluation import fixed_count_snri

        records = self.store.by_split("valid")
        if not records:
            return float("nan")
        return fixed_count_snri(
            self.model, self.store, records, batch_size=self.cfg.eval.batch_size
        )

    def run_stage(
        self,
        stage: int,
        init_checkpoint: str | Path | None = None,
        resume: str | Path | None = None,
        stop_after: int | None = None,
    ) -> StageResult:
        """Train one stage; `stop_after` ends the session early (epoch count),
        leaving a checkpoint a later `resume` continues from exactly."""
        cfg = self.cfg
        if stage == 1:
            epochs, lr = cfg.trainer.epochs_stage1, cfg.trainer.lr_stage1
        elif stage == 2:
            epochs, lr = cfg.trainer.epochs_stage2, cfg.trainer.lr_stage2
        else:
            raise TrainingError(f"stage must be 1 or 2, got {stage}")
        session_end = epochs if stop_after is None else min(epochs, stop_after)

        if init_checkpoint is not None:
            blob, sidecar = load_checkpoint(init_checkpoint)
            if sidecar["model_hash"] != config_hash(cfg.model_sections()):
                raise CheckpointError(
                    "init checkpoint was trained with an incompatible model config"
                )
            self.model.load_state_dict(blob["model_state"])

        optimizer = torch.optim.Adam(self.model.parameters(), lr=lr)
        start_epoch = 0
        if resume is not None:
            blob, sidecar = load_checkpoint(resume)
            if sidecar["config_hash"] != config_hash(cfg.to_dict()):
                raise CheckpointError(
                    "cannot resume: checkpoint config hash does not match current config"
                )
            if sidecar["stage"] != stage:
                raise CheckpointError(
                    f"cannot resume stage {stage} from a stage-{sidecar['stage']} checkpoint"
                )
            self.model.load_state_dict(blob["model_state"])
            if blob["optimizer_state"] is not None:
                optimizer.load_state_dict(blob["optimizer_state"])
            if blob["numpy_streams"] is not None:
                self.registry.restore(blob["numpy_streams"])
            torch.set_rng_state(blob["torch_rng_state"])
            start_epoch = blob["epoch"]

        data_rng = self.registry.stream(f"data-stage{stage}")
        branch_rng = self.registry.stream(f"branch-stage{stage}")
        cycle_state = [0]
        train_records = self.store.by_split("train")
        if not train_records:
            raise TrainingError("manifest has no training items")
        log_path = self.run_dir / f"stage{stage}_log.jsonl"
        history: list[dict] = []
        best_val = -float("inf")
        best_path = self.run_dir / f"stage{stage}_best"
        last_path = self.run_dir / f"stage{stage}_last"

        self.model.train()
        for epoch in range(start_epoch, session_end):
            t0 = time.perf_counter()
            sums: dict[str, float] = {}
            n_batches = 0
            for batch in make_batches(train_records, cfg.trainer.batch_size, data_rng):
                items = [self.store.load(r) for r in batch]
                breakdown = compute_batch_loss(
                    self.model, items, stage, cfg, branch_rng, cycle_state
                )
                if not torch.isfinite(breakdown.l_total):
                    raise TrainingError(
                        f"training diverged at stage {stage} epoch {epoch}: "
                        f"non-finite total loss"
                    )
                optimizer.zero_grad(set_to_none=True)
                breakdown.l_total.backward()
                clip_grad_norm_(self.model.parameters(), cfg.trainer.grad_clip)
                optimizer.step()
                for key, val in breakdown.detached().items():
                    sums[key] = sums.get(key, 0.0) + val
                n_batches += 1

            row = {
                "stage": stage,
                "epoch": epoch + 1,
                "seconds": round(time.perf_counter() - t0, 3),
            }
            row.update({k: v / n_batches for k, v in sums.items()})
            if (epoch + 1) % max(1, cfg.trainer.val_every) == 0 or epoch + 1 == epochs:
                self.model.eval()
                row["val_snri"] = self._validate()
                self.model.train()
                if row["val_snri"] >= best_val:
                    best_val = row["val_snri"]
                    save_checkpoint(
                        best_path, self.model, cfg, stage, epoch + 1,
                        metrics={"val_snri": best_val},
                        optimizer=optimizer, registry=self.registry,
                    )
            history.append(row)
            self._log(row, log_path)
            save_checkpoint(
                last_path, self.model, cfg, stage, epoch + 1,
                metrics={k: row.get(k) for k in ("l_total", "val_snri") if k in row},
                optimizer=optimizer, registry=self.registry,
            )
        self.model.eval()
        if not best_path.with_suffix(".bin").exists():
            save_checkpoint(best_path, self.model, cfg, stage, epochs,
                            optimizer=optimizer, registry=self.registry)
        return StageResult(
            last_checkpoint=last_path.with_suffix(".bin"),
            best_checkpoint=best_path.with_suffix(".bin"),
            history=history,
        )


def train_stage1(
    cfg: GlobalConfig,
    manifest_path: str | Path,
    run_dir: str | Path,
    resume: str | Path | None = None,
) -> StageResult:
    store = DataStore(manifest_path, cache=cfg.data.cache_in_memory)
    trainer = Trainer(cfg, store, run_dir)
    return trainer.run_stage(1, resume=resume)


def train_stage2(
    cfg: GlobalConfig,
    manifest_path: str | Path,
    run_dir: str | Path,
    init_checkpoint: str | Path,
    resume: str | Path | None = None,
) -> StageResult:
    store = DataStore(manifest_path, cache=cfg.data.cache_in_memory)
    trainer = Trainer(cfg, store, run_dir)
    return trainer.run_stage(2, init_checkpoint=init_checkpoint, resume=resume)
