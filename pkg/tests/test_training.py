import json

import numpy as np
import pytest
import torch

from unisep.clues import MODALITY_CYCLE
from unisep.config import make_config
from unisep.model import build_model
from unisep.seeding import seed_everything
from unisep.training import (
    CheckpointError,
    Trainer,
    TrainingError,
    compute_batch_loss,
    load_checkpoint,
    make_batches,
    save_checkpoint,
)

from conftest import TINY_OVERRIDES


def test_checkpoint_roundtrip_bit_exact(tiny_cfg, tiny_model, tmp_path):
    path = save_checkpoint(tmp_path / "ck", tiny_model, tiny_cfg, stage=1, epoch=3)
    blob, sidecar = load_checkpoint(path)
    assert sidecar["epoch"] == 3
    for name, value in tiny_model.state_dict().items():
        assert torch.equal(blob["model_state"][name], value), name


def test_checkpoint_corruption_detected(tiny_cfg, tiny_model, tmp_path):
    path = save_checkpoint(tmp_path / "ck", tiny_model, tiny_cfg, stage=1, epoch=1)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)


def test_missing_checkpoint_rejected(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.bin")


def test_resume_refuses_config_mismatch(tiny_cfg, tiny_model, tiny_dataset, tmp_path):
    path = save_checkpoint(tmp_path / "ck", tiny_model, tiny_cfg, stage=1, epoch=1)
    other = make_config({**TINY_OVERRIDES, "loss": {"tau": 0.33}})
    trainer = Trainer(other, tiny_dataset, tmp_path / "run")
    with pytest.raises(CheckpointError, match="config hash"):
        trainer.run_stage(1, resume=path)


def test_stage2_init_refuses_model_mismatch(tiny_cfg, tiny_model, tiny_dataset, tmp_path):
    path = save_checkpoint(tmp_path / "ck", tiny_model, tiny_cfg, stage=1, epoch=1)
    bigger = make_config({**TINY_OVERRIDES, "embed_dim": 32})
    trainer = Trainer(bigger, tiny_dataset, tmp_path / "run")
    with pytest.raises(CheckpointError, match="incompatible"):
        trainer.run_stage(2, init_checkpoint=path)


def test_make_batches_homogeneous_and_deterministic(tiny_dataset):
    records = tiny_dataset.by_split("train")
    batches_a = make_batches(records, 3, np.random.default_rng(5))
    batches_b = make_batches(records, 3, np.random.default_rng(5))
    assert [[r.item_id for r in b] for b in batches_a] == [
        [r.item_id for r in b] for b in batches_b
    ]
    assert sum(len(b) for b in batches_a) == len(records)
    for batch in batches_a:
        assert len({r.mix_order for r in batch}) == 1


def test_branch_frequencies_within_two_percent():
    rng = np.random.default_rng(12)
    draws = rng.random(10_000) < 0.3
    assert abs(draws.mean() - 0.3) <= 0.02


def test_modality_cycle_visits_each_subset_once():
    assert len(MODALITY_CYCLE) == 7
    assert len(set(MODALITY_CYCLE)) == 7
    lengths = sorted(len(s) for s in MODALITY_CYCLE)
    assert lengths == [1, 1, 1, 2, 2, 2, 3]


def _train_once(cfg, store, run_dir, stage=1, init=None):
    trainer = Trainer(cfg, store, run_dir)
    return trainer.run_stage(stage, init_checkpoint=init)


def test_identical_seeds_identical_trajectories(tiny_cfg, tiny_dataset, tmp_path):
    res_a = _train_once(tiny_cfg, tiny_dataset, tmp_path / "a")
    res_b = _train_once(tiny_cfg, tiny_dataset, tmp_path / "b")
    assert len(res_a.history) == len(res_b.history)
    for ra, rb in zip(res_a.history, res_b.history):
        assert abs(ra["l_total"] - rb["l_total"]) <= 1e-6
    blob_a, _ = load_checkpoint(res_a.last_checkpoint)
    blob_b, _ = load_checkpoint(res_b.last_checkpoint)
    for name, val in blob_a["model_state"].items():
        assert torch.equal(val, blob_b["model_state"][name]), name


def test_resume_matches_uninterrupted_run(tiny_dataset, tmp_path):
    cfg4 = make_config(
        {**TINY_OVERRIDES, "trainer": {**TINY_OVERRIDES["trainer"], "epochs_stage1": 4}}
    )
    full = _train_once(cfg4, tiny_dataset, tmp_path / "full")

    part = Trainer(cfg4, tiny_dataset, tmp_path / "part")
    part.run_stage(1, stop_after=2)
    cont = Trainer(cfg4, tiny_dataset, tmp_path / "cont")
    resumed = cont.run_stage(1, resume=tmp_path / "part" / "stage1_last.bin")

    assert [r["epoch"] for r in resumed.history] == [3, 4]
    full_rows = {r["epoch"]: r["l_total"] for r in full.history}
    for row in resumed.history:
        assert row["l_total"] == pytest.approx(full_rows[row["epoch"]], abs=1e-6)
    blob_full, _ = load_checkpoint(full.last_checkpoint)
    blob_res, _ = load_checkpoint(resumed.last_checkpoint)
    for name, val in blob_full["model_state"].items():
        assert torch.equal(val, blob_res["model_state"][name]), name


def test_resume_refuses_different_stage(tiny_cfg, tiny_dataset, tmp_path):
    part = Trainer(tiny_cfg, tiny_dataset, tmp_path / "p")
    res = part.run_stage(1, stop_after=1)
    cont = Trainer(tiny_cfg, tiny_dataset, tmp_path / "c")
    with pytest.raises(CheckpointError, match="stage"):
        cont.run_stage(2, resume=res.last_checkpoint)


def test_stage1_then_stage2_runs_and_logs(tiny_cfg, tiny_dataset, tmp_path):
    run_dir = tmp_path / "run"
    res1 = _train_once(tiny_cfg, tiny_dataset, run_dir / "s1")
    res2 = _train_once(tiny_cfg, tiny_dataset, run_dir / "s2", stage=2,
                       init=res1.best_checkpoint)
    assert res2.last_checkpoint.exists()
    rows = [json.loads(l) for l in (run_dir / "s2" / "stage2_log.jsonl").read_text().splitlines()]
    assert rows and rows[-1]["stage"] == 2
    assert rows[-1]["l_align"] > 0.0  # alignment active in stage 2
    assert "val_snri" in rows[-1]


def test_stage2_keeps_stub_encoders_frozen(tiny_cfg, tiny_dataset, tmp_path):
    trainer = Trainer(tiny_cfg, tiny_dataset, tmp_path / "run")
    text_before = trainer.model.clue_net.text_table.clone()
    video_before = trainer.model.clue_net.video_proj.clone()
    tag_before = trainer.model.clue_net.tag_table.weight.detach().clone()
    trainer.run_stage(2)
    assert torch.equal(trainer.model.clue_net.text_table, text_before)
    assert torch.equal(trainer.model.clue_net.video_proj, video_before)
    assert not torch.equal(trainer.model.clue_net.tag_table.weight.detach(), tag_before)


def test_stage2_branch_mix_and_gradients(tiny_cfg, tiny_dataset):
    torch.manual_seed(0)
    model = build_model(tiny_cfg, init_seed=4)
    records = tiny_dataset.by_split("train", mix_order=2)
    items = [tiny_dataset.load(r) for r in records[:3]]
    branch = np.random.default_rng(8)
    bd = compute_batch_loss(model, items, 2, tiny_cfg, branch, [0])
    bd.l_total.backward()
    grads = {n: p.grad for n, p in model.named_parameters()}
    for module in ("separator.", "attractor_net.", "clue_net.tag_table", "codec."):
        total = sum(
            float(g.abs().sum()) for n, g in grads.items() if n.startswith(module) and g is not None
        )
        assert total > 0, f"no gradient in {module}"


def test_divergence_guard(tiny_cfg, tiny_dataset, tmp_path):
    trainer = Trainer(tiny_cfg, tiny_dataset, tmp_path / "run")
    with torch.no_grad():
        trainer.model.separator.pre_proj.weight.fill_(float("nan"))
    with pytest.raises(TrainingError, match="diverged"):
        trainer.run_stage(1)


def test_loss_decreases_on_average(tiny_dataset):
    cfg = make_config({
        **TINY_OVERRIDES,
        "trainer": {**TINY_OVERRIDES["trainer"], "epochs_stage1": 3, "lr_stage1": 1e-3},
    })
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        res = _train_once(cfg, tiny_dataset, tmp)
    assert res.history[-1]["l_total"] < res.history[0]["l_total"]
