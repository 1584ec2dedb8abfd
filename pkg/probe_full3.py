# scratch: recipe v3 - lambda_count 5, lambda_align 4, lr2 1.5e-4, staged stage-2 evals
import json
import time
from pathlib import Path

from unisep.config import make_config
from unisep.evaluation import counting_accuracy, evaluate_separation, matching_accuracy
from unisep.synth import DataStore, generate_dataset
from unisep.training import Trainer, load_model_from_checkpoint

root = Path("/tmp/probe3")
root.mkdir(exist_ok=True)
cfg = make_config(
    {
        "loss": {"lambda_count": 5.0, "lambda_align": 4.0},
        "data": {"clue_quality": 0.75},
        "trainer": {
            "epochs_stage1": 10,
            "epochs_stage2": 18,
            "lr_stage2": 1.5e-4,
        },
    },
    preset="toy",
)
data_dir = root / "data"
if not (data_dir / "manifest.jsonl").exists():
    generate_dataset(cfg, data_dir)
store = DataStore(data_dir / "manifest.jsonl")


def snapshot(model, label):
    out = {"label": label}
    for order in (2, 3):
        fixed = evaluate_separation(model, store, "ss-fixed-count", "seen-test", order, cfg, max_items=100)
        pred = evaluate_separation(model, store, "ss-predicted-count", "seen-test", order, cfg, max_items=100)
        tse = evaluate_separation(model, store, "tse", "seen-test", order, cfg, max_items=100)
        cnt = counting_accuracy(model, store, "seen-test", order, cfg, max_items=200)
        match = matching_accuracy(model, store, "seen-test", order, cfg, max_items=100)
        out[f"{order}mix"] = {
            "fixed": round(fixed.mean_snri, 2),
            "pred": round(pred.mean_snri, 2),
            "tse": round(tse.mean_snri, 2),
            "count": round(cnt["accuracy"], 3),
            "match": round(match["accuracy"], 3),
        }
    for mods in (["tag"], ["text"], ["video"]):
        t = evaluate_separation(model, store, "tse", "seen-test", 2, cfg, modalities=mods, max_items=100)
        out[f"tse_{mods[0]}"] = round(t.mean_snri, 2)
    print(json.dumps(out), flush=True)


trainer = Trainer(cfg, store, root / "run")
t0 = time.perf_counter()
res1 = trainer.run_stage(1)
print(f"stage1: {time.perf_counter()-t0:.0f}s val={res1.history[-1]['val_snri']:.2f}", flush=True)
snapshot(trainer.model, "after-stage1")

for stop in (6, 12, 18):
    t0 = time.perf_counter()
    if stop == 6:
        trainer.run_stage(2, stop_after=stop)
    else:
        trainer.run_stage(2, resume=root / "run" / "stage2_last.bin", stop_after=stop)
    print(f"stage2 to {stop}: {time.perf_counter()-t0:.0f}s", flush=True)
    snapshot(trainer.model, f"stage2-ep{stop}")
