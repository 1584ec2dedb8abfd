# scratch: recipe v2 - heavier counting/alignment weights, more epochs, lower clue quality
import json
import time
from pathlib import Path

from unisep.config import make_config
from unisep.evaluation import counting_accuracy, evaluate_separation, matching_accuracy
from unisep.synth import DataStore, generate_dataset
from unisep.training import Trainer, load_model_from_checkpoint

root = Path("/tmp/probe2")
root.mkdir(exist_ok=True)
cfg = make_config(
    {
        "loss": {"lambda_count": 2.0, "lambda_align": 3.0},
        "data": {"clue_quality": 0.65},
        "trainer": {"epochs_stage1": 14, "epochs_stage2": 10},
    },
    preset="toy",
)
data_dir = root / "data"
t0 = time.perf_counter()
if not (data_dir / "manifest.jsonl").exists():
    generate_dataset(cfg, data_dir)
print(f"synth: {time.perf_counter()-t0:.1f}s", flush=True)

store = DataStore(data_dir / "manifest.jsonl")
trainer = Trainer(cfg, store, root / "run")
t0 = time.perf_counter()
res1 = trainer.run_stage(1)
print(f"stage1: {time.perf_counter()-t0:.1f}s", flush=True)
for row in res1.history:
    print(json.dumps(row), flush=True)
t0 = time.perf_counter()
res2 = trainer.run_stage(2)
print(f"stage2: {time.perf_counter()-t0:.1f}s", flush=True)
for row in res2.history:
    print(json.dumps(row), flush=True)

model, _, _ = load_model_from_checkpoint(res2.best_checkpoint)
t0 = time.perf_counter()
for order in (2, 3):
    fixed = evaluate_separation(model, store, "ss-fixed-count", "seen-test", order, cfg)
    pred = evaluate_separation(model, store, "ss-predicted-count", "seen-test", order, cfg)
    tse = evaluate_separation(model, store, "tse", "seen-test", order, cfg)
    cnt = counting_accuracy(model, store, "seen-test", order, cfg)
    match = matching_accuracy(model, store, "seen-test", order, cfg)
    print(
        f"seen {order}mix: fixed {fixed.mean_snri:.2f} pred {pred.mean_snri:.2f} "
        f"tse {tse.mean_snri:.2f} count {cnt['accuracy']:.3f} hist {cnt['predicted_count_histogram']} "
        f"match {match['accuracy']:.3f}",
        flush=True,
    )
for mods in (["tag"], ["text"], ["video"]):
    t = evaluate_separation(model, store, "tse", "seen-test", 2, cfg, modalities=mods)
    print(f"tse {mods}: {t.mean_snri:.2f}", flush=True)
print(f"eval: {time.perf_counter()-t0:.1f}s", flush=True)
