# scratch: full toy pipeline timing/quality probe (stage1 + stage2 + eval)
import json
import time
from pathlib import Path

from unisep.config import make_config
from unisep.evaluation import (
    counting_accuracy,
    evaluate_separation,
    matching_accuracy,
)
from unisep.synth import DataStore, generate_dataset
from unisep.training import Trainer, load_model_from_checkpoint

root = Path("/tmp/probe_full")
root.mkdir(exist_ok=True)
cfg = make_config(preset="toy")
data_dir = root / "data"
t0 = time.perf_counter()
if not (data_dir / "manifest.jsonl").exists():
    generate_dataset(cfg, data_dir)
print(f"synth: {time.perf_counter()-t0:.1f}s", flush=True)

store = DataStore(data_dir / "manifest.jsonl")
run_dir = root / "run"
trainer = Trainer(cfg, store, run_dir)
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

model, cfg2, _ = load_model_from_checkpoint(res2.best_checkpoint)
t0 = time.perf_counter()
for order in (2, 3):
    fixed = evaluate_separation(model, store, "ss-fixed-count", "seen-test", order, cfg)
    pred = evaluate_separation(model, store, "ss-predicted-count", "seen-test", order, cfg)
    tse = evaluate_separation(model, store, "tse", "seen-test", order, cfg)
    cnt = counting_accuracy(model, store, "seen-test", order, cfg)
    match = matching_accuracy(model, store, "seen-test", order, cfg)
    print(
        f"seen {order}mix: fixed {fixed.mean_snri:.2f} pred {pred.mean_snri:.2f} "
        f"tse {tse.mean_snri:.2f} count {cnt['accuracy']:.3f} match {match['accuracy']:.3f}",
        flush=True,
    )
for mods in (["tag"], ["text"], ["video"]):
    tse1 = evaluate_separation(model, store, "tse", "seen-test", 2, cfg, modalities=mods)
    print(f"tse {mods}: {tse1.mean_snri:.2f}", flush=True)
print(f"eval: {time.perf_counter()-t0:.1f}s", flush=True)
