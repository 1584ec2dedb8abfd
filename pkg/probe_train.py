# scratch: probe stage-1 convergence speed on a reduced toy dataset
import json
import sys
import time
from pathlib import Path

import torch

from unisep.config import make_config
from unisep.synth import DataStore, generate_dataset
from unisep.training import Trainer

variant = sys.argv[1] if len(sys.argv) > 1 else "a"
root = Path("/tmp/probe")
root.mkdir(exist_ok=True)

overrides = {
    "data": {
        "train_items_per_order": 300,
        "valid_items_per_order": 50,
        "seen_test_items_per_order": 4,
        "unseen_test_items_per_order": 4,
    },
    "trainer": {"epochs_stage1": 8, "epochs_stage2": 4},
}
if variant == "b":
    overrides["trainer"]["lr_stage1"] = 3e-4
elif variant == "c":
    overrides["trainer"]["lr_stage1"] = 3e-4
    overrides["separator"] = {"ffn_mult": 2}
elif variant == "d":
    overrides["trainer"]["lr_stage1"] = 1e-3

cfg = make_config(overrides, preset="toy")
data_dir = root / "data"
if not (data_dir / "manifest.jsonl").exists():
    t0 = time.perf_counter()
    generate_dataset(cfg, data_dir)
    print(f"synth: {time.perf_counter()-t0:.1f}s", flush=True)

store = DataStore(data_dir / "manifest.jsonl")
run_dir = root / f"run_{variant}"
trainer = Trainer(cfg, store, run_dir)
t0 = time.perf_counter()
res = trainer.run_stage(1)
print(f"variant {variant}: stage1 {time.perf_counter()-t0:.1f}s", flush=True)
for row in res.history:
    print(json.dumps(row), flush=True)
