import numpy as np
import pytest
import torch

from unisep.config import make_config
from unisep.model import build_model
from unisep.synth import DataStore, generate_dataset

# small-but-real dimensions: fast forward passes, nontrivial shapes
TINY_OVERRIDES = {
    "seed": 1234,
    "embed_dim": 16,
    "codec": {"kernel_size": 16, "stride": 8},
    "separator": {
        "chunk_size": 10,
        "dual_path_layers": 1,
        "triple_path_layers": 1,
        "num_heads": 2,
        "ffn_mult": 2,
    },
    "clue": {"vocab_size": 12, "text_len": 3, "video_frames": 2, "video_dim": 4, "num_heads": 2},
    "data": {
        "duration_s": 0.25,
        "train_items_per_order": 6,
        "valid_items_per_order": 2,
        "seen_test_items_per_order": 2,
        "unseen_test_items_per_order": 2,
    },
    "trainer": {"epochs_stage1": 1, "epochs_stage2": 1, "batch_size": 3},
    "eval": {"batch_size": 4},
}


@pytest.fixture(scope="session")
def tiny_cfg():
    return make_config(TINY_OVERRIDES)


@pytest.fixture(scope="session")
def tiny_model(tiny_cfg):
    model = build_model(tiny_cfg, init_seed=99)
    model.eval()
    return model


@pytest.fixture(scope="session")
def tiny_dataset(tiny_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("tinydata")
    manifest = generate_dataset(tiny_cfg, out)
    return DataStore(manifest)


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    np.random.seed(0)
