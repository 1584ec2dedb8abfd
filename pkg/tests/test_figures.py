import json

import numpy as np

from unisep.figures import (
    plot_condition_summary,
    plot_embeddings,
    plot_snri_histogram,
    plot_training_curves,
)


def _history():
    return [
        {"epoch": e, "l_total": -float(e), "l_sep": -float(e), "l_count": 0.5,
         "l_align": 0.2, "val_snri": 0.5 * e}
        for e in range(1, 5)
    ]


def _report():
    rng = np.random.default_rng(0)
    return {
        "conditions": [
            {
                "mode": "ss-fixed-count", "split": "seen-test", "mix_order": 2,
                "modalities": None, "item_count": 20, "mean_snri": 6.0,
                "mean_si_snri": 6.2,
                "per_item": [
                    {"id": f"i{k}", "snri": float(rng.normal(6, 1)),
                     "si_snri": 6.0, "n_estimates": 2}
                    for k in range(20)
                ],
            },
            {
                "mode": "tse", "split": "seen-test", "mix_order": 2,
                "modalities": ["tag", "text"], "item_count": 5, "mean_snri": 5.0,
                "mean_si_snri": 5.1,
                "per_item": [
                    {"id": f"j{k}", "snri": 5.0, "si_snri": 5.0, "n_estimates": 2}
                    for k in range(5)
                ],
            },
        ]
    }


def test_training_curves(tmp_path):
    out = plot_training_curves(_history(), tmp_path / "curves.png")
    assert out.stat().st_size > 0


def test_condition_summary_and_histogram(tmp_path):
    rep = _report()
    assert plot_condition_summary(rep, tmp_path / "s.png").stat().st_size > 0
    assert plot_snri_histogram(rep, tmp_path / "h.png").stat().st_size > 0


def test_embedding_scatter(tmp_path):
    rng = np.random.default_rng(1)
    dump = tmp_path / "emb.jsonl"
    with dump.open("w") as fh:
        for cls in (0, 1, 2):
            center = rng.normal(size=8)
            for kind in ("attractor", "clue"):
                for _ in range(4):
                    vec = center + 0.1 * rng.normal(size=8)
                    fh.write(json.dumps(
                        {"kind": kind, "class_id": cls, "item_id": "x",
                         "vector": [float(v) for v in vec]}) + "\n")
    assert plot_embeddings(dump, tmp_path / "emb.png").stat().st_size > 0
