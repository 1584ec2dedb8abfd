"""Matplotlib renderings written next to the delimited/JSON outputs:
training curves, per-condition score summaries, and embedding scatter
(PCA projection; circles = attractors, crosses = clues)."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_training_curves(history: list[dict], out_path: str | Path) -> Path:
    """Loss and validation-SNRi curves from the epoch log rows."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    epochs = [row["epoch"] for row in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(epochs, [row["l_total"] for row in history], label="total")
    ax1.plot(epochs, [row["l_sep"] for row in history], label="separation")
    ax1.plot(epochs, [row["l_count"] for row in history], label="counting")
    if any("l_align" in row and row.get("l_align") for row in history):
        ax1.plot(epochs, [row.get("l_align", 0.0) for row in history], label="align")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    val = [(row["epoch"], row["val_snri"]) for row in history if "val_snri" in row]
    if val:
        ax2.plot([v[0] for v in val], [v[1] for v in val], marker="o", ms=3)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("valid SNRi (dB)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_condition_summary(report_dict: dict, out_path: str | Path) -> Path:
    """Bar chart of mean SNRi per evaluated condition."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    conds = report_dict["conditions"]
    labels, values = [], []
    for c in conds:
        mods = "+".join(c["modalities"]) if c.get("modalities") else ""
        label = f"{c['mode']}\n{c['split']} {c['mix_order']}mix"
        if mods:
            label += f"\n{mods}"
        labels.append(label)
        values.append(c["mean_snri"])
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels)), 3.4))
    ax.bar(np.arange(len(labels)), values, color="tab:blue")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("mean SNRi (dB)")
    ax.axhline(0.0, color="k", lw=0.6)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_snri_histogram(report_dict: dict, out_path: str | Path) -> Path:
    """Per-item SNRi histograms, one panel per condition."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    conds = report_dict["conditions"]
    n = max(len(conds), 1)
    fig, axes = plt.subplots(1, n, figsize=(3.0 * n, 2.8), squeeze=False)
    for ax, cond in zip(axes[0], conds):
        vals = [r["snri"] for r in cond["per_item"]]
        ax.hist(vals, bins=24, color="tab:green", alpha=0.8)
        ax.set_title(f"{cond['mode']} {cond['split']} {cond['mix_order']}mix", fontsize=8)
        ax.set_xlabel("SNRi (dB)", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_embeddings(dump_path: str | Path, out_path: str | Path) -> Path:
    """2-D PCA scatter of an embedding dump (JSONL rows)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = [json.loads(line) for line in Path(dump_path).read_text().splitlines() if line]
    if not rows:
        raise ValueError(f"embedding dump {dump_path} is empty")
    vectors = np.array([r["vector"] for r in rows])
    centered = vectors - vectors.mean(axis=0)
    # PCA via SVD; deterministic sign convention on the components
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    comps *= np.sign(comps[:, [0]] + 1e-12)
    proj = centered @ comps.T
    classes = sorted({r["class_id"] for r in rows})
    cmap = plt.get_cmap("tab20")
    fig, ax = plt.subplots(figsize=(5, 4.4))
    for ci, cls in enumerate(classes):
        for kind, marker in (("attractor", "o"), ("clue", "x")):
            pts = np.array(
                [p for p, r in zip(proj, rows) if r["class_id"] == cls and r["kind"] == kind]
            )
            if pts.size:
                ax.scatter(
                    pts[:, 0], pts[:, 1], marker=marker, s=18,
                    color=cmap(ci % 20),
                    label=f"class {cls} {kind}" if kind == "attractor" else None,
                    alpha=0.75,
                )
    ax.legend(fontsize=6, ncol=2)
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    ax.set_title("attractors (o) vs clues (x), PCA projection", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
