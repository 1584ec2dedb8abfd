"""Command-line entry point.

Subcommands: synth, train, separate, extract, eval, embed-dump. Exit codes:
0 success, 1 usage error, 2 runtime error. Every run writes a manifest of
its inputs, seeds, and versions into the output directory. The environment
variable USE_RUN_DIR overrides the output root for relative paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .audio import read_wav, write_wav
from .clues import MODALITIES, ClueBundle
from .config import ConfigError, GlobalConfig, load_config, make_config
from .evaluation import (
    EvalReport,
    counting_accuracy,
    evaluate_separation,
    export_embeddings,
    matching_accuracy,
)
from .inference import NoSourceDetected, extract, separate
from .synth import DataStore, generate_dataset
from .training import Trainer, load_model_from_checkpoint

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _resolve_out(path: str) -> Path:
    root = os.environ.get("USE_RUN_DIR")
    p = Path(path)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _write_run_manifest(out_dir: Path, command: str, argv: list[str], cfg: GlobalConfig | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": argv,
        "unisep_version": __version__,
        "torch_version": torch.__version__,
        "numpy_version": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": cfg.to_dict() if cfg is not None else None,
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_cfg(args) -> GlobalConfig:
    if args.config is not None:
        return load_config(args.config, preset=getattr(args, "preset", None))
    return make_config(preset=getattr(args, "preset", None))


def build_parser() -> _Parser:
    parser = _Parser(prog="unisep", description=__doc__)
    parser.add_argument("--version", action="version", version=f"unisep {__version__}")
    sub = parser.add_subparsers(
        dest="command", metavar="COMMAND", parser_class=_Parser
    )

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=["paper", "toy"], help="named config preset")
    p.add_argument("--out", required=True, help="dataset output directory")

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", type=int, required=True, choices=[1, 2])
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=["paper", "toy"])
    p.add_argument("--manifest", required=True, help="dataset manifest (JSONL)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", help="checkpoint to resume the same stage from")
    p.add_argument("--init-ckpt", help="stage-1 checkpoint to initialize stage 2")

    p = sub.add_parser("separate", help="clue-free separation")
    p.add_argument("--ckpt", required=True, help="model checkpoint (.bin)")
    p.add_argument("--in", dest="input", required=True, help="mixture WAV file")
    p.add_argument("--num-sources", type=int, help="override the inferred source count")
    p.add_argument("--strict", action="store_true",
                   help="fail instead of falling back when no source is detected")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("extract", help="clue-driven extraction")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True, help="mixture WAV file")
    p.add_argument("--clue", action="append", required=True,
                   help="clue JSON file (repeat per target)")
    p.add_argument("--tag", type=int, action="append",
                   help="tag-only clue: class id (repeat per target)")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="run the evaluation protocol")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", required=True,
                   choices=["ss-fixed-count", "ss-predicted-count", "tse"])
    p.add_argument("--modalities", default=None,
                   help="comma-separated subset for TSE, e.g. tag,text,video")
    p.add_argument("--splits", default="seen-test",
                   help="comma-separated splits to evaluate")
    p.add_argument("--max-items", type=int, help="cap items per condition")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", required=True, help="report path (report.json)")

    p = sub.add_parser("embed-dump",
                       help="export attractor/clue embeddings as JSONL")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="seen-test")
    p.add_argument("--max-items", type=int, default=50)
    p.add_argument("--figure", action="store_true", help="also render a PCA scatter")
    p.add_argument("--out", required=True, help="output JSONL path")
    return parser


def _cmd_synth(args, argv) -> int:
    cfg = _load_cfg(args)
    out_dir = _resolve_out(args.out)
    _write_run_manifest(out_dir, "synth", argv, cfg)
    manifest = generate_dataset(cfg, out_dir)
    n_items = sum(1 for _ in open(manifest))
    print(f"wrote {n_items} items to {manifest}")
    return 0


def _cmd_train(args, argv) -> int:
    cfg = _load_cfg(args)
    run_dir = _resolve_out(args.out)
    _write_run_manifest(run_dir, "train", argv, cfg)
    store = DataStore(args.manifest, cache=cfg.data.cache_in_memory)
    trainer = Trainer(cfg, store, run_dir)
    if args.stage == 2 and not args.init_ckpt and not args.resume:
        raise ValueError("stage 2 needs --init-ckpt (stage-1 checkpoint) or --resume")
    result = trainer.run_stage(
        args.stage, init_checkpoint=args.init_ckpt, resume=args.resume
    )
    from .figures import plot_training_curves

    plot_training_curves(result.history, run_dir / f"stage{args.stage}_curves.png")
    print(f"stage {args.stage} done: best={result.best_checkpoint} last={result.last_checkpoint}")
    return 0


def _result_json(result) -> dict:
    return {
        "inferred_count": result.inferred_count,
        "origins": result.origins,
        "existence_probs": result.existence_probs,
    }


def _cmd_separate(args, argv) -> int:
    model, cfg, _ = load_model_from_checkpoint(args.ckpt)
    out_dir = _resolve_out(args.out_dir)
    _write_run_manifest(out_dir, "separate", argv, cfg)
    mixture = read_wav(args.input)
    result = separate(
        model, mixture,
        count_override=args.num_sources,
        theta=cfg.eda.theta, max_steps=cfg.eda.max_steps,
        strict=args.strict,
    )
    for i, wav in enumerate(result.estimates):
        write_wav(out_dir / f"source_{i}.wav", wav)
    (out_dir / "result.json").write_text(json.dumps(_result_json(result), indent=2) + "\n")
    print(f"separated {result.inferred_count} source(s) into {out_dir}")
    return 0


def _cmd_extract(args, argv) -> int:
    model, cfg, _ = load_model_from_checkpoint(args.ckpt)
    out_dir = _resolve_out(args.out_dir)
    _write_run_manifest(out_dir, "extract", argv, cfg)
    mixture = read_wav(args.input)
    bundles = [ClueBundle.load(p) for p in args.clue or []]
    for tag in args.tag or []:
        bundles.append(ClueBundle(tag=tag))
    result = extract(model, mixture, bundles)
    for i, wav in enumerate(result.estimates):
        write_wav(out_dir / f"source_{i}.wav", wav)
    (out_dir / "result.json").write_text(json.dumps(_result_json(result), indent=2) + "\n")
    print(f"extracted {len(result.estimates)} target(s) into {out_dir}")
    return 0


def _cmd_eval(args, argv) -> int:
    model, cfg, _ = load_model_from_checkpoint(args.ckpt)
    report_path = _resolve_out(args.out)
    out_dir = report_path.parent if report_path.suffix else report_path
    if not report_path.suffix:
        report_path = report_path / "report.json"
    _write_run_manifest(out_dir, "eval", argv, cfg)
    store = DataStore(args.manifest, cache=False)
    modalities = None
    if args.modalities:
        modalities = [m.strip() for m in args.modalities.split(",") if m.strip()]
        bad = [m for m in modalities if m not in MODALITIES]
        if bad:
            raise ValueError(f"unknown modalities: {bad} (choose from {MODALITIES})")
    splits = [s.strip() for s in args.splits.split(",") if s.strip()]
    report = EvalReport(info={
        "checkpoint": str(args.ckpt),
        "mode": args.mode,
        "theta": cfg.eda.theta,
    })
    orders = sorted({r.mix_order for r in store.records})
    for split in splits:
        for order in orders:
            if not store.by_split(split, order):
                continue
            report.conditions.append(
                evaluate_separation(
                    model, store, args.mode, split, order, cfg,
                    modalities=modalities, max_items=args.max_items,
                )
            )
            if args.mode == "ss-predicted-count":
                key = f"{split}_{order}mix"
                report.counting[key] = counting_accuracy(
                    model, store, split, order, cfg, max_items=args.max_items
                )
                report.matching[key] = matching_accuracy(
                    model, store, split, order, cfg, max_items=args.max_items
                )
    report.save(report_path)
    report.write_csv(report_path.with_suffix(".csv"))
    if not args.no_figures:
        from .figures import plot_condition_summary, plot_snri_histogram

        fig_dir = report_path.parent / "figures"
        plot_condition_summary(report.to_json_dict(), fig_dir / "snri_by_condition.png")
        plot_snri_histogram(report.to_json_dict(), fig_dir / "snri_histogram.png")
    for cond in report.conditions:
        mods = "+".join(cond.modalities) if cond.modalities else "-"
        print(
            f"{cond.mode} {cond.split} {cond.mix_order}mix [{mods}]: "
            f"SNRi {cond.mean_snri:.2f} dB, SI-SNRi {cond.mean_si_snri:.2f} dB "
            f"({cond.item_count} items)"
        )
    print(f"report: {report_path}")
    return 0


def _cmd_embed_dump(args, argv) -> int:
    model, cfg, _ = load_model_from_checkpoint(args.ckpt)
    out_path = _resolve_out(args.out)
    _write_run_manifest(out_path.parent, "embed-dump", argv, cfg)
    store = DataStore(args.manifest, cache=False)
    records = store.by_split(args.split)[: args.max_items]
    if not records:
        raise ValueError(f"no items in split {args.split!r}")
    export_embeddings(model, store, records, out_path, cfg)
    print(f"wrote embeddings for {len(records)} items to {out_path}")
    if args.figure:
        from .figures import plot_embeddings

        fig = plot_embeddings(out_path, out_path.with_suffix(".png"))
        print(f"figure: {fig}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "separate": _cmd_separate,
    "extract": _cmd_extract,
    "eval": _cmd_eval,
    "embed-dump": _cmd_embed_dump,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return _COMMANDS[args.command](args, argv)
    except (ConfigError, ValueError, NoSourceDetected) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        traceback.print_exc()
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


def main() -> None:
    raise SystemExit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
