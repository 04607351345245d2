"""Command-line surface: synth, preprocess, pretrain, finetune, evaluate, ablate.

Every command is deterministic for fixed inputs and seeds; all randomness
flows from explicit ``--seed``/``--split-seed`` values. Errors exit with a
categorized nonzero status (2 config, 3 data, 4 format, 5 shape, 6 numeric).
Log verbosity is controlled only by the LEAD_LOG_LEVEL environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus_io, report, train_eval
from .bands import get_band, get_region
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .errors import ConfigError, DataError, LeadError, ShapeError
from .signal_prep import RawTrial, load_montage, preprocess_trial
from .synth import SynthSpec, synth_generate, write_raw_trials

log = logging.getLogger("lead.cli")

DEFAULT_SEED = 41  # documented sweep set is 41-45
DEFAULT_SPLIT_SEED = 41


def _setup_logging() -> None:
    level = os.environ.get("LEAD_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(message)s")


def _load_corpora(paths: list[str]) -> list[corpus_io.Corpus]:
    if not paths:
        raise ConfigError("at least one --corpus directory is required")
    return [corpus_io.load_corpus(p) for p in paths]


def _splits_for(
    corpora: list[corpus_io.Corpus], seed: int, ratios=(0.6, 0.2, 0.2)
) -> dict[str, corpus_io.SplitAssignment]:
    return {
        c.dataset_id: corpus_io.split_subjects(c.labels, ratios=ratios, seed=seed, dataset_id=c.dataset_id)
        for c in corpora
    }


def cmd_synth(args: argparse.Namespace) -> int:
    run_cfg = RunConfig.load(args.config)
    overrides = {}
    if args.subjects is not None:
        overrides["n_subjects"] = args.subjects
    if args.seconds is not None:
        overrides["trial_seconds"] = args.seconds
    if args.nuisance is not None:
        overrides["subject_nuisance_strength"] = args.nuisance
    if args.class_channels:
        overrides["class_channels"] = tuple(args.class_channels.split(","))
    if args.dataset_id:
        overrides["dataset_id"] = args.dataset_id
    overrides["seed"] = args.seed
    spec = run_cfg.synth_spec(**overrides)
    if args.raw:
        out = write_raw_trials(spec, args.out)
        print(f"wrote raw trials for {spec.n_subjects} subjects to {out}")
    else:
        corpus = synth_generate(spec, args.out)
        n_samples = sum(len(corpus.load_subject(sid)) for sid in corpus.subject_ids())
        print(f"{corpus.dataset_id}: {len(corpus.subject_ids())} subjects, {n_samples} samples -> {args.out}")
    return 0


def _read_raw_dir(input_dir: Path) -> tuple[str, dict[int, str], list[dict]]:
    manifest_path = input_dir / "raw_manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{input_dir}: no raw_manifest.json")
    raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    class_names = {int(k): v for k, v in raw["class_names"].items()}
    return raw["dataset_id"], class_names, raw["subjects"]


def cmd_preprocess(args: argparse.Namespace) -> int:
    run_cfg = RunConfig.load(args.config)
    prep_cfg = run_cfg.preprocess_config()
    montage = load_montage(args.montage)
    input_dir = Path(args.input)
    dataset_id, class_names, subject_entries = _read_raw_dir(input_dir)

    subjects: dict[int, list[corpus_io.EpochSample]] = {}
    labels: dict[int, int] = {}
    for entry in subject_entries:
        sid, label = int(entry["subject_id"]), int(entry["label"])
        samples: list[corpus_io.EpochSample] = []
        for trial_name in entry["trials"]:
            blob = np.load(input_dir / trial_name, allow_pickle=False)
            names = [str(n) for n in blob["channel_names"]]
            if "coords" in blob:
                coords = blob["coords"]
            else:
                missing = [n for n in names if montage.canonical(n) is None]
                if missing:
                    raise DataError(
                        f"{trial_name}: no coordinates given and channel(s) {missing} "
                        "are not montage names; cannot place them"
                    )
                coords = np.stack([montage.coord_of(n) for n in names])
            trial = RawTrial(
                data=blob["data"],
                channel_names=names,
                coords=coords,
                fs=float(blob["fs"]),
                subject_id=sid,
                label=label,
                dataset_id=dataset_id,
            )
            samples.extend(preprocess_trial(trial, prep_cfg, montage))
        if not samples:
            raise DataError(f"subject {sid}: no windows produced (trials shorter than one window?)")
        subjects[sid] = samples
        labels[sid] = label

    corpus = corpus_io.write_corpus(
        args.out,
        dataset_id=dataset_id,
        subjects=subjects,
        labels=labels,
        class_names=class_names,
        sampling_rate=prep_cfg.target_fs,
        notes=f"preprocessed from {input_dir}",
    )
    n_samples = sum(len(v) for v in subjects.values())
    print(f"{dataset_id}: {len(subjects)} subjects, {n_samples} samples -> {args.out}")
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    run_cfg = RunConfig.load(args.config)
    corpora = _load_corpora(args.corpus)
    model_cfg = run_cfg.model_config()
    train_cfg = run_cfg.train_config("pretrain", seed=args.seed)
    ckpt, history = train_eval.pretrain(corpora, model_cfg, train_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "pretrained.leadw"
    save_checkpoint(ckpt_path, ckpt)
    written = report.emit_training(history, out, "pretrain")
    print(f"pretrained checkpoint -> {ckpt_path}")
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    run_cfg = RunConfig.load(args.config)
    corpora = _load_corpora(args.corpus)
    phase = "finetune" if args.start else "supervised"
    train_cfg = run_cfg.train_config(phase, seed=args.seed)
    start = load_checkpoint(args.start) if args.start else None
    model_cfg = start.config if start else run_cfg.model_config()
    split_seed = args.split_seed if args.split_seed is not None else run_cfg.split_seed()
    splits = _splits_for(corpora, split_seed, run_cfg.split_ratios())
    ckpt, history = train_eval.finetune(corpora, model_cfg, train_cfg, splits, start=start)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "finetuned.leadw"
    save_checkpoint(ckpt_path, ckpt)
    written = report.emit_training(history, out, phase)
    print(f"fine-tuned checkpoint -> {ckpt_path}")
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    run_cfg = RunConfig.load(args.config)
    corpora = _load_corpora(args.corpus)
    ckpt = load_checkpoint(args.ckpt)
    if run_cfg.sections.get("model") and run_cfg.model_config().to_dict() != ckpt.config.to_dict():
        raise ShapeError("checkpoint model config disagrees with the config file's model section")
    split_seed = args.split_seed if args.split_seed is not None else run_cfg.split_seed()
    splits = _splits_for(corpora, split_seed, run_cfg.split_ratios())
    reports = [
        train_eval.evaluate(ckpt, corpus, splits[corpus.dataset_id], args.split)
        for corpus in corpora
    ]
    written = report.emit_evaluation(reports, args.out, stem="report")
    for r in reports:
        print(
            f"{r.dataset_id} [{r.split}] sample acc={r.sample_accuracy:.4f} "
            f"f1={r.sample_macro_f1:.4f} subject acc={r.subject_accuracy:.4f} "
            f"f1={r.subject_macro_f1:.4f}"
        )
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    if bool(args.band) == bool(args.region):
        raise ConfigError("pass exactly one of --band or --region")
    run_cfg = RunConfig.load(args.config)
    corpora = _load_corpora(args.corpus)
    ckpt = load_checkpoint(args.ckpt)
    split_seed = args.split_seed if args.split_seed is not None else run_cfg.split_seed()
    splits = _splits_for(corpora, split_seed, run_cfg.split_ratios())
    reports = []
    for corpus in corpora:
        if args.band:
            reports.append(
                train_eval.band_ablation(ckpt, corpus, get_band(args.band), splits[corpus.dataset_id], args.split)
            )
        else:
            reports.append(
                train_eval.region_ablation(
                    ckpt, corpus, get_region(args.region), splits[corpus.dataset_id], args.split
                )
            )
    written = report.emit_evaluation(reports, args.out, stem="ablation")
    for r in reports:
        print(
            f"{r.dataset_id} [{r.split}] sample f1={r.sample_macro_f1:.4f} "
            f"subject f1={r.subject_macro_f1:.4f}"
        )
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lead",
        description="EEG pipeline: synthesize, preprocess, pre-train, fine-tune, evaluate, ablate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus (or raw trials with --raw)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="generator seed (default 41)")
    p.add_argument("--subjects", type=int, help="number of subjects (default 60)")
    p.add_argument("--seconds", type=float, help="trial length in seconds (default 60)")
    p.add_argument("--nuisance", type=float, help="subject fingerprint strength (default 0.5)")
    p.add_argument("--class-channels", help="comma-separated channels carrying the class signal")
    p.add_argument("--dataset-id", help="dataset identifier (default 'synth')")
    p.add_argument("--raw", action="store_true", help="write unprocessed trials for `lead preprocess`")
    p.add_argument("--config", help="run config JSON (synth section)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="run the preprocessing chain over a raw trial directory")
    p.add_argument("--input", required=True, help="directory with raw_manifest.json + trial files")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--montage", help="montage coordinate table (default: packaged 10-20 table)")
    p.add_argument("--config", help="run config JSON (preprocess section)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pretrain", help="self-supervised contrastive pre-training")
    p.add_argument("--corpus", action="append", default=[], help="corpus directory (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--config", help="run config JSON (model/pretrain sections)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised training or fine-tuning across corpora")
    p.add_argument("--corpus", action="append", default=[], help="corpus directory (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--start", help="pre-trained checkpoint to fine-tune from (omit to train fresh)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--split-seed", type=int, default=None, help="subject split seed (default 41)")
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="metrics with majority voting on a split")
    p.add_argument("--corpus", action="append", default=[], help="corpus directory (repeatable)")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="band-filtered or region-masked evaluation")
    p.add_argument("--corpus", action="append", default=[], help="corpus directory (repeatable)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--band", help="frequency band: delta, theta, alpha, beta, gamma, all")
    p.add_argument("--region", help="channel region, e.g. Frontal, Occipital")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LeadError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
