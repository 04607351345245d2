"""Pre-training and fine-tuning loops, evaluation, and ablation harnesses.

Pre-training minimizes the joint contrastive loss over two augmented views per
sample with grouped index shuffling, so same-subject positives co-occur in
batches. Fine-tuning trains encoder plus classifier with cross-entropy on the
union of per-dataset training splits and early-stops on the unweighted mean of
per-dataset validation macro-F1. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .augment import AugmentationParams, make_views_array
from .bands import ChannelRegion, FrequencyBand
from .batching import epoch_seed, make_batches, shuffle_indices
from .checkpoint import Checkpoint, checkpoint_from_model
from .corpus_io import Corpus, SplitAssignment
from .errors import ConfigError, DataError, NumericError, ShapeError
from .metrics import (
    MetricsReport,
    SamplePrediction,
    accuracy,
    macro_f1,
    subject_metrics,
    vote_subjects,
)
from .model import LeadModel, ModelConfig, build_model
from .objective import ContrastBatch, joint_loss
from .signal_prep import CHANNEL_ORDER, bandpass_window, normalize_array

log = logging.getLogger("lead.train")

_EVAL_BATCH = 256
_AUG_STREAM = 104729  # arbitrary fixed stream tag for augmentation RNG


@dataclass
class TrainConfig:
    phase: str = "pretrain"  # pretrain | finetune | supervised
    epochs: int = 50
    batch_size: int = 512
    group_size: int = 2
    lr: float = 2e-4
    weight_decay: float = 0.01
    grad_clip_norm: float = 4.0
    patience: int = 15
    swa_enabled: bool = True
    swa_start_frac: float = 0.6
    seed: int = 41
    augment: AugmentationParams = field(default_factory=AugmentationParams)
    augment_in_finetune: bool = False

    def validate(self) -> "TrainConfig":
        if self.phase not in ("pretrain", "finetune", "supervised"):
            raise ConfigError(f"unknown phase {self.phase!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr < 0:
            raise ConfigError("epochs and batch_size must be positive, lr non-negative")
        if self.phase != "pretrain" and not 0 <= self.patience <= self.epochs:
            raise ConfigError(f"patience {self.patience} must lie in [0, epochs={self.epochs}]")
        if not 0 < self.swa_start_frac <= 1:
            raise ConfigError("swa_start_frac must lie in (0, 1]")
        self.augment.validate()
        return self

    @classmethod
    def pretrain_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(phase="pretrain", epochs=50, batch_size=512, lr=2e-4, swa_enabled=True, patience=0)
        base.update(overrides)
        return cls(**base).validate()

    @classmethod
    def finetune_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(
            phase="finetune", epochs=100, batch_size=128, lr=1e-4, patience=15, swa_enabled=False
        )
        base.update(overrides)
        return cls(**base).validate()

    @classmethod
    def supervised_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(
            phase="supervised", epochs=100, batch_size=128, lr=1e-4, patience=15, swa_enabled=False
        )
        base.update(overrides)
        return cls(**base).validate()


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    """Cosine annealing from lr0 at epoch 0 to zero at the final epoch."""
    if total_epochs <= 1:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))


@dataclass
class AssembledData:
    """Flat sample arrays drawn from one or more corpora, with global subject ids."""

    x: np.ndarray  # (N, T, C) float32
    subject_global: np.ndarray  # (N,) globally unique across datasets
    subject_local: np.ndarray  # (N,) ids within the owning dataset
    labels: np.ndarray  # (N,)
    dataset_index: np.ndarray  # (N,) index into dataset_ids
    dataset_ids: list[str]

    @property
    def n(self) -> int:
        return self.x.shape[0]


def assemble(
    corpora: list[Corpus],
    splits: dict[str, SplitAssignment] | None = None,
    split_name: str | None = None,
) -> AssembledData:
    """Load samples (optionally one split per corpus) into flat arrays.

    Subject ids are offset per dataset so they stay unique across corpora.
    """
    xs, gids, lids, labels, didx = [], [], [], [], []
    dataset_ids = []
    offset = 0
    for corpus in corpora:
        dataset_ids.append(corpus.dataset_id)
        if splits is None:
            sids = corpus.subject_ids()
        else:
            if corpus.dataset_id not in splits:
                raise ConfigError(f"no split assignment for dataset {corpus.dataset_id!r}")
            sids = [
                sid
                for sid in corpus.subject_ids()
                if splits[corpus.dataset_id].split_of(sid) == split_name
            ]
        for sid in sids:
            samples = corpus.load_subject(sid)
            for s in samples:
                xs.append(s.data)
                gids.append(offset + sid)
                lids.append(sid)
                labels.append(s.label)
                didx.append(len(dataset_ids) - 1)
        offset += max(corpus.subject_ids(), default=0)
    if not xs:
        raise DataError("no samples found for the requested corpora/split")
    return AssembledData(
        x=np.stack(xs).astype(np.float32),
        subject_global=np.asarray(gids, dtype=np.int64),
        subject_local=np.asarray(lids, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        dataset_index=np.asarray(didx, dtype=np.int64),
        dataset_ids=dataset_ids,
    )


def _aug_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, epoch, _AUG_STREAM])))


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _snapshot(model: LeadModel) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}


def apply_swa(snapshots: list[dict[str, np.ndarray]], config: ModelConfig) -> Checkpoint:
    """Element-wise arithmetic mean of parameter snapshots."""
    if not snapshots:
        raise ConfigError("cannot average an empty snapshot history")
    names = snapshots[0].keys()
    mean = {
        name: np.mean([snap[name] for snap in snapshots], axis=0, dtype=np.float64).astype(np.float32)
        for name in names
    }
    return Checkpoint(config=config, tensors=mean)


def swa_start_epoch(total_epochs: int, start_frac: float) -> int:
    return min(total_epochs - 1, int(math.ceil(start_frac * total_epochs)))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    values: dict[str, float]


@dataclass
class TrainHistory:
    phase: str
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_epoch: int | None = None

    def series(self, key: str) -> list[float]:
        return [r.values[key] for r in self.records if key in r.values]


def pretrain(
    corpora: list[Corpus],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
) -> tuple[Checkpoint, TrainHistory]:
    """Contrastive pre-training over all subjects of the given corpora."""
    train_cfg.validate()
    model_cfg.validate()
    data = assemble(corpora)
    torch.manual_seed(epoch_seed(train_cfg.seed, 0x70))
    model = build_model(model_cfg, train_cfg.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay
    )
    history = TrainHistory(phase="pretrain")
    snapshots: list[dict[str, np.ndarray]] = []
    swa_from = swa_start_epoch(train_cfg.epochs, train_cfg.swa_start_frac)

    for epoch in range(train_cfg.epochs):
        lr = cosine_lr(train_cfg.lr, epoch, train_cfg.epochs)
        _set_lr(optimizer, lr)
        plan = shuffle_indices(
            data.subject_global,
            batch_size=train_cfg.batch_size,
            group_size=train_cfg.group_size,
            epoch_seed=epoch_seed(train_cfg.seed, epoch),
        )
        batches = make_batches(plan, drop_last=True)
        if not batches:  # corpus smaller than one batch: keep the short batch
            batches = make_batches(plan, drop_last=False)
        rng = _aug_rng(train_cfg.seed, epoch)
        model.train()
        sums = {"joint": 0.0, "sample": 0.0, "subject": 0.0}
        for batch_idx in batches:
            xb = data.x[batch_idx]
            views_a = np.empty_like(xb)
            views_b = np.empty_like(xb)
            for i in range(xb.shape[0]):
                va, vb = make_views_array(xb[i], train_cfg.augment, rng)
                views_a[i] = va
                views_b[i] = vb
            za = model.project(model.encode(torch.from_numpy(views_a)))
            zb = model.project(model.encode(torch.from_numpy(views_b)))
            batch = ContrastBatch(
                za=za,
                zb=zb,
                subject_ids=torch.from_numpy(data.subject_global[batch_idx]),
                temperature=model_cfg.temperature,
                lambda_sample=model_cfg.lambda_sample,
                lambda_subject=model_cfg.lambda_subject,
            )
            loss, l_sam, l_sub = joint_loss(batch)
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite pre-training loss at epoch {epoch}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip_norm)
            optimizer.step()
            sums["joint"] += loss.item()
            sums["sample"] += l_sam.item()
            sums["subject"] += l_sub.item()
        means = {k: v / len(batches) for k, v in sums.items()}
        history.records.append(EpochRecord(epoch=epoch, lr=lr, values=means))
        log.info(
            "pretrain epoch %d/%d lr=%.3e joint=%.4f sample=%.4f subject=%.4f",
            epoch + 1, train_cfg.epochs, lr, means["joint"], means["sample"], means["subject"],
        )
        if train_cfg.swa_enabled and epoch >= swa_from:
            snapshots.append(_snapshot(model))

    if train_cfg.swa_enabled and snapshots:
        ckpt = apply_swa(snapshots, model_cfg)
    else:
        ckpt = checkpoint_from_model(model)
    return ckpt, history


def _check_split_integrity(corpora: list[Corpus], splits: dict[str, SplitAssignment]) -> None:
    for corpus in corpora:
        split = splits.get(corpus.dataset_id)
        if split is None:
            raise ConfigError(f"no split assignment for dataset {corpus.dataset_id!r}")
        subjects = set(corpus.subject_ids())
        assigned = set(split.assignment)
        if subjects - assigned:
            raise DataError(
                f"{corpus.dataset_id}: subjects {sorted(subjects - assigned)} have no split"
            )
        bad = set(split.assignment.values()) - {"train", "val", "test"}
        if bad:
            raise DataError(f"{corpus.dataset_id}: unknown split names {sorted(bad)}")


def _forward_logits(model: LeadModel, x: np.ndarray) -> torch.Tensor:
    outs = []
    with torch.no_grad():
        for start in range(0, x.shape[0], _EVAL_BATCH):
            h = model.encode(torch.from_numpy(x[start : start + _EVAL_BATCH]))
            outs.append(model.classify(h))
    return torch.cat(outs) if outs else torch.empty(0, model.cfg.n_classes)


def _validation_f1(model: LeadModel, val_sets: dict[str, AssembledData]) -> dict[str, float]:
    model.eval()
    scores = {}
    for dataset_id, data in val_sets.items():
        preds = _forward_logits(model, data.x).argmax(dim=1).numpy()
        scores[dataset_id] = macro_f1(data.labels, preds)
    return scores


def finetune(
    corpora: list[Corpus],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    splits: dict[str, SplitAssignment],
    start: Checkpoint | None = None,
) -> tuple[Checkpoint, TrainHistory]:
    """Supervised training on the union of per-dataset training splits.

    Early-stops when the unweighted mean of per-dataset validation macro-F1
    has not improved for more than ``patience`` epochs; returns the best
    checkpoint by that score (or the SWA average when enabled).
    """
    train_cfg.validate()
    _check_split_integrity(corpora, splits)
    train_data = assemble(corpora, splits, "train")
    val_sets = {
        corpus.dataset_id: assemble([corpus], splits, "val")
        for corpus in corpora
    }
    torch.manual_seed(epoch_seed(train_cfg.seed, 0x71))
    if start is not None:
        if start.config.to_dict() != model_cfg.to_dict():
            raise ShapeError(
                "starting checkpoint config disagrees with the requested model config"
            )
        model = start.build_model()
    else:
        model = build_model(model_cfg, train_cfg.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay
    )
    ce = torch.nn.CrossEntropyLoss()
    history = TrainHistory(phase=train_cfg.phase)
    best_score = -math.inf
    best_state: dict[str, np.ndarray] | None = None
    since_best = 0
    snapshots: list[dict[str, np.ndarray]] = []
    swa_from = swa_start_epoch(train_cfg.epochs, train_cfg.swa_start_frac)

    labels_t = torch.from_numpy(train_data.labels)
    for epoch in range(train_cfg.epochs):
        lr = cosine_lr(train_cfg.lr, epoch, train_cfg.epochs)
        _set_lr(optimizer, lr)
        plan = shuffle_indices(
            train_data.subject_global,
            batch_size=train_cfg.batch_size,
            group_size=train_cfg.group_size,
            epoch_seed=epoch_seed(train_cfg.seed, epoch),
        )
        rng = _aug_rng(train_cfg.seed, epoch)
        model.train()
        total_loss, n_batches = 0.0, 0
        for batch_idx in make_batches(plan, drop_last=False):
            xb = train_data.x[batch_idx]
            if train_cfg.augment_in_finetune:
                for i in range(xb.shape[0]):
                    xb[i], _ = make_views_array(xb[i], train_cfg.augment, rng)
            logits = model.classify(model.encode(torch.from_numpy(xb)))
            loss = ce(logits, labels_t[batch_idx])
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite fine-tuning loss at epoch {epoch}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip_norm)
            optimizer.step()
            total_loss += loss.item()
            n_batches += 1

        val_f1 = _validation_f1(model, val_sets)
        mean_f1 = float(np.mean(list(val_f1.values())))
        values = {"train_loss": total_loss / max(n_batches, 1), "mean_val_f1": mean_f1}
        values.update({f"val_f1/{k}": v for k, v in val_f1.items()})
        history.records.append(EpochRecord(epoch=epoch, lr=lr, values=values))
        log.info(
            "%s epoch %d/%d lr=%.3e loss=%.4f mean_val_f1=%.4f",
            train_cfg.phase, epoch + 1, train_cfg.epochs, lr, values["train_loss"], mean_f1,
        )
        if train_cfg.swa_enabled and epoch >= swa_from:
            snapshots.append(_snapshot(model))
        if mean_f1 > best_score:
            best_score = mean_f1
            best_state = _snapshot(model)
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > train_cfg.patience:
                history.stopped_epoch = epoch
                log.info("early stop at epoch %d (best %d)", epoch + 1, (history.best_epoch or 0) + 1)
                break

    if train_cfg.swa_enabled and snapshots:
        return apply_swa(snapshots, model_cfg), history
    assert best_state is not None
    return Checkpoint(config=model_cfg, tensors=best_state), history


def _predict(model: LeadModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = _forward_logits(model, x)
    preds = logits.argmax(dim=1).numpy()
    probs = torch.softmax(logits, dim=1)[:, 1].numpy() if logits.shape[1] > 1 else logits[:, 0].numpy()
    return preds, probs


def _report_for_arrays(
    model: LeadModel,
    data: AssembledData,
    truth: dict[int, int],
    dataset_id: str,
    split_name: str,
) -> MetricsReport:
    model.eval()
    preds, probs = _predict(model, data.x)
    sample_preds = [
        SamplePrediction(subject_id=int(s), predicted=int(p), positive_prob=float(q))
        for s, p, q in zip(data.subject_local, preds, probs)
    ]
    votes = vote_subjects(sample_preds, truth)
    subj_acc, subj_f1 = subject_metrics(votes)
    return MetricsReport(
        dataset_id=dataset_id,
        split=split_name,
        n_samples=data.n,
        n_subjects=len(votes),
        sample_accuracy=accuracy(data.labels, preds),
        sample_macro_f1=macro_f1(data.labels, preds),
        subject_accuracy=subj_acc,
        subject_macro_f1=subj_f1,
        votes=votes,
    )


def evaluate(
    ckpt: Checkpoint,
    corpus: Corpus,
    split: SplitAssignment,
    split_name: str = "test",
) -> MetricsReport:
    """Sample metrics over a split plus majority-vote subject metrics."""
    model = ckpt.build_model()
    data = assemble([corpus], {corpus.dataset_id: split}, split_name)
    truth = {sid: corpus.labels[sid] for sid in set(data.subject_local.tolist())}
    return _report_for_arrays(model, data, truth, corpus.dataset_id, split_name)


def band_ablation(
    ckpt: Checkpoint,
    corpus: Corpus,
    band: FrequencyBand,
    split: SplitAssignment,
    split_name: str = "test",
) -> MetricsReport:
    """Evaluate with every sample band-filtered then re-normalized."""
    model = ckpt.build_model()
    data = assemble([corpus], {corpus.dataset_id: split}, split_name)
    filtered = np.empty_like(data.x)
    for i in range(data.n):
        filtered[i] = normalize_array(bandpass_window(data.x[i], band.lo, band.hi)).astype(np.float32)
    data = replace(data, x=filtered)
    truth = {sid: corpus.labels[sid] for sid in set(data.subject_local.tolist())}
    report = _report_for_arrays(model, data, truth, corpus.dataset_id, split_name)
    report.dataset_id = f"{corpus.dataset_id}[band={band.name}]"
    return report


def region_ablation(
    ckpt: Checkpoint,
    corpus: Corpus,
    region: ChannelRegion,
    split: SplitAssignment,
    split_name: str = "test",
) -> MetricsReport:
    """Evaluate with the region's channels zeroed after normalization."""
    model = ckpt.build_model()
    data = assemble([corpus], {corpus.dataset_id: split}, split_name)
    idx = [CHANNEL_ORDER.index(ch) for ch in region.channels]
    masked = data.x.copy()
    if idx:
        masked[:, :, idx] = 0.0
    data = replace(data, x=masked)
    truth = {sid: corpus.labels[sid] for sid in set(data.subject_local.tolist())}
    report = _report_for_arrays(model, data, truth, corpus.dataset_id, split_name)
    report.dataset_id = f"{corpus.dataset_id}[region={region.name}]"
    return report


def extract_embeddings(ckpt: Checkpoint, x: np.ndarray) -> np.ndarray:
    """Frozen-encoder representations h for an (N, T, C) array."""
    model = ckpt.build_model()
    model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, x.shape[0], _EVAL_BATCH):
            outs.append(model.encode(torch.from_numpy(x[start : start + _EVAL_BATCH])).numpy())
    return np.concatenate(outs) if outs else np.empty((0, 2 * model.cfg.d_model), dtype=np.float32)
