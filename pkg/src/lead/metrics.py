"""Sample-level metrics and subject-level majority voting."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

POSITIVE_CLASS = 1


def accuracy(truth: Sequence[int], preds: Sequence[int]) -> float:
    truth = np.asarray(truth)
    preds = np.asarray(preds)
    if truth.shape != preds.shape:
        raise DataError(f"truth/prediction length mismatch: {truth.shape} vs {preds.shape}")
    if truth.size == 0:
        raise DataError("cannot score an empty prediction set")
    return float((truth == preds).mean())


def macro_f1(truth: Sequence[int], preds: Sequence[int]) -> float:
    """Unweighted mean F1 over the classes present in truth or predictions.

    A class with zero precision+recall contributes an F1 of 0.
    """
    truth = np.asarray(truth)
    preds = np.asarray(preds)
    if truth.shape != preds.shape:
        raise DataError(f"truth/prediction length mismatch: {truth.shape} vs {preds.shape}")
    if truth.size == 0:
        raise DataError("cannot score an empty prediction set")
    classes = sorted(set(truth.tolist()) | set(preds.tolist()))
    scores = []
    for cls in classes:
        tp = int(((preds == cls) & (truth == cls)).sum())
        fp = int(((preds == cls) & (truth != cls)).sum())
        fn = int(((preds != cls) & (truth == cls)).sum())
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass
class SamplePrediction:
    subject_id: int
    predicted: int
    positive_prob: float


@dataclass
class SubjectVote:
    subject_id: int
    true_label: int
    voted_label: int
    tally: dict[int, int]
    mean_positive_prob: float


@dataclass
class MetricsReport:
    dataset_id: str
    split: str
    n_samples: int
    n_subjects: int
    sample_accuracy: float
    sample_macro_f1: float
    subject_accuracy: float
    subject_macro_f1: float
    votes: list[SubjectVote] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "split": self.split,
            "n_samples": self.n_samples,
            "n_subjects": self.n_subjects,
            "sample_accuracy": self.sample_accuracy,
            "sample_macro_f1": self.sample_macro_f1,
            "subject_accuracy": self.subject_accuracy,
            "subject_macro_f1": self.subject_macro_f1,
            "votes": [
                {
                    "subject_id": v.subject_id,
                    "true_label": v.true_label,
                    "voted_label": v.voted_label,
                    "tally": {str(k): c for k, c in sorted(v.tally.items())},
                    "mean_positive_prob": v.mean_positive_prob,
                }
                for v in self.votes
            ],
        }


def vote_subjects(
    sample_preds: Iterable[SamplePrediction],
    truth: dict[int, int],
) -> list[SubjectVote]:
    """Assign each subject its modal predicted class.

    An exact tie goes to the class with the higher mean predicted
    positive-class probability; if that still ties, the positive class wins.
    """
    by_subject: dict[int, list[SamplePrediction]] = defaultdict(list)
    for pred in sample_preds:
        if pred.subject_id not in truth:
            raise DataError(f"prediction for unknown subject {pred.subject_id}")
        by_subject[pred.subject_id].append(pred)

    votes = []
    for sid in sorted(by_subject):
        preds = by_subject[sid]
        tally = Counter(p.predicted for p in preds)
        top = max(tally.values())
        leaders = sorted(cls for cls, n in tally.items() if n == top)
        mean_prob = float(np.mean([p.positive_prob for p in preds]))
        if len(leaders) == 1:
            label = leaders[0]
        elif mean_prob > 0.5:
            label = POSITIVE_CLASS if POSITIVE_CLASS in leaders else leaders[-1]
        elif mean_prob < 0.5:
            negatives = [cls for cls in leaders if cls != POSITIVE_CLASS]
            label = negatives[0] if negatives else leaders[0]
        else:
            label = POSITIVE_CLASS if POSITIVE_CLASS in leaders else leaders[-1]
        votes.append(
            SubjectVote(
                subject_id=sid,
                true_label=truth[sid],
                voted_label=label,
                tally=dict(tally),
                mean_positive_prob=mean_prob,
            )
        )
    return votes


def subject_metrics(votes: Sequence[SubjectVote]) -> tuple[float, float]:
    truth = [v.true_label for v in votes]
    voted = [v.voted_label for v in votes]
    return accuracy(truth, voted), macro_f1(truth, voted)
