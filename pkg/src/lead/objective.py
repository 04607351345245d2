"""Sample-level and subject-level InfoNCE losses over batch projections.

Both losses share a similarity matrix S[i, j] = cos(za_i, zb_j) / tau. The
sample loss scores the diagonal against each row; the subject loss averages
the same row-wise terms over every column whose subject id matches row i
(including the diagonal, so it reduces exactly to the sample loss when all
subject ids in the batch are distinct). Rows are log-sum-exp stabilized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import ConfigError

_NORM_EPS = 1e-12

DEFAULT_TEMPERATURE = 0.1
DEFAULT_LAMBDA_SAMPLE = 0.5
DEFAULT_LAMBDA_SUBJECT = 0.5


@dataclass
class ContrastBatch:
    za: torch.Tensor  # (B, D) projections of view a
    zb: torch.Tensor  # (B, D) projections of view b
    subject_ids: torch.Tensor  # (B,)
    temperature: float = DEFAULT_TEMPERATURE
    lambda_sample: float = DEFAULT_LAMBDA_SAMPLE
    lambda_subject: float = DEFAULT_LAMBDA_SUBJECT


def _check_temperature(temperature: float) -> None:
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")


def cosine_sim(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of two vectors, zero-norm guarded."""
    nu = torch.linalg.vector_norm(u).clamp_min(_NORM_EPS)
    nv = torch.linalg.vector_norm(v).clamp_min(_NORM_EPS)
    return (u @ v) / (nu * nv)


def _sim_matrix(za: torch.Tensor, zb: torch.Tensor, temperature: float) -> torch.Tensor:
    a = za / torch.linalg.vector_norm(za, dim=1, keepdim=True).clamp_min(_NORM_EPS)
    b = zb / torch.linalg.vector_norm(zb, dim=1, keepdim=True).clamp_min(_NORM_EPS)
    return (a @ b.T) / temperature


def sample_loss(
    za: torch.Tensor,
    zb: torch.Tensor,
    temperature: float = DEFAULT_TEMPERATURE,
) -> torch.Tensor:
    """Instance-discrimination InfoNCE: the paired view is the positive."""
    _check_temperature(temperature)
    s = _sim_matrix(za, zb, temperature)
    log_denom = torch.logsumexp(s, dim=1)
    return (log_denom - s.diagonal()).mean()


def subject_loss(
    za: torch.Tensor,
    zb: torch.Tensor,
    subject_ids: torch.Tensor | Sequence[int],
    temperature: float = DEFAULT_TEMPERATURE,
) -> torch.Tensor:
    """Subject-discrimination InfoNCE: all same-subject views are positives."""
    _check_temperature(temperature)
    if not torch.is_tensor(subject_ids):
        subject_ids = torch.as_tensor(subject_ids)
    s = _sim_matrix(za, zb, temperature)
    log_denom = torch.logsumexp(s, dim=1, keepdim=True)
    positives = subject_ids.view(-1, 1) == subject_ids.view(1, -1)
    per_pair = log_denom - s
    per_row = (per_pair * positives).sum(dim=1) / positives.sum(dim=1)
    return per_row.mean()


def joint_loss(
    batch: ContrastBatch,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Weighted sum of the two losses; returns (joint, sample, subject)."""
    if abs(batch.lambda_sample + batch.lambda_subject - 1.0) > 1e-6:
        raise ConfigError(
            f"loss weights must sum to 1, got {batch.lambda_sample} + {batch.lambda_subject}"
        )
    l_sam = sample_loss(batch.za, batch.zb, batch.temperature)
    l_sub = subject_loss(batch.za, batch.zb, batch.subject_ids, batch.temperature)
    return batch.lambda_sample * l_sam + batch.lambda_subject * l_sub, l_sam, l_sub
