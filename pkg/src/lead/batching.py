"""Grouped index shuffling so same-subject samples co-occur within batches.

The per-epoch plan sorts sample indices by subject id, chunks them into small
consecutive groups, shuffles whole groups, then re-chunks into batches and
shuffles within each batch. Any trailing partial group is kept at the end so
no full group ever straddles a batch boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

PRETRAIN_BATCH_SIZE = 512
DEFAULT_GROUP_SIZE = 2


@dataclass
class BatchPlan:
    order: np.ndarray  # permutation of 0..N-1
    batch_size: int
    group_size: int
    epoch_seed: int


def epoch_seed(run_seed: int, epoch: int) -> int:
    """Stable per-epoch seed derived from the run seed."""
    return int(np.random.SeedSequence([run_seed, epoch]).generate_state(1, np.uint64)[0])


def _plan_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))


def shuffle_indices(
    subject_ids: Sequence[int] | np.ndarray,
    batch_size: int = PRETRAIN_BATCH_SIZE,
    group_size: int = DEFAULT_GROUP_SIZE,
    epoch_seed: int = 0,
) -> BatchPlan:
    """Two-step grouped shuffle over sample indices, deterministic per seed."""
    ids = np.asarray(subject_ids)
    n = ids.shape[0]
    if n < 1:
        raise ConfigError("need at least one sample to shuffle")
    if batch_size < 1 or group_size < 1:
        raise ConfigError("batch_size and group_size must be positive")
    if group_size > batch_size:
        raise ConfigError(f"group_size {group_size} exceeds batch_size {batch_size}")
    if batch_size % group_size != 0:
        raise ConfigError(f"batch_size {batch_size} must be divisible by group_size {group_size}")

    rng = _plan_rng(epoch_seed)
    indices = np.argsort(ids, kind="stable")

    n_full = (n // group_size) * group_size
    full_groups = indices[:n_full].reshape(-1, group_size)
    tail = indices[n_full:]
    perm = rng.permutation(full_groups.shape[0])
    order = np.concatenate([full_groups[perm].reshape(-1), tail])

    for start in range(0, n, batch_size):
        chunk = order[start : start + batch_size]
        order[start : start + batch_size] = chunk[rng.permutation(chunk.shape[0])]
    return BatchPlan(order=order, batch_size=batch_size, group_size=group_size, epoch_seed=epoch_seed)


def make_batches(plan: BatchPlan, drop_last: bool = False) -> list[np.ndarray]:
    """Cut the planned order into consecutive batches."""
    n = plan.order.shape[0]
    batches = [plan.order[i : i + plan.batch_size] for i in range(0, n, plan.batch_size)]
    if drop_last and batches and batches[-1].shape[0] < plan.batch_size:
        batches.pop()
    return batches
