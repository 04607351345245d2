"""Augmentation bank and two-view generation for contrastive pre-training.

Six techniques operate on a (T, C) window: temporal flipping, temporal
masking, frequency masking, channel masking, jittering, and dropout. Each call
takes an explicit numpy Generator, so results are pure functions of
(input, params, rng state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus_io import EpochSample
from .errors import ConfigError

ALL_KINDS = ("flip", "tmask", "fmask", "cmask", "jitter", "dropout")


@dataclass
class AugmentationParams:
    flip_prob: float = 0.5
    mask_ratio: float = 0.1
    jitter_scale: float = 0.1
    enabled_kinds: tuple[str, ...] = ALL_KINDS

    def validate(self) -> "AugmentationParams":
        for name, v in (("flip_prob", self.flip_prob), ("mask_ratio", self.mask_ratio)):
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.jitter_scale < 0:
            raise ConfigError(f"jitter_scale must be non-negative, got {self.jitter_scale}")
        if not self.enabled_kinds:
            raise ConfigError("enabled_kinds must not be empty")
        unknown = [k for k in self.enabled_kinds if k not in ALL_KINDS]
        if unknown:
            raise ConfigError(f"unknown augmentation kinds {unknown}; choices: {ALL_KINDS}")
        return self


def _mask_count(ratio: float, n: int) -> int:
    # Ceiling so any positive ratio masks at least one element.
    return min(n, math.ceil(ratio * n)) if ratio > 0 else 0


def apply_array(x: np.ndarray, kind: str, params: AugmentationParams, rng: np.random.Generator) -> np.ndarray:
    """Apply one augmentation to a (T, C) array, returning a new array."""
    t, c = x.shape
    if kind == "flip":
        if rng.random() < params.flip_prob:
            return x[::-1].copy()
        return x.copy()
    if kind == "tmask":
        out = x.copy()
        k = _mask_count(params.mask_ratio, t)
        if k:
            out[rng.choice(t, size=k, replace=False)] = 0.0
        return out
    if kind == "fmask":
        n_bins = t // 2 + 1
        k = _mask_count(params.mask_ratio, n_bins)
        spectrum = np.fft.rfft(x, axis=0)
        if k:
            spectrum[rng.choice(n_bins, size=k, replace=False)] = 0.0
        return np.fft.irfft(spectrum, n=t, axis=0).astype(x.dtype, copy=False)
    if kind == "cmask":
        out = x.copy()
        k = _mask_count(params.mask_ratio, c)
        if k:
            out[:, rng.choice(c, size=k, replace=False)] = 0.0
        return out
    if kind == "jitter":
        return x + (params.jitter_scale * rng.random(size=x.shape)).astype(x.dtype, copy=False)
    if kind == "dropout":
        keep = rng.random(size=x.shape) >= params.mask_ratio
        return x * keep
    raise ConfigError(f"unknown augmentation kind {kind!r}; choices: {ALL_KINDS}")


def apply(sample: EpochSample, kind: str, params: AugmentationParams, rng: np.random.Generator) -> EpochSample:
    out = apply_array(sample.data, kind, params, rng)
    return EpochSample(out, sample.subject_id, sample.label, sample.dataset_id)


def draw_kind(params: AugmentationParams, rng: np.random.Generator) -> str:
    kinds = sorted(params.enabled_kinds)
    return kinds[rng.integers(len(kinds))]


def make_views(
    sample: EpochSample, params: AugmentationParams, rng: np.random.Generator
) -> tuple[EpochSample, EpochSample]:
    """Two independently augmented views of one sample.

    RNG consumption order is fixed (kind a, kind b, apply a, apply b), so a
    given generator state always yields the same pair.
    """
    params.validate()
    kind_a = draw_kind(params, rng)
    kind_b = draw_kind(params, rng)
    return apply(sample, kind_a, params, rng), apply(sample, kind_b, params, rng)


def make_views_array(
    x: np.ndarray, params: AugmentationParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Array-level twin of :func:`make_views` for hot training loops."""
    kind_a = draw_kind(params, rng)
    kind_b = draw_kind(params, rng)
    return apply_array(x, kind_a, params, rng), apply_array(x, kind_b, params, rng)
