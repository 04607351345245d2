"""Deterministic preprocessing chain for raw multichannel recordings.

Stage order: resample to 128 Hz -> 0.5-45 Hz zero-phase bandpass -> alignment
to the 19-channel 10-20 montage -> 1-second segmentation -> per-channel
standard normalization. Every stage is a pure function; repeated application
gives bitwise-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import butter, firwin, kaiserord, resample_poly, sosfiltfilt

from .corpus_io import EpochSample
from .errors import ConfigError, DataError, DimensionError

# Canonical 10-20 names in the fixed pipeline order. T7/T8/P7/P8 are the same
# physical electrodes as T3/T4/T5/T6 and are accepted as aliases.
CHANNEL_ORDER = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
    "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
)
CHANNEL_ALIASES = {"T7": "T3", "T8": "T4", "P7": "T5", "P8": "T6"}

TARGET_FS = 128.0
WINDOW_SAMPLES = 128

_NORM_EPS = 1e-8
_ZERO_NORM_TOL = 1e-6


@dataclass
class RawTrial:
    """One continuous recording: (T, C) microvolt matrix plus channel geometry."""

    data: np.ndarray
    channel_names: list[str]
    coords: np.ndarray  # (C, 3) unit-sphere positions
    fs: float
    subject_id: int = 0
    label: int = 0
    dataset_id: str = ""

    def validate(self) -> "RawTrial":
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionError(f"trial data must be (T, C), got shape {data.shape}")
        if data.shape[1] != len(self.channel_names):
            raise DimensionError(
                f"{data.shape[1]} data channels vs {len(self.channel_names)} names"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise DataError("duplicate channel names in trial")
        if not np.isfinite(data).all():
            raise DataError("trial data contains non-finite values")
        if self.fs <= 0:
            raise ConfigError(f"sampling rate must be positive, got {self.fs}")
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.shape != (data.shape[1], 3):
            raise DimensionError(f"coords must be (C, 3), got {coords.shape}")
        norms = np.linalg.norm(coords, axis=1)
        if np.abs(norms - 1.0).max() > _ZERO_NORM_TOL:
            raise DataError("channel coordinates must lie on the unit sphere")
        return self


@dataclass(frozen=True)
class Montage:
    """The 19-channel target layout with canonical coordinates and aliases."""

    names: tuple[str, ...]
    coords: np.ndarray  # (19, 3)
    aliases: dict[str, str]
    version: str = "v1"

    def canonical(self, name: str) -> str | None:
        """Resolve a raw channel name to its montage name, or None."""
        folded = {n.lower(): n for n in self.names}
        folded.update({a.lower(): t for a, t in self.aliases.items()})
        return folded.get(name.strip().lower())

    def index(self, name: str) -> int:
        canon = self.canonical(name)
        if canon is None:
            raise DataError(f"channel {name!r} is not in the montage")
        return self.names.index(canon)

    def coord_of(self, name: str) -> np.ndarray:
        return self.coords[self.index(name)]


def load_montage(path: str | Path | None = None) -> Montage:
    """Load the montage coordinate table (packaged resource by default)."""
    if path is None:
        text = resources.files("lead.resources").joinpath("montage_1020.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    version = "v1"
    names: list[str] = []
    rows: list[list[float]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "montage-1020" in line:
                version = line.split()[-1]
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"malformed montage line: {line!r}")
        names.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    coords = np.asarray(rows, dtype=np.float64)
    if tuple(names) != CHANNEL_ORDER:
        raise DataError("montage file must list the 19 standard channels in canonical order")
    norms = np.linalg.norm(coords, axis=1)
    if np.abs(norms - 1.0).max() > _ZERO_NORM_TOL:
        raise DataError("montage coordinates must be unit vectors")
    return Montage(names=tuple(names), coords=coords, aliases=dict(CHANNEL_ALIASES), version=version)


@dataclass(frozen=True)
class AlignmentPlan:
    """Per target channel: copy one source index, or a convex source combination."""

    selects: dict[int, int]  # target index -> source index
    interpolations: dict[int, list[tuple[int, float]]]  # target -> [(source, weight)]

    def apply(self, data: np.ndarray) -> np.ndarray:
        out = np.empty((data.shape[0], len(CHANNEL_ORDER)), dtype=data.dtype)
        for tgt, src in self.selects.items():
            out[:, tgt] = data[:, src]
        for tgt, pairs in self.interpolations.items():
            acc = np.zeros(data.shape[0], dtype=np.float64)
            for src, w in pairs:
                acc += w * data[:, src]
            out[:, tgt] = acc
        return out


@lru_cache(maxsize=64)
def _resample_taps(up: int, down: int) -> np.ndarray:
    # Kaiser-windowed sinc, beta ~= 8.6 (86.7 dB), transition band occupying
    # [0.95, 1.0] of the narrower Nyquist.
    max_rate = max(up, down)
    numtaps, beta = kaiserord(86.7, 0.05 / max_rate)
    numtaps |= 1
    return firwin(numtaps, 0.975 / max_rate, window=("kaiser", beta))


def resample(trial: RawTrial, target_fs: float = TARGET_FS) -> RawTrial:
    """Polyphase rational resampling with a Kaiser anti-alias filter."""
    trial.validate()
    if target_fs <= 0:
        raise ConfigError(f"target_fs must be positive, got {target_fs}")
    if trial.fs == target_fs:
        return replace(trial, data=np.asarray(trial.data, dtype=np.float64).copy())
    ratio = target_fs / trial.fs
    frac = Fraction(ratio).limit_denominator(10000)
    if abs(float(frac) - ratio) > 1e-9:
        raise ConfigError(
            f"rate ratio {trial.fs} -> {target_fs} has no rational form with denominator <= 10000"
        )
    up, down = frac.numerator, frac.denominator
    data = np.asarray(trial.data, dtype=np.float64)
    n_out = int(round(data.shape[0] * ratio))
    taps = _resample_taps(up, down)
    out = resample_poly(data, up, down, axis=0, window=taps)
    if out.shape[0] < n_out:
        out = np.pad(out, ((0, n_out - out.shape[0]), (0, 0)))
    out = out[:n_out]
    return replace(trial, data=out, fs=target_fs)


@lru_cache(maxsize=64)
def _bandpass_sos(lo: float, hi: float, fs: float) -> np.ndarray:
    return butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")


def bandpass(trial: RawTrial, lo: float = 0.5, hi: float = 45.0) -> RawTrial:
    """Zero-phase 4th-order Butterworth bandpass (forward-backward)."""
    trial.validate()
    if not 0 < lo < hi:
        raise ConfigError(f"need 0 < lo < hi, got ({lo}, {hi})")
    if hi >= trial.fs / 2:
        raise ConfigError(f"high edge {hi} Hz reaches Nyquist for fs={trial.fs}")
    sos = _bandpass_sos(lo, hi, trial.fs)
    out = sosfiltfilt(sos, np.asarray(trial.data, dtype=np.float64), axis=0, padtype="even")
    return replace(trial, data=out)


def bandpass_window(window: np.ndarray, lo: float, hi: float, fs: float = TARGET_FS) -> np.ndarray:
    """Apply the same zero-phase bandpass to one (T, C) window array."""
    if not 0 < lo < hi:
        raise ConfigError(f"need 0 < lo < hi, got ({lo}, {hi})")
    if hi >= fs / 2:
        raise ConfigError(f"high edge {hi} Hz reaches Nyquist for fs={fs}")
    sos = _bandpass_sos(lo, hi, fs)
    padlen = min(window.shape[0] - 1, 3 * (2 * sos.shape[0] + 1))
    return sosfiltfilt(sos, np.asarray(window, dtype=np.float64), axis=0, padtype="even", padlen=padlen)


def plan_alignment(channel_names: list[str], coords: np.ndarray, montage: Montage) -> AlignmentPlan:
    """Build the channel mapping used by :func:`align_channels`.

    Name or alias matches are copied verbatim. Remaining targets map to the
    nearest surplus source channel when any source is left unclaimed by a
    name match; otherwise they are interpolated from all sources with
    inverse-squared chordal distance weights.
    """
    if len(channel_names) == 0:
        raise DataError("cannot align a trial with zero channels")
    selects: dict[int, int] = {}
    matched_sources: set[int] = set()
    for si, raw_name in enumerate(channel_names):
        canon = montage.canonical(raw_name)
        if canon is None:
            continue
        ti = montage.names.index(canon)
        if ti not in selects:
            selects[ti] = si
            matched_sources.add(si)
    remaining = [ti for ti in range(len(montage.names)) if ti not in selects]
    interpolations: dict[int, list[tuple[int, float]]] = {}
    if not remaining:
        return AlignmentPlan(selects, interpolations)

    coords = np.asarray(coords, dtype=np.float64)
    surplus = [si for si in range(len(channel_names)) if si not in matched_sources]
    if surplus:
        for ti in remaining:
            target = montage.coords[ti]
            dists = np.linalg.norm(coords[surplus] - target, axis=1)
            best = min(
                range(len(surplus)),
                key=lambda k: (round(dists[k], 12), channel_names[surplus[k]]),
            )
            selects[ti] = surplus[best]
    else:
        for ti in remaining:
            target = montage.coords[ti]
            d2 = np.sum((coords - target) ** 2, axis=1)
            if d2.min() < 1e-18:
                selects[ti] = int(np.argmin(d2))
                continue
            w = 1.0 / d2
            w = w / w.sum()
            interpolations[ti] = [(si, float(w[si])) for si in range(len(w))]
    return AlignmentPlan(selects, interpolations)


def align_channels(trial: RawTrial, montage: Montage | None = None) -> RawTrial:
    """Map a trial onto the 19 montage channels in canonical order."""
    trial.validate()
    montage = montage or load_montage()
    plan = plan_alignment(trial.channel_names, trial.coords, montage)
    data = plan.apply(np.asarray(trial.data, dtype=np.float64))
    return replace(
        trial,
        data=data,
        channel_names=list(montage.names),
        coords=montage.coords.copy(),
    )


def segment(trial: RawTrial, win: int = WINDOW_SAMPLES, stride: int | None = None) -> list[EpochSample]:
    """Cut a trial into fixed-length windows; a trailing partial window is dropped."""
    if win <= 0:
        raise ConfigError(f"window length must be positive, got {win}")
    stride = win if stride is None else stride
    if not 0 < stride <= win:
        raise ConfigError(f"stride must be in (0, win], got {stride}")
    data = np.asarray(trial.data)
    t_total = data.shape[0]
    if t_total < win:
        return []
    count = (t_total - win) // stride + 1
    return [
        EpochSample(
            data=data[i * stride : i * stride + win].astype(np.float32),
            subject_id=trial.subject_id,
            label=trial.label,
            dataset_id=trial.dataset_id,
        )
        for i in range(count)
    ]


def normalize_array(window: np.ndarray) -> np.ndarray:
    """Per-channel standardization; constant channels become all zeros."""
    window = np.asarray(window, dtype=np.float64)
    if not np.isfinite(window).all():
        raise DataError("window contains non-finite values")
    mean = window.mean(axis=0, keepdims=True)
    std = window.std(axis=0, keepdims=True)
    return (window - mean) / np.maximum(std, _NORM_EPS)


def normalize(sample: EpochSample) -> EpochSample:
    out = normalize_array(sample.data).astype(np.float32)
    return EpochSample(out, sample.subject_id, sample.label, sample.dataset_id)


@dataclass
class PreprocessConfig:
    target_fs: float = TARGET_FS
    lo: float = 0.5
    hi: float = 45.0
    win: int = WINDOW_SAMPLES
    stride: int = WINDOW_SAMPLES


def preprocess_trial(
    trial: RawTrial,
    cfg: PreprocessConfig | None = None,
    montage: Montage | None = None,
) -> list[EpochSample]:
    """Full chain: resample -> bandpass -> align -> segment -> normalize."""
    cfg = cfg or PreprocessConfig()
    stage = resample(trial, cfg.target_fs)
    stage = bandpass(stage, cfg.lo, cfg.hi)
    stage = align_channels(stage, montage)
    return [normalize(s) for s in segment(stage, cfg.win, cfg.stride)]
