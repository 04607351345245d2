"""Synthetic EEG corpus generator for desk-scale verification.

Each subject's trial is the sum of three parts, all at 128 Hz over the 19
montage channels:

* class signal: per-band band-limited noise whose power is scaled by the
  subject's class multipliers (optionally restricted to a channel subset),
* subject nuisance: noise shaped by a fixed random spectral fingerprint (one
  smooth gain curve per channel) drawn once per subject and scaled by
  ``subject_nuisance_strength``; per-channel curves survive the per-channel
  normalization as spectral shape, keeping subjects identifiable,
* white noise.

Trials are cut into non-overlapping 1-second windows and per-channel
standardized, matching what the preprocessing chain would emit. Everything is
driven by counter-based RNG streams keyed on (seed, subject), so a fixed seed
reproduces the corpus bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bands import BANDS
from .corpus_io import Corpus, EpochSample, write_corpus
from .errors import ConfigError
from .signal_prep import CHANNEL_ORDER, RawTrial, load_montage, normalize, segment

FS = 128.0
CLASS_NAMES = {0: "hc", 1: "ad"}
SIGNAL_BANDS = ("delta", "theta", "alpha", "beta", "gamma")

_WHITE_STD = 1.0
_FINGERPRINT_BASE_STD = 2.0
_FINGERPRINT_NODES = 6
_FINGERPRINT_LOG_STD = 1.2


def default_band_power() -> dict[str, dict[str, float]]:
    """Positive class gets doubled low-band power, mirroring slowed rhythms."""
    base = {b: 1.0 for b in SIGNAL_BANDS}
    slowed = dict(base)
    slowed["delta"] = 2.0
    slowed["theta"] = 2.0
    return {"hc": base, "ad": slowed}


@dataclass
class SynthSpec:
    n_subjects: int = 60
    class_band_power: dict[str, dict[str, float]] = field(default_factory=default_band_power)
    subject_nuisance_strength: float = 0.5
    trial_seconds: float = 60.0
    seed: int = 41
    class_channels: tuple[str, ...] | None = None  # restrict class signal to these channels
    dataset_id: str = "synth"

    def validate(self) -> "SynthSpec":
        if self.n_subjects < 4:
            raise ConfigError(f"need at least 4 subjects (one per class per split), got {self.n_subjects}")
        if self.trial_seconds <= 0:
            raise ConfigError("trial_seconds must be positive")
        if self.subject_nuisance_strength < 0:
            raise ConfigError("subject_nuisance_strength must be non-negative")
        for cls, powers in self.class_band_power.items():
            for band, mult in powers.items():
                if band not in BANDS:
                    raise ConfigError(f"unknown band {band!r} for class {cls!r}")
                if mult <= 0:
                    raise ConfigError(f"band multiplier must be positive, got {band}={mult}")
        if self.class_channels is not None:
            unknown = [c for c in self.class_channels if c not in CHANNEL_ORDER]
            if unknown:
                raise ConfigError(f"class_channels not in montage: {unknown}")
        return self


def _band_mask(n_samples: int, lo: float, hi: float) -> np.ndarray:
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / FS)
    return (freqs >= lo) & (freqs < hi)


def _band_noise(rng: np.random.Generator, n_samples: int, mask: np.ndarray) -> np.ndarray:
    """Unit-variance noise confined to the masked rfft bins."""
    spectrum = np.fft.rfft(rng.standard_normal(n_samples))
    spectrum[~mask] = 0.0
    x = np.fft.irfft(spectrum, n=n_samples)
    frac = mask.sum() / mask.size
    return x / np.sqrt(max(frac, 1e-12))


def _fingerprint_envelope(rng: np.random.Generator, n_samples: int) -> np.ndarray:
    """Smooth random spectral gain curve with unit mean power."""
    n_bins = n_samples // 2 + 1
    nodes = np.linspace(0, n_bins - 1, _FINGERPRINT_NODES)
    log_gain = rng.standard_normal(_FINGERPRINT_NODES) * _FINGERPRINT_LOG_STD
    env = np.exp(np.interp(np.arange(n_bins), nodes, log_gain))
    return env / np.sqrt(np.mean(env**2))


def _subject_rng(seed: int, subject_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, subject_id])))


def subject_class(spec: SynthSpec, subject_id: int) -> int:
    """Round-robin class assignment keeps both classes balanced for any n."""
    return (subject_id - 1) % 2


def generate_trial(spec: SynthSpec, subject_id: int) -> RawTrial:
    """One subject's raw trial at 128 Hz over the 19 montage channels."""
    spec.validate()
    label = subject_class(spec, subject_id)
    class_name = CLASS_NAMES[label]
    multipliers = {b: 1.0 for b in SIGNAL_BANDS}
    multipliers.update(spec.class_band_power.get(class_name, {}))

    n_samples = int(round(spec.trial_seconds * FS))
    n_channels = len(CHANNEL_ORDER)
    rng = _subject_rng(spec.seed, subject_id)
    envelopes = [_fingerprint_envelope(rng, n_samples) for _ in range(n_channels)]

    if spec.class_channels is None:
        class_mask = np.ones(n_channels, dtype=bool)
    else:
        class_mask = np.array([name in spec.class_channels for name in CHANNEL_ORDER])

    data = np.zeros((n_samples, n_channels))
    for ci in range(n_channels):
        x = np.zeros(n_samples)
        for band_name in SIGNAL_BANDS:
            band = BANDS[band_name]
            mask = _band_mask(n_samples, band.lo, band.hi)
            mult = multipliers[band_name] if class_mask[ci] else 1.0
            x += np.sqrt(mult) * _band_noise(rng, n_samples, mask)
        spectrum = np.fft.rfft(rng.standard_normal(n_samples)) * envelopes[ci]
        x += spec.subject_nuisance_strength * _FINGERPRINT_BASE_STD * np.fft.irfft(spectrum, n=n_samples)
        x += _WHITE_STD * rng.standard_normal(n_samples)
        data[:, ci] = x

    montage = load_montage()
    return RawTrial(
        data=data,
        channel_names=list(CHANNEL_ORDER),
        coords=montage.coords.copy(),
        fs=FS,
        subject_id=subject_id,
        label=label,
        dataset_id=spec.dataset_id,
    )


def generate_samples(spec: SynthSpec, subject_id: int) -> list[EpochSample]:
    """Windowed, normalized samples for one subject."""
    trial = generate_trial(spec, subject_id)
    return [normalize(s) for s in segment(trial, win=int(FS), stride=int(FS))]


def synth_generate(spec: SynthSpec, out_dir: str | Path) -> Corpus:
    """Generate and write the full synthetic corpus; returns the open corpus."""
    spec.validate()
    subjects: dict[int, list[EpochSample]] = {}
    labels: dict[int, int] = {}
    for sid in range(1, spec.n_subjects + 1):
        subjects[sid] = generate_samples(spec, sid)
        labels[sid] = subject_class(spec, sid)
    notes = (
        f"synthetic corpus seed={spec.seed} nuisance={spec.subject_nuisance_strength} "
        f"trial_seconds={spec.trial_seconds} class_channels={spec.class_channels or 'all'}"
    )
    return write_corpus(
        out_dir,
        dataset_id=spec.dataset_id,
        subjects=subjects,
        labels=labels,
        class_names=dict(CLASS_NAMES),
        sampling_rate=FS,
        notes=notes,
    )


def write_raw_trials(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write unprocessed trials (npz + manifest) to feed the preprocess command."""
    import json

    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid in range(1, spec.n_subjects + 1):
        trial = generate_trial(spec, sid)
        name = f"trial_{sid}.npz"
        np.savez(
            out / name,
            data=trial.data,
            channel_names=np.array(trial.channel_names),
            coords=trial.coords,
            fs=np.array(trial.fs),
        )
        entries.append({"subject_id": sid, "label": trial.label, "trials": [name]})
    manifest = {
        "dataset_id": spec.dataset_id,
        "class_names": {str(k): v for k, v in CLASS_NAMES.items()},
        "subjects": entries,
    }
    (out / "raw_manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return out
