"""Canonical frequency bands and scalp regions used for evaluation ablations."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class FrequencyBand:
    name: str
    lo: float  # Hz
    hi: float  # Hz

    def __post_init__(self):
        if not (0 < self.lo < self.hi < 64):
            raise ConfigError(f"band {self.name}: need 0 < lo < hi < 64, got ({self.lo}, {self.hi})")


BANDS: dict[str, FrequencyBand] = {
    "delta": FrequencyBand("delta", 0.5, 4.0),
    "theta": FrequencyBand("theta", 4.0, 7.0),
    "alpha": FrequencyBand("alpha", 8.0, 12.0),
    "beta": FrequencyBand("beta", 12.0, 30.0),
    "gamma": FrequencyBand("gamma", 30.0, 45.0),
    "all": FrequencyBand("all", 0.5, 45.0),
}


@dataclass(frozen=True)
class ChannelRegion:
    name: str
    channels: tuple[str, ...]


REGIONS: dict[str, ChannelRegion] = {
    "Frontopolar": ChannelRegion("Frontopolar", ("Fp1", "Fp2")),
    "Frontal": ChannelRegion("Frontal", ("F7", "F3", "Fz", "F4", "F8")),
    "Temporal": ChannelRegion("Temporal", ("T3", "T4", "T5", "T6")),
    "Parietal": ChannelRegion("Parietal", ("P3", "Pz", "P4")),
    "Occipital": ChannelRegion("Occipital", ("O1", "O2")),
    "Central": ChannelRegion("Central", ("C3", "Cz", "C4")),
}


def get_band(name: str) -> FrequencyBand:
    try:
        return BANDS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown frequency band {name!r}; choices: {sorted(BANDS)}") from None


def get_region(name: str) -> ChannelRegion:
    for key, region in REGIONS.items():
        if key.lower() == name.lower():
            return region
    raise ConfigError(f"unknown channel region {name!r}; choices: {sorted(REGIONS)}")
