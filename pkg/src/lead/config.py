"""Run configuration file: one JSON document with command-scoped sections.

Recognized sections: synth, preprocess, model, pretrain, finetune, supervised,
evaluate. Unknown sections or keys are rejected before anything executes, and
each value passes through the owning module's validation.
"""

from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path
from typing import Any

from .augment import AugmentationParams
from .errors import ConfigError
from .model import ModelConfig
from .signal_prep import PreprocessConfig
from .synth import SynthSpec
from .train_eval import TrainConfig

SECTIONS = ("synth", "preprocess", "model", "pretrain", "finetune", "supervised", "evaluate")
_EVALUATE_KEYS = {"split_seed", "ratios"}


class RunConfig:
    """Parsed and validated run configuration."""

    def __init__(self, sections: dict[str, dict[str, Any]] | None = None):
        self.sections = sections or {}

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object of sections")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"{path}: unknown config sections {sorted(unknown)}")
        for name, body in raw.items():
            if not isinstance(body, dict):
                raise ConfigError(f"{path}: section {name!r} must be an object")
        cfg = cls(raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.model_config()
        self.preprocess_config()
        self.synth_spec()
        for phase in ("pretrain", "finetune", "supervised"):
            self.train_config(phase)
        bad = set(self.sections.get("evaluate", {})) - _EVALUATE_KEYS
        if bad:
            raise ConfigError(f"evaluate section: unknown keys {sorted(bad)}")

    def _section(self, name: str, allowed: set[str]) -> dict[str, Any]:
        body = dict(self.sections.get(name, {}))
        unknown = set(body) - allowed
        if unknown:
            raise ConfigError(f"{name} section: unknown keys {sorted(unknown)}")
        return body

    def model_config(self, **overrides) -> ModelConfig:
        allowed = {f.name for f in fields(ModelConfig)}
        body = self._section("model", allowed)
        body.update(overrides)
        return ModelConfig(**body).validate()

    def preprocess_config(self, **overrides) -> PreprocessConfig:
        allowed = {f.name for f in fields(PreprocessConfig)}
        body = self._section("preprocess", allowed)
        body.update(overrides)
        return PreprocessConfig(**body)

    def synth_spec(self, **overrides) -> SynthSpec:
        allowed = {f.name for f in fields(SynthSpec)}
        body = self._section("synth", allowed)
        if "class_channels" in body and body["class_channels"] is not None:
            body["class_channels"] = tuple(body["class_channels"])
        body.update(overrides)
        return SynthSpec(**body).validate()

    def train_config(self, phase: str, **overrides) -> TrainConfig:
        if phase not in ("pretrain", "finetune", "supervised"):
            raise ConfigError(f"unknown training phase {phase!r}")
        allowed = {f.name for f in fields(TrainConfig)} - {"phase"}
        body = self._section(phase, allowed)
        if "augment" in body:
            aug_allowed = {f.name for f in fields(AugmentationParams)}
            unknown = set(body["augment"]) - aug_allowed
            if unknown:
                raise ConfigError(f"{phase}.augment: unknown keys {sorted(unknown)}")
            aug = dict(body["augment"])
            if "enabled_kinds" in aug:
                aug["enabled_kinds"] = tuple(aug["enabled_kinds"])
            body["augment"] = AugmentationParams(**aug)
        body.update(overrides)
        factory = {
            "pretrain": TrainConfig.pretrain_defaults,
            "finetune": TrainConfig.finetune_defaults,
            "supervised": TrainConfig.supervised_defaults,
        }[phase]
        return factory(**body)

    def split_seed(self, default: int = 41) -> int:
        return int(self.sections.get("evaluate", {}).get("split_seed", default))

    def split_ratios(self) -> tuple[float, float, float]:
        ratios = self.sections.get("evaluate", {}).get("ratios", (0.6, 0.2, 0.2))
        if len(ratios) != 3:
            raise ConfigError(f"ratios must have three entries, got {ratios}")
        return tuple(float(r) for r in ratios)
