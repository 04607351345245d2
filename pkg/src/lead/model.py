"""Dual-branch transformer encoder with projection head and linear classifier.

The temporal branch embeds cross-channel patches of length ``patch_len`` as
tokens; the spatial branch embeds whole channel series after a 1x1
up-dimensioning convolution. Both run the same depth of standard pre-norm
encoder layers in parallel; the final representation concatenates the last
token of each branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError, NumericError, ShapeError


@dataclass
class ModelConfig:
    d_model: int = 128
    n_layers: int = 12  # total depth, split evenly across the two branches
    n_heads: int = 8
    d_ff: int = 256
    patch_len: int = 8
    target_channels: int = 128  # token count of the spatial branch
    n_classes: int = 2
    input_timestamps: int = 128
    input_channels: int = 19
    dropout: float = 0.1
    temperature: float = 0.1
    lambda_sample: float = 0.5
    lambda_subject: float = 0.5

    def validate(self) -> "ModelConfig":
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.patch_len < 1:
            raise ConfigError(f"patch_len must be >= 1, got {self.patch_len}")
        if self.n_layers < 2 or self.n_layers % 2 != 0:
            raise ConfigError(f"n_layers must be a positive even total, got {self.n_layers}")
        if self.target_channels < self.input_channels:
            raise ConfigError(
                f"target_channels {self.target_channels} < input_channels {self.input_channels}"
            )
        if abs(self.lambda_sample + self.lambda_subject - 1.0) > 1e-6:
            raise ConfigError("lambda_sample + lambda_subject must equal 1")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        return self

    @property
    def layers_per_branch(self) -> int:
        return self.n_layers // 2

    @property
    def n_patches(self) -> int:
        return math.ceil(self.input_timestamps / self.patch_len)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**raw).validate()


def sinusoidal_table(n_positions: int, dim: int) -> torch.Tensor:
    """Fixed sine/cosine positional table of shape (n_positions, dim)."""
    position = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    half = torch.arange(0, dim, 2, dtype=torch.float64)
    div = torch.exp(-math.log(10000.0) * half / max(dim, 1))
    table = torch.zeros(n_positions, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: table[:, 1::2].shape[1]])
    return table.to(torch.float32)


class EncoderLayer(nn.Module):
    """Pre-norm self-attention + feed-forward block."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = nn.MultiheadAttention(d_model, n_heads, dropout=dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, d_ff),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(d_ff, d_model),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + self.dropout(attn_out)
        x = x + self.dropout(self.ff(self.norm2(x)))
        return x


class BranchEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.d_model, cfg.n_heads, cfg.d_ff, cfg.dropout)
            for _ in range(cfg.layers_per_branch)
        )
        self.final_norm = nn.LayerNorm(cfg.d_model)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            tokens = layer(tokens)
        return self.final_norm(tokens)


class DualBranchEncoder(nn.Module):
    """Backbone f(.): (B, T, C) -> (B, 2 * d_model)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        t, c, d = cfg.input_timestamps, cfg.input_channels, cfg.d_model

        self.patch_proj = nn.Linear(cfg.patch_len * c, d)
        self.register_buffer("patch_pos", sinusoidal_table(cfg.n_patches, d))
        self.temporal = BranchEncoder(cfg)

        self.register_buffer("channel_pos", sinusoidal_table(c, t))
        self.up_channels = nn.Conv1d(c, cfg.target_channels, kernel_size=1)
        self.series_proj = nn.Linear(t, d)
        self.spatial = BranchEncoder(cfg)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if x.ndim != 3 or x.shape[1] != cfg.input_timestamps or x.shape[2] != cfg.input_channels:
            raise ShapeError(
                f"expected input (B, {cfg.input_timestamps}, {cfg.input_channels}), got {tuple(x.shape)}"
            )
        b, t, c = x.shape
        pad = cfg.n_patches * cfg.patch_len - t
        xt = torch.nn.functional.pad(x, (0, 0, 0, pad)) if pad else x
        patches = xt.reshape(b, cfg.n_patches, cfg.patch_len * c)
        tokens_t = self.patch_proj(patches) + self.patch_pos
        h_t = self.temporal(tokens_t)[:, -1]

        xc = x.transpose(1, 2) + self.channel_pos
        tokens_c = self.series_proj(self.up_channels(xc))
        h_c = self.spatial(tokens_c)[:, -1]

        h = torch.cat([h_t, h_c], dim=1)
        if not torch.isfinite(h).all():
            raise NumericError("encoder produced non-finite activations")
        return h


class ProjectionHead(nn.Module):
    """g(.): two fully connected layers, 2D -> D -> D. Pre-training only."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fc1 = nn.Linear(2 * cfg.d_model, cfg.d_model)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(cfg.d_model, cfg.d_model)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(h)))


class LeadModel(nn.Module):
    """Encoder plus both heads, with explicit encode/project/classify entry points."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = DualBranchEncoder(cfg)
        self.projection = ProjectionHead(cfg)
        self.classifier = nn.Linear(2 * cfg.d_model, cfg.n_classes)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def project(self, h: torch.Tensor) -> torch.Tensor:
        self._check_h(h)
        return self.projection(h)

    def classify(self, h: torch.Tensor) -> torch.Tensor:
        self._check_h(h)
        return self.classifier(h)

    def _check_h(self, h: torch.Tensor) -> None:
        if h.ndim != 2 or h.shape[1] != 2 * self.cfg.d_model:
            raise ShapeError(f"expected (B, {2 * self.cfg.d_model}) representation, got {tuple(h.shape)}")

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _fan_in(param: torch.Tensor) -> int:
    if param.ndim == 1:
        return param.shape[0]
    # Linear/attention weights are (out, in); conv weights (out, in, k).
    return int(param.shape[1:].numel()) if param.ndim > 2 else param.shape[1]


def init_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic scaled-uniform init over sorted parameter names."""
    gen = torch.Generator().manual_seed(seed)
    params = dict(model.named_parameters())
    for name in sorted(params):
        p = params[name]
        with torch.no_grad():
            if "norm" in name.lower() and name.endswith("weight"):
                p.fill_(1.0)
            elif name.endswith("bias"):
                p.zero_()
            else:
                bound = 1.0 / math.sqrt(max(_fan_in(p), 1))
                p.uniform_(-bound, bound, generator=gen)


def build_model(cfg: ModelConfig, seed: int = 41) -> LeadModel:
    """Construct and deterministically initialize a model."""
    cfg.validate()
    model = LeadModel(cfg)
    init_parameters(model, seed)
    return model
