"""LEADW checkpoint archive: named float32 tensors plus embedded model config.

Layout (all little-endian):
    magic ``LEADW`` (5 bytes) | version u16 | n_entries u32 |
    per entry: name_len u16, name utf-8, dtype u8, ndim u8, dims u32 each,
    offset u64 (into the payload section) | payload bytes.

dtype codes: 0 = float32, 1 = uint8 (raw bytes, used for the config blob).
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError, LengthError, ShapeError, VersionError
from .model import LeadModel, ModelConfig

CHECKPOINT_MAGIC = b"LEADW"
CHECKPOINT_VERSION = 1

_CONFIG_ENTRY = "meta/config_json"
_DTYPE_CODES = {"float32": 0, "uint8": 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}


@dataclass
class Checkpoint:
    """In-memory checkpoint: config plus name-indexed float32 arrays."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def state_dict(self) -> dict[str, torch.Tensor]:
        return {name: torch.from_numpy(arr.copy()) for name, arr in self.tensors.items()}

    def build_model(self) -> LeadModel:
        model = LeadModel(self.config)
        try:
            model.load_state_dict(self.state_dict())
        except RuntimeError as exc:
            raise ShapeError(f"checkpoint does not fit the declared config: {exc}") from exc
        return model


def checkpoint_from_model(model: LeadModel) -> Checkpoint:
    tensors = {
        name: tensor.detach().cpu().to(torch.float32).numpy().copy()
        for name, tensor in model.state_dict().items()
    }
    return Checkpoint(config=model.cfg, tensors=tensors)


def write_entries(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    names = sorted(entries)
    manifest = bytearray()
    payload = bytearray()
    for name in names:
        arr = entries[name]
        if arr.dtype == np.uint8:
            code = _DTYPE_CODES["uint8"]
            blob = np.ascontiguousarray(arr).tobytes()
        else:
            code = _DTYPE_CODES["float32"]
            blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        encoded = name.encode("utf-8")
        manifest += struct.pack("<H", len(encoded)) + encoded
        manifest += struct.pack("<BB", code, arr.ndim)
        manifest += struct.pack(f"<{arr.ndim}I", *arr.shape)
        manifest += struct.pack("<Q", len(payload))
        payload += blob
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(names)))
        fh.write(bytes(manifest))
        fh.write(bytes(payload))


def read_entries(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:5] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:5]!r}, expected {CHECKPOINT_MAGIC!r}")
    pos = 5
    version, n_entries = struct.unpack_from("<HI", raw, pos)
    pos += struct.calcsize("<HI")
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    metas = []
    try:
        for _ in range(n_entries):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos : pos + name_len].decode("utf-8")
            pos += name_len
            code, ndim = struct.unpack_from("<BB", raw, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            (offset,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            if code not in _CODE_DTYPES:
                raise FormatError(f"{path}: unknown dtype code {code} for entry {name!r}")
            metas.append((name, code, shape, offset))
    except struct.error as exc:
        raise LengthError(f"{path}: truncated manifest: {exc}") from exc
    payload = raw[pos:]
    out: dict[str, np.ndarray] = {}
    for name, code, shape, offset in metas:
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + count * dtype.itemsize
        if end > len(payload):
            raise LengthError(f"{path}: entry {name!r} extends past end of payload")
        out[name] = np.frombuffer(payload, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
    return out


def save_checkpoint(path: str | Path, ckpt: Checkpoint | LeadModel) -> None:
    if isinstance(ckpt, LeadModel):
        ckpt = checkpoint_from_model(ckpt)
    entries = dict(ckpt.tensors)
    blob = json.dumps(ckpt.config.to_dict(), sort_keys=True).encode("utf-8")
    entries[_CONFIG_ENTRY] = np.frombuffer(blob, dtype=np.uint8)
    write_entries(path, entries)


def load_checkpoint(path: str | Path) -> Checkpoint:
    entries = read_entries(path)
    if _CONFIG_ENTRY not in entries:
        raise FormatError(f"{path}: checkpoint has no {_CONFIG_ENTRY} entry")
    config = ModelConfig.from_dict(json.loads(entries.pop(_CONFIG_ENTRY).tobytes().decode("utf-8")))
    return Checkpoint(config=config, tensors=entries)
