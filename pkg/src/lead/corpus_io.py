"""On-disk corpus layout: per-subject tensor files, label table, manifest, splits.

A corpus directory contains one ``feature_<subject_id>.leadt`` tensor file per
subject, a ``label.leadl`` table mapping subjects to class labels, and a
``manifest.json`` tying them together. All binary values are little-endian.

LEADT tensor file:
    magic ``LEADT`` (5 bytes) | version u16 | n_samples u32 | t u32 | c u32 |
    payload of n_samples*t*c float32 in (sample, time, channel) C-order.

LEADL label file:
    magic ``LEADL`` (5 bytes) | version u16 | rows of (label i32, subject_id i32)
    until end of file.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DimensionError, FormatError, LengthError, VersionError

TENSOR_MAGIC = b"LEADT"
LABEL_MAGIC = b"LEADL"
FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
LABEL_NAME = "label.leadl"

_FEATURE_RE = re.compile(r"^feature_(\d+)$")

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass
class EpochSample:
    """One preprocessed window: data of shape (T, C) with its provenance."""

    data: np.ndarray
    subject_id: int
    label: int
    dataset_id: str = ""

    @property
    def t(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]


@dataclass
class CorpusManifest:
    dataset_id: str
    sampling_rate: float
    n_channels: int
    subject_files: dict[int, str]  # subject_id -> relative file name
    class_names: dict[int, str]  # label -> human name
    notes: str = ""

    def to_json(self) -> str:
        payload = {
            "dataset_id": self.dataset_id,
            "sampling_rate": self.sampling_rate,
            "n_channels": self.n_channels,
            "subject_files": {str(k): v for k, v in sorted(self.subject_files.items())},
            "class_names": {str(k): v for k, v in sorted(self.class_names.items())},
            "notes": self.notes,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
        try:
            return cls(
                dataset_id=raw["dataset_id"],
                sampling_rate=float(raw["sampling_rate"]),
                n_channels=int(raw["n_channels"]),
                subject_files={int(k): v for k, v in raw["subject_files"].items()},
                class_names={int(k): v for k, v in raw["class_names"].items()},
                notes=raw.get("notes", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"manifest missing or malformed field: {exc}") from exc


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise DataError(f"{what} contains non-finite values")


def write_tensor_file(path: str | Path, data: np.ndarray) -> None:
    """Write an (n, t, c) float32 array as a LEADT file."""
    data = np.asarray(data)
    if data.ndim != 3:
        raise DimensionError(f"expected (n, t, c) array, got shape {data.shape}")
    _check_finite(data, "tensor payload")
    n, t, c = data.shape
    payload = np.ascontiguousarray(data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<HIII", FORMAT_VERSION, n, t, c))
        fh.write(payload.tobytes())


def read_tensor_file(path: str | Path) -> np.ndarray:
    """Read a LEADT file back into an (n, t, c) float32 array."""
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != TENSOR_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
        header = fh.read(struct.calcsize("<HIII"))
        if len(header) < struct.calcsize("<HIII"):
            raise LengthError(f"{path}: truncated header")
        version, n, t, c = struct.unpack("<HIII", header)
        if version != FORMAT_VERSION:
            raise VersionError(f"{path}: unsupported version {version}")
        blob = fh.read()
    expected = n * t * c * 4
    if len(blob) != expected:
        raise LengthError(f"{path}: payload is {len(blob)} bytes, header declares {expected}")
    data = np.frombuffer(blob, dtype="<f4").reshape(n, t, c)
    _check_finite(data, f"{path} payload")
    return data.copy()


def write_subject_tensor(
    samples: Sequence[EpochSample], path: str | Path, dims: tuple[int, int] | None = None
) -> None:
    """Stack one subject's samples into a LEADT file.

    All samples must agree on (T, C) and subject_id; values must be finite.
    An empty sequence is valid when ``dims`` supplies the (t, c) header.
    """
    if not samples:
        if dims is None:
            raise DimensionError("cannot infer (t, c) from an empty sample list; pass dims")
        write_tensor_file(path, np.zeros((0, *dims), dtype=np.float32))
        return
    t, c = samples[0].data.shape
    if dims is not None and dims != (t, c):
        raise DimensionError(f"dims hint {dims} disagrees with samples {(t, c)}")
    sid = samples[0].subject_id
    for s in samples:
        if s.data.shape != (t, c):
            raise DimensionError(f"mixed sample dims: {s.data.shape} vs {(t, c)}")
        if s.subject_id != sid:
            raise DataError(f"mixed subject ids in one file: {s.subject_id} vs {sid}")
    stacked = np.stack([s.data for s in samples]).astype(np.float32)
    write_tensor_file(path, stacked)


def read_subject_tensor(
    path: str | Path,
    subject_id: int | None = None,
    label: int = 0,
    dataset_id: str = "",
) -> list[EpochSample]:
    """Read a subject file into samples in stored order.

    The subject id is parsed from a ``feature_<id>`` file stem when not given.
    """
    path = Path(path)
    if subject_id is None:
        m = _FEATURE_RE.match(path.stem)
        if m is None:
            raise FormatError(f"{path}: cannot infer subject id from file name; pass subject_id")
        subject_id = int(m.group(1))
    data = read_tensor_file(path)
    return [EpochSample(data[i], subject_id, label, dataset_id) for i in range(data.shape[0])]


def write_label_table(path: str | Path, rows: Iterable[tuple[int, int]]) -> None:
    """Write (label, subject_id) rows as a LEADL file."""
    rows = list(rows)
    sids = [sid for _, sid in rows]
    if len(set(sids)) != len(sids):
        raise DataError("duplicate subject ids in label table")
    if sorted(sids) != list(range(1, len(sids) + 1)):
        raise DataError("subject ids must be contiguous from 1 to n_subjects")
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        for label, sid in rows:
            fh.write(struct.pack("<ii", label, sid))


def read_label_table(path: str | Path) -> list[tuple[int, int]]:
    """Read a LEADL file back into (label, subject_id) rows."""
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != LABEL_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {LABEL_MAGIC!r}")
        head = fh.read(2)
        if len(head) < 2:
            raise LengthError(f"{path}: truncated header")
        (version,) = struct.unpack("<H", head)
        if version != FORMAT_VERSION:
            raise VersionError(f"{path}: unsupported version {version}")
        blob = fh.read()
    if len(blob) % 8:
        raise LengthError(f"{path}: row section is {len(blob)} bytes, not a multiple of 8")
    out = []
    for off in range(0, len(blob), 8):
        label, sid = struct.unpack_from("<ii", blob, off)
        out.append((label, sid))
    return out


@dataclass
class Corpus:
    """A manifest plus resolved label rows, rooted at a directory."""

    root: Path
    manifest: CorpusManifest
    labels: dict[int, int]  # subject_id -> label

    @property
    def dataset_id(self) -> str:
        return self.manifest.dataset_id

    def subject_ids(self) -> list[int]:
        return sorted(self.labels)

    def load_subject(self, subject_id: int) -> list[EpochSample]:
        rel = self.manifest.subject_files[subject_id]
        return read_subject_tensor(
            self.root / rel,
            subject_id=subject_id,
            label=self.labels[subject_id],
            dataset_id=self.manifest.dataset_id,
        )

    def load_samples(self, subject_ids: Iterable[int] | None = None) -> list[EpochSample]:
        ids = sorted(subject_ids) if subject_ids is not None else self.subject_ids()
        out: list[EpochSample] = []
        for sid in ids:
            out.extend(self.load_subject(sid))
        return out


def write_corpus(
    root: str | Path,
    dataset_id: str,
    subjects: dict[int, list[EpochSample]],
    labels: dict[int, int],
    class_names: dict[int, str],
    sampling_rate: float = 128.0,
    notes: str = "",
) -> Corpus:
    """Write a full corpus directory (tensor files, label table, manifest)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    files: dict[int, str] = {}
    n_channels = None
    for sid in sorted(subjects):
        name = f"feature_{sid}.leadt"
        write_subject_tensor(subjects[sid], root / name)
        files[sid] = name
        c = subjects[sid][0].c
        if n_channels is None:
            n_channels = c
        elif n_channels != c:
            raise DimensionError(f"subject {sid} has {c} channels, corpus has {n_channels}")
    write_label_table(root / LABEL_NAME, [(labels[sid], sid) for sid in sorted(labels)])
    manifest = CorpusManifest(
        dataset_id=dataset_id,
        sampling_rate=sampling_rate,
        n_channels=int(n_channels or 0),
        subject_files=files,
        class_names=class_names,
        notes=notes,
    )
    (root / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8")
    return Corpus(root=root, manifest=manifest, labels=dict(labels))


def load_corpus(root: str | Path) -> Corpus:
    """Open a corpus directory and validate manifest/label consistency."""
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise FormatError(f"{root}: no {MANIFEST_NAME}")
    manifest = CorpusManifest.from_json(manifest_path.read_text(encoding="utf-8"))
    rows = read_label_table(root / LABEL_NAME)
    labels = {sid: label for label, sid in rows}
    missing = set(labels) ^ set(manifest.subject_files)
    if missing:
        raise DataError(f"{root}: subjects {sorted(missing)} not in both manifest and label table")
    return Corpus(root=root, manifest=manifest, labels=labels)


@dataclass
class SplitAssignment:
    """Exclusive subject-to-split assignment."""

    assignment: dict[int, str]  # subject_id -> split name
    seed: int
    ratios: tuple[float, float, float] = DEFAULT_RATIOS

    def subjects_in(self, split: str) -> list[int]:
        if split not in SPLIT_NAMES:
            raise ConfigError(f"unknown split {split!r}; choices: {SPLIT_NAMES}")
        return sorted(sid for sid, s in self.assignment.items() if s == split)

    def split_of(self, subject_id: int) -> str:
        return self.assignment[subject_id]


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n items over the given ratios."""
    exact = [n * r for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    rema = [e - c for e, c in zip(exact, counts)]
    for _ in range(n - sum(counts)):
        i = max(range(len(ratios)), key=lambda k: (rema[k], -k))
        counts[i] += 1
        rema[i] = -1.0
    return counts


def _split_rng(seed: int, dataset_id: str) -> np.random.Generator:
    # Counter-based generator keyed on (seed, dataset) for cross-platform stability.
    digest = hashlib.blake2b(dataset_id.encode("utf-8"), digest_size=8).digest()
    words = [seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "little")]
    return np.random.Generator(np.random.Philox(key=words))


def split_subjects(
    labels: dict[int, int] | Sequence[tuple[int, int]],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 41,
    dataset_id: str = "",
) -> SplitAssignment:
    """Deterministic stratified train/val/test assignment of subjects.

    Within each class the subjects are shuffled by a Philox stream keyed on
    (seed, dataset_id) and allocated to splits by largest-remainder rounding
    of the ratios, so per-split class counts stay within one subject of the
    stratified target.
    """
    if isinstance(labels, dict):
        table = {sid: lab for sid, lab in labels.items()}
    else:
        table = {sid: lab for lab, sid in labels}
    if not table:
        raise DataError("empty label table")
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ConfigError(f"ratios must be three values summing to 1, got {ratios}")

    rng = _split_rng(seed, dataset_id)
    assignment: dict[int, str] = {}
    for label in sorted(set(table.values())):
        sids = sorted(sid for sid, lab in table.items() if lab == label)
        if len(sids) < len(SPLIT_NAMES):
            warnings.warn(
                f"class {label} has only {len(sids)} subject(s); "
                "stratification cannot cover every split",
                stacklevel=2,
            )
        order = rng.permutation(len(sids))
        shuffled = [sids[i] for i in order]
        counts = _apportion(len(sids), ratios)
        pos = 0
        for split, k in zip(SPLIT_NAMES, counts):
            for sid in shuffled[pos : pos + k]:
                assignment[sid] = split
            pos += k
    return SplitAssignment(assignment=assignment, seed=seed, ratios=tuple(ratios))
