"""Embedding container: validated in-memory matrices and EMB1 file I/O.

EMB1 is a little-endian binary layout:

    bytes 0-3    magic "EMB1"
    bytes 4-7    version, u32 (currently 1)
    bytes 8-15   row count n, u64
    bytes 16-19  feature dimension d, u32
    byte  20     dtype, u8 (0 = IEEE float32, the only value in v1)
    byte  21     has_labels, u8 (0 or 1)
    bytes 22-23  reserved, must be zero

followed by n*d float32 values in row-major order and, when has_labels
is 1, n int32 class labels.  No padding, and trailing bytes are an
error.  Any declared-vs-actual size mismatch is rejected rather than
silently truncated.

Row identities live in a sidecar manifest: a UTF-8 text file with one
identifier per line (line i names row i), conventionally stored as
``<stem>.manifest`` next to the ``.emb1`` file.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"EMB1"
VERSION = 1
DTYPE_FLOAT32 = 0

_HEADER = struct.Struct("<4sIQIBBH")
HEADER_SIZE = _HEADER.size  # 24 bytes


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """n x d matrix of feature vectors, optionally with per-row class labels.

    Data is held as float32 (downstream statistics accumulate in
    float64).  Instances are immutable: the underlying arrays are
    defensively copied and marked read-only, so a loaded matrix is safe
    to share across threads.
    """

    data: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, order="C")
        if data.ndim != 2:
            raise ValidationError(f"embedding data must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 1:
            raise ValidationError(f"embedding matrix must be at least 1x1, got {n}x{d}")
        bad = np.argwhere(~np.isfinite(data))
        if bad.size:
            r, c = bad[0]
            raise ValidationError(f"non-finite entry at ({r},{c})")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

        labels = self.labels
        if labels is not None:
            labels = np.array(labels, dtype=np.int32, order="C")
            if labels.ndim != 1:
                raise ValidationError(f"labels must be 1-D, got shape {labels.shape}")
            if labels.shape[0] != n:
                raise ValidationError(f"labels length {labels.shape[0]} != row count {n}")
            if labels.size and labels.min() < 0:
                raise ValidationError("labels must be >= 0")
            labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def take(self, indices: np.ndarray) -> "EmbeddingMatrix":
        """Row subset in the given index order, labels carried through."""
        labels = None if self.labels is None else self.labels[indices]
        return EmbeddingMatrix(self.data[indices], labels)


@dataclass(frozen=True)
class Manifest:
    """Ordered source-item identifiers, one per matrix row."""

    entries: tuple[str, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValidationError("manifest must contain at least one entry")
        for i, entry in enumerate(entries):
            if not entry or "\n" in entry:
                raise ValidationError(f"manifest entry {i} is empty or spans lines")
        if len(set(entries)) != len(entries):
            raise ValidationError("manifest entries must be unique")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def take(self, indices) -> "Manifest":
        return Manifest(tuple(self.entries[int(i)] for i in indices))


def check_pairing(matrix: EmbeddingMatrix, manifest: Manifest) -> None:
    """Reject a manifest whose length disagrees with its matrix."""
    if len(manifest) != matrix.n:
        raise ValidationError(
            f"manifest has {len(manifest)} entries but matrix has {matrix.n} rows"
        )


def write_embeddings(matrix: EmbeddingMatrix, destination: str | Path | BinaryIO) -> None:
    """Serialize a matrix to the EMB1 layout.

    Rejects non-finite entries before writing anything, so a failed call
    never leaves a half-written valid-looking header behind a bad payload.
    """
    bad = np.argwhere(~np.isfinite(matrix.data))
    if bad.size:
        r, c = bad[0]
        raise ValidationError(f"non-finite entry at ({r},{c})")
    has_labels = matrix.labels is not None
    header = _HEADER.pack(MAGIC, VERSION, matrix.n, matrix.d, DTYPE_FLOAT32, int(has_labels), 0)
    body = matrix.data.astype("<f4", copy=False).tobytes()
    tail = matrix.labels.astype("<i4", copy=False).tobytes() if has_labels else b""
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as sink:
            sink.write(header + body + tail)
    else:
        destination.write(header + body + tail)


def read_embeddings(source: str | Path | BinaryIO) -> EmbeddingMatrix:
    """Parse and validate an EMB1 stream, rejecting anything malformed."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as handle:
            raw = handle.read()
    else:
        raw = source.read()

    if len(raw) < HEADER_SIZE:
        raise FormatError(f"truncated header: expected {HEADER_SIZE} bytes, got {len(raw)}")
    magic, version, n, d, dtype, has_labels, reserved = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic: expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"unsupported dtype code {dtype}")
    if has_labels not in (0, 1):
        raise FormatError(f"invalid has_labels flag {has_labels}")
    if reserved != 0:
        raise FormatError("reserved header bytes must be zero")
    if n == 0:
        raise FormatError("empty embedding file: n=0")
    if d == 0:
        raise FormatError("invalid embedding file: d=0")

    expected = HEADER_SIZE + n * d * 4 + (n * 4 if has_labels else 0)
    if len(raw) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {len(raw)}")
    if len(raw) > expected:
        raise FormatError(f"trailing bytes: expected {expected} bytes, got {len(raw)}")

    data = np.frombuffer(raw, dtype="<f4", count=n * d, offset=HEADER_SIZE).reshape(n, d)
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=HEADER_SIZE + n * d * 4)
    return EmbeddingMatrix(data, labels)


def partition_by_label(matrix: EmbeddingMatrix) -> dict[int, EmbeddingMatrix]:
    """Split rows into one matrix per class id, original row order kept.

    The outputs form an exact partition of the input: concatenating them
    in ascending (class, original index) order is a permutation of the
    input rows.
    """
    groups = class_indices(matrix)
    return {cid: matrix.take(idx) for cid, idx in groups.items()}


def class_indices(matrix: EmbeddingMatrix) -> dict[int, np.ndarray]:
    """Row indices per class id, ascending class order."""
    if matrix.labels is None:
        raise ValidationError("labels absent: cannot partition an unlabeled matrix")
    return {
        int(cid): np.nonzero(matrix.labels == cid)[0]
        for cid in np.unique(matrix.labels)
    }


def manifest_path_for(embedding_path: str | Path) -> Path:
    """Sidecar convention: ``<stem>.manifest`` next to the embedding file."""
    return Path(embedding_path).with_suffix(".manifest")


def write_manifest(manifest: Manifest, destination: str | Path) -> None:
    text = "\n".join(manifest.entries) + "\n"
    Path(destination).write_text(text, encoding="utf-8")


def read_manifest(source: str | Path) -> Manifest:
    text = Path(source).read_text(encoding="utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    return Manifest(tuple(text.split("\n")))
