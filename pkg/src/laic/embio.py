"""Binary embedding / vocabulary / label IO and the core matrix types.

File formats (little-endian throughout):

* ``EMB1``: bytes 0-3 magic ``EMB1``, bytes 4-7 u32 row count N, bytes 8-11
  u32 dimension d, byte 12 normalized flag (0/1), then N*d float32 values
  row-major.  ``EMB8`` is the identical layout with float64 payload, used for
  exact pipeline resumption.
* ``LAB1``: magic ``LAB1``, u32 N, u32 K, then N u32 labels in [0, K).
* Sidecar ``<stem>.json``: ``{"names": [...], "source": str, "dim": int}``.

Matrices are stored in 32-bit precision; downstream arithmetic is 64-bit.
All types are immutable after construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionZero,
    InvariantViolation,
    IoFailure,
    LengthMismatch,
    MagicMismatch,
    NonFiniteValue,
    TruncatedFile,
    ZeroRow,
)

MAGIC_F4 = b"EMB1"
MAGIC_F8 = b"EMB8"
MAGIC_LAB = b"LAB1"

NORM_TOL = 1e-3  # allowed deviation from unit norm when the flag is set


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense N x d feature matrix; the universal currency of the pipeline."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise InvariantViolation(f"expected 2-D array, got ndim={v.ndim}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionZero(f"degenerate shape {v.shape}")
        if v.dtype not in (np.float32, np.float64):
            raise InvariantViolation(f"unsupported dtype {v.dtype}")
        _check_finite(v)
        if self.normalized:
            norms = np.linalg.norm(v.astype(np.float64, copy=False), axis=1)
            worst = np.abs(norms - 1.0).max()
            if worst > NORM_TOL:
                raise InvariantViolation(
                    f"normalized flag set but a row norm deviates by {worst:.2e}"
                )
        v.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class VocabSet:
    """Noun strings paired with their embedding rows."""

    names: tuple[str, ...]
    embeddings: EmbeddingMatrix

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        trimmed = [n.strip() for n in self.names]
        if len(set(trimmed)) != len(trimmed):
            raise InvariantViolation("vocabulary names not unique after trimming")
        if len(self.names) != self.embeddings.rows:
            raise LengthMismatch(
                f"{len(self.names)} names vs {self.embeddings.rows} embedding rows"
            )

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class ViewBundle:
    """Base features plus stacked strong / weak augmented view blocks."""

    base: EmbeddingMatrix
    strong_views: tuple[EmbeddingMatrix, ...] = field(default_factory=tuple)
    weak_views: tuple[EmbeddingMatrix, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "strong_views", tuple(self.strong_views))
        object.__setattr__(self, "weak_views", tuple(self.weak_views))
        shape = self.base.values.shape
        for block in (*self.strong_views, *self.weak_views):
            if block.values.shape != shape:
                raise InvariantViolation(
                    f"view block shape {block.values.shape} != base shape {shape}"
                )

    @property
    def n_strong(self) -> int:
        return len(self.strong_views)

    @property
    def n_weak(self) -> int:
        return len(self.weak_views)


@dataclass(frozen=True)
class LabelVector:
    """Integer labels in [0, num_classes)."""

    values: np.ndarray
    num_classes: int

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise InvariantViolation("labels must be 1-D")
        if self.num_classes < 1:
            raise InvariantViolation("num_classes must be >= 1")
        if not np.issubdtype(v.dtype, np.integer):
            raise InvariantViolation(f"labels must be integers, got {v.dtype}")
        if v.size and (v.min() < 0 or v.max() >= self.num_classes):
            raise InvariantViolation(
                f"label out of range [0, {self.num_classes}): "
                f"min={v.min()}, max={v.max()}"
            )
        v = v.astype(np.int64, copy=False)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def _check_finite(v: np.ndarray) -> None:
    if np.isfinite(v).all():
        return
    bad = np.argwhere(~np.isfinite(v))
    r, c = bad[0]
    raise NonFiniteValue(f"non-finite value at row {r}, col {c}")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity a.b / (|a| |b|) between two vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroRow("cosine undefined for a zero vector")
    return float(a @ b / (na * nb))


def l2_normalize_rows(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm; a zero row is a hard error."""
    v = m.values.astype(np.float64, copy=False)
    norms = np.linalg.norm(v, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroRow(f"row {zero[0]} has zero norm")
    out = (v / norms[:, None]).astype(m.values.dtype)
    # float32 rounding can leave |norm - 1| ~ 1e-7; renormalize once in-out dtype
    return EmbeddingMatrix(out, normalized=True)


# --- EMB1 / EMB8 ---

def write_embedding(m: EmbeddingMatrix, path: str | Path) -> None:
    """Write ``m`` bit-exactly; float32 arrays go to EMB1, float64 to EMB8."""
    magic = MAGIC_F4 if m.values.dtype == np.float32 else MAGIC_F8
    payload = np.ascontiguousarray(m.values)
    if payload.dtype.byteorder == ">":  # stored little-endian on disk
        payload = payload.astype(payload.dtype.newbyteorder("<"))
    header = magic + struct.pack("<II", m.rows, m.dim) + bytes([int(m.normalized)])
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload.tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_embedding(path: str | Path) -> EmbeddingMatrix:
    """Read an EMB1/EMB8 file, validating header, payload length and values."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if len(blob) < 13:
        raise TruncatedFile(f"{path}: {len(blob)} bytes is shorter than the header")
    magic = blob[:4]
    if magic == MAGIC_F4:
        dtype, itemsize = np.dtype("<f4"), 4
    elif magic == MAGIC_F8:
        dtype, itemsize = np.dtype("<f8"), 8
    else:
        raise MagicMismatch(f"{path}: bad magic {magic!r}")
    n, d = struct.unpack("<II", blob[4:12])
    if n == 0 or d == 0:
        raise DimensionZero(f"{path}: header claims {n}x{d}")
    flag = blob[12]
    if flag not in (0, 1):
        raise MagicMismatch(f"{path}: invalid normalized flag {flag}")
    expected = n * d * itemsize
    payload = blob[13:]
    if len(payload) != expected:
        raise TruncatedFile(
            f"{path}: payload holds {len(payload)} bytes, header promises {expected}"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(n, d)
    values = values.astype(dtype.newbyteorder("="), copy=True)
    return EmbeddingMatrix(values, normalized=bool(flag))


# --- LAB1 ---

def write_labels(labels: LabelVector, path: str | Path) -> None:
    header = MAGIC_LAB + struct.pack("<II", len(labels), labels.num_classes)
    body = labels.values.astype("<u4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_labels(path: str | Path) -> LabelVector:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if len(blob) < 12:
        raise TruncatedFile(f"{path}: shorter than the LAB1 header")
    if blob[:4] != MAGIC_LAB:
        raise MagicMismatch(f"{path}: bad magic {blob[:4]!r}")
    n, k = struct.unpack("<II", blob[4:12])
    payload = blob[12:]
    if len(payload) != n * 4:
        raise TruncatedFile(f"{path}: payload holds {len(payload)} bytes, expected {n * 4}")
    values = np.frombuffer(payload, dtype="<u4").astype(np.int64)
    return LabelVector(values, num_classes=k)


# --- JSON sidecar / vocabularies / view bundles ---

def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_vocab(vocab: VocabSet, path: str | Path, source: str = "") -> None:
    write_embedding(vocab.embeddings, path)
    meta = {"names": list(vocab.names), "source": source, "dim": vocab.embeddings.dim}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_vocab(path: str | Path) -> VocabSet:
    emb = read_embedding(path)
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except OSError as e:
        raise IoFailure(f"missing sidecar {side}: {e}") from e
    return VocabSet(names=tuple(meta["names"]), embeddings=emb)


def write_views(bundle: ViewBundle, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embedding(bundle.base, out / "base.emb")
    for i, block in enumerate(bundle.strong_views):
        write_embedding(block, out / f"strong_{i:02d}.emb")
    for i, block in enumerate(bundle.weak_views):
        write_embedding(block, out / f"weak_{i:02d}.emb")
    meta = {"n_strong": bundle.n_strong, "n_weak": bundle.n_weak}
    (out / "views.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_views(view_dir: str | Path) -> ViewBundle:
    d = Path(view_dir)
    try:
        meta = json.loads((d / "views.json").read_text())
    except OSError as e:
        raise IoFailure(f"missing view manifest in {d}: {e}") from e
    base = read_embedding(d / "base.emb")
    strong = tuple(read_embedding(d / f"strong_{i:02d}.emb") for i in range(meta["n_strong"]))
    weak = tuple(read_embedding(d / f"weak_{i:02d}.emb") for i in range(meta["n_weak"]))
    return ViewBundle(base=base, strong_views=strong, weak_views=weak)
