"""Image embedding vectors: baseline pooled embedder, cosine similarity and
the binary interchange file.

The store holds float32 vectors keyed by image id.  Cosine and centroid math
runs through math.fsum so results are exactly-rounded and reproducible
bit-for-bit against independent reference implementations.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateEmbedding,
    DuplicateInteraction,
    EmbeddingFormatError,
    MissingEmbedding,
    TruncatedFile,
)
from .images import PixelImage

MAGIC = b"DYDQEMB1"
FORMAT_VERSION = 1
SUPPORTED_BASELINE_DIMS = {48: 4, 192: 8}  # dim -> pooling grid side


@dataclass
class EmbeddingStore:
    """Map image id -> float32 vector, all of one dimension."""

    dim: int
    entries: dict[int, np.ndarray] = field(default_factory=dict)

    def add(self, image_id: int, vec: np.ndarray):
        if image_id in self.entries:
            raise DuplicateInteraction(f"image id {image_id} already in store")
        v = np.asarray(vec, dtype=np.float32)
        if v.shape != (self.dim,):
            raise EmbeddingFormatError(f"vector for id {image_id} has shape {v.shape}, want ({self.dim},)")
        if not np.all(np.isfinite(v)):
            raise DegenerateEmbedding(f"non-finite components in embedding for id {image_id}")
        self.entries[image_id] = v

    def get(self, image_id: int) -> np.ndarray:
        try:
            return self.entries[image_id]
        except KeyError:
            raise MissingEmbedding(image_id) from None

    def __contains__(self, image_id: int) -> bool:
        return image_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[int]:
        return sorted(self.entries)

    def matrix(self, image_ids) -> np.ndarray:
        """Stack the given ids into a float64 (n, dim) matrix."""
        return np.stack([np.asarray(self.get(i), dtype=np.float64) for i in image_ids])

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(self.dim, dict(self.entries))


def baseline_embed(img: PixelImage, dim: int = 48) -> np.ndarray:
    """Deterministic stand-in embedder: g x g average pooling per RGB channel,
    values scaled to [0,1], flattened (cells row-major, channels interleaved)
    and L2-normalized.

    dim 48 pools on a 4x4 grid, dim 192 on 8x8.  An all-black image has no
    direction and raises DegenerateEmbedding.
    """
    if dim not in SUPPORTED_BASELINE_DIMS:
        raise EmbeddingFormatError(f"unsupported baseline dim {dim}; supported: {sorted(SUPPORTED_BASELINE_DIMS)}")
    g = SUPPORTED_BASELINE_DIMS[dim]
    arr = np.asarray(img.data, dtype=np.float64) / 255.0
    h, w = arr.shape[:2]
    row_edges = [(h * i) // g for i in range(g + 1)]
    col_edges = [(w * j) // g for j in range(g + 1)]
    pooled = np.empty((g, g, 3), dtype=np.float64)
    for gy in range(g):
        for gx in range(g):
            cell = arr[row_edges[gy] : row_edges[gy + 1], col_edges[gx] : col_edges[gx + 1]]
            pooled[gy, gx] = cell.mean(axis=(0, 1))
    flat = pooled.reshape(-1)
    norm = math.sqrt(math.fsum(float(x) * float(x) for x in flat))
    if norm == 0.0:
        raise DegenerateEmbedding("all-black image pools to the zero vector")
    return (flat / norm).astype(np.float32)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1], exactly-rounded accumulation (fsum)."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise EmbeddingFormatError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    dot = math.fsum(float(x) * float(y) for x, y in zip(av, bv))
    na = math.sqrt(math.fsum(float(x) * float(x) for x in av))
    nb = math.sqrt(math.fsum(float(y) * float(y) for y in bv))
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbedding("cosine undefined for a zero-norm vector")
    return dot / (na * nb)


def export_embeddings(store: EmbeddingStore, path: str | Path):
    """Write the store in the DYDQEMB1 binary format (ids ascending)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", store.dim))
        f.write(struct.pack("<Q", len(store.entries)))
        for image_id in store.ids():
            f.write(struct.pack("<Q", image_id))
            f.write(store.entries[image_id].astype("<f4").tobytes())


def import_embeddings(path: str | Path) -> EmbeddingStore:
    """Read a DYDQEMB1 file; exact inverse of export_embeddings."""
    raw = Path(path).read_bytes()
    header_len = len(MAGIC) + 4 + 4 + 8
    if len(raw) < header_len:
        raise TruncatedFile(f"{path}: {len(raw)} bytes is shorter than the header")
    if raw[: len(MAGIC)] != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {raw[:len(MAGIC)]!r}")
    version, dim = struct.unpack_from("<II", raw, len(MAGIC))
    (count,) = struct.unpack_from("<Q", raw, len(MAGIC) + 8)
    if version != FORMAT_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise EmbeddingFormatError(f"{path}: dim must be positive")
    record = 8 + 4 * dim
    expected = header_len + count * record
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: need {expected} bytes for {count} records, have {len(raw)}")
    if len(raw) > expected:
        raise EmbeddingFormatError(f"{path}: {len(raw) - expected} trailing bytes after last record")
    store = EmbeddingStore(dim=dim)
    pos = header_len
    for _ in range(count):
        (image_id,) = struct.unpack_from("<Q", raw, pos)
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos + 8).copy()
        store.add(int(image_id), vec)
        pos += record
    return store


def merge_stores(a: EmbeddingStore, b: EmbeddingStore) -> EmbeddingStore:
    if a.dim != b.dim:
        raise EmbeddingFormatError(f"cannot merge stores of dim {a.dim} and {b.dim}")
    out = a.copy()
    for image_id in b.ids():
        out.add(image_id, b.entries[image_id])
    return out
