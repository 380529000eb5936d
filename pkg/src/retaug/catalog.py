"""Catalog of web images with exact cosine k-NN search.

Embeddings are unit-normalized float32 vectors; similarity is the plain dot
product. Search is an exact partitioned scan, so results are always identical
to brute force. Rankings sort by similarity descending with ties broken by
ascending record id.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, DuplicateId, ZeroVector

INDEX_MAGIC = b"CRIX"
INDEX_FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-5

# rows per scan partition; bounds peak memory on large catalogs
_SCAN_CHUNK = 65536


def normalize(values) -> np.ndarray:
    """Scale a raw vector to unit Euclidean norm (float32, direction kept)."""
    v = np.asarray(values, dtype=np.float32)
    if v.ndim != 1 or v.size == 0:
        raise ZeroVector("expected a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ZeroVector("vector contains non-finite elements")
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm == 0.0:
        raise ZeroVector("all elements are zero")
    return (v.astype(np.float64) / norm).astype(np.float32)


def cosine_similarity(a, b) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    av = np.asarray(a, dtype=np.float32)
    bv = np.asarray(b, dtype=np.float32)
    if av.shape != bv.shape:
        raise DimensionMismatch(f"dimensions differ: {av.shape} vs {bv.shape}")
    sim = float(av.astype(np.float64) @ bv.astype(np.float64))
    return max(-1.0, min(1.0, sim))


@dataclass(frozen=True)
class CatalogRecord:
    """One indexed web image."""

    record_id: int
    url: str
    caption: str
    aesthetics_score: float
    nsfw_flag: bool
    embedding: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.aesthetics_score):
            raise ValueError(f"aesthetics_score must be finite, got {self.aesthetics_score}")


@dataclass(frozen=True)
class Neighbor:
    record_id: int
    similarity: float


class CatalogIndex:
    """Immutable store of catalog records answering exact k-NN queries.

    Build once, then query from any number of threads.
    """

    def __init__(self, records):
        records = list(records)
        ids = [r.record_id for r in records]
        if len(set(ids)) != len(ids):
            seen, dups = set(), set()
            for i in ids:
                (dups if i in seen else seen).add(i)
            raise DuplicateId(f"repeated record ids: {sorted(dups)}")
        dims = {r.embedding.shape[0] for r in records}
        if len(dims) > 1:
            raise DimensionMismatch(f"records carry mixed dimensions: {sorted(dims)}")

        self._ids = np.asarray(ids, dtype=np.int64)
        self._dim = dims.pop() if dims else 0
        if records:
            self._matrix = np.stack([r.embedding.astype(np.float32) for r in records])
        else:
            self._matrix = np.zeros((0, 0), dtype=np.float32)
        self._urls = [r.url for r in records]
        self._captions = [r.caption for r in records]
        self._aesthetics = np.asarray([r.aesthetics_score for r in records], dtype=np.float32)
        self._nsfw = np.asarray([r.nsfw_flag for r in records], dtype=bool)
        self._row_of = {rid: i for i, rid in enumerate(ids)}

    @property
    def count(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int:
        return self._dim

    def record(self, record_id: int) -> CatalogRecord:
        row = self._row_of[record_id]
        return CatalogRecord(
            record_id=int(self._ids[row]),
            url=self._urls[row],
            caption=self._captions[row],
            aesthetics_score=float(self._aesthetics[row]),
            nsfw_flag=bool(self._nsfw[row]),
            embedding=self._matrix[row].copy(),
        )

    def __contains__(self, record_id: int) -> bool:
        return record_id in self._row_of

    def query(self, q, k: int) -> list[Neighbor]:
        """Top-k records by cosine similarity, exact.

        Similarities accumulate in float64 and are stored as float32; ties on
        the float32 value break by ascending record id.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        qv = np.asarray(q, dtype=np.float32)
        if qv.shape != (self._dim,) and self.count > 0:
            raise DimensionMismatch(f"query has dimension {qv.shape}, index has {self._dim}")
        n = self.count
        if n == 0:
            return []

        q64 = qv.astype(np.float64)
        sims = np.empty(n, dtype=np.float32)
        for start in range(0, n, _SCAN_CHUNK):
            stop = min(start + _SCAN_CHUNK, n)
            sims[start:stop] = (self._matrix[start:stop].astype(np.float64) @ q64).astype(
                np.float32
            )
        np.clip(sims, -1.0, 1.0, out=sims)

        kk = min(k, n)
        if kk == n:
            candidates = np.arange(n)
        else:
            # keep every row tied with the kk-th value so id tie-breaks stay exact
            part = np.argpartition(-sims, kk - 1)
            threshold = sims[part[kk - 1]]
            candidates = np.nonzero(sims >= threshold)[0]
        order = np.lexsort((self._ids[candidates], -sims[candidates]))
        top = candidates[order][:kk]
        return [Neighbor(int(self._ids[i]), float(sims[i])) for i in top]

    # -- on-disk format ----------------------------------------------------

    def save(self, path) -> None:
        """Write the index in its binary on-disk format (little-endian)."""
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<HIQ", INDEX_FORMAT_VERSION, self._dim, self.count))
            for row in range(self.count):
                url = self._urls[row].encode("utf-8")
                caption = self._captions[row].encode("utf-8")
                fh.write(
                    struct.pack(
                        "<QfB",
                        int(self._ids[row]),
                        float(self._aesthetics[row]),
                        int(self._nsfw[row]),
                    )
                )
                fh.write(struct.pack("<I", len(url)) + url)
                fh.write(struct.pack("<I", len(caption)) + caption)
                fh.write(self._matrix[row].astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "CatalogIndex":
        path = Path(path)
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != INDEX_MAGIC:
                raise ValueError(f"{path} is not an index file (magic {magic!r})")
            version, dim, count = struct.unpack("<HIQ", fh.read(14))
            if version != INDEX_FORMAT_VERSION:
                raise ValueError(f"unsupported index format version {version}")
            records = []
            for _ in range(count):
                record_id, aesthetics, nsfw = struct.unpack("<QfB", fh.read(13))
                (url_len,) = struct.unpack("<I", fh.read(4))
                url = fh.read(url_len).decode("utf-8")
                (caption_len,) = struct.unpack("<I", fh.read(4))
                caption = fh.read(caption_len).decode("utf-8")
                emb = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float32)
                records.append(
                    CatalogRecord(
                        record_id=record_id,
                        url=url,
                        caption=caption,
                        aesthetics_score=aesthetics,
                        nsfw_flag=bool(nsfw),
                        embedding=emb,
                    )
                )
        return cls(records)


def load_catalog_records(matrix_path, metadata_path) -> list[CatalogRecord]:
    """Ingest records from a float32 matrix file (.npy) plus JSON-lines metadata.

    Line i of the metadata describes row i of the matrix. Raw vectors are
    unit-normalized here; the pipeline never computes embeddings itself.
    """
    matrix = np.load(matrix_path)
    if matrix.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
    records = []
    with open(metadata_path, encoding="utf-8") as fh:
        for row, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            meta = json.loads(line)
            if row >= matrix.shape[0]:
                raise ValueError("metadata has more lines than the matrix has rows")
            records.append(
                CatalogRecord(
                    record_id=int(meta["record_id"]),
                    url=meta["url"],
                    caption=meta.get("caption", ""),
                    aesthetics_score=float(meta["aesthetics_score"]),
                    nsfw_flag=bool(meta["nsfw_flag"]),
                    embedding=normalize(matrix[row]),
                )
            )
    if len(records) != matrix.shape[0]:
        raise ValueError(
            f"metadata lines ({len(records)}) do not cover matrix rows ({matrix.shape[0]})"
        )
    return records
