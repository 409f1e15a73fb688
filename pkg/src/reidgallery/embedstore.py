"""Contiguous embedding storage, the PBEB file format and exact nearest-neighbor search.

Storage is float32, row-major. All distance arithmetic happens in float64 and
rankings break ties by ascending row index, so a given gallery and query always
produce the same ordering.

PBEB layout (little-endian)::

    b"PBEB" | u16 version=1 | u32 dim | u64 count
    count*dim float32, row-major
    count x (u16 byte length + UTF-8 row id)
"""

from __future__ import annotations

import enum
import heapq
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAGIC = b"PBEB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_LEN = struct.Struct("<H")
MIN_NORM = 1e-12


class EmbeddingFormatError(ValueError):
    """Malformed PBEB payload."""


class EmbeddingDataError(ValueError):
    """Well-formed file with unusable contents (e.g. a zero-norm row)."""


class SearchContractError(ValueError):
    """Bad arguments to a search call."""


class DistanceMetric(str, enum.Enum):
    COSINE = "cosine"
    SQUARED_EUCLIDEAN = "sqeuclidean"

    @classmethod
    def parse(cls, value) -> "DistanceMetric":
        if isinstance(value, cls):
            return value
        aliases = {
            "cosine": cls.COSINE,
            "cosinedistance": cls.COSINE,
            "sqeuclidean": cls.SQUARED_EUCLIDEAN,
            "squaredeuclidean": cls.SQUARED_EUCLIDEAN,
        }
        try:
            return aliases[str(value).lower().replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown distance metric {value!r}") from None


class EmbeddingMatrix:
    """Immutable ``count x dim`` float32 matrix with one string id per row."""

    def __init__(self, data, row_ids: Sequence[str], *, check_norms: bool = True):
        arr = np.array(data, dtype="<f4", order="C", copy=True)
        if arr.ndim != 2:
            raise EmbeddingDataError(f"expected a 2-d array, got shape {arr.shape}")
        count, dim = arr.shape
        if dim < 1:
            raise EmbeddingDataError("dim must be positive")
        row_ids = [str(r) for r in row_ids]
        if len(row_ids) != count:
            raise EmbeddingDataError(f"{len(row_ids)} row ids for {count} rows")
        if len(set(row_ids)) != count:
            raise EmbeddingDataError("row ids must be unique")
        arr.setflags(write=False)
        self.data = arr
        self.row_ids = tuple(row_ids)
        self._data64 = arr.astype(np.float64)
        self._data64.setflags(write=False)
        norms = np.sqrt(np.einsum("ij,ij->i", self._data64, self._data64))
        norms.setflags(write=False)
        self.norms = norms
        if check_norms:
            bad = np.flatnonzero(norms < MIN_NORM)
            if bad.size:
                i = int(bad[0])
                raise EmbeddingDataError(f"row {i} ({self.row_ids[i]!r}) has zero norm")
        self._index = {rid: i for i, rid in enumerate(self.row_ids)}

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingMatrix":
        return cls(np.zeros((0, dim), dtype=np.float32), [])

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def count(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.count

    def row_of(self, row_id: str) -> int:
        return self._index[row_id]

    def vector(self, row: int) -> np.ndarray:
        return self.data[row]

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, self.dim, self.count), self.data.tobytes()]
        for rid in self.row_ids:
            raw = rid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise EmbeddingDataError(f"row id too long: {rid[:32]!r}...")
            parts.append(_LEN.pack(len(raw)))
            parts.append(raw)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "EmbeddingMatrix":
        if len(payload) < _HEADER.size:
            raise EmbeddingFormatError("truncated header")
        magic, version, dim, count = _HEADER.unpack_from(payload, 0)
        if magic != MAGIC:
            raise EmbeddingFormatError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise EmbeddingFormatError(f"unsupported format version {version}")
        if dim < 1:
            raise EmbeddingFormatError("dim must be positive")
        offset = _HEADER.size
        nbytes = count * dim * 4
        if len(payload) - offset < nbytes:
            raise EmbeddingFormatError(
                f"truncated payload: header declares {count} rows of dim {dim}"
            )
        data = np.frombuffer(payload, dtype="<f4", count=count * dim, offset=offset)
        data = data.reshape(count, dim)
        offset += nbytes
        row_ids = []
        for i in range(count):
            if len(payload) - offset < _LEN.size:
                raise EmbeddingFormatError(f"truncated row id table at row {i}")
            (n,) = _LEN.unpack_from(payload, offset)
            offset += _LEN.size
            if len(payload) - offset < n:
                raise EmbeddingFormatError(f"truncated row id at row {i}")
            try:
                row_ids.append(payload[offset : offset + n].decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise EmbeddingFormatError(f"row id {i} is not UTF-8: {exc}") from None
            offset += n
        if offset != len(payload):
            raise EmbeddingFormatError(f"{len(payload) - offset} trailing bytes")
        if not np.all(np.isfinite(data)):
            raise EmbeddingDataError("non-finite values in embedding payload")
        return cls(data, row_ids)


def load_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        return EmbeddingMatrix.from_bytes(fh.read())


def save_embeddings(path, matrix: EmbeddingMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(matrix.to_bytes())


@dataclass(frozen=True, eq=False)
class RankedResult:
    """Gallery rows ordered by ascending distance, ties by ascending row index."""

    query_id: str | None
    rows: np.ndarray
    distances: np.ndarray

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.rows.tolist(), self.distances.tolist()))

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, RankedResult):
            return NotImplemented
        return (
            self.query_id == other.query_id
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.distances, other.distances)
        )


class GalleryView:
    """Float64 snapshot of a subset of matrix rows, reused across many queries."""

    def __init__(self, matrix: EmbeddingMatrix, gallery_rows, metric=DistanceMetric.COSINE):
        rows = np.asarray(gallery_rows, dtype=np.int64).reshape(-1)
        if rows.size == 0:
            raise SearchContractError("gallery_rows must be nonempty")
        if rows.min() < 0 or rows.max() >= matrix.count:
            raise SearchContractError("gallery row index out of range")
        self.matrix = matrix
        self.metric = DistanceMetric.parse(metric)
        self.rows = rows
        self.vectors = matrix._data64[rows]
        self.norms = matrix.norms[rows]
        if self.metric is DistanceMetric.SQUARED_EUCLIDEAN:
            self.sq_norms = self.norms * self.norms

    def __len__(self) -> int:
        return len(self.rows)

    def distances(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.matrix.dim,):
            raise SearchContractError(
                f"query has shape {q.shape}, expected ({self.matrix.dim},)"
            )
        dots = self.vectors @ q
        if self.metric is DistanceMetric.COSINE:
            qn = float(np.sqrt(q @ q))
            if qn < MIN_NORM:
                raise SearchContractError("zero-norm query under cosine distance")
            d = 1.0 - dots / (self.norms * qn)
            return np.clip(d, 0.0, 2.0)
        d = self.sq_norms - 2.0 * dots + float(q @ q)
        return np.maximum(d, 0.0)

    def topk(self, query, k: int, query_id=None) -> RankedResult:
        if k < 1:
            raise SearchContractError("k must be >= 1")
        d = self.distances(query)
        k = min(k, len(d))
        # heapq.nsmallest keeps a bounded max-heap of size k in one pass
        best = heapq.nsmallest(k, zip(d.tolist(), self.rows.tolist()))
        return RankedResult(
            query_id,
            np.array([r for _, r in best], dtype=np.int64),
            np.array([x for x, _ in best], dtype=np.float64),
        )

    def full(self, query, query_id=None) -> RankedResult:
        d = self.distances(query)
        order = np.lexsort((self.rows, d))
        return RankedResult(query_id, self.rows[order], d[order])


def search_topk(matrix, gallery_rows, query, k: int, metric=DistanceMetric.COSINE, query_id=None):
    return GalleryView(matrix, gallery_rows, metric).topk(query, k, query_id)


def search_full(matrix, gallery_rows, query, metric=DistanceMetric.COSINE, query_id=None):
    return GalleryView(matrix, gallery_rows, metric).full(query, query_id)


def batch_search(
    matrix,
    gallery_rows,
    queries,
    k: int | None,
    metric=DistanceMetric.COSINE,
    *,
    query_ids=None,
    workers: int = 1,
) -> list[RankedResult]:
    """Search every query against one gallery snapshot.

    ``k=None`` returns full rankings. Results come back in query order whatever
    ``workers`` is; each query goes through exactly the arithmetic of a
    single-query call.
    """
    queries = list(queries)
    if not queries:
        return []
    if query_ids is None:
        query_ids = [None] * len(queries)
    view = GalleryView(matrix, gallery_rows, metric)

    def one(args):
        q, qid = args
        return view.full(q, qid) if k is None else view.topk(q, k, qid)

    jobs = list(zip(queries, query_ids))
    if workers <= 1 or len(jobs) == 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))
