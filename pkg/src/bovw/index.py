"""Inverted index with exact cosine top-k retrieval.

Postings map each visual word to (document ordinal, weight) pairs; a search
traverses only the query's words and accumulates dot products per document,
which gives the same scores a dense cosine would. Ties break by ascending
document id so rankings are deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bow import BowVector, encode_region, pixel_region_to_map_region, region_for_map
from .codebook import AssignmentMap
from .errors import ConflictError, FormatError, TruncationError, ValidationError

INDEX_MAGIC = b"IDX1"
INDEX_VERSION = 1


@dataclass(eq=False)
class RankedList:
    """Documents ordered by score, best first."""

    query_id: str
    items: list[tuple[str, float]]

    def validate(self) -> None:
        scores = [s for _, s in self.items]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValidationError("scores must be non-increasing")
        ids = [d for d, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate doc ids in ranking")

    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.items]


@dataclass(eq=False)
class QuerySpec:
    """A query image's assignment map, plus a pixel box for LS mode.

    No box means global search (the whole map); a box means local search
    (only the words under the box).
    """

    query_id: str
    amap: AssignmentMap
    box: tuple[float, float, float, float] | None = None

    @property
    def is_local(self) -> bool:
        return self.box is not None


def build_query(spec: QuerySpec, vocab_size: int) -> BowVector:
    """Query BoW: full map for GS, the box's cells for LS. Never prior-weighted."""
    if spec.box is None:
        region = region_for_map(spec.amap)
    else:
        region = pixel_region_to_map_region(spec.amap, spec.box)
    return encode_region(spec.amap, region, vocab_size)


class InvertedIndex:
    """Word -> postings index over document BoW vectors.

    Single writer, many readers: add_document mutates, search is read-only.
    """

    def __init__(self, vocab_size: int):
        if vocab_size < 1:
            raise ValidationError("vocab_size must be positive")
        self.vocab_size = int(vocab_size)
        self._doc_ids: list[str] = []
        self._ordinals: dict[str, int] = {}
        self._doc_norms: list[float] = []
        self._postings: dict[int, tuple[list[int], list[float]]] = {}
        self._nnz = 0
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def doc_count(self) -> int:
        return len(self._doc_ids)

    @property
    def doc_ids(self) -> list[str]:
        return list(self._doc_ids)

    @property
    def nnz(self) -> int:
        return self._nnz

    def add_document(self, doc_id: str, bow: BowVector) -> None:
        if doc_id in self._ordinals:
            raise ConflictError(f"document '{doc_id}' already indexed")
        if bow.vocab_size != self.vocab_size:
            raise ValidationError(
                f"vocab mismatch: index {self.vocab_size}, document {bow.vocab_size}"
            )
        ordinal = len(self._doc_ids)
        self._doc_ids.append(doc_id)
        self._ordinals[doc_id] = ordinal
        self._doc_norms.append(bow.norm)
        for word, weight in zip(bow.ids.tolist(), bow.weights.tolist()):
            ords, ws = self._postings.setdefault(word, ([], []))
            ords.append(ordinal)
            ws.append(weight)
            self._nnz += 1
        self._cache.clear()

    def _word_postings(self, word: int) -> tuple[np.ndarray, np.ndarray] | None:
        entry = self._cache.get(word)
        if entry is None:
            raw = self._postings.get(word)
            if raw is None:
                return None
            entry = (np.array(raw[0], dtype=np.int64), np.array(raw[1], dtype=np.float64))
            self._cache[word] = entry
        return entry

    def search(self, query: BowVector, top_k: int, query_id: str = "") -> RankedList:
        """Exact cosine top-k; zero-score documents never appear."""
        if query.vocab_size != self.vocab_size:
            raise ValidationError(
                f"vocab mismatch: index {self.vocab_size}, query {query.vocab_size}"
            )
        if top_k < 1:
            raise ValidationError("top_k must be >= 1")
        if query.norm == 0.0 or not self.doc_count:
            return RankedList(query_id=query_id, items=[])

        acc = np.zeros(self.doc_count, dtype=np.float64)
        for word, weight in zip(query.ids.tolist(), query.weights.tolist()):
            entry = self._word_postings(word)
            if entry is not None:
                acc[entry[0]] += weight * entry[1]

        hit = np.flatnonzero(acc > 0.0)
        scores = acc[hit] / (query.norm * np.array(self._doc_norms, dtype=np.float64)[hit])
        ranked = sorted(
            ((self._doc_ids[o], float(s)) for o, s in zip(hit.tolist(), scores.tolist())),
            key=lambda item: (-item[1], item[0]),
        )
        return RankedList(query_id=query_id, items=ranked[: int(top_k)])

    def document_vector(self, doc_id: str) -> BowVector:
        return self.document_vectors([doc_id])[doc_id]

    def document_vectors(self, doc_ids: Sequence[str]) -> dict[str, BowVector]:
        """Reconstruct the indexed BoW of each requested document."""
        wanted = {}
        for doc_id in doc_ids:
            if doc_id not in self._ordinals:
                raise ValidationError(f"document '{doc_id}' is not indexed")
            wanted[self._ordinals[doc_id]] = doc_id
        pairs: dict[int, tuple[list[int], list[float]]] = {o: ([], []) for o in wanted}
        for word in sorted(self._postings):
            ords, ws = self._postings[word]
            for o, w in zip(ords, ws):
                if o in pairs:
                    pairs[o][0].append(word)
                    pairs[o][1].append(w)
        return {
            wanted[o]: BowVector(self.vocab_size, np.array(ids, dtype=np.int64),
                                 np.array(ws, dtype=np.float64))
            for o, (ids, ws) in pairs.items()
        }

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<III", INDEX_VERSION, self.vocab_size, self.doc_count))
            for doc_id in self._doc_ids:
                raw = doc_id.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(np.array(self._doc_norms, dtype="<f4").tobytes())
            pair_t = np.dtype([("ordinal", "<u4"), ("weight", "<f4")])
            for word in sorted(self._postings):
                ords, ws = self._postings[word]
                fh.write(struct.pack("<II", word, len(ords)))
                block = np.empty(len(ords), dtype=pair_t)
                block["ordinal"] = ords
                block["weight"] = ws
                fh.write(block.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != INDEX_MAGIC:
                raise FormatError(f"bad magic {magic!r}, expected {INDEX_MAGIC!r}")
            head = fh.read(12)
            if len(head) < 12:
                raise TruncationError("file too short for index header")
            version, vocab_size, doc_count = struct.unpack("<III", head)
            if version != INDEX_VERSION:
                raise FormatError(f"unsupported index version {version}")
            index = cls(vocab_size)
            for _ in range(doc_count):
                raw_len = fh.read(4)
                if len(raw_len) < 4:
                    raise TruncationError("file too short for doc-id table")
                (n,) = struct.unpack("<I", raw_len)
                raw = fh.read(n)
                if len(raw) < n:
                    raise TruncationError("file too short for doc-id entry")
                doc_id = raw.decode("utf-8")
                index._ordinals[doc_id] = len(index._doc_ids)
                index._doc_ids.append(doc_id)
            raw = fh.read(4 * doc_count)
            if len(raw) < 4 * doc_count:
                raise TruncationError("file too short for norm block")
            index._doc_norms = np.frombuffer(raw, dtype="<f4").astype(np.float64).tolist()
            pair_t = np.dtype([("ordinal", "<u4"), ("weight", "<f4")])
            while True:
                head = fh.read(8)
                if not head:
                    break
                if len(head) < 8:
                    raise TruncationError("file too short for postings header")
                word, n = struct.unpack("<II", head)
                raw = fh.read(8 * n)
                if len(raw) < 8 * n:
                    raise TruncationError("file too short for postings block")
                block = np.frombuffer(raw, dtype=pair_t)
                index._postings[word] = (
                    block["ordinal"].astype(np.int64).tolist(),
                    block["weight"].astype(np.float64).tolist(),
                )
                index._nnz += n
        return index
