"""Sparse bag-of-words vectors over assignment-map regions.

A BoW weight is the (optionally center-prior-weighted) count of a visual word
inside a region. Regions are half-open [start, end) rectangles in map cells;
pixel boxes convert to map regions with floor/ceil so every touched cell is
covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .codebook import AssignmentMap
from .errors import ValidationError
from .preprocess import CenterPriorGrid

SPM_LEVELS = 2


@dataclass(frozen=True)
class MapRegion:
    """Half-open cell rectangle: rows [row_start, row_end), cols [col_start, col_end)."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        for name in ("row_start", "row_end", "col_start", "col_end"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValidationError("region bounds must be integers")
            object.__setattr__(self, name, int(v))
        if self.row_start < 0 or self.col_start < 0:
            raise ValidationError("region bounds must be non-negative")
        if self.row_start >= self.row_end or self.col_start >= self.col_end:
            raise ValidationError(f"region {self} is empty")

    @property
    def height(self) -> int:
        return self.row_end - self.row_start

    @property
    def width(self) -> int:
        return self.col_end - self.col_start

    @property
    def cell_count(self) -> int:
        return self.height * self.width


@dataclass(eq=False)
class BowVector:
    """Sorted sparse (word id, weight) histogram over a K-word vocabulary."""

    vocab_size: int
    ids: np.ndarray
    weights: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.vocab_size < 1:
            raise ValidationError("vocab_size must be positive")
        if self.ids.shape != self.weights.shape or self.ids.ndim != 1:
            raise ValidationError("ids and weights must be matching 1-D arrays")
        if len(self.ids):
            if (np.diff(self.ids) <= 0).any():
                raise ValidationError("word ids must be strictly increasing")
            if self.ids[0] < 0 or self.ids[-1] >= self.vocab_size:
                raise ValidationError("word ids must lie in [0, vocab_size)")
            if not (self.weights > 0).all():
                raise ValidationError("weights must be positive")
            if not np.isfinite(self.weights).all():
                raise ValidationError("weights must be finite")
        self.norm = float(np.sqrt(np.dot(self.weights, self.weights)))

    @property
    def nnz(self) -> int:
        return len(self.ids)

    def total(self) -> float:
        return float(self.weights.sum())


def empty_bow(vocab_size: int) -> BowVector:
    return BowVector(vocab_size, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))


def region_for_map(amap: AssignmentMap) -> MapRegion:
    return MapRegion(0, amap.rows, 0, amap.cols)


def _check_region(amap: AssignmentMap, region: MapRegion) -> None:
    if region.row_end > amap.rows or region.col_end > amap.cols:
        raise ValidationError(f"region {region} exceeds {amap.rows}x{amap.cols} map")


def encode_region(
    amap: AssignmentMap,
    region: MapRegion,
    vocab_size: int,
    prior: CenterPriorGrid | None = None,
) -> BowVector:
    """BoW of a map region: per-word counts, weighted by the prior if given."""
    _check_region(amap, region)
    cells = amap.words[region.row_start : region.row_end, region.col_start : region.col_end]
    flat = cells.ravel()
    if flat.max() >= vocab_size:
        raise ValidationError(
            f"map contains word {int(flat.max())} >= vocab_size {vocab_size}"
        )
    if prior is None:
        counts = np.bincount(flat, minlength=vocab_size)
    else:
        if prior.rows != amap.rows or prior.cols != amap.cols:
            raise ValidationError(
                f"prior grid {prior.rows}x{prior.cols} does not match map "
                f"{amap.rows}x{amap.cols}"
            )
        cell_w = prior.weights[
            region.row_start : region.row_end, region.col_start : region.col_end
        ]
        counts = np.bincount(flat, weights=cell_w.ravel(), minlength=vocab_size)
    ids = np.flatnonzero(counts)
    return BowVector(vocab_size, ids, counts[ids].astype(np.float64))


def pixel_region_to_map_region(
    amap: AssignmentMap, box: Sequence[float]
) -> MapRegion:
    """Smallest map region covering a pixel box (x0, y0, x1, y1).

    floor/ceil run in exact rational arithmetic so integral boxes and exact
    cell footprints map back without float drift.
    """
    x0, y0, x1, y1 = (
        v if isinstance(v, Fraction) else Fraction(float(v)) for v in box
    )
    if not (0 <= x0 < x1 <= amap.width) or not (0 <= y0 < y1 <= amap.height):
        raise ValidationError(
            f"box ({float(x0)}, {float(y0)}, {float(x1)}, {float(y1)}) is degenerate "
            f"or outside {amap.width}x{amap.height} pixels"
        )
    col_start = math.floor(Fraction(x0) * amap.cols / amap.width)
    col_end = math.ceil(Fraction(x1) * amap.cols / amap.width)
    row_start = math.floor(Fraction(y0) * amap.rows / amap.height)
    row_end = math.ceil(Fraction(y1) * amap.rows / amap.height)
    region = MapRegion(
        max(0, row_start),
        min(amap.rows, max(row_end, row_start + 1)),
        max(0, col_start),
        min(amap.cols, max(col_end, col_start + 1)),
    )
    _check_region(amap, region)
    return region


def region_pixel_footprint(amap: AssignmentMap, region: MapRegion) -> tuple[Fraction, ...]:
    """Exact pixel extent (x0, y0, x1, y1) of a map region."""
    _check_region(amap, region)
    return (
        Fraction(region.col_start * amap.width, amap.cols),
        Fraction(region.row_start * amap.height, amap.rows),
        Fraction(region.col_end * amap.width, amap.cols),
        Fraction(region.row_end * amap.height, amap.rows),
    )


def spm_slots(region: MapRegion) -> list[MapRegion | None]:
    """Fixed-position pyramid slots: [full, TL, TR, BL, BR]; None when degenerate."""
    rm = region.row_start + region.height // 2
    cm = region.col_start + region.width // 2

    def cell(r0, r1, c0, c1):
        if r0 >= r1 or c0 >= c1:
            return None
        return MapRegion(r0, r1, c0, c1)

    return [
        region,
        cell(region.row_start, rm, region.col_start, cm),
        cell(region.row_start, rm, cm, region.col_end),
        cell(rm, region.row_end, region.col_start, cm),
        cell(rm, region.row_end, cm, region.col_end),
    ]


def spm_regions(region: MapRegion) -> list[tuple[MapRegion, int]]:
    """The region at level 1 plus its non-empty 2x2 quadrants at level 2."""
    slots = spm_slots(region)
    out = [(slots[0], 1)]
    out.extend((r, 2) for r in slots[1:] if r is not None)
    return out


def cosine(a: BowVector, b: BowVector) -> float:
    """Cosine similarity of two sparse BoW vectors; 0 when either is zero."""
    if a.vocab_size != b.vocab_size:
        raise ValidationError(
            f"vocab mismatch: {a.vocab_size} vs {b.vocab_size}"
        )
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    _, ia, ib = np.intersect1d(a.ids, b.ids, assume_unique=True, return_indices=True)
    if not len(ia):
        return 0.0
    dot = float(np.dot(a.weights[ia], b.weights[ib]))
    return min(max(dot / (a.norm * b.norm), 0.0), 1.0)


def scale(v: BowVector, factor: float) -> BowVector:
    if factor <= 0:
        raise ValidationError("scale factor must be positive")
    return BowVector(v.vocab_size, v.ids.copy(), v.weights * factor)


def normalized(v: BowVector) -> BowVector:
    """Unit-norm copy; a zero vector stays empty."""
    if v.norm == 0.0:
        return empty_bow(v.vocab_size)
    return scale(v, 1.0 / v.norm)


def sum_vectors(vectors: Iterable[BowVector]) -> BowVector:
    """Exact sparse sum; integer count weights stay bit-exact."""
    vectors = list(vectors)
    if not vectors:
        raise ValidationError("cannot sum zero vectors")
    vocab = vectors[0].vocab_size
    for v in vectors[1:]:
        if v.vocab_size != vocab:
            raise ValidationError("vocab mismatch in sum")
    all_ids = np.concatenate([v.ids for v in vectors])
    all_w = np.concatenate([v.weights for v in vectors])
    if not len(all_ids):
        return empty_bow(vocab)
    ids, inverse = np.unique(all_ids, return_inverse=True)
    weights = np.zeros(len(ids), dtype=np.float64)
    np.add.at(weights, inverse, all_w)
    keep = weights > 0
    return BowVector(vocab, ids[keep], weights[keep])


def mean_vectors(vectors: Sequence[BowVector]) -> BowVector:
    total = sum_vectors(vectors)
    return scale(total, 1.0 / len(vectors)) if total.nnz else total
