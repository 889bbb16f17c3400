"""Sliding-window spatial reranking over assignment maps.

The top-T documents of a ranking get rescored by their best window: windows of
all width/height combinations {full, half, quarter} slide with 50% overlap,
get filtered by aspect-ratio similarity to the query box, and are scored with
a two-level spatial pyramid (full window + 2x2 quadrants). The best window per
document doubles as an object localization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .bow import (
    BowVector,
    MapRegion,
    cosine,
    encode_region,
    pixel_region_to_map_region,
    region_pixel_footprint,
    spm_slots,
    SPM_LEVELS,
)
from .codebook import AssignmentMap
from .errors import DataError, ValidationError
from .index import QuerySpec, RankedList

DEFAULT_TOP_T = 100
DEFAULT_AR_THRESHOLD = 0.4
DEFAULT_QE_TOP_N = 10


@dataclass(eq=False)
class WindowSet:
    """Deduplicated candidate windows for one map size."""

    rows: int
    cols: int
    windows: list[MapRegion]

    def __post_init__(self):
        seen = set()
        for w in self.windows:
            if w.row_end > self.rows or w.col_end > self.cols:
                raise ValidationError(f"window {w} exceeds {self.rows}x{self.cols} map")
            key = (w.row_start, w.row_end, w.col_start, w.col_end)
            if key in seen:
                raise ValidationError(f"duplicate window {w}")
            seen.add(key)


@dataclass(eq=False)
class Localization:
    """Best-scoring window of one document, with its pixel-space box."""

    doc_id: str
    window: MapRegion
    score: float
    pixel_box: tuple[int, int, int, int]


def _axis_positions(extent: int, size: int) -> list[int]:
    stride = max(1, size // 2)
    positions = list(range(0, extent - size + 1, stride))
    if positions[-1] != extent - size:
        positions.append(extent - size)
    return positions


def enumerate_windows(rows: int, cols: int) -> WindowSet:
    """All sliding windows: sizes {full, ceil(half), ceil(quarter)} per axis,
    50% overlap strides, plus boundary-flushed positions."""
    if rows < 1 or cols < 1:
        raise ValidationError("map dims must be >= 1")
    heights = sorted({rows, -(-rows // 2), -(-rows // 4)})
    widths = sorted({cols, -(-cols // 2), -(-cols // 4)})
    seen = set()
    windows = []
    for h in heights:
        for w in widths:
            for r in _axis_positions(rows, h):
                for c in _axis_positions(cols, w):
                    key = (r, r + h, c, c + w)
                    if key not in seen:
                        seen.add(key)
                        windows.append(MapRegion(*key))
    windows.sort(key=lambda m: (m.height, m.width, m.row_start, m.col_start))
    return WindowSet(rows=rows, cols=cols, windows=windows)


def aspect_ratio_score(
    query_box: Sequence[float], window: MapRegion, amap: AssignmentMap
) -> float:
    """min/max ratio of query-box vs window aspect ratios, both in pixels."""
    x0, y0, x1, y1 = (float(v) for v in query_box)
    if x1 <= x0 or y1 <= y0:
        raise ValidationError("query box is degenerate")
    ar_q = (x1 - x0) / (y1 - y0)
    cell_w = amap.width / amap.cols
    cell_h = amap.height / amap.rows
    ar_w = (window.width * cell_w) / (window.height * cell_h)
    return min(ar_q, ar_w) / max(ar_q, ar_w)


def build_query_pyramid(
    amap: AssignmentMap, region: MapRegion, vocab_size: int
) -> list[tuple[BowVector | None, int]]:
    """Positional pyramid for spm_score: [full@1, TL@2, TR@2, BL@2, BR@2]."""
    slots = spm_slots(region)
    out: list[tuple[BowVector | None, int]] = []
    for i, slot in enumerate(slots):
        level = 1 if i == 0 else 2
        bow = encode_region(amap, slot, vocab_size) if slot is not None else None
        out.append((bow, level))
    return out


def spm_score(
    query_pyramid: Sequence[tuple[BowVector | None, int]],
    amap: AssignmentMap,
    window: MapRegion,
    vocab_size: int,
    invert_level_weights: bool = False,
) -> float:
    """Weighted pyramid cosine between the query regions and a window.

    Regions pair positionally (full<->full, quadrant q<->quadrant q); a pair
    drops from both sums when either side is degenerate. Weights follow
    w = 1/2^(L-l) (level-2 quadrants outweigh the full window) unless
    inverted.
    """
    if len(query_pyramid) != len(spm_slots(window)):
        raise ValidationError(
            f"query pyramid has {len(query_pyramid)} slots, expected 5"
        )
    num = 0.0
    den = 0.0
    for (query_bow, level), window_region in zip(query_pyramid, spm_slots(window)):
        if query_bow is None or window_region is None:
            continue
        if invert_level_weights:
            weight = 1.0 / (1 << (level - 1))
        else:
            weight = 1.0 / (1 << (SPM_LEVELS - level))
        window_bow = encode_region(amap, window_region, vocab_size)
        num += weight * cosine(query_bow, window_bow)
        den += weight
    if den == 0.0:
        return 0.0
    return num / den


def _window_pixel_box(amap: AssignmentMap, window: MapRegion) -> tuple[int, int, int, int]:
    x0, y0, x1, y1 = region_pixel_footprint(amap, window)
    return (math.floor(x0), math.floor(y0), math.ceil(x1), math.ceil(y1))


def localize(
    amap: AssignmentMap,
    doc_id: str,
    query_box: Sequence[float],
    query_pyramid: Sequence[tuple[BowVector | None, int]],
    vocab_size: int,
    ar_threshold: float = DEFAULT_AR_THRESHOLD,
    invert_level_weights: bool = False,
) -> Localization:
    """Best window of one document under the aspect-ratio filter."""
    window_set = enumerate_windows(amap.rows, amap.cols)
    scored_ar = [(w, aspect_ratio_score(query_box, w, amap)) for w in window_set.windows]
    surviving = [w for w, s in scored_ar if s >= ar_threshold]
    if not surviving:
        # Keep the document rankable: fall back to the best-AR window.
        surviving = [max(scored_ar, key=lambda ws: ws[1])[0]]
    best_window = None
    best_score = -1.0
    for w in surviving:
        s = spm_score(query_pyramid, amap, w, vocab_size, invert_level_weights)
        if s > best_score:
            best_window, best_score = w, s
    return Localization(
        doc_id=doc_id,
        window=best_window,
        score=best_score,
        pixel_box=_window_pixel_box(amap, best_window),
    )


def rerank_top(
    ranking: RankedList,
    query: QuerySpec,
    maps: Mapping[str, AssignmentMap],
    vocab_size: int,
    top_t: int = DEFAULT_TOP_T,
    ar_threshold: float = DEFAULT_AR_THRESHOLD,
    invert_level_weights: bool = False,
) -> tuple[RankedList, list[Localization]]:
    """Re-sort the top-T segment by localization score; the tail keeps its
    cosine order below the head. Returns localizations in final head order."""
    if top_t < 1:
        raise ValidationError("top_t must be >= 1")
    box = query.box
    if box is None:
        box = (0.0, 0.0, float(query.amap.width), float(query.amap.height))
    query_region = pixel_region_to_map_region(query.amap, box)
    pyramid = build_query_pyramid(query.amap, query_region, vocab_size)

    head = ranking.items[: min(top_t, len(ranking.items))]
    tail = ranking.items[len(head):]

    locs = []
    for doc_id, _ in head:
        try:
            amap = maps[doc_id]
        except KeyError:
            raise DataError(f"no assignment map for document '{doc_id}'") from None
        locs.append(
            localize(
                amap, doc_id, box, pyramid, vocab_size, ar_threshold, invert_level_weights
            )
        )

    order = sorted(range(len(head)), key=lambda i: (-locs[i].score, i))
    new_head = [(head[i][0], locs[i].score) for i in order]
    new_locs = [locs[i] for i in order]
    return RankedList(query_id=ranking.query_id, items=new_head + tail), new_locs


def write_localizations(
    path: str | Path, query_id: str, localizations: Sequence[Localization]
) -> None:
    """One tab-separated row per document: query, doc, pixel box, score."""
    with open(path, "w", encoding="utf-8") as fh:
        for loc in localizations:
            x0, y0, x1, y1 = loc.pixel_box
            fh.write(
                f"{query_id}\t{loc.doc_id}\t{x0}\t{y0}\t{x1}\t{y1}\t{loc.score:.6f}\n"
            )
