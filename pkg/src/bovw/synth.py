"""Seed-deterministic synthetic corpora for desk-scale testing.

Two generators: raw random feature tensors (for preprocess/codebook stages)
and planted-instance assignment-map corpora (for search/rerank/QE stages).
Planted corpora keep pattern and background word sets disjoint, so distractor
documents provably score zero against a pattern query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bow import MapRegion
from .codebook import AssignmentMap
from .errors import ValidationError
from .evaluation import GroundTruth
from .index import QuerySpec
from .rerank import _axis_positions
from .tensor_io import FeatureTensor


def gen_random_tensor(
    seed: int, depth: int, rows: int, cols: int, width: int, height: int
) -> FeatureTensor:
    """Uniform [-1, 1] tensor, fully determined by the seed."""
    rng = np.random.default_rng(seed)
    data = rng.uniform(-1.0, 1.0, size=(depth, rows, cols)).astype(np.float32)
    return FeatureTensor(
        image_id=f"synth-{seed:08d}", data=data, width=width, height=height
    )


@dataclass(eq=False)
class PlantedCorpus:
    """A corpus of assignment maps with a known pattern hidden in some of them."""

    vocab_size: int
    maps: dict[str, AssignmentMap]
    query: QuerySpec
    ground_truth: GroundTruth
    planted_windows: dict[str, MapRegion]
    pattern_words: np.ndarray
    background_words: np.ndarray


def gen_planted_corpus(
    seed: int,
    corpus_size: int,
    plant_fraction: float,
    pattern_shape: tuple[int, int],
    vocab_size: int,
    map_shape: tuple[int, int] = (16, 16),
    cell_pixels: int = 16,
    noise_fraction: float = 0.0,
) -> PlantedCorpus:
    """Build maps directly: background cells from one word subset, a fixed
    pattern from a disjoint subset planted at recorded windows.

    Plant positions are drawn from the sliding-window grid for the pattern's
    own dimensions, so the reranker's window set can represent them exactly.
    `noise_fraction` replaces that fraction of planted-window cells with
    background words.
    """
    rows, cols = map_shape
    ph, pw = pattern_shape
    if ph < 1 or pw < 1 or ph > rows or pw > cols:
        raise ValidationError(
            f"pattern {ph}x{pw} does not fit the {rows}x{cols} map"
        )
    if not 0.0 < plant_fraction < 1.0:
        raise ValidationError("plant_fraction must lie in (0, 1)")
    if vocab_size < 2:
        raise ValidationError("need at least 2 words to split pattern/background")
    if not 0.0 <= noise_fraction < 1.0:
        raise ValidationError("noise_fraction must lie in [0, 1)")
    if corpus_size < 1:
        raise ValidationError("corpus_size must be >= 1")

    rng = np.random.default_rng(seed)
    pattern_words = np.arange(0, vocab_size // 2)
    background_words = np.arange(vocab_size // 2, vocab_size)
    width, height = cols * cell_pixels, rows * cell_pixels

    pattern = rng.choice(pattern_words, size=(ph, pw))
    row_grid = _axis_positions(rows, ph)
    col_grid = _axis_positions(cols, pw)

    n_planted = int(round(corpus_size * plant_fraction))
    planted = set(rng.choice(corpus_size, size=n_planted, replace=False).tolist())

    maps: dict[str, AssignmentMap] = {}
    windows: dict[str, MapRegion] = {}
    for i in range(corpus_size):
        doc_id = f"doc-{i:04d}"
        words = rng.choice(background_words, size=(rows, cols))
        if i in planted:
            r0 = int(row_grid[rng.integers(len(row_grid))])
            c0 = int(col_grid[rng.integers(len(col_grid))])
            patch = pattern.copy()
            if noise_fraction > 0.0:
                mask = rng.random(size=(ph, pw)) < noise_fraction
                patch[mask] = rng.choice(background_words, size=int(mask.sum()))
            words[r0 : r0 + ph, c0 : c0 + pw] = patch
            windows[doc_id] = MapRegion(r0, r0 + ph, c0, c0 + pw)
        maps[doc_id] = AssignmentMap(
            image_id=doc_id, words=words, width=width, height=height
        )

    qr0 = int(row_grid[rng.integers(len(row_grid))])
    qc0 = int(col_grid[rng.integers(len(col_grid))])
    query_words = rng.choice(background_words, size=(rows, cols))
    query_words[qr0 : qr0 + ph, qc0 : qc0 + pw] = pattern
    query_map = AssignmentMap(
        image_id="query", words=query_words, width=width, height=height
    )
    box = (
        float(qc0 * cell_pixels),
        float(qr0 * cell_pixels),
        float((qc0 + pw) * cell_pixels),
        float((qr0 + ph) * cell_pixels),
    )
    query = QuerySpec(query_id="query", amap=query_map, box=box)

    gt = GroundTruth(
        query_id="query",
        positives=frozenset(f"doc-{i:04d}" for i in planted),
        ignores=frozenset(),
    )
    return PlantedCorpus(
        vocab_size=vocab_size,
        maps=maps,
        query=query,
        ground_truth=gt,
        planted_windows=windows,
        pattern_words=pattern_words,
        background_words=background_words,
    )
