"""Shared oracle helpers for the test suite. Everything here is written
independently of the library's internals on purpose."""

import math

import numpy as np

from bovw import AssignmentMap, BowVector, MapRegion


def random_map(rng, rows, cols, vocab_size, image_id="img", cell_pixels=16):
    words = rng.integers(0, vocab_size, size=(rows, cols))
    return AssignmentMap(
        image_id=image_id,
        words=words,
        width=cols * cell_pixels,
        height=rows * cell_pixels,
    )


def random_bow(rng, vocab_size, max_nnz=40, integer_weights=False):
    # nnz >= 2: single-word documents sharing a query word are mathematically
    # tied in cosine (the weight cancels), and a true tie rendered onto two
    # different float pipelines is order-unstable at the last ulp. Tie
    # handling is exercised separately with bit-exact constructions.
    nnz = int(rng.integers(2, max_nnz + 1))
    ids = np.sort(rng.choice(vocab_size, size=min(nnz, vocab_size), replace=False))
    if integer_weights:
        weights = rng.integers(1, 20, size=len(ids)).astype(np.float64)
    else:
        weights = rng.uniform(0.1, 10.0, size=len(ids))
    return BowVector(vocab_size, ids, weights)


def bow_to_dense(bow):
    dense = np.zeros(bow.vocab_size, dtype=np.float64)
    dense[bow.ids] = bow.weights
    return dense


def dense_cosine_ranking(doc_vectors, query_dense):
    """Brute-force ranking oracle: dense cosine, ties by ascending doc id,
    zero scores dropped."""
    qn = math.sqrt(float(query_dense @ query_dense))
    out = []
    for doc_id, dense in doc_vectors.items():
        dn = math.sqrt(float(dense @ dense))
        if qn == 0.0 or dn == 0.0:
            continue
        score = float(query_dense @ dense) / (qn * dn)
        if score > 0.0:
            out.append((doc_id, score))
    out.sort(key=lambda item: (-item[1], item[0]))
    return out


def brute_force_windows(rows, cols):
    """Independent sliding-window generator for the enumeration oracle."""
    heights = {rows, math.ceil(rows / 2), math.ceil(rows / 4)}
    widths = {cols, math.ceil(cols / 2), math.ceil(cols / 4)}
    out = set()
    for h in heights:
        for w in widths:
            r_positions = []
            r = 0
            while r + h <= rows:
                r_positions.append(r)
                r += max(1, h // 2)
            if r_positions[-1] != rows - h:
                r_positions.append(rows - h)
            c_positions = []
            c = 0
            while c + w <= cols:
                c_positions.append(c)
                c += max(1, w // 2)
            if c_positions[-1] != cols - w:
                c_positions.append(cols - w)
            for r in r_positions:
                for c in c_positions:
                    out.add((r, r + h, c, c + w))
    return out


def region_key(region):
    return (region.row_start, region.row_end, region.col_start, region.col_end)


def region_iou(a, b):
    inter_r = max(0, min(a.row_end, b.row_end) - max(a.row_start, b.row_start))
    inter_c = max(0, min(a.col_end, b.col_end) - max(a.col_start, b.col_start))
    inter = inter_r * inter_c
    union = a.cell_count + b.cell_count - inter
    return inter / union


def check_bow_structure(bow):
    assert bow.ids.ndim == 1 and bow.weights.ndim == 1
    assert len(bow.ids) == len(bow.weights)
    if len(bow.ids):
        assert (np.diff(bow.ids) > 0).all()
        assert bow.ids[0] >= 0 and bow.ids[-1] < bow.vocab_size
        assert (bow.weights > 0).all()
    assert math.isclose(
        bow.norm, math.sqrt(float(np.sum(bow.weights**2))), abs_tol=1e-9
    )


def plant_region(words, pattern, r0, c0):
    words = words.copy()
    words[r0 : r0 + pattern.shape[0], c0 : c0 + pattern.shape[1]] = pattern
    return words, MapRegion(r0, r0 + pattern.shape[0], c0, c0 + pattern.shape[1])
