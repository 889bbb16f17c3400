"""Visual codebook: k-means fitting, nearest-word assignment, assignment maps.

Fitting is Lloyd's algorithm with k-means++ seeding from an explicit RNG seed;
everything here is deterministic given identical inputs, which the tests rely
on (same seed -> bit-identical codebooks and assignment maps).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitError, FormatError, TruncationError, ValidationError
from .preprocess import TransformModel, bilinear_upsample, transform_features
from .tensor_io import FeatureTensor

CODEBOOK_MAGIC = b"CBK1"
CODEBOOK_VERSION = 1
MAP_MAGIC = b"AMP1"
MAP_VERSION = 1

_ASSIGN_CHUNK = 2048


@dataclass(eq=False)
class Codebook:
    """K centroids in transformed feature space plus the seed that fit them."""

    centroids: np.ndarray
    seed: int
    sse_history: list[float] | None = field(default=None, compare=False)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or min(self.centroids.shape) < 1:
            raise ValidationError("centroids must form a non-empty K x D' matrix")
        if not np.isfinite(self.centroids).all():
            raise ValidationError("centroids contain non-finite values")
        if len(np.unique(self.centroids, axis=0)) != self.centroids.shape[0]:
            raise ValidationError("codebook contains duplicate centroids")

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def quantization_error(self) -> float | None:
        """Final mean squared distance from the fit, when known."""
        if not self.sse_history:
            return None
        return self.sse_history[-1]


@dataclass(eq=False)
class AssignmentMap:
    """N x M grid of visual-word ids plus the source image's pixel geometry."""

    image_id: str
    words: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.int64)
        if self.words.ndim != 2 or min(self.words.shape) < 1:
            raise ValidationError("word grid must be non-empty and 2-D")
        if (self.words < 0).any():
            raise ValidationError("word ids must be non-negative")
        if self.width < 1 or self.height < 1:
            raise ValidationError("pixel dims must be >= 1")

    @property
    def rows(self) -> int:
        return self.words.shape[0]

    @property
    def cols(self) -> int:
        return self.words.shape[1]


def _nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest centroid per point: (labels, squared distances)."""
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for start in range(0, n, _ASSIGN_CHUNK):
        stop = min(start + _ASSIGN_CHUNK, n)
        diff = points[start:stop, None, :] - centroids[None, :, :]
        d2 = np.sum(diff * diff, axis=2)
        labels[start:stop] = np.argmin(d2, axis=1)
        best[start:stop] = d2[np.arange(stop - start), labels[start:stop]]
    return labels, best


def fit_codebook(
    features: np.ndarray, k: int, seed: int, max_iters: int = 100
) -> Codebook:
    """Fit K centroids with k-means++ init and Lloyd iterations.

    Terminates at `max_iters` or when assignments stop changing. The SSE per
    recorded iteration (starting from the initial centroids) is kept on the
    returned codebook and is non-increasing.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-D sample matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError("sample contains non-finite values")
    k = int(k)
    if k < 1:
        raise ValidationError("k must be a positive integer")
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    n = x.shape[0]
    if n < k:
        raise FitError(f"sample of {n} features cannot support k={k}")
    if len(np.unique(x, axis=0)) < k:
        raise FitError(f"sample has fewer than {k} distinct features")

    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(x, k, rng)

    history: list[float] = []
    prev_labels: np.ndarray | None = None
    stale = True
    for _ in range(max_iters):
        labels, d2 = _nearest(x, centroids)
        _record_sse(history, float(d2.mean()))
        stale = False
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        centroids = _update_centroids(x, labels, centroids)
        prev_labels = labels
        stale = True
    if stale:
        _, d2 = _nearest(x, centroids)
        _record_sse(history, float(d2.mean()))

    return Codebook(centroids=centroids, seed=int(seed), sse_history=history)


def _record_sse(history: list[float], sse: float) -> None:
    # Lloyd guarantees non-increasing error; allow only rounding slack.
    assert not history or sse <= history[-1] + 1e-9 * max(1.0, history[0]), (
        f"quantization error increased: {history[-1]} -> {sse}"
    )
    history.append(sse)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    if k == 1:
        return centroids
    diff = x - centroids[0]
    d2 = np.sum(diff * diff, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise FitError("k-means++ ran out of distinct candidate points")
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        idx = min(idx, n - 1)
        centroids[j] = x[idx]
        diff = x - centroids[j]
        d2 = np.minimum(d2, np.sum(diff * diff, axis=1))
    return centroids


def _update_centroids(
    x: np.ndarray, labels: np.ndarray, centroids: np.ndarray
) -> np.ndarray:
    k = centroids.shape[0]
    out = centroids.copy()
    empty = []
    for c in range(k):
        members = x[labels == c]
        if len(members):
            out[c] = members.mean(axis=0)
        else:
            empty.append(c)
    # Reseed each empty cluster to the point farthest from its current
    # centroid (ascending cluster order, each point used at most once).
    used: set[int] = set()
    for c in empty:
        diff = x - out[c]
        d2 = np.sum(diff * diff, axis=1)
        for idx in used:
            d2[idx] = -1.0
        pick = int(np.argmax(d2))
        out[c] = x[pick]
        used.add(pick)
    return out


def assign(codebook: Codebook, feature: np.ndarray) -> int:
    """Nearest-centroid word id; ties break to the lowest id."""
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (codebook.dim,):
        raise ValidationError(f"expected a vector of dim {codebook.dim}, got {f.shape}")
    d2 = np.sum((codebook.centroids - f) ** 2, axis=1)
    return int(np.argmin(d2))


def assign_features(codebook: Codebook, features: np.ndarray) -> np.ndarray:
    """Vectorized assign() over an (n, D') matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != codebook.dim:
        raise ValidationError(f"expected an (n, {codebook.dim}) matrix, got {x.shape}")
    labels, _ = _nearest(x, codebook.centroids)
    return labels


def build_assignment_map(
    codebook: Codebook,
    tensor: FeatureTensor,
    model: TransformModel,
    upsample_factor: int = 2,
) -> AssignmentMap:
    """Upsample, transform, and quantize a feature tensor into a word grid."""
    if tensor.depth != model.input_dim:
        raise ValidationError(
            f"tensor depth {tensor.depth} does not match transform input dim {model.input_dim}"
        )
    if model.output_dim != codebook.dim:
        raise ValidationError(
            f"transform output dim {model.output_dim} does not match codebook dim {codebook.dim}"
        )
    up = bilinear_upsample(tensor, upsample_factor)
    locals_matrix = up.data.reshape(up.depth, up.rows * up.cols).T
    transformed = transform_features(model, locals_matrix)
    words = assign_features(codebook, transformed).reshape(up.rows, up.cols)
    return AssignmentMap(
        image_id=tensor.image_id, words=words, width=tensor.width, height=tensor.height
    )


def save_codebook(codebook: Codebook, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(CODEBOOK_MAGIC)
        fh.write(struct.pack("<IIIq", CODEBOOK_VERSION, codebook.size, codebook.dim, codebook.seed))
        fh.write(np.ascontiguousarray(codebook.centroids).astype("<f4").tobytes())


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CODEBOOK_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {CODEBOOK_MAGIC!r}")
        head = fh.read(struct.calcsize("<IIIq"))
        if len(head) < struct.calcsize("<IIIq"):
            raise TruncationError("file too short for codebook header")
        version, k, dim, seed = struct.unpack("<IIIq", head)
        if version != CODEBOOK_VERSION:
            raise FormatError(f"unsupported codebook version {version}")
        raw = fh.read(4 * k * dim)
        if len(raw) < 4 * k * dim:
            raise TruncationError("file too short for centroid block")
        centroids = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(k, dim)
    return Codebook(centroids=centroids, seed=seed)


def save_assignment_map(amap: AssignmentMap, path: str | Path) -> None:
    ident = amap.image_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIII", MAP_VERSION, amap.rows, amap.cols, amap.width, amap.height, len(ident)
            )
        )
        fh.write(ident)
        fh.write(amap.words.astype("<u4").tobytes())


def load_assignment_map(path: str | Path) -> AssignmentMap:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAP_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAP_MAGIC!r}")
        head = fh.read(24)
        if len(head) < 24:
            raise TruncationError("file too short for assignment-map header")
        version, rows, cols, width, height, id_len = struct.unpack("<IIIIII", head)
        if version != MAP_VERSION:
            raise FormatError(f"unsupported assignment-map version {version}")
        ident = fh.read(id_len)
        if len(ident) < id_len:
            raise TruncationError("file too short for declared id length")
        raw = fh.read(4 * rows * cols)
        if len(raw) < 4 * rows * cols:
            raise TruncationError("file too short for word grid")
        words = np.frombuffer(raw, dtype="<u4").astype(np.int64).reshape(rows, cols)
    return AssignmentMap(
        image_id=ident.decode("utf-8"), words=words, width=width, height=height
    )
