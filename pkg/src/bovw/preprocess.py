"""Per-feature transform chain and spatial helpers.

Local features go through L2-normalize -> PCA rotate -> whiten -> L2-normalize
before quantization. This module also provides corner-aligned bilinear
upsampling of feature maps and the Gaussian center-prior weight grid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitError, FormatError, TruncationError, ValidationError
from .tensor_io import FeatureTensor

MODEL_MAGIC = b"PCA1"
MODEL_VERSION = 1

DEFAULT_EPSILON = 1e-8
DEFAULT_SIGMA_FRACTION = 1.0 / 3.0


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||2; the zero vector is returned unchanged."""
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all():
        raise ValidationError("cannot normalize a non-finite vector")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return v.copy()
    return v / norm


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise l2_normalize for an (n, D) matrix; zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return x / safe


@dataclass(eq=False)
class TransformModel:
    """Fitted L2 -> PCA -> whiten -> L2 parameters.

    `components` rows are the top output_dim covariance eigenvectors
    (orthonormal), `eigenvalues` the matching variances in descending order.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    epsilon: float
    total_variance: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.components = np.asarray(self.components, dtype=np.float64)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        if self.mean.ndim != 1 or self.components.ndim != 2:
            raise ValidationError("mean must be a vector and components a matrix")
        d_out, d_in = self.components.shape
        if d_in != self.mean.shape[0]:
            raise ValidationError(
                f"components are {d_out}x{d_in} but mean has dim {self.mean.shape[0]}"
            )
        if d_out > d_in:
            raise ValidationError(f"output dim {d_out} exceeds input dim {d_in}")
        if self.eigenvalues.shape != (d_out,):
            raise ValidationError("need one eigenvalue per component row")
        if not (self.eigenvalues > 0).all():
            raise ValidationError("eigenvalues must all be positive")
        if (np.diff(self.eigenvalues) > 0).any():
            raise ValidationError("eigenvalues must be sorted descending")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        gram = self.components @ self.components.T
        if np.abs(gram - np.eye(d_out)).max() > 1e-5:
            raise ValidationError("component rows are not orthonormal within 1e-5")

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def output_dim(self) -> int:
        return self.components.shape[0]


def fit_transform_model(
    features: np.ndarray,
    output_dim: int | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> TransformModel:
    """Fit PCA + whitening on a sample of feature vectors.

    The sample is expected to hold already-L2-normalized features (the
    pipeline normalizes before fitting); the fit itself is plain PCA of
    whatever it is given.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-D sample matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError("sample contains non-finite values")
    n, dim = x.shape
    d_out = dim if output_dim is None else int(output_dim)
    if d_out < 1 or d_out > dim:
        raise ValidationError(f"output_dim must be in [1, {dim}], got {d_out}")
    if n < d_out:
        raise FitError(f"{n} samples cannot support output_dim {d_out}")
    if n < 2:
        raise FitError("need at least 2 samples to estimate covariance")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]

    # Rank tolerance: relative to the top eigenvalue for the normal case, with
    # an absolute floor at the square of rounding noise so a constant sample
    # (covariance exactly zero up to roundoff) reads as rank 0.
    eps = np.finfo(np.float64).eps
    data_scale = max(float((x * x).sum(axis=1).mean()), 1.0)
    top = max(evals[0], 0.0)
    tol = max(top * dim * eps, data_scale * (dim * eps) ** 2)
    rank = int((evals > tol).sum())
    if rank < d_out:
        raise FitError(f"covariance rank {rank} is below requested dim {d_out}")

    return TransformModel(
        mean=mean,
        components=evecs[:, :d_out].T.copy(),
        eigenvalues=evals[:d_out].copy(),
        epsilon=float(epsilon),
        total_variance=float(evals.sum()),
    )


def apply_transform(model: TransformModel, v: np.ndarray, pre_l2: bool = False) -> np.ndarray:
    """Transform one feature vector; `pre_l2` skips the final normalization."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.input_dim,):
        raise ValidationError(f"expected a vector of dim {model.input_dim}, got {v.shape}")
    u = l2_normalize(v)
    white = (model.components @ (u - model.mean)) / np.sqrt(model.eigenvalues + model.epsilon)
    if pre_l2:
        return white
    return l2_normalize(white)


def transform_features(model: TransformModel, x: np.ndarray, pre_l2: bool = False) -> np.ndarray:
    """Row-wise apply_transform for an (n, D) feature matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValidationError(
            f"expected an (n, {model.input_dim}) matrix, got shape {x.shape}"
        )
    if not np.isfinite(x).all():
        raise ValidationError("features contain non-finite values")
    u = l2_normalize_rows(x)
    white = (u - model.mean) @ model.components.T
    white /= np.sqrt(model.eigenvalues + model.epsilon)
    if pre_l2:
        return white
    return l2_normalize_rows(white)


def bilinear_upsample(tensor: FeatureTensor, factor: int) -> FeatureTensor:
    """Upsample each feature map by `factor` with corner-aligned bilinear sampling."""
    factor = int(factor)
    if factor < 1:
        raise ValidationError("upsample factor must be >= 1")
    if factor == 1:
        return tensor

    depth, rows, cols = tensor.data.shape
    out_r, out_c = rows * factor, cols * factor
    src = tensor.data.astype(np.float64)

    ys = _corner_aligned_coords(rows, out_r)
    xs = _corner_aligned_coords(cols, out_c)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, rows - 1)
    x1 = np.minimum(x0 + 1, cols - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]

    a = src[:, y0[:, None], x0[None, :]]
    b = src[:, y0[:, None], x1[None, :]]
    c = src[:, y1[:, None], x0[None, :]]
    d = src[:, y1[:, None], x1[None, :]]
    out = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)

    # Bilinear output is a convex combination; clip away rounding dust so
    # per-map bounds hold exactly.
    lo = src.min(axis=(1, 2))[:, None, None]
    hi = src.max(axis=(1, 2))[:, None, None]
    out = np.clip(out, lo, hi)

    return FeatureTensor(
        image_id=tensor.image_id,
        data=out.astype(np.float32),
        width=tensor.width,
        height=tensor.height,
    )


def _corner_aligned_coords(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.float64)
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


@dataclass(eq=False)
class CenterPriorGrid:
    """Gaussian spatial weights over an N x M grid, max 1 at the center."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or min(self.weights.shape) < 1:
            raise ValidationError("weights must be a non-empty 2-D grid")
        if not ((self.weights > 0) & (self.weights <= 1)).all():
            raise ValidationError("weights must lie in (0, 1]")

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]


def center_prior_grid(
    rows: int, cols: int, sigma_fraction: float = DEFAULT_SIGMA_FRACTION
) -> CenterPriorGrid:
    """Gaussian weight grid: exp(-d^2 / 2 sigma^2), sigma = fraction * min(N, M)."""
    if rows < 1 or cols < 1:
        raise ValidationError("grid dims must be >= 1")
    if sigma_fraction <= 0:
        raise ValidationError("sigma_fraction must be positive")
    sigma = sigma_fraction * min(rows, cols)
    di = np.arange(rows, dtype=np.float64) - (rows - 1) / 2.0
    dj = np.arange(cols, dtype=np.float64) - (cols - 1) / 2.0
    d2 = di[:, None] ** 2 + dj[None, :] ** 2
    weights = np.exp(-d2 / (2.0 * sigma * sigma))
    weights /= weights.max()
    return CenterPriorGrid(weights=weights)


def save_transform_model(model: TransformModel, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(
            struct.pack("<IIId", MODEL_VERSION, model.input_dim, model.output_dim, model.epsilon)
        )
        fh.write(model.mean.astype("<f8").tobytes())
        fh.write(model.eigenvalues.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(model.components).astype("<f8").tobytes())


def load_transform_model(path: str | Path) -> TransformModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        head = fh.read(struct.calcsize("<IIId"))
        if len(head) < struct.calcsize("<IIId"):
            raise TruncationError("file too short for transform-model header")
        version, d_in, d_out, epsilon = struct.unpack("<IIId", head)
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported transform-model version {version}")
        mean = _read_f64(fh, d_in, "mean")
        eigenvalues = _read_f64(fh, d_out, "eigenvalues")
        components = _read_f64(fh, d_out * d_in, "components").reshape(d_out, d_in)
    return TransformModel(
        mean=mean, components=components, eigenvalues=eigenvalues, epsilon=epsilon
    )


def _read_f64(fh, count: int, what: str) -> np.ndarray:
    raw = fh.read(8 * count)
    if len(raw) < 8 * count:
        raise TruncationError(f"file too short for {what} block")
    return np.frombuffer(raw, dtype="<f8").copy()
