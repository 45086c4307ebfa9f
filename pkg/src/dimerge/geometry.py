"""Column-wise magnitude–direction geometry of weight matrices.

For a stored 2D tensor of shape ``[d_out, d_in]`` a "column" is the slice
varying over axis 0 at a fixed axis-1 index; embedding and output-head
matrices follow the same stored-layout rule. Each column is represented as
its Euclidean norm times an approximately-unit direction, with a small
stabilizer in the denominator.

All dot products and norms accumulate in 64-bit floats regardless of the
storage precision of the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import AlignedTriple
from .errors import NumericError, ShapeError

EPSILON_DEFAULT = 1e-8


def _column_sq_norms(W: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->j", W, W, dtype=np.float64)


def _column_dots(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->j", A, B, dtype=np.float64)


@dataclass(frozen=True)
class ColumnDecomposition:
    """Per-column norms and stabilized unit directions of a matrix.

    ``directions[:, j]`` has norm ``magnitudes[j] / (magnitudes[j] + epsilon)``,
    i.e. unit up to stabilizer-scale terms; a zero column yields a zero
    direction.
    """

    magnitudes: np.ndarray      # (d_in,) float64, non-negative
    directions: np.ndarray      # (d_out, d_in), input dtype
    epsilon: float

    @property
    def d_in(self) -> int:
        return self.directions.shape[1]


def decompose(W: np.ndarray, epsilon: float = EPSILON_DEFAULT) -> ColumnDecomposition:
    """Split a matrix into column norms and stabilized unit columns."""
    W = np.asarray(W)
    if W.ndim != 2:
        raise ShapeError(f"decompose expects a 2D matrix, got shape {W.shape}")
    if epsilon <= 0:
        raise NumericError("epsilon must be positive")
    if not np.all(np.isfinite(W)):
        raise NumericError("matrix contains non-finite entries")
    magnitudes = np.sqrt(_column_sq_norms(W))
    directions = (W / (magnitudes + epsilon)).astype(W.dtype)
    return ColumnDecomposition(magnitudes=magnitudes, directions=directions, epsilon=epsilon)


def magnitude_deviation(dec_k: ColumnDecomposition, dec_n: ColumnDecomposition) -> np.ndarray:
    """Absolute per-column norm gap between a source and the base."""
    if dec_k.d_in != dec_n.d_in:
        raise ShapeError(f"column counts differ: {dec_k.d_in} vs {dec_n.d_in}")
    return np.abs(dec_k.magnitudes - dec_n.magnitudes)


def _guarded_column_cosines(A: np.ndarray, B: np.ndarray, guard: np.ndarray) -> np.ndarray:
    """Column cosines with near-zero columns forced to 0."""
    norms_a = np.sqrt(_column_sq_norms(A))
    norms_b = np.sqrt(_column_sq_norms(B))
    denom = norms_a * norms_b
    safe = np.where(guard | (denom == 0.0), 1.0, denom)
    cos = _column_dots(A, B) / safe
    cos = np.where(guard | (denom == 0.0), 0.0, cos)
    return np.clip(cos, -1.0, 1.0)


def direction_deviation(dec_k: ColumnDecomposition, dec_n: ColumnDecomposition) -> np.ndarray:
    """One minus the per-column cosine between source and base directions.

    Columns whose original norm falls below the stabilizer on either side
    get cosine 0, hence deviation 1.
    """
    if dec_k.directions.shape != dec_n.directions.shape:
        raise ShapeError(
            f"direction shapes differ: {dec_k.directions.shape} vs {dec_n.directions.shape}"
        )
    guard = (dec_k.magnitudes < dec_k.epsilon) | (dec_n.magnitudes < dec_n.epsilon)
    cos = _guarded_column_cosines(dec_k.directions, dec_n.directions, guard)
    return 1.0 - cos


def cross_alignment(
    delta_ml: np.ndarray, delta_mm: np.ndarray, epsilon: float = EPSILON_DEFAULT
) -> np.ndarray:
    """Per-column cosine between the two source residuals, in [-1, 1].

    Near-zero residual columns (norm below the stabilizer) report 0.
    """
    delta_ml = np.asarray(delta_ml)
    delta_mm = np.asarray(delta_mm)
    if delta_ml.shape != delta_mm.shape:
        raise ShapeError(f"residual shapes differ: {delta_ml.shape} vs {delta_mm.shape}")
    if delta_ml.ndim == 1:
        delta_ml = delta_ml[:, None]
        delta_mm = delta_mm[:, None]
    norms_ml = np.sqrt(_column_sq_norms(delta_ml))
    norms_mm = np.sqrt(_column_sq_norms(delta_mm))
    guard = (norms_ml < epsilon) | (norms_mm < epsilon)
    return _guarded_column_cosines(delta_ml, delta_mm, guard)


def residual_identity_terms(col_k: np.ndarray, col_n: np.ndarray) -> tuple[float, float]:
    """Both sides of the squared column-residual split, radial plus angular.

    The left side is the direct squared distance between the raw columns.
    The right side recomputes it from the norm gap and the reorientation:
    ``(|u| - |v|)^2 + 2 |u| |v| (1 - cos(u, v))``. The two agree exactly in
    real arithmetic; a zero column on either side makes the cosine term
    vanish, so the convention cos := 0 there is exact rather than a guard.
    """
    u = np.asarray(col_k)
    v = np.asarray(col_n)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"expected equal-length vectors, got {u.shape} and {v.shape}")
    diff = u - v
    lhs = float(np.einsum("i,i->", diff, diff, dtype=np.float64))
    m_u = float(np.sqrt(np.einsum("i,i->", u, u, dtype=np.float64)))
    m_v = float(np.sqrt(np.einsum("i,i->", v, v, dtype=np.float64)))
    if m_u == 0.0 or m_v == 0.0:
        cos = 0.0
    else:
        cos = float(np.einsum("i,i->", u, v, dtype=np.float64)) / (m_u * m_v)
    rhs = (m_u - m_v) ** 2 + 2.0 * m_u * m_v * (1.0 - cos)
    return lhs, rhs


@dataclass(frozen=True)
class HeterogeneityStats:
    """Per-tensor residual diagnostics: norms, reorientation, alignment.

    For 1D tensors the direction fields are absent and the cross cosine is
    taken over the whole residual vectors.
    """

    residual_norm_ml: float
    residual_norm_mm: float
    mean_dir_dev_ml: float | None
    mean_dir_dev_mm: float | None
    mean_cross_cosine: float


@dataclass(frozen=True)
class DeviationProfile:
    """Base-relative deviations of one source: norm gaps and reorientation
    per column for matrices, absolute element gaps for vectors."""

    source: str                         # "ml" or "mm"
    mag_dev: np.ndarray | None = None   # (d_in,) >= 0
    dir_dev: np.ndarray | None = None   # (d_in,) in [0, 2]
    elem_dev: np.ndarray | None = None  # 1D parameters


def deviation_profile(
    W_k: np.ndarray, W_n: np.ndarray, source: str, epsilon: float = EPSILON_DEFAULT
) -> DeviationProfile:
    """Deviations of one source tensor relative to the base tensor."""
    W_k = np.asarray(W_k)
    W_n = np.asarray(W_n)
    if W_k.shape != W_n.shape:
        raise ShapeError(f"shapes differ: {W_k.shape} vs {W_n.shape}")
    if W_k.ndim == 1:
        elem = np.abs(W_k.astype(np.float64) - W_n.astype(np.float64))
        return DeviationProfile(source=source, elem_dev=elem)
    dec_k = decompose(W_k, epsilon)
    dec_n = decompose(W_n, epsilon)
    return DeviationProfile(
        source=source,
        mag_dev=magnitude_deviation(dec_k, dec_n),
        dir_dev=direction_deviation(dec_k, dec_n),
    )


def tensor_stats(triple: AlignedTriple, epsilon: float = EPSILON_DEFAULT) -> HeterogeneityStats:
    """Residual norms, mean reorientation, and cross-residual alignment for
    one aligned parameter."""
    base = triple.base.to_f32()
    ml = triple.ml.to_f32()
    mm = triple.mm.to_f32()
    delta_ml = ml - base
    delta_mm = mm - base

    flat_ml, flat_mm = delta_ml.ravel(), delta_mm.ravel()
    norm_ml = float(np.sqrt(np.einsum("i,i->", flat_ml, flat_ml, dtype=np.float64)))
    norm_mm = float(np.sqrt(np.einsum("i,i->", flat_mm, flat_mm, dtype=np.float64)))

    if base.ndim == 1:
        cross = float(cross_alignment(delta_ml, delta_mm, epsilon)[0])
        return HeterogeneityStats(norm_ml, norm_mm, None, None, cross)

    dec_base = decompose(base, epsilon)
    dec_ml = decompose(ml, epsilon)
    dec_mm = decompose(mm, epsilon)
    dd_ml = direction_deviation(dec_ml, dec_base)
    dd_mm = direction_deviation(dec_mm, dec_base)
    cross = cross_alignment(delta_ml, delta_mm, epsilon)
    return HeterogeneityStats(
        residual_norm_ml=norm_ml,
        residual_norm_mm=norm_mm,
        mean_dir_dev_ml=float(dd_ml.mean()),
        mean_dir_dev_mm=float(dd_mm.mean()),
        mean_cross_cosine=float(cross.mean()),
    )
