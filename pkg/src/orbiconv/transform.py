"""The fixed sparse transformation matrix mapping square-grid samples to
circular samples.

For a circular sample r and a grid sample s, the coupling coefficient is the
separable bilinear hat product g(s_x, r_x) * g(s_y, r_y) with
g(a, b) = max(0, 1 - |a - b|). Arranging these per-point weights row by row
over the whole receptive field yields a K^2 x K^2 matrix B: row i holds the
interpolation weights of circular point i against all K^2 grid points.

B is row-stochastic with at most 4 nonzeros per row, and rows whose circular
point falls exactly on a grid point are standard-basis rows. For dilation d
the hat functions act on coordinates divided by d (interpolation between the
d-spaced grid samples), which makes B independent of the dilation.

Both directions of the map are provided: resampling an input patch (B @ patch)
and re-parameterizing kernel weights (B^T @ w), which turns circular
convolution into a standard convolution with the effective kernel B^T @ w.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Mode, SamplePoint, SamplePointSet


class TransformMode(Enum):
    IDENTITY = "identity"
    CIRCULAR = "circular"


class TransformBuildError(ValueError):
    """Raised when a sample point's bilinear support escapes the K x K patch."""


@dataclass(frozen=True)
class TransformMatrix:
    kernel_size: int
    dilation: int
    # rows[i] is a tuple of (column, coefficient) pairs, at most 4 per row
    rows: tuple[tuple[tuple[int, float], ...], ...]
    mode_tag: TransformMode

    @property
    def n(self) -> int:
        return self.kernel_size**2

    def dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=dtype)
        for i, row in enumerate(self.rows):
            for col, val in row:
                out[i, col] = val
        return out

    def is_identity(self) -> bool:
        return self.mode_tag is TransformMode.IDENTITY


def bilinear_weight(s: SamplePoint, r: SamplePoint) -> float:
    """Separable bilinear interpolation weight of grid point s for sample r."""
    gx = max(0.0, 1.0 - abs(s.x - r.x))
    gy = max(0.0, 1.0 - abs(s.y - r.y))
    return gx * gy


def identity_transform(kernel_size: int, dilation: int = 1) -> TransformMatrix:
    """The identity matrix; used by the square branch of integrated kernels."""
    rows = tuple(((i, 1.0),) for i in range(kernel_size**2))
    return TransformMatrix(kernel_size, dilation, rows, TransformMode.IDENTITY)


def build_transform(geometry: SamplePointSet) -> TransformMatrix:
    """Assemble B from a circular sample point set.

    Raises TransformBuildError if any point's 4-neighbor support is not
    contained in the K x K patch.
    """
    if geometry.mode is not Mode.CIRCULAR:
        raise ValueError("build_transform expects a circular SamplePointSet")
    k = geometry.kernel_size
    d = geometry.dilation
    m = (k - 1) // 2
    # grid coordinates normalized by the dilation, so spacing is 1
    grid = [(col - m, m - row) for row in range(k) for col in range(k)]
    rows = []
    for i, p in enumerate(geometry.points):
        rx, ry = p.x / d, p.y / d
        entries = []
        for col, (gx, gy) in enumerate(grid):
            w = bilinear_weight(SamplePoint(float(gx), float(gy)), SamplePoint(rx, ry))
            if w > 0.0:
                entries.append((col, w))
        total = sum(v for _, v in entries)
        if abs(total - 1.0) > 1e-9:
            raise TransformBuildError(
                f"bilinear support of point {i} ({p.x:.6f},{p.y:.6f}) escapes "
                f"the {k}x{k} patch (weights sum to {total:.6f})"
            )
        rows.append(tuple(entries))
    return TransformMatrix(k, d, tuple(rows), TransformMode.CIRCULAR)


def reparameterize(weights: np.ndarray, b: TransformMatrix) -> np.ndarray:
    """Effective kernel B^T @ w for a flat K^2 weight vector.

    Computed once per forward pass; the result plugged into a standard
    convolution reproduces the circular convolution exactly. Identity-mode
    transforms return the input unchanged (same object).
    """
    w = np.asarray(weights)
    if w.shape[-1] != b.n:
        raise ValueError(f"expected trailing dim {b.n}, got {w.shape}")
    if b.is_identity():
        return weights
    out = np.zeros_like(w)
    for i, row in enumerate(b.rows):
        for col, val in row:
            out[..., col] += val * w[..., i]
    return out


def resample_patch(patch: np.ndarray, b: TransformMatrix) -> np.ndarray:
    """B @ patch: bilinear resampling of a row-major K x K patch at the
    circular sample points."""
    p = np.asarray(patch)
    if p.shape[-1] != b.n:
        raise ValueError(f"expected trailing dim {b.n}, got {p.shape}")
    if b.is_identity():
        return patch
    out = np.zeros_like(p)
    for i, row in enumerate(b.rows):
        for col, val in row:
            out[..., i] += val * p[..., col]
    return out


def transform_gradient_pushforward(grad: np.ndarray, b: TransformMatrix) -> np.ndarray:
    """Adjoint of reparameterize: maps an effective-kernel gradient back to
    the raw-weight gradient, i.e. B @ grad."""
    return resample_patch(grad, b)
