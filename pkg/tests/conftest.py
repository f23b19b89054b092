"""Shared independent oracles for the test suite.

These deliberately avoid the library's production code paths: interpolation
is done point by point on the image lattice, and matrix products use dense
numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np

from orbiconv.geometry import circular_points


def bilin_sample_dilated(img: np.ndarray, row: float, col: float,
                         center_r: int, center_c: int, d: int) -> float:
    """Bilinear interpolation of `img` at (row, col) using the four nearest
    points of the dilation-d lattice anchored at (center_r, center_c).
    Out-of-image lattice points read as zero."""
    tr = (row - center_r) / d
    tc = (col - center_c) / d
    r0, c0 = math.floor(tr), math.floor(tc)
    fr, fc = tr - r0, tc - c0
    total = 0.0
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            if wr == 0.0 or wc == 0.0:
                continue
            rr = center_r + (r0 + dr) * d
            cc = center_c + (c0 + dc) * d
            if 0 <= rr < img.shape[0] and 0 <= cc < img.shape[1]:
                total += wr * wc * img[rr, cc]
    return total


def direct_circular_conv(img: np.ndarray, w: np.ndarray, k: int,
                         d: int = 1) -> np.ndarray:
    """Circular convolution by direct fractional sampling: for every output
    pixel, sample the image at each circular point with bilinear
    interpolation and weight by the paired kernel slot."""
    pts = circular_points(k, d).points
    wf = np.asarray(w, dtype=np.float64).reshape(-1)
    m = (k - 1) // 2
    h, width = img.shape
    oh = h - d * (k - 1)
    ow = width - d * (k - 1)
    out = np.zeros((oh, ow))
    for r in range(oh):
        for c in range(ow):
            cr, cc = r + d * m, c + d * m
            acc = 0.0
            for i, p in enumerate(pts):
                acc += wf[i] * bilin_sample_dilated(
                    img, cr - p.y, cc + p.x, cr, cc, d)
            out[r, c] = acc
    return out


def direct_square_conv(img: np.ndarray, w: np.ndarray, k: int,
                       d: int = 1) -> np.ndarray:
    """Plain valid cross-correlation, written naively."""
    wk = np.asarray(w, dtype=np.float64).reshape(k, k)
    m = (k - 1) // 2
    h, width = img.shape
    oh = h - d * (k - 1)
    ow = width - d * (k - 1)
    out = np.zeros((oh, ow))
    for r in range(oh):
        for c in range(ow):
            acc = 0.0
            for kr in range(k):
                for kc in range(k):
                    acc += wk[kr, kc] * img[r + d * kr, c + d * kc]
            out[r, c] = acc
    return out


def direct_bilinear_at(patch: np.ndarray, x: float, y: float) -> float:
    """Bilinear interpolation of a row-major K x K patch at geometry offset
    (x, y) with y up, unit spacing."""
    k = patch.shape[0]
    m = (k - 1) // 2
    col = x + m
    row = m - y
    r0, c0 = math.floor(row), math.floor(col)
    fr, fc = row - r0, col - c0
    total = 0.0
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr, cc = r0 + dr, c0 + dc
            if wr and wc and 0 <= rr < k and 0 <= cc < k:
                total += wr * wc * patch[rr, cc]
    return total
