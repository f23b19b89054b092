"""Numerical check that a kernel update changes the output identically
whether the transformation matrix is read as warping the receptive field
or as warping the kernel space.

For a weight update dW = W_after - W_before on a circular layer, the squared
output change ||dO||^2 can be computed three ways:

  v1  directly, from the two re-parameterized outputs;
  v2  by convolving dW over the resampled input (B applied per patch);
  v3  by convolving the re-parameterized update (B^T dW) over the raw input.

All three must agree to tight relative tolerance in double precision.
"""

from __future__ import annotations

import numpy as np

from .layers import extract_patches
from .transform import TransformMatrix, reparameterize, resample_patch


def verify_delta_identity(image: np.ndarray, w_before: np.ndarray,
                          w_after: np.ndarray, b: TransformMatrix,
                          *, stride: int = 1, padding: int = 0) -> tuple[float, float, float]:
    """Returns (v1, v2, v3) for a single-channel image and K x K kernels."""
    k = b.kernel_size
    img = np.asarray(image, dtype=np.float64)
    wb = np.asarray(w_before, dtype=np.float64).reshape(-1)
    wa = np.asarray(w_after, dtype=np.float64).reshape(-1)
    if wb.shape != (b.n,) or wa.shape != (b.n,):
        raise ValueError(f"kernels must have {b.n} entries")
    if img.ndim != 2:
        raise ValueError("expected a 2-D single-channel image")

    patches = extract_patches(img[None, None], k, stride, padding,
                              b.dilation)[0, 0]  # (K*K, L)
    dw = wa - wb

    # v1: difference of the two actual outputs
    out_before = reparameterize(wb, b) @ patches
    out_after = reparameterize(wa, b) @ patches
    v1 = float(np.sum((out_after - out_before) ** 2))

    # v2: dW convolved over the B-resampled receptive fields
    resampled = resample_patch(patches.T, b).T
    v2 = float(np.sum((dw @ resampled) ** 2))

    # v3: the re-parameterized update convolved over the raw input
    v3 = float(np.sum((reparameterize(dw, b) @ patches) ** 2))

    return v1, v2, v3
