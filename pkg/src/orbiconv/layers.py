"""Convolution, pooling and dense layers over the autodiff engine.

Convolution is implemented with im2col patch extraction. This is the single
site where the y-up sampling geometry maps onto image indexing: kernel slot
(kr, kc) reads the pixel displaced by (row, col) = (d*(kr-m), d*(kc-m)),
which is exactly the row-major flattening used by the geometry and transform
modules.

Circular layers hold a TransformMatrix and re-parameterize their weights
once per forward pass (effective kernel = B^T @ w); the backward pass maps
the effective-kernel gradient back through the adjoint (B @ g). Square
layers use an identity transform and skip the product entirely, so a square
layer and a circular layer differ only in the fixed matrix.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .autodiff import Var
from .transform import (
    TransformMatrix,
    identity_transform,
    reparameterize,
    transform_gradient_pushforward,
)

_PATCH_INDEX_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


class ShapeMode(Enum):
    SQUARE = "square"
    CIRCULAR = "circular"
    INTEGRATED = "integrated"


def _out_size(n: int, k: int, stride: int, pad: int, dil: int) -> int:
    return (n + 2 * pad - dil * (k - 1) - 1) // stride + 1


def _patch_indices(h: int, w: int, k: int, stride: int, pad: int, dil: int):
    key = (h, w, k, stride, pad, dil)
    cached = _PATCH_INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    oh = _out_size(h, k, stride, pad, dil)
    ow = _out_size(w, k, stride, pad, dil)
    if oh < 1 or ow < 1:
        raise ValueError(f"zero-sized output for input {h}x{w}, K={k}, "
                         f"stride={stride}, pad={pad}, dilation={dil}")
    kr, kc = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    orow, ocol = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    r_idx = (kr.reshape(-1, 1) * dil + orow.reshape(1, -1) * stride)
    c_idx = (kc.reshape(-1, 1) * dil + ocol.reshape(1, -1) * stride)
    _PATCH_INDEX_CACHE[key] = (r_idx, c_idx)
    return r_idx, c_idx


def extract_patches(x: np.ndarray, k: int, stride: int, pad: int, dil: int,
                    pad_value: float = 0.0) -> np.ndarray:
    """(N, C, H, W) -> (N, C, K*K, OH*OW) row-major kernel patches."""
    n, c, h, w = x.shape
    if pad > 0:
        xp = np.full((n, c, h + 2 * pad, w + 2 * pad), pad_value, dtype=x.dtype)
        xp[:, :, pad:pad + h, pad:pad + w] = x
    else:
        xp = x
    r_idx, c_idx = _patch_indices(h, w, k, stride, pad, dil)
    return xp[:, :, r_idx, c_idx]


def scatter_patches(g: np.ndarray, in_shape: tuple[int, int, int, int],
                    k: int, stride: int, pad: int, dil: int) -> np.ndarray:
    """Adjoint of extract_patches: scatter-add patch gradients back."""
    n, c, h, w = in_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    r_idx, c_idx = _patch_indices(h, w, k, stride, pad, dil)
    flat = (r_idx * wp + c_idx).ravel()
    gxp = np.zeros((n, c, hp * wp), dtype=g.dtype)
    np.add.at(gxp, (np.arange(n)[:, None, None], np.arange(c)[None, :, None],
                    flat[None, None, :]), g.reshape(n, c, -1))
    gxp = gxp.reshape(n, c, hp, wp)
    if pad > 0:
        gxp = gxp[:, :, pad:pad + h, pad:pad + w]
    return gxp


def conv2d(x: Var, weights: Var, bias: Var | None, *, stride: int = 1,
           padding: int = 0, dilation: int = 1,
           transform: TransformMatrix | None = None,
           depthwise: bool = False) -> Var:
    """2D convolution (cross-correlation) with optional weight
    re-parameterization through a TransformMatrix.

    weights: (Cout, Cin, K, K), or (C, 1, K, K) when depthwise.
    """
    n, c, h, w = x.data.shape
    cout, cin, k, k2 = weights.data.shape
    if k != k2:
        raise ValueError("only square kernel extents are supported")
    if depthwise:
        if cout != c or cin != 1:
            raise ValueError(f"depthwise conv needs weights ({c},1,K,K), got "
                             f"{weights.data.shape}")
    elif cin != c:
        raise ValueError(f"input has {c} channels but weights expect {cin}")

    kk = k * k
    w_flat = weights.data.reshape(cout, cin, kk)
    if transform is not None and not transform.is_identity():
        if transform.kernel_size != k or transform.dilation != dilation:
            raise ValueError("transform does not match kernel size/dilation")
        w_eff = reparameterize(w_flat, transform)
    else:
        w_eff = w_flat

    oh = _out_size(h, k, stride, padding, dilation)
    ow = _out_size(w, k, stride, padding, dilation)
    patches = extract_patches(x.data, k, stride, padding, dilation)

    if depthwise:
        out = np.einsum("ck,nckl->ncl", w_eff.reshape(c, kk), patches)
    else:
        out = np.einsum("of,nfl->nol", w_eff.reshape(cout, cin * kk),
                        patches.reshape(n, cin * kk, -1))
    out = out.reshape(n, cout, oh, ow)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)

    parents = (x, weights) if bias is None else (x, weights, bias)

    def bw(g: np.ndarray) -> None:
        gl = g.reshape(n, cout, -1)
        if bias is not None and bias.requires_grad:
            bias.accumulate(gl.sum(axis=(0, 2)))
        if depthwise:
            if weights.requires_grad:
                g_eff = np.einsum("ncl,nckl->ck", gl, patches).reshape(c, 1, kk)
                if transform is not None and not transform.is_identity():
                    g_eff = transform_gradient_pushforward(g_eff, transform)
                weights.accumulate(g_eff.reshape(weights.data.shape))
            if x.requires_grad:
                gp = np.einsum("ck,ncl->nckl", w_eff.reshape(c, kk), gl)
                x.accumulate(scatter_patches(gp, x.data.shape, k, stride,
                                             padding, dilation))
        else:
            pf = patches.reshape(n, cin * kk, -1)
            if weights.requires_grad:
                g_eff = np.einsum("nol,nfl->of", gl, pf).reshape(cout, cin, kk)
                if transform is not None and not transform.is_identity():
                    g_eff = transform_gradient_pushforward(g_eff, transform)
                weights.accumulate(g_eff.reshape(weights.data.shape))
            if x.requires_grad:
                gp = np.einsum("of,nol->nfl", w_eff.reshape(cout, cin * kk), gl)
                x.accumulate(scatter_patches(gp.reshape(n, cin, kk, -1),
                                             x.data.shape, k, stride, padding,
                                             dilation))

    return Var(out, parents, bw)


def max_pool2d(x: Var, k: int = 3, stride: int = 1, padding: int = 1) -> Var:
    n, c, h, w = x.data.shape
    oh = _out_size(h, k, stride, padding, 1)
    ow = _out_size(w, k, stride, padding, 1)
    patches = extract_patches(x.data, k, stride, padding, 1, pad_value=-np.inf)
    arg = patches.argmax(axis=2)
    out = np.take_along_axis(patches, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def bw(g: np.ndarray) -> None:
        if not x.requires_grad:
            return
        gp = np.zeros_like(patches)
        np.put_along_axis(gp, arg[:, :, None, :], g.reshape(n, c, 1, -1), axis=2)
        x.accumulate(scatter_patches(gp, x.data.shape, k, stride, padding, 1))

    return Var(out.reshape(n, c, oh, ow), (x,), bw)


def avg_pool2d(x: Var, k: int = 3, stride: int = 1, padding: int = 1) -> Var:
    n, c, h, w = x.data.shape
    oh = _out_size(h, k, stride, padding, 1)
    ow = _out_size(w, k, stride, padding, 1)
    kk = k * k
    patches = extract_patches(x.data, k, stride, padding, 1)
    out = patches.mean(axis=2)

    def bw(g: np.ndarray) -> None:
        if not x.requires_grad:
            return
        gp = np.broadcast_to(g.reshape(n, c, 1, -1) / kk, patches.shape)
        x.accumulate(scatter_patches(np.ascontiguousarray(gp), x.data.shape,
                                     k, stride, padding, 1))

    return Var(out.reshape(n, c, oh, ow), (x,), bw)


def global_avg_pool(x: Var) -> Var:
    n, c, h, w = x.data.shape

    def bw(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g[:, :, None, None] / (h * w),
                                         x.data.shape).copy())

    return Var(x.data.mean(axis=(2, 3)), (x,), bw)


def linear(x: Var, weights: Var, bias: Var | None) -> Var:
    out = x.data @ weights.data.T
    if bias is not None:
        out = out + bias.data

    parents = (x, weights) if bias is None else (x, weights, bias)

    def bw(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate(g @ weights.data)
        if weights.requires_grad:
            weights.accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=0))

    return Var(out, parents, bw)


def channel_affine(x: Var, scale: Var, shift: Var) -> Var:
    """Per-channel scale and shift; the batch-norm stand-in for this engine."""
    c = x.data.shape[1]
    s = scale.data.reshape(1, c, 1, 1)
    out = x.data * s + shift.data.reshape(1, c, 1, 1)

    def bw(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate(g * s)
        if scale.requires_grad:
            scale.accumulate((g * x.data).sum(axis=(0, 2, 3)))
        if shift.requires_grad:
            shift.accumulate(g.sum(axis=(0, 2, 3)))

    return Var(out, (x, scale, shift), bw)


def softmax_cross_entropy(logits: Var, labels: np.ndarray) -> Var:
    """Mean cross-entropy of (N, num_classes) logits against integer labels."""
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = logits.data.shape[0]
    loss = -np.log(p[np.arange(n), labels] + 1e-300).mean()

    def bw(g: np.ndarray) -> None:
        if logits.requires_grad:
            gi = p.copy()
            gi[np.arange(n), labels] -= 1.0
            logits.accumulate(gi * (float(g) / n))

    return Var(np.asarray(loss), (logits,), bw)


# ---------------------------------------------------------------------------
# Parameterized modules


def kaiming_uniform(shape: tuple[int, ...], fan_in: int, rng,
                    dtype=np.float32) -> np.ndarray:
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _collect_params(value, out: list[Var]) -> None:
    if isinstance(value, Var):
        if value.requires_grad:
            out.append(value)
    elif isinstance(value, Module):
        out.extend(value.params())
    elif isinstance(value, (list, tuple)):
        for item in value:
            _collect_params(item, out)


class Module:
    def params(self) -> list[Var]:
        out: list[Var] = []
        for v in vars(self).values():
            _collect_params(v, out)
        return out

    def __call__(self, x: Var) -> Var:
        return self.forward(x)

    def forward(self, x: Var) -> Var:  # pragma: no cover - abstract
        raise NotImplementedError


class Conv2d(Module):
    """A convolution layer with a kernel-shape mode.

    shape_mode SQUARE uses an identity transform; CIRCULAR re-parameterizes
    through the fixed bilinear matrix. INTEGRATED layers are built in the
    integrated module on top of this class.
    """

    def __init__(self, cin: int, cout: int, k: int, *, stride: int = 1,
                 padding: int = 0, dilation: int = 1,
                 shape_mode: ShapeMode = ShapeMode.SQUARE,
                 transform: TransformMatrix | None = None,
                 depthwise: bool = False, bias: bool = True,
                 rng=None, dtype=np.float32):
        if k % 2 == 0 or k < 1:
            raise ValueError(f"kernel size must be odd, got {k}")
        if shape_mode is ShapeMode.CIRCULAR:
            if transform is None:
                from .geometry import circular_points
                from .transform import build_transform
                transform = build_transform(circular_points(k, dilation))
            if transform.kernel_size != k or transform.dilation != dilation:
                raise ValueError("transform mismatch with (K, dilation)")
        elif shape_mode is ShapeMode.SQUARE:
            transform = identity_transform(k, dilation)
        self.shape_mode = shape_mode
        self.transform = transform
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self.depthwise = depthwise
        wc = (cout, 1, k, k) if depthwise else (cout, cin, k, k)
        fan_in = k * k if depthwise else cin * k * k
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = Var(kaiming_uniform(wc, fan_in, rng, dtype))
        self.bias = Var(np.zeros(cout, dtype=dtype)) if bias else None

    def forward(self, x: Var) -> Var:
        return conv2d(x, self.weights, self.bias, stride=self.stride,
                      padding=self.padding, dilation=self.dilation,
                      transform=self.transform, depthwise=self.depthwise)


class Linear(Module):
    def __init__(self, cin: int, cout: int, rng=None, dtype=np.float32):
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = Var(kaiming_uniform((cout, cin), cin, rng, dtype))
        self.bias = Var(np.zeros(cout, dtype=dtype))

    def forward(self, x: Var) -> Var:
        return linear(x, self.weights, self.bias)


class ChannelAffine(Module):
    def __init__(self, c: int, dtype=np.float32):
        self.scale = Var(np.ones(c, dtype=dtype))
        self.shift = Var(np.zeros(c, dtype=dtype))

    def forward(self, x: Var) -> Var:
        return channel_affine(x, self.scale, self.shift)


class Sequential(Module):
    def __init__(self, *modules: Module):
        self.modules = list(modules)

    def forward(self, x: Var) -> Var:
        for m in self.modules:
            x = m(x)
        return x
