"""Minimal reverse-mode autodiff over numpy arrays.

Each `Var` records its parent variables and a backward closure that pushes
the output gradient onto the parents' gradient buffers. Calling
``backward()`` on a scalar root replays the recorded tape (the topologically
sorted ancestor list) in reverse. Gradients accumulate in ``Var.grad`` with
the same shape and dtype as the value.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Var:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(
        self,
        data: np.ndarray,
        parents: Sequence["Var"] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
        requires_grad: bool = True,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        order = tape(self)
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar root")
            seed = np.ones_like(self.data)
        self.accumulate(seed)
        for node in reversed(order):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)

    def __repr__(self) -> str:
        return f"Var(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tape(root: Var) -> list[Var]:
    """Topologically ordered ancestors of `root` (parents before children)."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def constant(data: np.ndarray) -> Var:
    return Var(np.asarray(data), requires_grad=False)


def add(a: Var, b: Var) -> Var:
    out_data = a.data + b.data

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return Var(out_data, (a, b), bw)


def scale(a: Var, c: float) -> Var:
    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g * c)

    return Var(a.data * c, (a,), bw)


def mul(a: Var, b: Var) -> Var:
    out_data = a.data * b.data

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Var(out_data, (a, b), bw)


def relu(a: Var) -> Var:
    mask = a.data > 0

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g * mask)

    return Var(a.data * mask, (a,), bw)


def matmul(a: Var, b: Var) -> Var:
    out_data = a.data @ b.data

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return Var(out_data, (a, b), bw)


def reshape(a: Var, shape: tuple[int, ...]) -> Var:
    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g.reshape(a.data.shape))

    return Var(a.data.reshape(shape), (a,), bw)


def concat(vars_: Sequence[Var], axis: int) -> Var:
    out_data = np.concatenate([v.data for v in vars_], axis=axis)
    sizes = [v.data.shape[axis] for v in vars_]
    splits = np.cumsum(sizes)[:-1]

    def bw(g: np.ndarray) -> None:
        pieces = np.split(g, splits, axis=axis)
        for v, piece in zip(vars_, pieces):
            if v.requires_grad:
                v.accumulate(piece)

    return Var(out_data, tuple(vars_), bw)


def mean_all(a: Var) -> Var:
    n = a.data.size

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(np.full_like(a.data, float(g) / n))

    return Var(np.asarray(a.data.mean()), (a,), bw)


def weighted_sum(ys: Sequence[Var], w: Var) -> Var:
    """sum_i w[i] * ys[i] for a 1-D weight vector; gradients flow to both."""
    if len(ys) != w.data.shape[0]:
        raise ValueError("weight/operand count mismatch")
    out_data = sum(w.data[i] * ys[i].data for i in range(len(ys)))

    def bw(g: np.ndarray) -> None:
        for i, y in enumerate(ys):
            if y.requires_grad:
                y.accumulate(g * w.data[i])
        if w.requires_grad:
            gw = np.array([float(np.sum(g * y.data)) for y in ys], dtype=w.data.dtype)
            w.accumulate(gw)

    return Var(out_data, tuple(ys) + (w,), bw)


def softmax_vec(a: Var) -> Var:
    """Softmax of a 1-D vector."""
    z = a.data - a.data.max()
    e = np.exp(z)
    s = e / e.sum()

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(s * (g - float(np.dot(g, s))))

    return Var(s, (a,), bw)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g
