"""Cell-based differentiable architecture search whose operation space
includes circular separable and circular dilated separable convolutions.

Each cell is a DAG: the first two nodes are inputs (outputs of the two
previous cells), every later node sums mixed operations over all incoming
edges, and the cell output concatenates the intermediate nodes. A mixed
operation is the softmax(alpha)-weighted sum of all candidate operations on
that edge. Search alternates one SGD step on the weights (train split) with
one Adam step on the alphas (validation split); discretization keeps, per
node, the two strongest incoming edges and the argmax non-zero operation on
each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, add, relu, softmax_vec, weighted_sum
from .data import Dataset
from .layers import (
    ChannelAffine,
    Conv2d,
    Linear,
    Module,
    ShapeMode,
    avg_pool2d,
    global_avg_pool,
    max_pool2d,
    softmax_cross_entropy,
)
from .rng import stream
from .train import NumericalError, SGD, Schedule, TrainConfig, evaluate, lr_at

PRIMITIVES = [
    "sep_conv_3x3",
    "sep_conv_5x5",
    "dil_conv_3x3",
    "dil_conv_5x5",
    "circ_sep_conv_5x5",
    "circ_dil_conv_5x5",
    "max_pool_3x3",
    "avg_pool_3x3",
    "identity",
    "zero",
]

CIRCULAR_OPS = {"circ_sep_conv_5x5", "circ_dil_conv_5x5"}


class Identity(Module):
    def __init__(self, stride: int = 1):
        self.stride = stride

    def forward(self, x: Var) -> Var:
        if self.stride == 1:
            return x
        s = self.stride
        data = x.data[:, :, ::s, ::s]

        def bw(g: np.ndarray) -> None:
            if x.requires_grad:
                gx = np.zeros_like(x.data)
                gx[:, :, ::s, ::s] = g
                x.accumulate(gx)

        return Var(data, (x,), bw)


class Zero(Module):
    def __init__(self, stride: int = 1):
        self.stride = stride

    def forward(self, x: Var) -> Var:
        s = self.stride
        return Var(np.zeros_like(x.data[:, :, ::s, ::s]), (x,), None)


class Pool(Module):
    def __init__(self, kind: str, stride: int = 1):
        self.kind = kind
        self.stride = stride

    def forward(self, x: Var) -> Var:
        if self.kind == "max":
            return max_pool2d(x, 3, self.stride, 1)
        return avg_pool2d(x, 3, self.stride, 1)


class SepConv(Module):
    """relu -> depthwise KxK -> pointwise 1x1 -> per-channel affine."""

    def __init__(self, c: int, k: int, stride: int, *, dilation: int = 1,
                 circular: bool = False, rng=None, dtype=np.float32):
        pad = dilation * (k - 1) // 2
        mode = ShapeMode.CIRCULAR if circular else ShapeMode.SQUARE
        self.depthwise = Conv2d(c, c, k, stride=stride, padding=pad,
                                dilation=dilation, shape_mode=mode,
                                depthwise=True, bias=False, rng=rng, dtype=dtype)
        if circular:
            # the transform shrinks the effective kernel's variance; rescale
            # the init so both kernel shapes start at the same output scale
            dense = self.depthwise.transform.dense()
            gain = np.sqrt(k * k / np.trace(dense.T @ dense))
            self.depthwise.weights.data = (
                self.depthwise.weights.data * gain).astype(dtype)
        self.pointwise = Conv2d(c, c, 1, bias=False, rng=rng, dtype=dtype)
        self.affine = ChannelAffine(c, dtype=dtype)

    def forward(self, x: Var) -> Var:
        return self.affine(self.pointwise(self.depthwise(relu(x))))


def make_op(name: str, c: int, stride: int, rng, dtype=np.float32) -> Module:
    if name == "sep_conv_3x3":
        return SepConv(c, 3, stride, rng=rng, dtype=dtype)
    if name == "sep_conv_5x5":
        return SepConv(c, 5, stride, rng=rng, dtype=dtype)
    if name == "dil_conv_3x3":
        return SepConv(c, 3, stride, dilation=2, rng=rng, dtype=dtype)
    if name == "dil_conv_5x5":
        return SepConv(c, 5, stride, dilation=2, rng=rng, dtype=dtype)
    if name == "circ_sep_conv_5x5":
        return SepConv(c, 5, stride, circular=True, rng=rng, dtype=dtype)
    if name == "circ_dil_conv_5x5":
        return SepConv(c, 5, stride, dilation=2, circular=True, rng=rng,
                       dtype=dtype)
    if name == "max_pool_3x3":
        return Pool("max", stride)
    if name == "avg_pool_3x3":
        return Pool("avg", stride)
    if name == "identity":
        return Identity(stride)
    if name == "zero":
        return Zero(stride)
    raise ValueError(f"unknown operation {name!r}")


def mixed_op_forward(x: Var, alpha: Var, ops: list[Module]) -> Var:
    """Softmax(alpha)-weighted sum of the candidate operations."""
    if len(ops) == 0:
        raise ValueError("empty operation list")
    if alpha.data.shape != (len(ops),):
        raise ValueError("alpha length must match the operation count")
    w = softmax_vec(alpha)
    return weighted_sum([op(x) for op in ops], w)


def cell_edges(num_nodes: int) -> list[tuple[int, int]]:
    """All DAG edges (i, j) feeding intermediate nodes, ordered by (j, i)."""
    return [(i, j) for j in range(2, num_nodes) for i in range(j)]


class SearchCell(Module):
    def __init__(self, num_nodes: int, c: int, reduction: bool,
                 op_names: list[str], cell_id: int, seed: int,
                 dtype=np.float32):
        self.num_nodes = num_nodes
        self.reduction = reduction
        self.op_names = op_names
        self.edges = cell_edges(num_nodes)
        self.edge_ops: list[list[Module]] = []
        for i, j in self.edges:
            stride = 2 if (reduction and i < 2) else 1
            ops = [
                make_op(name, c, stride,
                        stream(seed, f"w/cell{cell_id}/e{i}-{j}/{name}"),
                        dtype)
                for name in op_names
            ]
            self.edge_ops.append(ops)
        n_inter = num_nodes - 2
        self.combine = Conv2d(n_inter * c, c, 1, bias=False,
                              rng=stream(seed, f"w/cell{cell_id}/combine"),
                              dtype=dtype)
        self.combine_affine = ChannelAffine(c, dtype=dtype)

    def forward_cell(self, s0: Var, s1: Var, alphas: list[Var]) -> Var:
        from .autodiff import concat
        states = [s0, s1]
        for j in range(2, self.num_nodes):
            acc = None
            for e, (i, jj) in enumerate(self.edges):
                if jj != j:
                    continue
                y = mixed_op_forward(states[i], alphas[e], self.edge_ops[e])
                acc = y if acc is None else add(acc, y)
            states.append(acc)
        out = concat(states[2:], axis=1)
        return self.combine_affine(self.combine(out))


@dataclass
class SearchConfig:
    num_nodes: int = 5
    num_cells: int = 4          # last one is the reduction cell
    channels: int = 8
    in_channels: int = 1
    num_classes: int = 2
    epochs: int = 20
    batch_size: int = 16
    lr_init: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 3e-4
    warmup_epochs: int = 0
    alpha_lr: float = 3e-3
    alpha_weight_decay: float = 1e-3
    alpha_betas: tuple[float, float] = (0.5, 0.999)
    seed: int = 0
    op_names: list[str] = field(default_factory=lambda: list(PRIMITIVES))


class SearchNetwork(Module):
    """Toy supernet: stem conv, a stack of cells with one reduction cell,
    global average pooling and a linear classifier. Normal cells share one
    alpha table; the reduction cells share another."""

    def __init__(self, cfg: SearchConfig):
        self.cfg = cfg
        c = cfg.channels
        seed = cfg.seed
        self.stem = Conv2d(cfg.in_channels, c, 3, padding=1, bias=False,
                           rng=stream(seed, "w/stem"))
        self.stem_affine = ChannelAffine(c)
        self.cells: list[SearchCell] = []
        self.reduction_flags: list[bool] = []
        for idx in range(cfg.num_cells):
            reduction = idx == cfg.num_cells - 1 and cfg.num_cells > 1
            self.cells.append(SearchCell(cfg.num_nodes, c, reduction,
                                         cfg.op_names, idx, seed))
            self.reduction_flags.append(reduction)
        self.classifier = Linear(c, cfg.num_classes,
                                 rng=stream(seed, "w/classifier"))
        n_edges = len(cell_edges(cfg.num_nodes))
        n_ops = len(cfg.op_names)
        arng = stream(seed, "alpha")
        self.alphas_normal = [
            Var(1e-3 * arng.standard_normal(n_ops).astype(np.float64))
            for _ in range(n_edges)
        ]
        self.alphas_reduce = [
            Var(1e-3 * arng.standard_normal(n_ops).astype(np.float64))
            for _ in range(n_edges)
        ]

    def arch_params(self) -> list[Var]:
        return list(self.alphas_normal) + list(self.alphas_reduce)

    def params(self) -> list[Var]:
        arch = {id(a) for a in self.arch_params()}
        return [p for p in super().params() if id(p) not in arch]

    def forward(self, x: Var) -> Var:
        s = self.stem_affine(self.stem(x))
        s0 = s1 = s
        for cell, reduction in zip(self.cells, self.reduction_flags):
            alphas = self.alphas_reduce if reduction else self.alphas_normal
            if s0.data.shape[2] != s1.data.shape[2]:
                s0 = avg_pool2d(s0, 3, 2, 1)
            out = cell.forward_cell(s0, s1, alphas)
            s0, s1 = s1, out
        return self.classifier(global_avg_pool(s1))

    def alpha_matrix(self, cell_type: str) -> np.ndarray:
        rows = self.alphas_normal if cell_type == "normal" else self.alphas_reduce
        return np.stack([a.data for a in rows])


@dataclass
class CellGenotype:
    cell_type: str  # "normal" | "reduction"
    nodes: list[list[tuple[int, str]]]  # per intermediate node: [(from, op), (from, op)]

    def to_json(self) -> str:
        return json.dumps({
            "cell_type": self.cell_type,
            "nodes": [{"inputs": [{"from": i, "op": op} for i, op in node]}
                      for node in self.nodes],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CellGenotype":
        obj = json.loads(text)
        nodes = [[(inp["from"], inp["op"]) for inp in node["inputs"]]
                 for node in obj["nodes"]]
        return cls(obj["cell_type"], nodes)


def discretize(alphas: np.ndarray, op_names: list[str], num_nodes: int,
               cell_type: str) -> CellGenotype:
    """Keep, per intermediate node, the 2 incoming edges with the highest
    max non-zero softmax weight, and the argmax non-zero op on each. Ties
    break toward the lowest op index, then the lowest source node index."""
    edges = cell_edges(num_nodes)
    if alphas.shape != (len(edges), len(op_names)):
        raise ValueError("alpha table shape mismatch")
    z = alphas - alphas.max(axis=1, keepdims=True)
    e = np.exp(z)
    soft = e / e.sum(axis=1, keepdims=True)
    nonzero = [k for k, name in enumerate(op_names) if name != "zero"]
    nodes = []
    for j in range(2, num_nodes):
        cands = []
        for idx, (i, jj) in enumerate(edges):
            if jj != j:
                continue
            weights = soft[idx, nonzero]
            best = int(np.argmax(weights))  # argmax returns the lowest index on ties
            cands.append((float(weights[best]), i, op_names[nonzero[best]]))
        if len(cands) < 2:
            raise ValueError(f"node {j} has fewer than 2 candidate edges")
        cands.sort(key=lambda t: (-t[0], t[1]))
        nodes.append([(i, op) for _, i, op in cands[:2]])
    return CellGenotype(cell_type, nodes)


def genotype_to_dot(g: CellGenotype) -> str:
    """Deterministic DOT rendering; circular ops drawn in red."""
    lines = [f'digraph cell_{g.cell_type} {{', '  rankdir=LR;',
             '  "c_{k-2}" [shape=box];', '  "c_{k-1}" [shape=box];']
    for n in range(len(g.nodes)):
        lines.append(f'  "n{n}" [shape=ellipse];')
    if g.nodes:
        lines.append('  "out" [shape=box];')
    for n, node in enumerate(g.nodes):
        for i, op in node:
            src = '"c_{k-2}"' if i == 0 else '"c_{k-1}"' if i == 1 else f'"n{i - 2}"'
            attrs = f'label="{op}"'
            if op in CIRCULAR_OPS:
                attrs += ', color=red, fontcolor=red'
            lines.append(f'  {src} -> "n{n}" [{attrs}];')
    for n in range(len(g.nodes)):
        lines.append(f'  "n{n}" -> "out";')
    lines.append('}')
    return "\n".join(lines) + "\n"


class Adam:
    def __init__(self, params: list[Var], lr: float,
                 betas: tuple[float, float], weight_decay: float):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + 1e-8)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass
class SearchReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_err: list[float] = field(default_factory=list)
    alpha_normal_trace: list[np.ndarray] = field(default_factory=list)
    alpha_reduce_trace: list[np.ndarray] = field(default_factory=list)


def search(train_split: Dataset, val_split: Dataset,
           cfg: SearchConfig) -> tuple[dict[str, CellGenotype], SearchReport,
                                       SearchNetwork]:
    """First-order alternating bilevel search.

    Per iteration: one SGD step of the weights on a train batch, then one
    Adam step of the alphas on a validation batch. Deterministic per seed.
    """
    net = SearchNetwork(cfg)
    weights = net.params()
    arch = net.arch_params()
    tcfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                       lr_init=cfg.lr_init, momentum=cfg.momentum,
                       weight_decay=cfg.weight_decay,
                       warmup_epochs=cfg.warmup_epochs,
                       schedule=Schedule.COSINE, seed=cfg.seed)
    w_opt = SGD(weights, cfg.momentum, cfg.weight_decay)
    a_opt = Adam(arch, cfg.alpha_lr, cfg.alpha_betas, cfg.alpha_weight_decay)
    report = SearchReport()
    n_train, n_val = len(train_split), len(val_split)
    for epoch in range(cfg.epochs):
        lr = lr_at(tcfg, epoch)
        t_order = stream(cfg.seed, "search/train-order", epoch).permutation(n_train)
        v_order = stream(cfg.seed, "search/val-order", epoch).permutation(n_val)
        t_losses, v_losses = [], []
        n_batches = (n_train + cfg.batch_size - 1) // cfg.batch_size
        for b in range(n_batches):
            t_idx = t_order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            x = Var(train_split.images[t_idx], requires_grad=False)
            loss = softmax_cross_entropy(net(x), train_split.labels[t_idx])
            if not np.isfinite(loss.data):
                raise NumericalError(f"non-finite weight-phase loss at epoch "
                                     f"{epoch}, batch {b}")
            w_opt.zero_grad()
            a_opt.zero_grad()
            loss.backward()
            w_opt.step(lr)
            t_losses.append(float(loss.data))

            v_start = (b * cfg.batch_size) % max(1, n_val)
            v_idx = v_order[v_start:v_start + cfg.batch_size]
            if len(v_idx) == 0:
                v_idx = v_order[:cfg.batch_size]
            xv = Var(val_split.images[v_idx], requires_grad=False)
            vloss = softmax_cross_entropy(net(xv), val_split.labels[v_idx])
            if not np.isfinite(vloss.data):
                raise NumericalError(f"non-finite alpha-phase loss at epoch "
                                     f"{epoch}, batch {b}")
            w_opt.zero_grad()
            a_opt.zero_grad()
            vloss.backward()
            a_opt.step()
            v_losses.append(float(vloss.data))
        report.train_loss.append(float(np.mean(t_losses)))
        report.val_loss.append(float(np.mean(v_losses)))
        report.val_err.append(evaluate(net, val_split))
        report.alpha_normal_trace.append(net.alpha_matrix("normal"))
        report.alpha_reduce_trace.append(net.alpha_matrix("reduction"))
    genotypes = {
        "normal": discretize(net.alpha_matrix("normal"), cfg.op_names,
                             cfg.num_nodes, "normal"),
        "reduction": discretize(net.alpha_matrix("reduction"), cfg.op_names,
                                cfg.num_nodes, "reduction"),
    }
    return genotypes, report, net
