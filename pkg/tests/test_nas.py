import numpy as np
import pytest

from orbiconv.autodiff import Var
from orbiconv.data import Split, SynthKind, gen_synthetic
from orbiconv.nas import (
    CIRCULAR_OPS,
    CellGenotype,
    Identity,
    PRIMITIVES,
    SearchConfig,
    SearchNetwork,
    Zero,
    cell_edges,
    discretize,
    genotype_to_dot,
    make_op,
    mixed_op_forward,
    search,
)
from orbiconv.rng import stream


def _const(arr):
    return Var(np.asarray(arr, dtype=np.float64), requires_grad=False)


def _softmax(a):
    e = np.exp(a - a.max())
    return e / e.sum()


def test_primitive_roster():
    assert len(PRIMITIVES) == 10
    assert CIRCULAR_OPS == {"circ_sep_conv_5x5", "circ_dil_conv_5x5"}
    assert CIRCULAR_OPS < set(PRIMITIVES)
    assert "zero" in PRIMITIVES and "identity" in PRIMITIVES


@pytest.mark.parametrize("name", PRIMITIVES)
def test_every_op_preserves_channels_and_size(name):
    op = make_op(name, 4, 1, stream(0, f"op/{name}"), np.float64)
    x = _const(np.random.default_rng(0).standard_normal((2, 4, 8, 8)))
    assert op(x).data.shape == (2, 4, 8, 8)


@pytest.mark.parametrize("name", PRIMITIVES)
def test_every_op_stride_two_halves_size(name):
    op = make_op(name, 4, 2, stream(0, f"op/{name}"), np.float64)
    x = _const(np.random.default_rng(1).standard_normal((1, 4, 8, 8)))
    assert op(x).data.shape == (1, 4, 4, 4)


def test_unknown_op_rejected():
    with pytest.raises(ValueError):
        make_op("conv_9x9", 4, 1, None)


def test_identity_and_zero_ops():
    x = _const(np.arange(16.0).reshape(1, 1, 4, 4))
    assert Identity(1)(x) is x
    assert np.array_equal(Zero(1)(x).data, np.zeros((1, 1, 4, 4)))
    assert np.array_equal(Identity(2)(x).data, x.data[:, :, ::2, ::2])


def test_mixed_op_identity_zero_balanced():
    # equal logits over {identity, zero} pass x/2 through
    x = _const(np.random.default_rng(2).standard_normal((1, 3, 4, 4)))
    out = mixed_op_forward(x, Var(np.zeros(2)), [Identity(1), Zero(1)])
    assert np.allclose(out.data, 0.5 * x.data, atol=1e-12)


def test_mixed_op_saturated_alpha_selects_one_branch():
    x = _const(np.random.default_rng(3).standard_normal((1, 3, 4, 4)))
    alpha = Var(np.array([50.0, 0.0]))
    out = mixed_op_forward(x, alpha, [Identity(1), Zero(1)])
    assert np.allclose(out.data, x.data, atol=1e-12)


def test_mixed_op_matches_manual_softmax_combination():
    rng = np.random.default_rng(4)
    ops = [make_op(n, 3, 1, stream(0, f"mix/{n}"), np.float64)
           for n in ("sep_conv_3x3", "identity", "avg_pool_3x3")]
    x = _const(rng.standard_normal((1, 3, 6, 6)))
    a = rng.standard_normal(3)
    out = mixed_op_forward(x, Var(a), ops)
    w = _softmax(a)
    manual = sum(wi * op(x).data for wi, op in zip(w, ops))
    assert np.allclose(out.data, manual, atol=1e-12)


def test_mixed_op_alpha_shift_invariance():
    x = _const(np.random.default_rng(5).standard_normal((1, 2, 4, 4)))
    ops = [Identity(1), Zero(1)]
    a = np.array([0.3, -0.7])
    o1 = mixed_op_forward(x, Var(a), ops).data
    o2 = mixed_op_forward(x, Var(a + 10.0), ops).data
    assert np.allclose(o1, o2, atol=1e-12)


def test_mixed_op_alpha_gradient_flows():
    x = _const(np.random.default_rng(6).standard_normal((1, 2, 4, 4)))
    alpha = Var(np.zeros(2))
    out = mixed_op_forward(x, alpha, [Identity(1), Zero(1)])
    out.backward(np.ones_like(out.data))
    assert alpha.grad is not None
    # increasing the identity logit increases the output sum
    assert alpha.grad[0] > 0 > alpha.grad[1]
    assert alpha.grad.sum() == pytest.approx(0.0, abs=1e-12)


def test_mixed_op_length_mismatch():
    with pytest.raises(ValueError):
        mixed_op_forward(_const(np.zeros((1, 1, 2, 2))), Var(np.zeros(3)),
                         [Identity(1), Zero(1)])


def test_cell_edges_ordering():
    assert cell_edges(4) == [(0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]
    assert len(cell_edges(5)) == 2 + 3 + 4


def _brute_force_genotype(alphas, op_names, num_nodes, cell_type):
    edges = cell_edges(num_nodes)
    soft = np.stack([_softmax(row) for row in alphas])
    nonzero = [k for k, n in enumerate(op_names) if n != "zero"]
    nodes = []
    for j in range(2, num_nodes):
        cands = []
        for idx, (i, jj) in enumerate(edges):
            if jj != j:
                continue
            ws = soft[idx, nonzero]
            best = min(range(len(ws)), key=lambda k: (-ws[k], k))
            cands.append((float(ws[best]), i, op_names[nonzero[best]]))
        cands.sort(key=lambda t: (-t[0], t[1]))
        nodes.append([(i, op) for _, i, op in cands[:2]])
    return CellGenotype(cell_type, nodes)


def test_discretize_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    for trial in range(120):
        num_nodes = int(rng.integers(4, 7))
        alphas = rng.standard_normal((len(cell_edges(num_nodes)),
                                      len(PRIMITIVES)))
        got = discretize(alphas, PRIMITIVES, num_nodes, "normal")
        want = _brute_force_genotype(alphas, PRIMITIVES, num_nodes, "normal")
        assert got == want, f"trial {trial}"


def test_discretize_never_selects_zero():
    alphas = np.full((len(cell_edges(5)), len(PRIMITIVES)), -5.0)
    alphas[:, PRIMITIVES.index("zero")] = 10.0
    g = discretize(alphas, PRIMITIVES, 5, "normal")
    assert all(op != "zero" for node in g.nodes for _, op in node)


def test_discretize_tie_breaks_lowest_op_then_lowest_source():
    alphas = np.zeros((len(cell_edges(4)), len(PRIMITIVES)))
    g = discretize(alphas, PRIMITIVES, 4, "normal")
    # all weights equal: argmax picks op index 0, edge sort picks sources 0, 1
    assert g.nodes[0] == [(0, PRIMITIVES[0]), (1, PRIMITIVES[0])]
    assert g.nodes[1] == [(0, PRIMITIVES[0]), (1, PRIMITIVES[0])]


def test_discretize_shape_mismatch():
    with pytest.raises(ValueError):
        discretize(np.zeros((3, 10)), PRIMITIVES, 5, "normal")


def test_genotype_json_round_trip():
    g = CellGenotype("normal", [[(0, "sep_conv_3x3"), (1, "identity")],
                                [(2, "circ_sep_conv_5x5"), (0, "max_pool_3x3")]])
    assert CellGenotype.from_json(g.to_json()) == g


def test_genotype_dot_rendering():
    g = CellGenotype("reduction", [[(0, "circ_dil_conv_5x5"), (1, "identity")]])
    dot = genotype_to_dot(g)
    assert dot.startswith("digraph cell_reduction {")
    assert '"c_{k-2}" -> "n0" [label="circ_dil_conv_5x5", color=red' in dot
    assert '"c_{k-1}" -> "n0" [label="identity"];' in dot
    assert '"n0" -> "out";' in dot
    assert genotype_to_dot(g) == dot  # deterministic


def test_network_forward_shapes_and_param_split():
    cfg = SearchConfig(num_nodes=4, num_cells=2, channels=4, epochs=1)
    net = SearchNetwork(cfg)
    x = _const(np.random.default_rng(8).standard_normal((2, 1, 12, 12)))
    out = net(x)
    assert out.data.shape == (2, 2)
    arch = net.arch_params()
    assert len(arch) == 2 * len(cell_edges(4))
    weights = net.params()
    ids = {id(p) for p in weights}
    assert all(id(a) not in ids for a in arch)


def test_reduction_cell_halves_spatial_size():
    from orbiconv.nas import SearchCell
    cell = SearchCell(4, 4, True, PRIMITIVES, 0, 0, np.float64)
    s = _const(np.random.default_rng(9).standard_normal((1, 4, 8, 8)))
    alphas = [Var(np.zeros(len(PRIMITIVES))) for _ in cell_edges(4)]
    out = cell.forward_cell(s, s, alphas)
    assert out.data.shape == (1, 4, 4, 4)


def _tiny_splits():
    tr = gen_synthetic(SynthKind.ORIENTED_BARS, 8, 12, 0)
    va = gen_synthetic(SynthKind.ORIENTED_BARS, 8, 12, 1, Split.VAL)
    return tr, va


def test_search_runs_and_is_deterministic():
    cfg = SearchConfig(num_nodes=4, num_cells=1, channels=4, epochs=2,
                       batch_size=8, seed=0)
    tr, va = _tiny_splits()
    g1, r1, _ = search(tr, va, cfg)
    g2, r2, _ = search(tr, va, cfg)
    assert g1["normal"] == g2["normal"]
    assert r1.train_loss == r2.train_loss
    assert r1.val_loss == r2.val_loss
    assert len(r1.alpha_normal_trace) == 2


def test_search_moves_alphas():
    cfg = SearchConfig(num_nodes=4, num_cells=1, channels=4, epochs=2,
                       batch_size=8, seed=1)
    tr, va = _tiny_splits()
    _, report, net = search(tr, va, cfg)
    first = report.alpha_normal_trace[0]
    last = report.alpha_normal_trace[-1]
    assert not np.allclose(first, last)


def test_search_with_circular_ops_removed():
    names = [n for n in PRIMITIVES if n not in CIRCULAR_OPS]
    cfg = SearchConfig(num_nodes=4, num_cells=1, channels=4, epochs=1,
                       batch_size=8, seed=2, op_names=names)
    tr, va = _tiny_splits()
    genotypes, _, _ = search(tr, va, cfg)
    ops = {op for g in genotypes.values() for node in g.nodes for _, op in node}
    assert ops.isdisjoint(CIRCULAR_OPS)
