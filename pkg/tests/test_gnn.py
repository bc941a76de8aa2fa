import numpy as np
import pytest

from agentrouter.embed import TextEmbedder, featurize
from agentrouter.gnn import (
    MESSAGE_KINDS,
    NumericError,
    compile_graph,
    forward,
    init_params,
    load_checkpoint,
    message_pass_layer,
    param_count,
    project_inputs,
    save_checkpoint,
    score_to_distribution,
)
from agentrouter.graph import KnowledgeGraph, Node, build_graph

from oracles import naive_forward

D_TEXT = 16


@pytest.fixture
def tiny(tiny_parts):
    rec, mentions, triples, profs, amap = tiny_parts
    g = build_graph(rec, mentions, triples, profs, amap, cues={"location"})
    X = featurize(g, TextEmbedder(D_TEXT))
    return g, X


def test_param_count_matches_tensors():
    params = init_params(0, 31, 8, 2)
    # proj 4*8*31, per layer 10*(64+1) + 4*(8*16+8), head 8*16+8+8+1
    assert params.n_params() == param_count(31, 8, 2) == 992 + 2 * 1194 + 145
    assert len(MESSAGE_KINDS) == 10


def test_gates_start_at_one_and_biases_at_zero():
    params = init_params(7, 12, 4, 3)
    for name, arr in params.items():
        if name.startswith("gate."):
            assert arr.shape == () and float(arr) == 1.0
        if name.endswith(".b") or name in ("head.b1", "head.b2"):
            assert not arr.any()


def test_init_is_seeded():
    assert init_params(1, 10, 4, 2).equals(init_params(1, 10, 4, 2))
    assert not init_params(1, 10, 4, 2).equals(init_params(2, 10, 4, 2))
    with pytest.raises(ValueError):
        init_params(0, 10, 0, 2)


def test_forward_matches_naive_oracle(tiny):
    g, X = tiny
    params = init_params(3, X.shape[1], 8, 2)
    _, dist = forward(compile_graph(g), X, params)
    scores, probs = naive_forward(g, X, params)
    np.testing.assert_allclose(dist.scores, scores, rtol=0, atol=1e-12)
    np.testing.assert_allclose(dist.probs, probs, rtol=0, atol=1e-12)
    assert dist.probs.sum() == pytest.approx(1.0)


def test_layer_shapes(tiny):
    g, X = tiny
    params = init_params(0, X.shape[1], 8, 2)
    cg = compile_graph(g)
    H0 = project_inputs(cg, X, params)
    H1 = message_pass_layer(cg, H0, params, 1)
    assert H0.shape == H1.shape == (7, 8)
    assert (H1 >= 0).all()


def test_softmax_cases():
    assert np.allclose(score_to_distribution([0.0, 0.0]), [0.5, 0.5])
    p = score_to_distribution([1000.0, 0.0])
    assert np.isfinite(p).all() and p[0] == pytest.approx(1.0)
    assert np.allclose(score_to_distribution([3.0]), [1.0])
    with pytest.raises(ValueError):
        score_to_distribution([])


def test_edge_order_does_not_matter(tiny):
    g, X = tiny
    params = init_params(5, X.shape[1], 8, 2)
    shuffled = KnowledgeGraph(g.record_id, g.nodes, tuple(reversed(g.edges)))
    a = forward(compile_graph(g), X, params)[1].probs
    b = forward(compile_graph(shuffled), X, params)[1].probs
    assert np.array_equal(a, b)


def test_entity_relabeling_is_invariant(tiny):
    g, X = tiny
    params = init_params(5, X.shape[1], 8, 2)
    perm = {3: 5, 5: 3}  # swap two entity nodes
    m = lambda v: perm.get(v, v)  # noqa: E731
    nodes = sorted((Node(m(n.id), n.kind, n.text, n.features) for n in g.nodes), key=lambda n: n.id)
    edges = tuple((m(s), k, m(d)) for s, k, d in g.edges)
    Xp = X.copy()
    Xp[[3, 5]] = X[[5, 3]]
    b = forward(compile_graph(KnowledgeGraph(g.record_id, tuple(nodes), edges)), Xp, params)[1].probs
    a = forward(compile_graph(g), X, params)[1].probs
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_agent_order_follows_graph(tiny):
    g, _ = tiny
    assert compile_graph(g).agent_ids == tuple(g.agent_order)
    assert compile_graph(g).agents.tolist() == [1, 2]


def test_nan_features_raise(tiny):
    g, X = tiny
    X = X.copy()
    X[0, 0] = np.nan
    with pytest.raises(NumericError):
        forward(compile_graph(g), X, init_params(0, X.shape[1], 8, 2))


def test_checkpoint_round_trip_is_bitwise(tmp_path, tiny):
    g, X = tiny
    params = init_params(9, X.shape[1], 8, 2)
    save_checkpoint(tmp_path / "a.bin", params, g.agent_order)
    loaded, header = load_checkpoint(tmp_path / "a.bin")
    assert loaded.equals(params)
    assert header["agent_order"] == g.agent_order
    assert header["L"] == 2 and header["d_h"] == 8 and header["d_in"] == X.shape[1]
    save_checkpoint(tmp_path / "b.bin", loaded, g.agent_order)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    cg = compile_graph(g)
    assert np.array_equal(forward(cg, X, params)[1].probs, forward(cg, X, loaded)[1].probs)


def test_checkpoint_rejects_foreign_files(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOTACKPT" + bytes(16))
    with pytest.raises(ValueError, match="not a RouterGNN checkpoint"):
        load_checkpoint(tmp_path / "x.bin")
