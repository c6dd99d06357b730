import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles

from jointslu.graphs import (
    I2S_RELATIONS,
    S2I_RELATIONS,
    NodeType,
    RelationType,
    build_i2s_graph,
    build_s2i_graph,
    edge_list_text,
    parse_edge_list,
)

R = RelationType


def named(edges):
    return {(s, d, r.name) for s, d, r in edges}


def test_s2i_window_example():
    g = build_s2i_graph(5, 1)
    i3 = 2  # I_3 (1-based) is node 2
    assert g.incoming(i3, R.IntentSemanticDep) == (1, 2, 3)
    assert g.incoming(i3, R.SlotToIntentGuidance) == (6, 7, 8)  # SL_2..SL_4


def test_s2i_smallest():
    g = build_s2i_graph(1, 0)
    assert g.node_count == 2
    assert sorted(g.edges, key=str) == sorted(
        [(0, 0, R.IntentSemanticDep), (1, 0, R.SlotToIntentGuidance),
         (1, 1, R.SlotLabelDep), (0, 1, R.IntentToSlotLabelFeedback)], key=str
    )


def test_s2i_wide_window_edge_count():
    assert len(build_s2i_graph(4, 10).edges) == 64
    assert len(oracles.s2i_edges(4, 10)) == 64


def test_i2s_window_example():
    g = build_i2s_graph(5, 2, 1)
    s3 = 2
    assert g.incoming(s3, R.SlotSemanticDep) == (1, 2, 3)
    assert g.incoming(s3, R.IntentToSlotGuidance) == (5, 6)


def test_i2s_smallest_and_dep_count():
    assert len(build_i2s_graph(1, 1, 0).edges) == 4
    g = build_i2s_graph(3, 2, 1)
    assert sum(r is R.SlotSemanticDep for _, _, r in g.edges) == 7


@pytest.mark.parametrize("bad", [(0, 1), (1, -1)])
def test_s2i_errors(bad):
    with pytest.raises(ValueError):
        build_s2i_graph(*bad)


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, 0, 1), (1, 1, -1)])
def test_i2s_errors(bad):
    with pytest.raises(ValueError):
        build_i2s_graph(*bad)


def test_node_type_sets():
    assert set(build_s2i_graph(3, 1).node_types) == {NodeType.IntentSemantic, NodeType.SlotLabel}
    assert set(build_i2s_graph(3, 2, 1).node_types) == {NodeType.SlotSemantic, NodeType.IntentLabel}


def test_edges_match_brute_force_enumeration():
    for n in range(1, 7):
        for w in range(0, 4):
            assert named(build_s2i_graph(n, w).edges) == oracles.s2i_edges(n, w)
            for m in range(1, 4):
                assert named(build_i2s_graph(n, m, w).edges) == oracles.i2s_edges(n, m, w)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 4))
def test_graph_invariants(n, m, w):
    for g in (build_s2i_graph(n, w), build_i2s_graph(n, m, w)):
        edges = set(g.edges)
        assert len(edges) == len(g.edges)
        for src, dst, rel in g.edges:
            assert (g.node_types[src], g.node_types[dst]) == rel.signature
        # every node has an incoming edge
        assert all(g.in_degree(i) >= 1 for i in range(g.node_count))
        # windowed relations are symmetric
        for rel in (R.IntentSemanticDep, R.SlotLabelDep, R.SlotSemanticDep):
            for src, dst, r in g.edges:
                if r is rel:
                    assert (dst, src, rel) in edges
        assert len(g.relations) == 4
    # degree bounds
    g = build_i2s_graph(n, m, w)
    for i in range(n):
        assert len(g.incoming(i, R.SlotSemanticDep)) <= 2 * w + 1
        assert len(g.incoming(i, R.IntentToSlotGuidance)) == m
    for k in range(n, n + m):
        assert len(g.incoming(k, R.IntentLabelDep)) == m
        assert len(g.incoming(k, R.SlotToIntentLabelFeedback)) == n


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 3), st.integers(0, 3))
def test_window_monotonicity(n, m, w):
    assert set(build_s2i_graph(n, w).edges) <= set(build_s2i_graph(n, w + 1).edges)
    assert set(build_i2s_graph(n, m, w).edges) <= set(build_i2s_graph(n, m, w + 1).edges)


def test_relation_sets_are_disjoint_quadruples():
    assert len(S2I_RELATIONS) == len(I2S_RELATIONS) == 4
    assert not set(S2I_RELATIONS) & set(I2S_RELATIONS)


def test_edge_list_text():
    text = edge_list_text(build_s2i_graph(5, 1))
    assert "I2→I3 IntentSemanticDep" in text.splitlines()
    g = build_i2s_graph(3, 2, 1)
    assert parse_edge_list(edge_list_text(g, labels=False)) == set(g.edges)
    assert edge_list_text(g) == edge_list_text(build_i2s_graph(3, 2, 1))


def test_masks_follow_edges():
    g = build_s2i_graph(3, 1)
    masks = g.masks
    assert masks.shape == (4, 6, 6)
    assert masks.sum() == len(g.edges)
    for src, dst, rel in g.edges:
        assert masks[g.relations.index(rel), dst, src]
