import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idepnn.corpus import EntityMention, Sentence, Token
from idepnn.depgraph import (
    E1_CLOSE,
    E1_OPEN,
    E2_CLOSE,
    E2_OPEN,
    NEXTS,
    GraphError,
    NodeRef,
    ShortestPath,
    build_adp,
    build_document_graph,
    entity_head,
    extract_subtree,
    mention_node,
    path_token_sequence,
    shortest_path,
    to_dot,
)
from idepnn.synthetic import FixtureSpec, generate_corpus

from conftest import doc_from_heads


def oracle_graph(graph):
    g = nx.Graph()
    g.add_nodes_from(graph.nodes)
    for a, b, label in graph.edges():
        g.add_edge(a, b, label=label)
    return g


# -- graph construction --------------------------------------------------------


def test_single_sentence_has_no_nexts():
    graph = build_document_graph(doc_from_heads([[0, 1, 1]]))
    assert not any(label == NEXTS for *_, label in graph.edges())


def test_three_sentences_two_nexts():
    doc = doc_from_heads([[2, 0], [0, 1, 1], [0]])
    graph = build_document_graph(doc)
    nexts = sorted((a, b) for a, b, label in graph.edges() if label == NEXTS)
    roots = [NodeRef(i, s.root) for i, s in enumerate(doc.sentences)]
    assert nexts == [(roots[0], roots[1]), (roots[1], roots[2])]
    assert graph.num_edges == len(graph.nodes) - 1


def test_allen_nexts_joins_roots(allen_doc):
    graph = build_document_graph(allen_doc)
    nexts = [(a, b) for a, b, label in graph.edges() if label == NEXTS]
    assert nexts == [(NodeRef(0, 4), NodeRef(1, 12))]
    assert graph.nodes[NodeRef(0, 4)].form == "started"
    assert graph.nodes[NodeRef(1, 12)].form == "based"
    # "named" hangs off the first root as a conjunct
    assert graph.nodes[NodeRef(0, 8)].head == 4


def test_dependency_edges_carry_dependent_deprel(allen_doc):
    graph = build_document_graph(allen_doc)
    labels = {frozenset((a, b)): lab for a, b, lab in graph.edges()}
    assert labels[frozenset((NodeRef(0, 10), NodeRef(0, 8)))] == "obj"


def test_invalid_sentence_is_named():
    bad = Sentence(1, [Token(1, "a", "NN", 2, "dep"), Token(2, "b", "NN", 1, "dep")])
    doc = doc_from_heads([[0]])
    doc.sentences.append(bad)
    with pytest.raises(GraphError, match="sentence 1"):
        build_document_graph(doc)


def test_graph_is_tree_on_synthetic():
    for doc in generate_corpus(FixtureSpec(num_docs=50, seed=9)):
        g = oracle_graph(build_document_graph(doc))
        assert nx.is_tree(g)
        n_nexts = sum(1 for *_, d in g.edges(data="label") if d == NEXTS)
        assert n_nexts == len(doc.sentences) - 1


# -- entity heads --------------------------------------------------------------


def test_head_single_token():
    sent = doc_from_heads([[0, 1, 1]]).sentences[0]
    assert entity_head(EntityMention("m", 0, 2, 2, "X"), sent) == 2


def test_head_governing_token(allen_doc):
    # "Paul Allen Group": Group governs the other two
    assert entity_head(allen_doc.mention("T2"), allen_doc.sentences[1]) == 9


def test_head_two_outside_heads_takes_rightmost():
    sent = doc_from_heads([[0, 1, 1, 1]]).sentences[0]
    assert entity_head(EntityMention("m", 0, 2, 3, "X"), sent) == 3


def test_head_empty_span_errors():
    sent = doc_from_heads([[0, 1]]).sentences[0]
    with pytest.raises(ValueError):
        entity_head(EntityMention("m", 0, 2, 1, "X"), sent)


# -- shortest paths ------------------------------------------------------------


def test_path_to_self():
    graph = build_document_graph(doc_from_heads([[0, 1]]))
    p = shortest_path(graph, NodeRef(0, 2), NodeRef(0, 2))
    assert p.nodes == [NodeRef(0, 2)] and p.edge_labels == []


def test_chain_path():
    graph = build_document_graph(doc_from_heads([[0, 1, 2]]))
    p = shortest_path(graph, NodeRef(0, 1), NodeRef(0, 3))
    assert p.nodes == [NodeRef(0, 1), NodeRef(0, 2), NodeRef(0, 3)]


def test_allen_path(allen_doc):
    graph = build_document_graph(allen_doc)
    a = mention_node(allen_doc, allen_doc.mention("T1"))
    b = mention_node(allen_doc, allen_doc.mention("T2"))
    p = shortest_path(graph, a, b)
    forms = [graph.nodes[n].form for n in p.nodes]
    assert forms == ["Raburn", "named", "started", "based", "company", "called", "Group"]
    assert p.edge_labels == ["obj", "conj", NEXTS, "nsubj:pass", "acl", "xcomp"]
    assert p.nexts_crossings == 1


def test_absent_node_errors():
    graph = build_document_graph(doc_from_heads([[0]]))
    with pytest.raises(GraphError):
        shortest_path(graph, NodeRef(0, 1), NodeRef(3, 1))


def test_cycle_detected_in_corrupt_graph():
    graph = build_document_graph(doc_from_heads([[0, 1, 2]]))
    a, c = NodeRef(0, 1), NodeRef(0, 3)
    graph.adjacency[a].append((c, "extra"))
    graph.adjacency[c].append((a, "extra"))
    with pytest.raises(GraphError, match="cycle"):
        shortest_path(graph, NodeRef(0, 2), NodeRef(0, 3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_path_matches_enumeration_and_symmetry(seed):
    (doc,) = generate_corpus(FixtureSpec(num_docs=1, seed=seed))
    graph = build_document_graph(doc)
    g = oracle_graph(graph)
    a, b = (mention_node(doc, m) for m in doc.mentions)
    p = shortest_path(graph, a, b)
    (expected,) = list(nx.all_simple_paths(g, a, b)) if a != b else [[a]]
    assert p.nodes == expected
    assert shortest_path(graph, b, a).nodes == p.nodes[::-1]
    assert p.nexts_crossings == abs(a.sentence - b.sentence)
    for (u, v), lab in zip(zip(p.nodes, p.nodes[1:]), p.edge_labels):
        assert g.edges[u, v]["label"] == lab


def test_same_sentence_path_equals_single_sentence_sdp():
    doc = doc_from_heads([[0, 1, 1, 3], [0, 1]])
    alone = doc_from_heads([[0, 1, 1, 3]])
    p_doc = shortest_path(build_document_graph(doc), NodeRef(0, 2), NodeRef(0, 4))
    p_one = shortest_path(build_document_graph(alone), NodeRef(0, 2), NodeRef(0, 4))
    assert p_doc == p_one
    assert p_doc.nexts_crossings == 0


# -- subtrees and ADP --------------------------------------------------------


def test_leaf_subtree():
    graph = build_document_graph(doc_from_heads([[0, 1]]))
    assert extract_subtree(graph, NodeRef(0, 2)).is_leaf


def test_subtree_excludes_path():
    # a(1) <- b(2) root? build: b is root, a and c depend on b
    graph = build_document_graph(doc_from_heads([[2, 0, 2]]))
    path = shortest_path(graph, NodeRef(0, 1), NodeRef(0, 2))
    adp = build_adp(graph, path)
    assert [sorted(s.descendants()) for s in adp.subtrees] == [[], [NodeRef(0, 3)]]


def test_subtree_depth_cut():
    graph = build_document_graph(doc_from_heads([[0, 1, 2, 3]]))
    sub = extract_subtree(graph, NodeRef(0, 1), max_depth=1)
    assert [c.root for _, c in sub.children] == [NodeRef(0, 2)]
    assert sub.children[0][1].is_leaf
    assert extract_subtree(graph, NodeRef(0, 1)).depth == 4


def test_subtree_never_crosses_nexts():
    graph = build_document_graph(doc_from_heads([[0], [0, 1]]))
    sub = extract_subtree(graph, NodeRef(0, 1))
    assert sub.is_leaf


def test_adp_all_leaves_when_no_off_path_dependents():
    graph = build_document_graph(doc_from_heads([[0, 1, 2]]))
    adp = build_adp(graph, shortest_path(graph, NodeRef(0, 1), NodeRef(0, 3)))
    assert all(s.is_leaf for s in adp.subtrees)


def test_adp_two_nodes_one_child_each():
    # 1 root; 2 -> 1; 3 -> 1; 4 -> 2
    graph = build_document_graph(doc_from_heads([[0, 1, 1, 2]]))
    adp = build_adp(graph, shortest_path(graph, NodeRef(0, 1), NodeRef(0, 2)))
    assert [len(s.descendants()) for s in adp.subtrees] == [1, 1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_adp_disjoint_from_path(seed):
    (doc,) = generate_corpus(FixtureSpec(num_docs=1, seed=seed))
    graph = build_document_graph(doc)
    a, b = (mention_node(doc, m) for m in doc.mentions)
    path = shortest_path(graph, a, b)
    adp = build_adp(graph, path)
    assert len(adp.subtrees) == len(path.nodes)
    desc = set().union(*(s.descendants() for s in adp.subtrees))
    assert not desc & set(path.nodes)
    # subtrees of different path words never share a node
    assert sum(len(s.descendants()) for s in adp.subtrees) == len(desc)


# -- marker sequences --------------------------------------------------------


def _ms(doc, ids):
    return [doc.mention(i) for i in ids]


def test_markers_three_node_path():
    doc = doc_from_heads([[0, 1, 2]])
    doc.mentions = [EntityMention("a", 0, 1, 1, "X"), EntityMention("c", 0, 3, 3, "Y")]
    graph = build_document_graph(doc)
    path = shortest_path(graph, NodeRef(0, 1), NodeRef(0, 3))
    units = path_token_sequence(path, *_ms(doc, ["a", "c"]), graph)
    forms = [u.form for u in units]
    assert forms == [E1_OPEN, "t0_1", E1_CLOSE, "t0_2", E2_OPEN, "t0_3", E2_CLOSE]
    assert [u.zone for u in units if not u.is_marker] == ["e1", "between", "e2"]
    assert [u.etype for u in units if not u.is_marker] == ["X", None, "Y"]


def test_markers_two_node_path():
    doc = doc_from_heads([[0, 1]])
    doc.mentions = [EntityMention("a", 0, 1, 1, "X"), EntityMention("b", 0, 2, 2, "Y")]
    graph = build_document_graph(doc)
    units = path_token_sequence(shortest_path(graph, NodeRef(0, 1), NodeRef(0, 2)), *_ms(doc, ["a", "b"]), graph)
    assert [u.form for u in units] == [E1_OPEN, "t0_1", E1_CLOSE, E2_OPEN, "t0_2", E2_CLOSE]
    assert all(u.pos is None and u.etype is None for u in units if u.is_marker)


def test_dot_export(allen_doc):
    graph = build_document_graph(allen_doc)
    path = shortest_path(graph, NodeRef(0, 10), NodeRef(1, 9))
    dot = to_dot(graph, path, "allen")
    assert '"s0:10/Raburn"' in dot
    nexts_line = next(line for line in dot.splitlines() if "NEXTS" in line)
    assert "dashed" in nexts_line and "penwidth=3" in nexts_line
    assert dot.count("fillcolor") == len(path.nodes)


def test_reversed_path():
    p = ShortestPath([NodeRef(0, 1), NodeRef(0, 2)], ["dep"])
    assert p.reversed().nodes == [NodeRef(0, 2), NodeRef(0, 1)]
