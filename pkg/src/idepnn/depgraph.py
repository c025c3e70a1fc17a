"""Cross-sentence dependency graph, shortest paths, subtrees and augmented paths.

Adjacent sentence roots are joined by a ``NEXTS`` edge so that a whole
document forms one tree; the path between two entity heads is then unique.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Set, Tuple

from .corpus import CorpusError, Document, EntityMention, Sentence, Token, check_tree

NEXTS = "NEXTS"

E1_OPEN, E1_CLOSE, E2_OPEN, E2_CLOSE = "<e1>", "</e1>", "<e2>", "</e2>"
MARKERS = (E1_OPEN, E1_CLOSE, E2_OPEN, E2_CLOSE)


class GraphError(ValueError):
    pass


class NodeRef(NamedTuple):
    sentence: int
    token: int

    def __str__(self) -> str:
        return f"s{self.sentence}:{self.token}"


@dataclass
class DocumentGraph:
    nodes: Dict[NodeRef, Token]
    adjacency: Dict[NodeRef, List[Tuple[NodeRef, str]]]
    children: Dict[NodeRef, List[Tuple[str, NodeRef]]]
    roots: List[NodeRef]

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self.adjacency.values()) // 2

    def edges(self) -> Iterator[Tuple[NodeRef, NodeRef, str]]:
        for a, nbrs in self.adjacency.items():
            for b, label in nbrs:
                if a < b:
                    yield a, b, label

    def __contains__(self, node) -> bool:
        return node in self.nodes


@dataclass
class ShortestPath:
    nodes: List[NodeRef]
    edge_labels: List[str]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def nexts_crossings(self) -> int:
        return sum(1 for lab in self.edge_labels if lab == NEXTS)

    def reversed(self) -> "ShortestPath":
        return ShortestPath(self.nodes[::-1], self.edge_labels[::-1])


@dataclass
class Subtree:
    root: NodeRef
    children: List[Tuple[str, "Subtree"]] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def nodes(self) -> Iterator[NodeRef]:
        yield self.root
        for _, child in self.children:
            yield from child.nodes()

    def descendants(self) -> Set[NodeRef]:
        return {n for _, c in self.children for n in c.nodes()}

    @property
    def depth(self) -> int:
        return 1 + max((c.depth for _, c in self.children), default=0)


@dataclass
class AugmentedPath:
    path: ShortestPath
    subtrees: List[Subtree]


@dataclass
class TokenUnit:
    """One step of the encoder input: a path word or an entity marker."""

    form: str
    node: Optional[NodeRef] = None
    pos: Optional[str] = None
    etype: Optional[str] = None
    zone: Optional[str] = None

    @property
    def is_marker(self) -> bool:
        return self.node is None


def build_document_graph(doc: Document) -> DocumentGraph:
    nodes: Dict[NodeRef, Token] = {}
    adjacency: Dict[NodeRef, List[Tuple[NodeRef, str]]] = {}
    children: Dict[NodeRef, List[Tuple[str, NodeRef]]] = {}

    def link(a: NodeRef, b: NodeRef, label: str):
        if any(n == b for n, _ in adjacency[a]):
            raise GraphError(f"document {doc.id}: duplicate edge {a}-{b} (multigraph input)")
        adjacency[a].append((b, label))
        adjacency[b].append((a, label))

    roots = []
    for sent in doc.sentences:
        bad = check_tree(sent.tokens) if sent.tokens else (0, "empty sentence")
        if bad is not None:
            raise GraphError(f"document {doc.id}: sentence {sent.doc_index} is not a tree ({bad[1]} at token {bad[0]})")
        for tok in sent.tokens:
            ref = NodeRef(sent.doc_index, tok.index)
            nodes[ref] = tok
            adjacency[ref] = []
            children[ref] = []
        for tok in sent.tokens:
            ref = NodeRef(sent.doc_index, tok.index)
            if tok.head == 0:
                roots.append(ref)
            else:
                gov = NodeRef(sent.doc_index, tok.head)
                link(ref, gov, tok.deprel)
                children[gov].append((tok.deprel, ref))
    for a, b in zip(roots, roots[1:]):
        link(a, b, NEXTS)
    for kids in children.values():
        kids.sort(key=lambda c: c[1].token)
    for nbrs in adjacency.values():
        nbrs.sort(key=lambda e: e[0])
    graph = DocumentGraph(nodes, adjacency, children, roots)
    if nodes and graph.num_edges != len(nodes) - 1:
        raise GraphError(f"document {doc.id}: graph is not a tree ({graph.num_edges} edges, {len(nodes)} nodes)")
    return graph


def entity_head(mention: EntityMention, sentence: Sentence) -> int:
    """Token index heading ``mention``: the span token governed from outside the span.

    Several such tokens resolve to the rightmost; none resolves to the last token.
    """
    if mention.first > mention.last:
        raise CorpusError(f"mention {mention.id} has an empty span [{mention.first},{mention.last}]")
    inside = range(mention.first, mention.last + 1)
    heads = [i for i in inside if not mention.first <= sentence.token(i).head <= mention.last]
    return heads[-1] if heads else mention.last


def mention_node(doc: Document, mention: EntityMention) -> NodeRef:
    return NodeRef(mention.sentence, entity_head(mention, doc.sentences[mention.sentence]))


def shortest_path(graph: DocumentGraph, a: NodeRef, b: NodeRef) -> ShortestPath:
    """Breadth-first search for the path from ``a`` to ``b``.

    The graph is a tree, so meeting an already-visited node through a non-parent
    edge means a cycle and is reported rather than silently tie-broken.
    """
    for n in (a, b):
        if n not in graph.nodes:
            raise GraphError(f"node {n} is not in the graph")
    parent: Dict[NodeRef, Tuple[Optional[NodeRef], Optional[str]]] = {a: (None, None)}
    queue = deque([a])
    while queue:
        cur = queue.popleft()
        if cur == b:
            break
        for nxt, label in graph.adjacency[cur]:
            if nxt in parent:
                if parent[cur][0] != nxt:
                    raise GraphError(f"cycle through {cur} and {nxt}: path is not unique")
                continue
            parent[nxt] = (cur, label)
            queue.append(nxt)
    if b not in parent:
        raise GraphError(f"{b} is unreachable from {a}")
    nodes, labels = [b], []
    cur = b
    while parent[cur][0] is not None:
        prev, label = parent[cur]
        labels.append(label)
        nodes.append(prev)
        cur = prev
    return ShortestPath(nodes[::-1], labels[::-1])


def extract_subtree(
    graph: DocumentGraph, word: NodeRef, excluded: Set[NodeRef] = frozenset(), max_depth: Optional[int] = None
) -> Subtree:
    """Dependency subtree under ``word``, skipping ``excluded`` nodes.

    ``max_depth`` counts levels below ``word``; ``None`` means unlimited.
    NEXTS edges are never followed.
    """

    def grow(node: NodeRef, depth: int) -> Subtree:
        tree = Subtree(node)
        if max_depth is not None and depth >= max_depth:
            return tree
        for label, child in graph.children[node]:
            if child not in excluded:
                tree.children.append((label, grow(child, depth + 1)))
        return tree

    return grow(word, 0)


def build_adp(graph: DocumentGraph, path: ShortestPath, max_depth: Optional[int] = None) -> AugmentedPath:
    on_path = set(path.nodes)
    return AugmentedPath(path, [extract_subtree(graph, n, on_path, max_depth) for n in path.nodes])


def linear_nodes(doc: Document, a: NodeRef, b: NodeRef) -> List[NodeRef]:
    """All tokens between ``a`` and ``b`` in reading order, oriented from ``a`` to ``b``."""
    flat = [NodeRef(s.doc_index, t.index) for s in doc.sentences for t in s.tokens]
    i, j = flat.index(a), flat.index(b)
    return flat[i : j + 1] if i <= j else flat[j : i + 1][::-1]


def _in_span(node: NodeRef, m: EntityMention) -> bool:
    return node.sentence == m.sentence and m.first <= node.token <= m.last


def wrap_with_markers(
    nodes: Sequence[NodeRef], graph: DocumentGraph, e1: EntityMention, e2: EntityMention
) -> List[TokenUnit]:
    """Word units for ``nodes`` with entity markers around the first and last one."""

    def word(node: NodeRef, zone: str) -> TokenUnit:
        tok = graph.nodes[node]
        etype = e1.etype if _in_span(node, e1) else e2.etype if _in_span(node, e2) else None
        return TokenUnit(tok.form, node, tok.pos, etype, zone)

    if len(nodes) == 1:
        return [TokenUnit(E1_OPEN), TokenUnit(E2_OPEN), word(nodes[0], "e1"), TokenUnit(E2_CLOSE), TokenUnit(E1_CLOSE)]
    units = [TokenUnit(E1_OPEN), word(nodes[0], "e1"), TokenUnit(E1_CLOSE)]
    units += [word(n, "between") for n in nodes[1:-1]]
    units += [TokenUnit(E2_OPEN), word(nodes[-1], "e2"), TokenUnit(E2_CLOSE)]
    return units


def path_token_sequence(
    path: ShortestPath, e1: EntityMention, e2: EntityMention, graph: DocumentGraph
) -> List[TokenUnit]:
    return wrap_with_markers(path.nodes, graph, e1, e2)


def _dot_id(node: NodeRef, tok: Token) -> str:
    return f"s{node.sentence}:{node.token}/{tok.form}"


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: DocumentGraph, path: Optional[ShortestPath] = None, name: str = "doc") -> str:
    on_path = set(path.nodes) if path else set()
    path_edges = set()
    if path:
        path_edges = {frozenset(p) for p in zip(path.nodes, path.nodes[1:])}
    lines = [f"graph {_dot_quote(name)} {{"]
    for node in sorted(graph.nodes):
        attrs = ' [style=filled, fillcolor="gray"]' if node in on_path else ""
        lines.append(f"  {_dot_quote(_dot_id(node, graph.nodes[node]))}{attrs};")
    for a, b, label in sorted(graph.edges()):
        attrs = [f"label={_dot_quote(label)}"]
        if label == NEXTS:
            attrs.append("style=dashed")
        if frozenset((a, b)) in path_edges:
            attrs.append("penwidth=3")
        lines.append(
            f"  {_dot_quote(_dot_id(a, graph.nodes[a]))} -- {_dot_quote(_dot_id(b, graph.nodes[b]))} [{', '.join(attrs)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def describe_path(graph: DocumentGraph, path: ShortestPath) -> str:
    """``form -label- form ...`` rendering with sentence-qualified nodes."""
    parts = [f"{graph.nodes[path.nodes[0]].form}[{path.nodes[0]}]"]
    for node, label in zip(path.nodes[1:], path.edge_labels):
        parts.append(f"-{label}-")
        parts.append(f"{graph.nodes[node].form}[{node}]")
    return " ".join(parts)
