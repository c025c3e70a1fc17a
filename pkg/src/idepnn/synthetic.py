"""Seeded desk-scale corpora and random dependency trees.

Each generated document carries one typed entity pair. The pair is related
exactly when the word ``spec.trigger`` lies strictly inside the tree path
between the two entity heads, so labels are a pure function of path content.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .corpus import Document, EntityMention, RelationInstance, Sentence, Token
from .depgraph import NodeRef, build_document_graph, shortest_path

DEPRELS = ("nsubj", "dobj", "amod", "nmod", "advmod", "compound", "det", "case", "conj", "acl")
POS_TAGS = ("NN", "NNS", "NNP", "VB", "VBD", "JJ", "RB", "DT", "IN", "CC")


@dataclass
class FixtureSpec:
    num_docs: int = 200
    sentences_per_doc: Tuple[int, int] = (1, 4)
    tokens_per_sentence: Tuple[int, int] = (3, 12)
    distance_probs: Tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)
    positive_rate: float = 0.5
    distractor_rate: float = 0.3
    vocab_size: int = 40
    trigger: str = "lives"
    entity_types: Tuple[str, str] = ("Bacteria", "Habitat")
    label: str = "Lives_In"
    seed: int = 0

    def __post_init__(self):
        for name in ("sentences_per_doc", "tokens_per_sentence"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must be a non-empty range of positive integers, got {(lo, hi)}")
        if abs(sum(self.distance_probs) - 1.0) > 1e-9 or min(self.distance_probs) < 0:
            raise ValueError("distance_probs must be a probability vector")
        if len(self.distance_probs) > self.sentences_per_doc[1]:
            raise ValueError("a distance needs more sentences than sentences_per_doc allows")
        if self.num_docs < 0 or self.vocab_size < 1:
            raise ValueError("num_docs and vocab_size must be non-negative / positive")

    @property
    def fillers(self) -> List[str]:
        return [f"w{i}" for i in range(self.vocab_size)]


def random_tree(
    n_tokens: int,
    seed: int | np.random.Generator,
    forms: Optional[Sequence[str]] = None,
    doc_index: int = 0,
) -> Sentence:
    """Token 1 is the root; every later token attaches to a uniformly drawn earlier one."""
    if n_tokens < 1:
        raise ValueError("a tree needs at least one token")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    vocab = list(forms) if forms else [f"w{i}" for i in range(40)]
    tokens = []
    for i in range(1, n_tokens + 1):
        head = 0 if i == 1 else int(rng.integers(1, i))
        deprel = "root" if i == 1 else DEPRELS[int(rng.integers(len(DEPRELS)))]
        form = vocab[int(rng.integers(len(vocab)))]
        pos = POS_TAGS[int(rng.integers(len(POS_TAGS)))]
        tokens.append(Token(i, form, pos, head, deprel))
    return Sentence(doc_index, tokens)


def _attach_offsets(sentences: List[Sentence]) -> str:
    pieces, offset = [], 0
    for sent in sentences:
        for tok in sent.tokens:
            if pieces:
                pieces.append(" ")
                offset += 1
            tok.start, tok.end = offset, offset + len(tok.form)
            pieces.append(tok.form)
            offset = tok.end
    return "".join(pieces)


def planted_label(doc: Document, trigger: str, label: str) -> Optional[str]:
    """Re-derive the gold label of a generated document's entity pair from its structure."""
    e1, e2 = doc.mentions[0], doc.mentions[1]
    graph = build_document_graph(doc)
    path = shortest_path(graph, NodeRef(e1.sentence, e1.first), NodeRef(e2.sentence, e2.first))
    inner = [graph.nodes[n].form for n in path.nodes[1:-1]]
    return label if trigger in inner else None


def _generate_document(spec: FixtureSpec, index: int) -> Document:
    rng = np.random.default_rng([spec.seed, index])
    k = int(rng.choice(len(spec.distance_probs), p=spec.distance_probs))
    lo, hi = spec.sentences_per_doc
    n_sent = max(int(rng.integers(lo, hi + 1)), k + 1)
    tlo, thi = spec.tokens_per_sentence
    sentences = []
    for s in range(n_sent):
        # intra-sentence pairs need two distinct tokens
        n_tok = int(rng.integers(max(tlo, 2 if k == 0 else 1), max(thi, 2) + 1))
        sentences.append(random_tree(n_tok, rng, spec.fillers, s))
    doc = Document(f"syn{spec.seed}-{index:05d}", sentences)
    graph = build_document_graph(doc)

    want_positive = rng.random() < spec.positive_rate
    s1 = int(rng.integers(0, n_sent - k))
    s2 = s1 + k
    for _ in range(20):
        t1 = int(rng.integers(1, len(sentences[s1]) + 1))
        t2 = int(rng.integers(1, len(sentences[s2]) + 1))
        if (s1, t1) == (s2, t2):
            continue
        path = shortest_path(graph, NodeRef(s1, t1), NodeRef(s2, t2))
        if not want_positive or len(path) > 2:
            break
    else:
        want_positive = False
    if (s1, t1) == (s2, t2):
        t2 = 2 if t1 == 1 else 1
        path = shortest_path(graph, NodeRef(s1, t1), NodeRef(s2, t2))

    inner = path.nodes[1:-1]
    if want_positive and inner:
        node = inner[int(rng.integers(len(inner)))]
        sentences[node.sentence].token(node.token).form = spec.trigger
    if rng.random() < spec.distractor_rate:
        off_path = [n for n in graph.nodes if n not in set(path.nodes)]
        if off_path:
            node = off_path[int(rng.integers(len(off_path)))]
            sentences[node.sentence].token(node.token).form = spec.trigger

    t1_type, t2_type = spec.entity_types
    doc.mentions = [EntityMention("T1", s1, t1, t1, t1_type), EntityMention("T2", s2, t2, t2, t2_type)]
    doc.text = _attach_offsets(sentences)
    if planted_label(doc, spec.trigger, spec.label):
        doc.relations = [RelationInstance("T1", "T2", spec.label)]
    return doc


def generate_corpus(spec: FixtureSpec) -> List[Document]:
    return [_generate_document(spec, i) for i in range(spec.num_docs)]
