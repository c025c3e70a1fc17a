"""Bottom-up subtree embeddings with one transform per dependency relation.

For a word w with children q the subtree vector is

    c_w = tanh(sum_q W[rel(w, q)] @ [x_q, c_q] + b)

and a word without children gets the shared learned vector ``c_leaf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .depgraph import NodeRef, Subtree

UNK_REL = "<unk-rel>"


class NumericError(ArithmeticError):
    pass


@dataclass
class RecursiveParams:
    W: Dict[str, np.ndarray]
    b: np.ndarray
    c_leaf: np.ndarray

    @property
    def subtree_dim(self) -> int:
        return self.b.shape[0]

    @property
    def word_dim(self) -> int:
        return next(iter(self.W.values())).shape[1] - self.subtree_dim

    def matrix(self, relation: str) -> Tuple[str, np.ndarray]:
        key = relation if relation in self.W else UNK_REL
        return key, self.W[key]

    @classmethod
    def init(cls, relations: Iterable[str], word_dim: int, subtree_dim: int, rng: np.random.Generator):
        s = np.sqrt(6.0 / (subtree_dim + word_dim + subtree_dim))
        labels = sorted(set(relations) | {UNK_REL})
        W = {r: rng.uniform(-s, s, size=(subtree_dim, word_dim + subtree_dim)) for r in labels}
        return cls(W, np.zeros(subtree_dim), np.zeros(subtree_dim))


@dataclass
class SubtreeEncoding:
    node: NodeRef
    x: np.ndarray
    c: np.ndarray
    children: List[Tuple[str, "SubtreeEncoding"]] = field(default_factory=list)
    is_leaf: bool = True

    @property
    def p(self) -> np.ndarray:
        return np.concatenate([self.x, self.c])


@dataclass
class RecursiveGrads:
    W: Dict[str, np.ndarray] = field(default_factory=dict)
    b: Optional[np.ndarray] = None
    c_leaf: Optional[np.ndarray] = None
    x: Dict[NodeRef, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, params: RecursiveParams) -> "RecursiveGrads":
        return cls({}, np.zeros_like(params.b), np.zeros_like(params.c_leaf), {})

    def add_W(self, key: str, g: np.ndarray):
        if key in self.W:
            self.W[key] += g
        else:
            self.W[key] = g.copy()

    def add_x(self, node: NodeRef, g: np.ndarray):
        if node in self.x:
            self.x[node] += g
        else:
            self.x[node] = g.copy()


WordVectors = Mapping[NodeRef, np.ndarray] | Callable[[NodeRef], np.ndarray]


def _vector_for(word_vectors, node: NodeRef) -> np.ndarray:
    return word_vectors(node) if callable(word_vectors) else word_vectors[node]


def encode_subtree(subtree: Subtree, word_vectors: WordVectors, params: RecursiveParams) -> SubtreeEncoding:
    """Encode ``subtree`` bottom-up; children are summed in token-index order."""
    kids = sorted(subtree.children, key=lambda c: c[1].root.token)
    x = np.asarray(_vector_for(word_vectors, subtree.root))
    x = x.astype(np.result_type(x, params.b, np.float64), copy=False)
    if not kids:
        return SubtreeEncoding(subtree.root, x, params.c_leaf.copy())
    encoded = [(label, encode_subtree(child, word_vectors, params)) for label, child in kids]
    z = params.b.copy()
    for label, enc in encoded:
        _, Wr = params.matrix(label)
        z += Wr @ enc.p
    c = np.tanh(z)
    if not np.all(np.isfinite(c)):
        raise NumericError(f"numeric overflow in subtree at {subtree.root}")
    return SubtreeEncoding(subtree.root, x, c, encoded, is_leaf=False)


def backprop_subtree(
    enc: SubtreeEncoding,
    upstream: np.ndarray,
    params: RecursiveParams,
    grads: Optional[RecursiveGrads] = None,
) -> RecursiveGrads:
    """Accumulate d(loss)/d(params, word vectors) given d(loss)/d(c) at the root.

    The root's own word vector gets no gradient here: it sits outside c.
    """
    if grads is None:
        grads = RecursiveGrads.zeros(params)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != enc.c.shape:
        raise ValueError(f"upstream gradient shape {upstream.shape} does not match subtree dim {enc.c.shape}")
    stack = [(enc, upstream)]
    d = params.word_dim
    while stack:
        node, g = stack.pop()
        if node.is_leaf:
            grads.c_leaf += g
            continue
        delta = g * (1.0 - node.c**2)
        grads.b += delta
        for label, child in node.children:
            key, Wr = params.matrix(label)
            grads.add_W(key, np.outer(delta, child.p))
            gp = Wr.T @ delta
            grads.add_x(child.node, gp[:d])
            stack.append((child, gp[d:]))
    return grads
