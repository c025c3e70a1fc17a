"""Model configuration, parameter store and per-instance loss/gradients.

The three variants share one code path:

* ``iDepNN-SDP``: biRNN over the marker-wrapped inter-sentential shortest path.
* ``iDepNN-ADP``: as SDP, with each path word's subtree vector from the
  recursive encoder appended to its input.
* ``i-biRNN``: biRNN over every token between the two entity heads.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import sequence as seq
from .corpus import NONE_LABEL, CandidatePair, CorpusError, Document
from .depgraph import (
    DocumentGraph,
    GraphError,
    NodeRef,
    Subtree,
    TokenUnit,
    build_adp,
    build_document_graph,
    linear_nodes,
    mention_node,
    shortest_path,
    wrap_with_markers,
)
from .features import FeatureTables, InputLayout, LexicalFeatureConfig, feature_ids
from .recursive import RecursiveGrads, RecursiveParams, backprop_subtree, encode_subtree

log = logging.getLogger(__name__)

VARIANTS = ("iDepNN-ADP", "iDepNN-SDP", "i-biRNN")
PROB_FLOOR = 1e-12


@dataclass
class ModelConfig:
    variant: str = "iDepNN-ADP"
    word_dim: int = 200
    subtree_dim: int = 50
    hidden: int = 100
    features: Tuple[str, ...] = ("POS", "PI", "ET")
    feature_dims: Dict[str, int] = field(default_factory=lambda: {"POS": 5, "PI": 5, "ET": 5})
    k_train: Optional[int] = 1
    learning_rate: float = 0.01
    clip_norm: float = 5.0
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    max_subtree_depth: Optional[int] = None
    min_freq: int = 1
    train_pretrained: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        for name in ("word_dim", "subtree_dim", "hidden", "max_epochs", "min_freq"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.k_train is not None and self.k_train < 0:
            raise ValueError("k_train must be >= 0")
        if self.learning_rate <= 0 or self.clip_norm <= 0 or self.patience < 1:
            raise ValueError("learning_rate, clip_norm and patience must be positive")
        self.features = tuple(self.features)
        self.feature_dims = {f: int(d) for f, d in self.feature_dims.items()}

    @property
    def uses_subtrees(self) -> bool:
        return self.variant == "iDepNN-ADP"

    @property
    def lexical(self) -> LexicalFeatureConfig:
        return LexicalFeatureConfig(self.features, dict(self.feature_dims))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["features"] = list(self.features)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys {sorted(unknown)}")
        return cls(**dict(d))


_clamped = 0


def cross_entropy(y: np.ndarray, gold: int) -> float:
    """``-ln y[gold]``, with y[gold] floored at 1e-12 (counted, see ``clamp_count``)."""
    global _clamped
    p = float(y[gold])
    if p < PROB_FLOOR:
        _clamped += 1
        log.warning("probability of gold label %d is %.3g; clamped to %g", gold, p, PROB_FLOOR)
        p = PROB_FLOOR
    return float(-np.log(p))


def clamp_count() -> int:
    return _clamped


@dataclass
class Instance:
    candidate: CandidatePair
    units: List[TokenUnit]
    ids: List[Dict[str, int]]
    subtrees: List[Optional[Subtree]]
    node_words: Dict[NodeRef, int]


class Grads(dict):
    """Parameter name -> dense gradient; embedding tables map to {row: vector}."""

    def add_row(self, name: str, row: int, g: np.ndarray):
        rows = self.setdefault(name, {})
        if row in rows:
            rows[row] = rows[row] + g
        else:
            rows[row] = np.array(g, dtype=np.float64)


class TrainedModel:
    """All learnable tensors plus the vocabularies and labels they are indexed by.

    ``params`` is the single parameter store; the encoder parameter objects are
    views into it, so in-place updates are seen everywhere.
    """

    def __init__(
        self,
        config: ModelConfig,
        tables: FeatureTables,
        labels: Sequence[str],
        relations: Sequence[str],
        params: Optional[Dict[str, np.ndarray]] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.config = config
        self.tables = tables
        self.labels = tuple(labels)
        self.relations = tuple(sorted(relations))
        self.metadata: dict = {}
        sub_dim = config.subtree_dim if config.uses_subtrees else None
        self.layout = InputLayout.make(config.word_dim, sub_dim, tables.config)
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(config.seed)
            params = self._init_params(rng)
        self.params = params
        self._bind()

    # -- parameters ---------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        p: Dict[str, np.ndarray] = {"emb.word": self.tables.words.matrix}
        for f in self.tables.config.enabled:
            p[f"emb.{f}"] = self.tables.tables[f].matrix
        sp = seq.SequenceParams.init(self.layout.dim, self.config.hidden, self.labels, rng)
        p.update({"seq.V": sp.V, "seq.W": sp.W, "seq.U": sp.U, "seq.b_y": sp.b_y})
        if self.config.uses_subtrees:
            rp = RecursiveParams.init(self.relations, self.config.word_dim, self.config.subtree_dim, rng)
            p.update({"rec.b": rp.b, "rec.c_leaf": rp.c_leaf})
            p.update({f"rec.W/{r}": m for r, m in rp.W.items()})
        return p

    def _bind(self):
        p = self.params
        self.tables.words.matrix = p["emb.word"]
        for f in self.tables.config.enabled:
            self.tables.tables[f].matrix = p[f"emb.{f}"]
        self.seq = seq.SequenceParams(p["seq.V"], p["seq.W"], p["seq.U"], p["seq.b_y"], self.labels)
        self.rec = None
        if self.config.uses_subtrees:
            W = {k[len("rec.W/") :]: v for k, v in p.items() if k.startswith("rec.W/")}
            self.rec = RecursiveParams(W, p["rec.b"], p["rec.c_leaf"])

    def trainable_mask(self, name: str) -> Optional[np.ndarray]:
        if name == "emb.word":
            return self.tables.words.trainable
        if name.startswith("emb."):
            return self.tables.tables[name[4:]].trainable
        return None

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, snap: Mapping[str, np.ndarray]):
        for k, v in snap.items():
            self.params[k][...] = v

    # -- instances ----------------------------------------------------------

    def prepare(self, doc: Document, graph: DocumentGraph, cand: CandidatePair) -> Instance:
        m1, m2 = doc.mention(cand.e1), doc.mention(cand.e2)
        a, b = mention_node(doc, m1), mention_node(doc, m2)
        if self.config.variant == "i-biRNN":
            nodes = linear_nodes(doc, a, b)
        else:
            nodes = shortest_path(graph, a, b).nodes
        units = wrap_with_markers(nodes, graph, m1, m2)
        ids = [feature_ids(u, self.tables) for u in units]
        subtrees: List[Optional[Subtree]] = [None] * len(units)
        node_words: Dict[NodeRef, int] = {}
        if self.config.uses_subtrees:
            path = shortest_path(graph, a, b)
            adp = build_adp(graph, path, self.config.max_subtree_depth)
            by_node = dict(zip(path.nodes, adp.subtrees))
            for t, u in enumerate(units):
                if u.node is not None:
                    subtrees[t] = by_node[u.node]
                    for n in by_node[u.node].nodes():
                        node_words[n] = self.tables.word_vocab.lookup(graph.nodes[n].form)
        return Instance(cand, units, ids, subtrees, node_words)

    def prepare_all(
        self, docs: Mapping[str, Document], candidates: Iterable[CandidatePair]
    ) -> Tuple[List[Instance], int]:
        """Instances for ``candidates``; unusable ones are skipped and counted."""
        graphs: Dict[str, DocumentGraph] = {}
        out, skipped = [], 0
        for cand in candidates:
            try:
                doc = docs[cand.doc_id]
                if cand.doc_id not in graphs:
                    graphs[cand.doc_id] = build_document_graph(doc)
                out.append(self.prepare(doc, graphs[cand.doc_id], cand))
            except (KeyError, GraphError, CorpusError) as exc:
                skipped += 1
                log.warning("skipping candidate %s: %s", cand.key, exc)
        return out, skipped

    # -- forward / backward -------------------------------------------------

    def _inputs(self, inst: Instance):
        words = self.params["emb.word"]
        X = np.empty((len(inst.units), self.layout.dim), dtype=words.dtype)
        encs = [None] * len(inst.units)
        for t, ids in enumerate(inst.ids):
            X[t, self.layout.word] = words[ids["word"]]
            if self.rec is not None:
                sub = inst.subtrees[t]
                if sub is None:
                    X[t, self.layout.subtree] = self.rec.c_leaf
                else:
                    enc = encode_subtree(sub, lambda n: words[inst.node_words[n]], self.rec)
                    encs[t] = enc
                    X[t, self.layout.subtree] = enc.c
            for f, sl in self.layout.features:
                X[t, sl] = self.params[f"emb.{f}"][ids[f]]
        return X, encs

    def forward(self, inst: Instance) -> seq.EncoderStates:
        X, _ = self._inputs(inst)
        return seq.forward(X, self.seq)

    def predict(self, inst: Instance) -> seq.Prediction:
        y = self.forward(inst).y
        k = int(np.argmax(y))
        return seq.Prediction(self.labels[k], float(y[k]), y, inst.candidate.key)

    def gold_index(self, inst: Instance) -> int:
        label = inst.candidate.label
        if label not in self.labels:
            raise ValueError(f"label {label!r} of {inst.candidate.key} is not in the model's label list")
        return self.labels.index(label)

    def loss(self, inst: Instance) -> float:
        return cross_entropy(self.forward(inst).y, self.gold_index(inst))

    def loss_and_grads(self, inst: Instance) -> Tuple[float, Grads]:
        gold = self.gold_index(inst)
        X, encs = self._inputs(inst)
        states = seq.forward(X, self.seq)
        loss = cross_entropy(states.y, gold)
        sg = seq.backward(states, gold, self.seq)
        g = Grads({"seq.V": sg.V, "seq.W": sg.W, "seq.U": sg.U, "seq.b_y": sg.b_y})
        for t, ids in enumerate(inst.ids):
            dx = sg.inputs[t]
            g.add_row("emb.word", ids["word"], dx[self.layout.word])
            for f, sl in self.layout.features:
                g.add_row(f"emb.{f}", ids[f], dx[sl])
        if self.rec is not None:
            rg = RecursiveGrads.zeros(self.rec)
            for t, enc in enumerate(encs):
                dc = sg.inputs[t, self.layout.subtree]
                if enc is None:
                    rg.c_leaf += dc
                else:
                    backprop_subtree(enc, dc, self.rec, rg)
            g["rec.b"] = rg.b
            g["rec.c_leaf"] = rg.c_leaf
            for r, m in rg.W.items():
                g[f"rec.W/{r}"] = m
            for node, gx in rg.x.items():
                g.add_row("emb.word", inst.node_words[node], gx)
        return loss, g

    # -- updates ------------------------------------------------------------

    def trainable_grads(self, g: Grads) -> Grads:
        """Drop gradients on frozen embedding rows."""
        out = Grads()
        for name, val in g.items():
            if isinstance(val, dict):
                mask = self.trainable_mask(name)
                rows = {r: v for r, v in val.items() if mask[r]}
                if rows:
                    out[name] = rows
            else:
                out[name] = val
        return out

    @staticmethod
    def grad_norm(g: Grads) -> float:
        total = 0.0
        for name in sorted(g):
            val = g[name]
            if isinstance(val, dict):
                for r in sorted(val):
                    total += float(val[r] @ val[r])
            else:
                total += float(np.sum(val * val))
        return float(np.sqrt(total))

    def sgd_step(self, g: Grads, lr: float, clip: Optional[float]) -> float:
        """Clip ``g`` to global norm ``clip`` and apply one SGD update; returns the pre-clip norm."""
        g = self.trainable_grads(g)
        norm = self.grad_norm(g)
        if clip is not None:
            g = clip_grads(g, clip)
        for name, val in g.items():
            p = self.params[name]
            if isinstance(val, dict):
                for r, v in val.items():
                    p[r] -= lr * v
            else:
                p -= lr * val
        return norm


def clip_grads(g: Grads, clip: float) -> Grads:
    """Copy of ``g`` rescaled so its global norm is at most ``clip``."""
    norm = TrainedModel.grad_norm(g)
    factor = 1.0 if norm <= clip else clip / norm
    out = Grads()
    for name, val in g.items():
        if isinstance(val, dict):
            out[name] = {r: v * factor for r, v in val.items()}
        else:
            out[name] = val * factor
    return out


def label_list(candidates: Iterable[CandidatePair], extra: Iterable[str] = ()) -> Tuple[str, ...]:
    """Positive labels in sorted order, then NONE."""
    positives = {c.label for c in candidates if c.label != NONE_LABEL} | set(extra)
    positives.discard(NONE_LABEL)
    return (*sorted(positives), NONE_LABEL)
