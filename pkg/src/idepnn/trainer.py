"""Per-instance SGD training with dev-set model selection, and gradient checking."""

from __future__ import annotations

import copy
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import sequence as seq
from .corpus import NONE_LABEL, CandidatePair, Document, RelationSchema, generate_candidates
from .depgraph import build_document_graph, Subtree, NodeRef
from .evaluation import evaluate, filter_by_k
from .features import EmbeddingTable, Vocab, build_feature_tables
from .model import Instance, ModelConfig, TrainedModel, cross_entropy, label_list
from .recursive import RecursiveParams, backprop_subtree, encode_subtree
from .synthetic import DEPRELS, FixtureSpec, generate_corpus

log = logging.getLogger(__name__)

__all__ = ["cross_entropy", "train", "build_model", "predict_candidates", "grad_check", "TrainingError"]


class TrainingError(ValueError):
    pass


def _doc_map(docs: Sequence[Document]) -> Dict[str, Document]:
    return {d.id: d for d in docs}


def build_model(
    train_candidates: Sequence[CandidatePair],
    docs: Sequence[Document],
    config: ModelConfig,
    pretrained: Optional[Tuple[EmbeddingTable, Vocab]] = None,
    extra_docs: Sequence[Document] = (),
    labels: Sequence[str] = (),
) -> TrainedModel:
    """Fresh model whose vocabularies come from the documents behind ``train_candidates``."""
    rng = np.random.default_rng(config.seed)
    by_id = _doc_map(docs)
    used = sorted({c.doc_id for c in train_candidates if c.doc_id in by_id})
    train_docs = [by_id[i] for i in used]
    tables = build_feature_tables(
        train_docs,
        config.word_dim,
        config.lexical,
        rng,
        config.min_freq,
        pretrained,
        config.train_pretrained,
        extra_docs,
    )
    relations = sorted({t.deprel for d in train_docs for s in d.sentences for t in s.tokens})
    return TrainedModel(config, tables, label_list(train_candidates, labels), relations, rng=rng)


def _dev_pass(model: TrainedModel, instances: Sequence[Instance], candidates: Sequence[CandidatePair]):
    preds, total = [], 0.0
    for inst in instances:
        y = model.forward(inst).y
        k = int(np.argmax(y))
        preds.append(seq.Prediction(model.labels[k], float(y[k]), y, inst.candidate.key))
        if inst.candidate.label in model.labels:
            total += cross_entropy(y, model.labels.index(inst.candidate.label))
    f1 = evaluate(preds, candidates).macro[2]
    return f1, float(total / max(len(instances), 1))


def train(
    train_candidates: Sequence[CandidatePair],
    dev_candidates: Sequence[CandidatePair],
    config: ModelConfig,
    docs: Sequence[Document],
    pretrained: Optional[Tuple[EmbeddingTable, Vocab]] = None,
    labels: Sequence[str] = (),
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainedModel:
    """Train one model variant and return the snapshot with the best dev macro-F1.

    Candidates beyond ``config.k_train`` are dropped from both sets. Ties in
    dev macro-F1 are broken by lower dev loss. Without dev candidates,
    model selection falls back to the training set.
    """
    train_candidates = filter_by_k(train_candidates, config.k_train)
    dev_candidates = filter_by_k(dev_candidates, config.k_train)
    if not train_candidates:
        raise TrainingError("empty training set")
    if all(c.label == NONE_LABEL for c in train_candidates):
        raise TrainingError("degenerate labels: every training candidate is NONE")
    by_id = _doc_map(docs)
    dev_docs = sorted({c.doc_id for c in dev_candidates if c.doc_id in by_id})
    model = build_model(
        train_candidates, docs, config, pretrained, [by_id[i] for i in dev_docs], labels
    )
    train_set, skipped = model.prepare_all(by_id, train_candidates)
    dev_set, dev_skipped = model.prepare_all(by_id, dev_candidates)
    if not train_set:
        raise TrainingError("no training candidate could be turned into a path")
    if not dev_candidates:
        dev_set, dev_candidates = train_set, [i.candidate for i in train_set]

    rng = np.random.default_rng(config.seed)
    initial_loss = float(np.mean([model.loss(i) for i in train_set]))
    best_key = (-1.0, np.inf)
    best_snap, best_epoch, stale = model.snapshot(), 0, 0
    history: List[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        losses = []
        for idx in rng.permutation(len(train_set)):
            loss, grads = model.loss_and_grads(train_set[idx])
            losses.append(loss)
            model.sgd_step(grads, config.learning_rate, config.clip_norm)
        dev_f1, dev_loss = _dev_pass(model, dev_set, dev_candidates)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "dev_loss": dev_loss, "dev_f1": dev_f1}
        history.append(row)
        log.info("epoch %d loss %.5f dev_f1 %.4f", epoch, row["train_loss"], dev_f1)
        if on_epoch is not None:
            on_epoch(row)
        if (dev_f1, -dev_loss) > (best_key[0], -best_key[1]):
            best_key, best_snap, best_epoch, stale = (dev_f1, dev_loss), model.snapshot(), epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.restore(best_snap)
    model.metadata = {
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "best_dev_f1": best_key[0],
        "initial_loss": initial_loss,
        "final_loss": float(np.mean([model.loss(i) for i in train_set])),
        "skipped_train": skipped,
        "skipped_dev": dev_skipped,
        "history": history,
    }
    return model


def predict_candidates(
    model: TrainedModel, docs: Sequence[Document], candidates: Sequence[CandidatePair]
) -> List[seq.Prediction]:
    instances, _ = model.prepare_all(_doc_map(docs), candidates)
    return [model.predict(i) for i in instances]


# ---------------------------------------------------------------------------
# gradient checking


def _rel_err(a: np.ndarray, n: np.ndarray) -> float:
    a, n = np.asarray(a, dtype=np.float64), np.asarray(n, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
        raise FloatingPointError("non-finite gradient in grad_check")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom))


# Float64 losses carry ~1e-16 roundoff, i.e. ~1e-12 noise in a central
# difference at eps=1e-4; against the 1e-8 floor that alone reaches 1e-4 on
# entries that are near zero by cancellation. The oracle therefore evaluates
# the loss in extended precision; analytic gradients stay float64.
EXT = np.longdouble


def _ext(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).astype(EXT)


def _numeric(loss: Callable[[], float], arr: np.ndarray, eps: float, rows=None) -> np.ndarray:
    """Central differences of ``loss`` w.r.t. entries of ``arr`` (restricted to ``rows``)."""
    out = np.zeros(arr.shape)
    idx_iter = (
        np.ndindex(arr.shape) if rows is None else ((r, *rest) for r in rows for rest in np.ndindex(arr.shape[1:]))
    )
    for idx in idx_iter:
        orig = arr[idx]
        arr[idx] = orig + eps
        up = loss()
        arr[idx] = orig - eps
        down = loss()
        arr[idx] = orig
        out[idx] = (up - down) / (2 * eps)
    return out


def _random_tree(rng: np.random.Generator, depth: int, fanout: int, labels, counter: List[int]) -> Subtree:
    counter[0] += 1
    node = Subtree(NodeRef(0, counter[0]))
    if depth > 1:
        for _ in range(int(rng.integers(0, fanout + 1))):
            label = labels[int(rng.integers(len(labels)))]
            node.children.append((label, _random_tree(rng, depth - 1, fanout, labels, counter)))
    return node


def _check_recursive(rng: np.random.Generator, eps: float) -> float:
    d, dp = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    labels = list(DEPRELS[:3])
    params = RecursiveParams.init(labels, d, dp, rng)
    params.b[...] = rng.uniform(-0.5, 0.5, dp)
    params.c_leaf[...] = rng.uniform(-0.5, 0.5, dp)
    # one label outside the trained set exercises the fallback matrix
    tree = _random_tree(rng, int(rng.integers(1, 5)), 3, labels + ["unseen"], [0])
    words = {n: rng.uniform(-0.5, 0.5, d) for n in tree.nodes()}
    g_out = rng.uniform(-1, 1, dp)

    grads = backprop_subtree(encode_subtree(tree, words, params), g_out, params)
    xp = RecursiveParams({r: _ext(m) for r, m in params.W.items()}, _ext(params.b), _ext(params.c_leaf))
    xw = {n: _ext(x) for n, x in words.items()}
    xg = _ext(g_out)

    def loss():
        return xg @ encode_subtree(tree, xw, xp).c

    worst = _rel_err(grads.b, _numeric(loss, xp.b, eps))
    worst = max(worst, _rel_err(grads.c_leaf, _numeric(loss, xp.c_leaf, eps)))
    for r, m in xp.W.items():
        worst = max(worst, _rel_err(grads.W.get(r, np.zeros(m.shape)), _numeric(loss, m, eps)))
    for n, x in xw.items():
        worst = max(worst, _rel_err(grads.x.get(n, np.zeros(x.shape)), _numeric(loss, x, eps)))
    return worst


def _check_sequence(rng: np.random.Generator, eps: float) -> float:
    N, H, I = int(rng.integers(1, 7)), int(rng.integers(1, 6)), int(rng.integers(1, 8))
    labels = [f"L{i}" for i in range(int(rng.integers(2, 5)))]
    params = seq.SequenceParams.init(I, H, labels, rng)
    params.W[...] = rng.uniform(-0.5, 0.5, (H, H))
    params.b_y[...] = rng.uniform(-0.5, 0.5, len(labels))
    X = rng.uniform(-0.5, 0.5, (N, I))
    gold = int(rng.integers(len(labels)))

    g = seq.backward(seq.forward(X, params), gold, params)
    xp = seq.SequenceParams(_ext(params.V), _ext(params.W), _ext(params.U), _ext(params.b_y), params.labels)
    xX = _ext(X)

    def loss():
        return -np.log(seq.forward(xX, xp).y[gold])

    pairs = [(g.V, xp.V), (g.W, xp.W), (g.U, xp.U), (g.b_y, xp.b_y), (g.inputs, xX)]
    return max(_rel_err(a, _numeric(loss, p, eps)) for a, p in pairs)


def _check_model(rng: np.random.Generator, eps: float, base: ModelConfig) -> float:
    dims = {f: int(rng.integers(1, 3)) for f in ("POS", "PI", "ET")}
    config = ModelConfig(
        variant=base.variant,
        word_dim=int(rng.integers(1, 6)),
        subtree_dim=int(rng.integers(1, 6)),
        hidden=int(rng.integers(1, 6)),
        features=base.features,
        feature_dims=dims,
        seed=int(rng.integers(2**31)),
        max_subtree_depth=base.max_subtree_depth,
    )
    spec = FixtureSpec(
        num_docs=1,
        sentences_per_doc=(1, 2),
        tokens_per_sentence=(2, 6),
        distance_probs=(0.5, 0.5),
        seed=int(rng.integers(2**31)),
    )
    docs = generate_corpus(spec)
    schema = RelationSchema({spec.label: spec.entity_types})
    cand = generate_candidates(docs[0], None, schema)[0]
    # the explicit label keeps both classes in the softmax
    model = build_model([cand], docs, config, labels=[spec.label])
    # moderate scales keep tanh units out of saturation
    for name, arr in model.params.items():
        if name.startswith("emb."):
            mask = model.trainable_mask(name)
            arr[mask] = rng.uniform(-0.5, 0.5, arr[mask].shape)
        elif name in ("seq.W", "seq.b_y", "rec.b", "rec.c_leaf"):
            arr[...] = rng.uniform(-0.5, 0.5, arr.shape)
    inst = model.prepare(docs[0], build_document_graph(docs[0]), cand)
    _, grads = model.loss_and_grads(inst)

    ext = copy.deepcopy(model)
    ext.params = {k: _ext(v) for k, v in model.params.items()}
    ext._bind()
    gold = ext.gold_index(inst)

    def loss():
        return -np.log(ext.forward(inst).y[gold])

    worst = 0.0
    for name, arr in ext.params.items():
        g = grads.get(name)
        if isinstance(g, dict) or name.startswith("emb."):
            rows = sorted(g) if g else []
            dense = np.zeros(arr.shape)
            for r in rows:
                dense[r] = g[r]
            worst = max(worst, _rel_err(dense, _numeric(loss, arr, eps, rows)))
        else:
            a = g if g is not None else np.zeros(arr.shape)
            worst = max(worst, _rel_err(a, _numeric(loss, arr, eps)))
    return worst


def grad_check(
    config: Optional[ModelConfig] = None,
    num_cases: int = 50,
    epsilon: float = 1e-4,
    component: str = "model",
    seed: int = 0,
) -> float:
    """Worst elementwise relative error between analytic and central-difference gradients.

    ``component`` selects the recursive encoder alone (``"recursive"``), the
    biRNN with softmax and cross-entropy alone (``"sequence"``), or the full
    model chain for ``config.variant`` (``"model"``). Dimensions are drawn at
    random per case and kept small.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    rng = np.random.default_rng(seed)
    config = config or ModelConfig()
    worst = 0.0
    for _ in range(num_cases):
        if component == "recursive":
            err = _check_recursive(rng, epsilon)
        elif component == "sequence":
            err = _check_sequence(rng, epsilon)
        elif component == "model":
            err = _check_model(rng, epsilon, config)
        else:
            raise ValueError(f"unknown grad_check component {component!r}")
        worst = max(worst, err)
    return worst
