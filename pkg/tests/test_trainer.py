import math

import numpy as np
import pytest

from idepnn import model as model_mod
from idepnn.corpus import NONE_LABEL, CandidatePair, RelationSchema, corpus_candidates
from idepnn.depgraph import build_document_graph, linear_nodes, mention_node, shortest_path
from idepnn.model import ModelConfig, clip_grads, cross_entropy
from idepnn.serialization import dumps_model
from idepnn.synthetic import FixtureSpec, generate_corpus
from idepnn.trainer import TrainingError, build_model, grad_check, train

SMALL = dict(word_dim=8, subtree_dim=4, hidden=6, feature_dims={"POS": 2, "PI": 2, "ET": 2}, k_train=None)


def corpus(n=30, seed=0):
    spec = FixtureSpec(num_docs=n, seed=seed)
    docs = generate_corpus(spec)
    return docs, corpus_candidates(docs, None, RelationSchema({spec.label: spec.entity_types}))


# -- loss ----------------------------------------------------------------------


def test_cross_entropy_closed_forms():
    assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0
    assert cross_entropy(np.array([0.5, 0.5]), 0) == pytest.approx(math.log(2), abs=1e-15)
    assert cross_entropy(np.array([0.8, 0.2]), 1) == pytest.approx(1.60944, abs=1e-5)


def test_cross_entropy_clamps_zero_probability():
    before = model_mod.clamp_count()
    loss = cross_entropy(np.array([1.0, 0.0]), 1)
    assert loss == pytest.approx(-math.log(1e-12))
    assert math.isfinite(loss)
    assert model_mod.clamp_count() == before + 1


# -- training preconditions --------------------------------------------------


def test_empty_training_set():
    docs, _ = corpus(2)
    with pytest.raises(TrainingError, match="empty"):
        train([], [], ModelConfig(**SMALL), docs)


def test_all_none_training_set():
    docs, cands = corpus(10)
    negatives = [c for c in cands if not c.is_positive]
    with pytest.raises(TrainingError, match="degenerate labels"):
        train(negatives, [], ModelConfig(**SMALL), docs)


def test_unparseable_candidates_are_skipped():
    docs, cands = corpus(10)
    bogus = CandidatePair("missing-doc", "T1", "T2", "Lives_In", 0)
    model = train(cands + [bogus], [], ModelConfig(max_epochs=1, **SMALL), docs)
    assert model.metadata["skipped_train"] == 1


def test_k_train_filters_candidates():
    docs, cands = corpus(40)
    # positives only across sentences: capping at k=0 leaves nothing to learn
    mixed = [c for c in cands if (c.sentence_distance == 0) != c.is_positive]
    assert any(c.is_positive for c in mixed) and any(c.sentence_distance == 0 for c in mixed)
    with pytest.raises(TrainingError, match="degenerate labels"):
        train(mixed, [], ModelConfig(max_epochs=1, **{**SMALL, "k_train": 0}), docs)
    train(mixed, [], ModelConfig(max_epochs=1, **SMALL), docs)


# -- training behaviour ------------------------------------------------------


@pytest.fixture(scope="module")
def trained_pair():
    docs, cands = corpus(40)
    dev_docs, dev = corpus(20, seed=1)
    cfg = ModelConfig(max_epochs=6, patience=3, **SMALL)
    history = []
    m = train(cands, dev, cfg, docs + dev_docs, on_epoch=history.append)
    return m, history, (cands, dev, cfg, docs + dev_docs)


def test_loss_decreases(trained_pair):
    m, _, _ = trained_pair
    assert m.metadata["final_loss"] < m.metadata["initial_loss"]


def test_early_stopping_bookkeeping(trained_pair):
    m, history, (_, _, cfg, _) = trained_pair
    meta = m.metadata
    assert meta["epochs_run"] == len(history) <= cfg.max_epochs
    best = max(h["dev_f1"] for h in history)
    assert meta["best_dev_f1"] == best
    assert history[meta["best_epoch"] - 1]["dev_f1"] == best


def test_patience_stops_early():
    docs, cands = corpus(20)
    dev_docs, dev = corpus(20, seed=3)
    m = train(cands, dev, ModelConfig(max_epochs=60, patience=2, **SMALL), docs + dev_docs)
    meta = m.metadata
    assert meta["epochs_run"] < 60
    assert meta["epochs_run"] == meta["best_epoch"] + 2


def test_determinism_byte_identical(trained_pair):
    m, _, (cands, dev, cfg, docs) = trained_pair
    again = train(cands, dev, cfg, docs)
    assert dumps_model(again) == dumps_model(m)


# -- gradients, clipping, wiring ---------------------------------------------


def test_clipping_bound():
    rng = np.random.default_rng(0)
    for scale in (0.01, 1.0, 100.0):
        g = model_mod.Grads({"a": rng.normal(scale=scale, size=(3, 4)), "emb": {2: rng.normal(scale=scale, size=5)}})
        norm = model_mod.TrainedModel.grad_norm(clip_grads(g, 5.0))
        assert norm <= 5.0 + 1e-12
        if model_mod.TrainedModel.grad_norm(g) <= 5.0:
            assert norm == pytest.approx(model_mod.TrainedModel.grad_norm(g))


def test_sgd_step_respects_frozen_rows():
    docs, cands = corpus(5)
    m = build_model(cands, docs, ModelConfig(**SMALL))
    mask = m.params["emb.POS"]
    null_row = m.tables.vocabs["POS"].stoi["<null>"]
    before = mask[null_row].copy()
    inst = m.prepare(docs[0], build_document_graph(docs[0]), cands[0])
    _, g = m.loss_and_grads(inst)
    m.sgd_step(g, 0.5, 5.0)
    assert np.array_equal(m.params["emb.POS"][null_row], before)


def test_c_leaf_receives_gradient_in_adp():
    docs, cands = corpus(10)
    m = build_model(cands, docs, ModelConfig(**SMALL))
    total = 0.0
    for doc in docs:
        for c in (c for c in cands if c.doc_id == doc.id):
            _, g = m.loss_and_grads(m.prepare(doc, build_document_graph(doc), c))
            total += float(np.abs(g["rec.c_leaf"]).sum())
    assert total > 0


def test_sdp_has_no_recursive_parameters():
    docs, cands = corpus(5)
    m = build_model(cands, docs, ModelConfig(variant="iDepNN-SDP", **SMALL))
    assert not any(k.startswith("rec.") for k in m.params)
    assert sum(1 for k in m.params if k == "seq.W") == 1


def test_birnn_uses_linear_tokens():
    docs, cands = corpus(20)
    m = build_model(cands, docs, ModelConfig(variant="i-biRNN", **SMALL))
    for doc in docs:
        c = next(c for c in cands if c.doc_id == doc.id)
        graph = build_document_graph(doc)
        inst = m.prepare(doc, graph, c)
        a, b = mention_node(doc, doc.mention(c.e1)), mention_node(doc, doc.mention(c.e2))
        assert [u.node for u in inst.units if not u.is_marker] == linear_nodes(doc, a, b)
        if len(linear_nodes(doc, a, b)) != len(shortest_path(graph, a, b).nodes):
            break
    else:
        pytest.fail("no document distinguishes the linear sequence from the path")


def test_grad_check_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        grad_check(epsilon=0.0)
    with pytest.raises(ValueError):
        grad_check(epsilon=-1e-4)


@pytest.mark.parametrize("variant", ["iDepNN-ADP", "iDepNN-SDP", "i-biRNN"])
def test_grad_check_model_variants(variant):
    assert grad_check(ModelConfig(variant=variant), num_cases=4, seed=1) < 1e-4


def test_label_list_puts_none_last():
    cands = [CandidatePair("d", "a", "b", "B", 0), CandidatePair("d", "a", "c", NONE_LABEL, 0), CandidatePair("d", "b", "c", "A", 0)]
    assert model_mod.label_list(cands) == ("A", "B", NONE_LABEL)
