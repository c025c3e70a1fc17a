import io
import struct

import numpy as np
import pytest

from idepnn.corpus import RelationSchema, corpus_candidates
from idepnn.model import ModelConfig
from idepnn.serialization import MAGIC, VERSION, ModelFormatError, dumps_model, load_model, save_model
from idepnn.synthetic import FixtureSpec, generate_corpus
from idepnn.trainer import build_model, predict_candidates


@pytest.fixture(scope="module")
def model_and_data():
    spec = FixtureSpec(num_docs=10, seed=4)
    docs = generate_corpus(spec)
    cands = corpus_candidates(docs, None, RelationSchema({spec.label: spec.entity_types}))
    cfg = ModelConfig(word_dim=6, subtree_dim=3, hidden=4, feature_dims={"POS": 2, "PI": 2, "ET": 2})
    m = build_model(cands, docs, cfg)
    m.metadata = {"best_dev_f1": 0.5, "note": "x"}
    return m, docs, cands


def test_round_trip_bit_identical(model_and_data, tmp_path):
    m, docs, cands = model_and_data
    path = str(tmp_path / "m.idnn")
    save_model(m, path)
    loaded = load_model(path)
    assert set(loaded.params) == set(m.params)
    for k, v in m.params.items():
        assert loaded.params[k].tobytes() == v.tobytes()
    assert loaded.config == m.config
    assert loaded.labels == m.labels
    assert loaded.tables.word_vocab.itos == m.tables.word_vocab.itos
    assert loaded.metadata == m.metadata
    assert dumps_model(loaded) == dumps_model(m)
    a = predict_candidates(m, docs, cands)
    b = predict_candidates(loaded, docs, cands)
    assert all(np.array_equal(x.distribution, y.distribution) for x, y in zip(a, b))


def test_loaded_parameters_are_writable(model_and_data):
    loaded = load_model(dumps_model(model_and_data[0]))
    loaded.params["seq.W"][0, 0] += 1.0


def test_file_object_source(model_and_data):
    data = dumps_model(model_and_data[0])
    assert dumps_model(load_model(io.BytesIO(data))) == data


def test_wrong_magic(model_and_data):
    data = dumps_model(model_and_data[0])
    with pytest.raises(ModelFormatError, match="magic"):
        load_model(b"XXXX" + data[4:])


def test_future_version(model_and_data):
    data = dumps_model(model_and_data[0])
    bumped = MAGIC + struct.pack("<I", VERSION + 1) + data[8:]
    with pytest.raises(ModelFormatError) as err:
        load_model(bumped)
    assert str(VERSION + 1) in str(err.value) and str(VERSION) in str(err.value)


@pytest.mark.parametrize("cut", [3, 10, 100, -1])
def test_truncated(model_and_data, cut):
    data = dumps_model(model_and_data[0])
    with pytest.raises(ModelFormatError, match="truncated"):
        load_model(data[:cut])


def test_trailing_garbage(model_and_data):
    with pytest.raises(ModelFormatError, match="trailing"):
        load_model(dumps_model(model_and_data[0]) + b"\0")
