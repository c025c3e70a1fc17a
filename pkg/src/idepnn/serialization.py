"""Binary model files.

Layout (little-endian)::

    b"IDNN"  u32 version  u32 n_sections
    n_sections x ( 4-byte tag  u32 name_len  name  u8 dtype  u8 ndim  u64 dims[ndim]  u64 nbytes  payload )

Tag ``META`` holds UTF-8 JSON (config, vocabularies, labels, metadata);
``TENS`` holds float64 parameters and ``MASK`` the trainable-row masks.
Sections are written in sorted name order, so equal models give equal bytes.
"""

from __future__ import annotations

import io
import json
import struct
from typing import BinaryIO, Dict, Tuple, Union

import numpy as np

from .features import EmbeddingTable, FeatureTables, Vocab
from .model import ModelConfig, TrainedModel

MAGIC = b"IDNN"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("u1"), 2: np.dtype("u1")}  # 2: utf-8 bytes
_CODES = {"TENS": 0, "MASK": 1, "META": 2}


class ModelFormatError(ValueError):
    pass


def _vocab_meta(v: Vocab) -> dict:
    return {"itos": v.itos, "specials": list(v.specials), "counts": v.counts, "lowercase": v.lowercase}


def _vocab_from(meta: dict) -> Vocab:
    specials = tuple(meta["specials"])
    vocab = Vocab(meta["itos"][len(specials) :], meta["counts"], specials, meta["lowercase"])
    if vocab.itos != meta["itos"]:
        raise ModelFormatError("vocabulary entries are not in id order")
    return vocab


def _sections(model: TrainedModel):
    tables = model.tables
    meta = {
        "config": model.config.to_dict(),
        "labels": list(model.labels),
        "relations": list(model.relations),
        "word_vocab": _vocab_meta(tables.word_vocab),
        "feature_vocabs": {f: _vocab_meta(v) for f, v in sorted(tables.vocabs.items())},
        "metadata": model.metadata,
    }
    yield "META", "meta", np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    for name in sorted(model.params):
        yield "TENS", name, np.ascontiguousarray(model.params[name], dtype="<f8")
    masks = {"emb.word": tables.words.trainable}
    masks.update({f"emb.{f}": t.trainable for f, t in tables.tables.items()})
    for name in sorted(masks):
        yield "MASK", name, np.ascontiguousarray(masks[name], dtype=np.uint8)


def save_model(model: TrainedModel, sink: Union[BinaryIO, str]) -> None:
    if isinstance(sink, str):
        with open(sink, "wb") as fh:
            return save_model(model, fh)
    sections = list(_sections(model))
    sink.write(MAGIC + struct.pack("<II", VERSION, len(sections)))
    for tag, name, arr in sections:
        raw = name.encode("utf-8")
        sink.write(tag.encode("ascii") + struct.pack("<I", len(raw)) + raw)
        sink.write(struct.pack("<BB", _CODES[tag], arr.ndim))
        sink.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        payload = arr.tobytes()
        sink.write(struct.pack("<Q", len(payload)) + payload)


def dumps_model(model: TrainedModel) -> bytes:
    buf = io.BytesIO()
    save_model(model, buf)
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"truncated model file: needed {n} bytes at offset {self.pos}, {len(self.data) - self.pos} left")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(source: Union[BinaryIO, str, bytes]) -> TrainedModel:
    if isinstance(source, str):
        with open(source, "rb") as fh:
            return load_model(fh.read())
    data = source if isinstance(source, (bytes, bytearray)) else source.read()
    r = _Reader(bytes(data))
    magic = r.take(4)
    if magic != MAGIC:
        raise ModelFormatError(f"not a model file (magic {magic!r}, expected {MAGIC!r})")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}; this build reads version {VERSION}")
    (count,) = r.unpack("<I")
    meta = None
    tensors: Dict[str, np.ndarray] = {}
    masks: Dict[str, np.ndarray] = {}
    for _ in range(count):
        tag = r.take(4).decode("ascii", errors="replace")
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        code, ndim = r.unpack("<BB")
        if tag not in _CODES or _CODES[tag] != code:
            raise ModelFormatError(f"unknown section {tag!r} ({name})")
        shape = r.unpack(f"<{ndim}Q")
        (nbytes,) = r.unpack("<Q")
        dtype = _DTYPES[code]
        if nbytes != int(np.prod(shape, dtype=np.int64)) * dtype.itemsize:
            raise ModelFormatError(f"section {name}: payload size does not match shape {shape}")
        arr = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape)
        if tag == "META":
            meta = json.loads(arr.tobytes().decode("utf-8"))
        elif tag == "TENS":
            tensors[name] = arr.astype(np.float64)  # writable native copy
        else:
            masks[name] = arr.astype(bool)
    if r.pos != len(r.data):
        raise ModelFormatError("trailing bytes after last section")
    if meta is None:
        raise ModelFormatError("model file has no META section")

    try:
        config = ModelConfig.from_dict(meta["config"])
        lexical = config.lexical
        words = EmbeddingTable(tensors["emb.word"], masks["emb.word"])
        tables = {f: EmbeddingTable(tensors[f"emb.{f}"], masks[f"emb.{f}"]) for f in lexical.enabled}
        vocabs = {f: _vocab_from(v) for f, v in meta["feature_vocabs"].items()}
        ft = FeatureTables(words, _vocab_from(meta["word_vocab"]), lexical, tables, vocabs)
        model = TrainedModel(config, ft, meta["labels"], meta["relations"], params=tensors)
    except KeyError as exc:
        raise ModelFormatError(f"model file lacks entry {exc}") from None
    model.metadata = meta.get("metadata", {})
    return model
