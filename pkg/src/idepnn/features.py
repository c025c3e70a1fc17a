"""Vocabularies, embedding tables and per-step input vectors."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import Document
from .depgraph import MARKERS, TokenUnit

OOV = "<unk>"
NULL = "<null>"
PI_ZONES = ("before-e1", "e1", "between", "e2", "after-e2")
FEATURES = ("POS", "PI", "ET")
INIT_STD = 0.1  # N(0, 0.01): variance 0.01


class EmbeddingError(ValueError):
    pass


class Vocab:
    """Dense token <-> id map. Word vocabularies reserve OOV and the four entity markers."""

    def __init__(
        self,
        tokens: Iterable[str] = (),
        counts: Optional[Dict[str, int]] = None,
        specials=(OOV, *MARKERS),
        lowercase: bool = True,
    ):
        self.specials = tuple(specials)
        self.lowercase = lowercase
        self.itos: List[str] = []
        self.stoi: Dict[str, int] = {}
        self.counts: Dict[str, int] = dict(counts or {})
        for tok in (*self.specials, *tokens):
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def lookup(self, surface: str) -> int:
        """Id of ``surface`` (lowercased for word vocabularies), else the OOV id."""
        if surface in self.specials:
            return self.stoi[surface]
        key = surface.lower() if self.lowercase else surface
        return self.stoi.get(key, self.stoi.get(OOV, 0))

    @property
    def oov_id(self) -> int:
        return self.stoi[OOV]

    def dump(self) -> str:
        return "".join(f"{tok}\t{i}\t{self.counts.get(tok, 0)}\n" for i, tok in enumerate(self.itos))


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: np.ndarray  # per-row mask

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass
class LexicalFeatureConfig:
    enabled: Tuple[str, ...] = FEATURES
    dims: Dict[str, int] = field(default_factory=lambda: {"POS": 5, "PI": 5, "ET": 5})

    def __post_init__(self):
        unknown = set(self.enabled) - set(FEATURES)
        if unknown:
            raise ValueError(f"unknown lexical features {sorted(unknown)}")
        # canonical order, independent of how the caller listed them
        self.enabled = tuple(f for f in FEATURES if f in self.enabled)
        for f in self.enabled:
            if self.dims.get(f, 0) <= 0:
                raise ValueError(f"feature {f} needs a positive dimension")

    @property
    def total_dim(self) -> int:
        return sum(self.dims[f] for f in self.enabled)


def load_embeddings(stream: Iterable[str], expected_dim: int, seed: int = 0) -> Tuple[EmbeddingTable, Vocab]:
    """Read ``token v1 ... vD`` lines into a frozen table.

    Special rows (OOV and markers) come first, drawn from N(0, 0.01) and trainable.
    A leading ``count dim`` header line, as written by word2vec, is skipped.
    """
    words: List[str] = []
    rows: List[np.ndarray] = []
    seen = set()
    for lineno, line in enumerate(stream, start=1):
        parts = line.rstrip("\n").split()
        if not parts:
            continue
        if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts) and expected_dim != 1:
            continue
        token, values = parts[0], parts[1:]
        if len(values) != expected_dim:
            raise EmbeddingError(f"line {lineno}: expected {expected_dim} values for {token!r}, got {len(values)}")
        if token in seen:
            raise EmbeddingError(f"line {lineno}: duplicate token {token!r}")
        seen.add(token)
        words.append(token)
        rows.append(np.asarray(values, dtype=np.float64))
    vocab = Vocab(words)
    rng = np.random.default_rng(seed)
    n_special = len(vocab.specials)
    special = rng.normal(0.0, INIT_STD, size=(n_special, expected_dim))
    matrix = np.vstack([special, *rows]) if rows else special
    if not np.all(np.isfinite(matrix)):
        raise EmbeddingError("non-finite embedding values")
    trainable = np.zeros(len(vocab), dtype=bool)
    trainable[:n_special] = True
    return EmbeddingTable(matrix, trainable), vocab


def build_vocab(docs: Iterable[Document], min_freq: int = 1, extra: Iterable[str] = ()) -> Vocab:
    """Lowercased surface forms seen at least ``min_freq`` times, most frequent first.

    ``extra`` forms are appended regardless of frequency (e.g. pretrained coverage).
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter = Counter()
    for doc in docs:
        for sent in doc.sentences:
            counts.update(tok.form.lower() for tok in sent.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    vocab = Vocab(kept, counts)
    for tok in sorted(set(extra)):
        vocab.add(tok)
    return vocab


def init_word_table(
    vocab: Vocab,
    dim: int,
    rng: np.random.Generator,
    pretrained: Optional[Tuple[EmbeddingTable, Vocab]] = None,
    train_pretrained: bool = False,
) -> EmbeddingTable:
    """Random N(0, 0.01) rows, overwritten by pretrained vectors where available."""
    matrix = rng.normal(0.0, INIT_STD, size=(len(vocab), dim))
    trainable = np.ones(len(vocab), dtype=bool)
    if pretrained is not None:
        table, pvocab = pretrained
        if table.dim != dim:
            raise EmbeddingError(f"pretrained dimension {table.dim} does not match configured {dim}")
        for i, tok in enumerate(vocab.itos):
            if tok in vocab.specials:
                continue
            j = pvocab.stoi.get(tok)
            if j is not None:
                matrix[i] = table.matrix[j]
                trainable[i] = train_pretrained
    return EmbeddingTable(matrix, trainable)


def label_index(labels: Iterable[str]) -> Vocab:
    """Small feature vocabulary: row 0 is the all-zero null row, row 1 the unknown row."""
    return Vocab(sorted(set(labels)), specials=(NULL, OOV), lowercase=False)


def init_feature_table(index: Vocab, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    matrix = rng.normal(0.0, INIT_STD, size=(len(index), dim))
    matrix[index.stoi[NULL]] = 0.0
    trainable = np.ones(len(index), dtype=bool)
    trainable[index.stoi[NULL]] = False
    return EmbeddingTable(matrix, trainable)


@dataclass
class FeatureTables:
    words: EmbeddingTable
    word_vocab: Vocab
    config: LexicalFeatureConfig
    tables: Dict[str, EmbeddingTable] = field(default_factory=dict)
    vocabs: Dict[str, Vocab] = field(default_factory=dict)


@dataclass(frozen=True)
class InputLayout:
    """Column slices of an input vector, in the fixed order word, subtree, POS, PI, ET."""

    word: slice
    subtree: Optional[slice]
    features: Tuple[Tuple[str, slice], ...]
    dim: int

    @classmethod
    def make(cls, word_dim: int, subtree_dim: Optional[int], config: LexicalFeatureConfig) -> "InputLayout":
        word = slice(0, word_dim)
        off = word_dim
        sub = None
        if subtree_dim is not None:
            sub = slice(off, off + subtree_dim)
            off += subtree_dim
        feats = []
        for f in config.enabled:
            feats.append((f, slice(off, off + config.dims[f])))
            off += config.dims[f]
        return cls(word, sub, tuple(feats), off)


def feature_ids(unit: TokenUnit, tables: FeatureTables) -> Dict[str, int]:
    """Row ids for the word and every enabled lexical feature of ``unit``.

    Markers get their own word rows and the null row for all lexical features.
    """
    ids = {"word": tables.word_vocab.lookup(unit.form)}
    value = {"POS": unit.pos, "PI": unit.zone, "ET": unit.etype}
    for f in tables.config.enabled:
        vocab = tables.vocabs[f]
        v = value[f]
        ids[f] = vocab.stoi[NULL] if unit.is_marker or v is None else vocab.lookup(v)
    return ids


def assemble_input(
    unit: TokenUnit,
    mode: str,
    tables: FeatureTables,
    subtree_vector: Optional[np.ndarray] = None,
) -> np.ndarray:
    """``[x, (c,) POS, PI, ET]`` for one step; ``mode`` is ``"SDP"`` or ``"ADP"``."""
    if mode not in ("SDP", "ADP"):
        raise ValueError(f"unknown input mode {mode!r}")
    if mode == "ADP" and subtree_vector is None:
        raise ValueError("ADP inputs need a subtree vector")
    ids = feature_ids(unit, tables)
    parts = [tables.words.matrix[ids["word"]]]
    if mode == "ADP":
        parts.append(np.asarray(subtree_vector))
    for f in tables.config.enabled:
        parts.append(tables.tables[f].matrix[ids[f]])
    return np.concatenate(parts)


def build_feature_tables(
    docs: Sequence[Document],
    word_dim: int,
    config: LexicalFeatureConfig,
    rng: np.random.Generator,
    min_freq: int = 1,
    pretrained: Optional[Tuple[EmbeddingTable, Vocab]] = None,
    train_pretrained: bool = False,
    extra_docs: Sequence[Document] = (),
) -> FeatureTables:
    """Vocabularies and freshly initialised tables for a training corpus.

    Forms from ``extra_docs`` join the word vocabulary only when a pretrained
    vector exists for them.
    """
    extra = []
    if pretrained is not None:
        pv = pretrained[1]
        extra = [t.form.lower() for d in (*docs, *extra_docs) for s in d.sentences for t in s.tokens]
        extra = [t for t in extra if t in pv.stoi]
    vocab = build_vocab(docs, min_freq, extra)
    words = init_word_table(vocab, word_dim, rng, pretrained, train_pretrained)
    out = FeatureTables(words, vocab, config)
    sources = {
        "POS": (t.pos for d in docs for s in d.sentences for t in s.tokens),
        "PI": PI_ZONES,
        "ET": (m.etype for d in docs for m in d.mentions),
    }
    for f in config.enabled:
        index = label_index(sources[f])
        out.vocabs[f] = index
        out.tables[f] = init_feature_table(index, config.dims[f], rng)
    return out
