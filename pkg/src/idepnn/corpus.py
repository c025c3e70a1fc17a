"""Annotated corpus model: readers, candidate pairs, negative sampling, splits."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

NONE_LABEL = "NONE"


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input.

    ``line`` is the 1-based input line, when one is known.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is not None:
            return f"line {self.line}: {self.message}"
        return self.message


@dataclass
class Token:
    index: int
    form: str
    pos: str
    head: int
    deprel: str
    start: Optional[int] = None
    end: Optional[int] = None

    @property
    def char_span(self) -> Optional[Tuple[int, int]]:
        if self.start is None or self.end is None:
            return None
        return (self.start, self.end)


@dataclass
class Sentence:
    doc_index: int
    tokens: List[Token]

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> Token:
        return self.tokens[index - 1]

    @property
    def root(self) -> int:
        for tok in self.tokens:
            if tok.head == 0:
                return tok.index
        raise CorpusError(f"sentence {self.doc_index} has no root")


@dataclass
class EntityMention:
    id: str
    sentence: int
    first: int
    last: int
    etype: str

    @property
    def span(self) -> Tuple[int, int]:
        return (self.first, self.last)


@dataclass(frozen=True)
class RelationInstance:
    e1: str
    e2: str
    label: str


@dataclass
class Document:
    id: str
    sentences: List[Sentence] = field(default_factory=list)
    mentions: List[EntityMention] = field(default_factory=list)
    relations: List[RelationInstance] = field(default_factory=list)
    text: Optional[str] = None

    def mention(self, mention_id: str) -> EntityMention:
        for m in self.mentions:
            if m.id == mention_id:
                return m
        raise KeyError(mention_id)

    @property
    def mention_index(self) -> Dict[str, EntityMention]:
        return {m.id: m for m in self.mentions}


@dataclass(frozen=True)
class CandidatePair:
    doc_id: str
    e1: str
    e2: str
    label: str
    sentence_distance: int

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.doc_id, self.e1, self.e2)

    @property
    def is_positive(self) -> bool:
        return self.label != NONE_LABEL


@dataclass
class RelationSchema:
    """Relation labels with their (role1 type, role2 type) signature."""

    roles: Dict[str, Tuple[str, str]]

    def __post_init__(self):
        if NONE_LABEL in self.roles:
            raise ValueError(f"{NONE_LABEL!r} is reserved and cannot be a schema label")
        self.roles = {lab: tuple(types) for lab, types in self.roles.items()}

    @property
    def labels(self) -> List[str]:
        return sorted(self.roles)

    @property
    def type_pairs(self) -> set:
        return set(self.roles.values())

    def admits(self, type1: str, type2: str) -> bool:
        return (type1, type2) in self.type_pairs

    @classmethod
    def infer(cls, docs: Iterable[Document]) -> "RelationSchema":
        """Read the schema off the gold relations of ``docs``.

        A label seen with several type signatures keeps the first one.
        """
        roles: Dict[str, Tuple[str, str]] = {}
        for doc in docs:
            by_id = doc.mention_index
            for rel in doc.relations:
                roles.setdefault(rel.label, (by_id[rel.e1].etype, by_id[rel.e2].etype))
        return cls(roles)


# ---------------------------------------------------------------------------
# tree validation


def check_tree(tokens: Sequence[Token]) -> Optional[Tuple[int, str]]:
    """Return ``(token_index, reason)`` for the first tree violation, else None."""
    n = len(tokens)
    roots = [t.index for t in tokens if t.head == 0]
    for t in tokens:
        if t.head == t.index:
            return t.index, "self-loop head"
        if not 0 <= t.head <= n:
            return t.index, f"head {t.head} out of range 0..{n}"
        if not t.deprel:
            return t.index, "empty deprel"
    if not roots:
        return (tokens[0].index if tokens else 0), "no root (no token with head 0)"
    if len(roots) > 1:
        return roots[1], f"multiple roots at tokens {roots}"
    heads = {t.index: t.head for t in tokens}
    for t in tokens:
        seen = {t.index}
        h = t.head
        while h != 0:
            if h in seen:
                return t.index, "cyclic heads"
            seen.add(h)
            h = heads[h]
    return None


def validate_sentence(sent: Sentence) -> None:
    if not sent.tokens:
        raise CorpusError(f"sentence {sent.doc_index} is empty")
    for pos, tok in enumerate(sent.tokens, start=1):
        if tok.index != pos:
            raise CorpusError(f"sentence {sent.doc_index}: token ids must run 1..n (got {tok.index} at {pos})")
    bad = check_tree(sent.tokens)
    if bad is not None:
        raise CorpusError(f"sentence {sent.doc_index}, token {bad[0]}: {bad[1]}")


def validate_document(doc: Document) -> None:
    for i, sent in enumerate(doc.sentences):
        if sent.doc_index != i:
            raise CorpusError(f"document {doc.id}: sentence {i} carries doc_index {sent.doc_index}")
        try:
            validate_sentence(sent)
        except CorpusError as exc:
            raise CorpusError(f"document {doc.id}: {exc.message}") from None
    ids = set()
    for m in doc.mentions:
        if m.id in ids:
            raise CorpusError(f"document {doc.id}: duplicate mention id {m.id}")
        ids.add(m.id)
        if not 0 <= m.sentence < len(doc.sentences):
            raise CorpusError(
                f"document {doc.id}: mention {m.id} sentence index {m.sentence} "
                f"out of range (document has {len(doc.sentences)} sentences)"
            )
        n = len(doc.sentences[m.sentence])
        if not 1 <= m.first <= m.last <= n:
            raise CorpusError(f"document {doc.id}: mention {m.id} span [{m.first},{m.last}] outside 1..{n}")
    for rel in doc.relations:
        if rel.e1 == rel.e2:
            raise CorpusError(f"document {doc.id}: relation {rel.label} links {rel.e1} to itself")
        for arg in (rel.e1, rel.e2):
            if arg not in ids:
                raise CorpusError(f"document {doc.id}: relation {rel.label} references unknown mention {arg}")


# ---------------------------------------------------------------------------
# CoNLL-U

_TOKEN_RANGE = re.compile(r"(?:^|\|)TokenRange=(\d+)[-:](\d+)(?:\||$)")
_NEWDOC = re.compile(r"^#\s*newdoc(?:\s+id\s*=\s*(.*))?$")


def _parse_block(rows: List[Tuple[int, str]], ordinal: int, doc_index: int) -> Sentence:
    tokens = []
    first_line = rows[0][0]
    for lineno, line in rows:
        cols = line.split("\t")
        if len(cols) != 10:
            raise CorpusError(f"sentence {ordinal}: expected 10 tab-separated columns, got {len(cols)}", lineno)
        tok_id = cols[0]
        # multiword ranges and empty nodes are not part of the basic tree
        if "-" in tok_id or "." in tok_id:
            continue
        try:
            index = int(tok_id)
        except ValueError:
            raise CorpusError(f"sentence {ordinal}: non-integer ID {tok_id!r}", lineno) from None
        try:
            head = int(cols[6])
        except ValueError:
            raise CorpusError(f"sentence {ordinal}: non-integer HEAD {cols[6]!r}", lineno) from None
        start = end = None
        m = _TOKEN_RANGE.search(cols[9])
        if m:
            start, end = int(m.group(1)), int(m.group(2))
        tokens.append(Token(index, cols[1], cols[3], head, cols[7], start, end))
    line_of = {}
    for lineno, line in rows:
        tok_id = line.split("\t", 1)[0]
        if tok_id.isdigit():
            line_of[int(tok_id)] = lineno
    for pos, tok in enumerate(tokens, start=1):
        if tok.index != pos:
            raise CorpusError(f"sentence {ordinal}: token IDs must run 1..n", line_of.get(tok.index, first_line))
    bad = check_tree(tokens)
    if bad is not None:
        raise CorpusError(f"sentence {ordinal}: {bad[1]}", line_of.get(bad[0], first_line))
    return Sentence(doc_index, tokens)


def parse_conllu_documents(text: str, default_id: str = "doc") -> List[Tuple[str, List[Sentence]]]:
    """Split CoNLL-U text into documents on ``# newdoc`` comments.

    Text without any ``newdoc`` marker is a single document named ``default_id``.
    Line numbers in errors are relative to ``text``.
    """
    docs: List[Tuple[str, List[Sentence]]] = []
    current: Optional[Tuple[str, List[Sentence]]] = None
    block: List[Tuple[int, str]] = []
    ordinal = 0

    def flush():
        nonlocal block, ordinal, current
        if not block:
            return
        ordinal += 1
        if current is None:
            current = (default_id, [])
            docs.append(current)
        current[1].append(_parse_block(block, ordinal, len(current[1])))
        block = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            m = _NEWDOC.match(line.strip())
            if m:
                flush()
                doc_id = (m.group(1) or "").strip() or f"{default_id}-{len(docs) + 1}"
                current = (doc_id, [])
                docs.append(current)
            continue
        block.append((lineno, line))
    flush()
    return docs


def parse_conllu(text: str) -> List[Sentence]:
    """Parse CoNLL-U into sentences, numbering them 0.. in reading order."""
    sentences: List[Sentence] = []
    for _, sents in parse_conllu_documents(text):
        sentences.extend(sents)
    for i, s in enumerate(sentences):
        s.doc_index = i
    return sentences


def format_conllu(sentences: Sequence[Sentence], doc_id: Optional[str] = None) -> str:
    out = []
    if doc_id is not None:
        out.append(f"# newdoc id = {doc_id}")
    for sent in sentences:
        for t in sent.tokens:
            misc = f"TokenRange={t.start}-{t.end}" if t.char_span else "_"
            out.append("\t".join([str(t.index), t.form, "_", t.pos, "_", "_", str(t.head), t.deprel, "_", misc]))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


# ---------------------------------------------------------------------------
# BioNLP standoff


def _standoff_entities(lines: Iterable[str]) -> Iterator[Tuple[str, str, int, int]]:
    for line in lines:
        if not line.startswith("T"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) < 2:
            raise CorpusError(f"malformed entity line {line!r}")
        ent_id, info = parts[0], parts[1]
        etype, _, offsets = info.partition(" ")
        # discontinuous fragments are collapsed to their hull
        bounds = [tuple(map(int, frag.split())) for frag in offsets.split(";")]
        yield ent_id, etype, min(b[0] for b in bounds), max(b[1] for b in bounds)


def _standoff_relations(lines: Iterable[str]) -> Iterator[Tuple[str, str, str]]:
    for line in lines:
        if not line or line[0] not in "RE":
            continue
        parts = line.rstrip("\n").split("\t")
        fields = parts[1].split()
        if line[0] == "R":
            label, args = fields[0], [a.split(":", 1)[1] for a in fields[1:3]]
        else:
            # event: first field is Type:Trigger; keep events with exactly two arguments
            label = fields[0].split(":", 1)[0]
            args = [a.split(":", 1)[1] for a in fields[1:]]
            if len(args) != 2:
                continue
        if len(args) != 2:
            raise CorpusError(f"relation {parts[0]} does not have two arguments")
        yield label, args[0], args[1]


def align_span(sentences: Sequence[Sentence], start: int, end: int) -> Optional[Tuple[int, int, int]]:
    """Minimal token span ``(sentence, first, last)`` covering chars [start, end).

    Covered tokens are those whose character range overlaps the entity; None if
    no token overlaps or the overlap crosses a sentence boundary.
    """
    hits = []
    for sent in sentences:
        for tok in sent.tokens:
            if tok.start is None or tok.end is None:
                raise CorpusError(f"sentence {sent.doc_index} token {tok.index} has no character offsets")
            if tok.start < end and start < tok.end:
                hits.append((sent.doc_index, tok.index))
    if not hits or len({s for s, _ in hits}) != 1:
        return None
    return hits[0][0], min(i for _, i in hits), max(i for _, i in hits)


def attach_offsets(sentences: Sequence[Sentence], txt: str) -> None:
    """Fill missing token offsets by locating each form in ``txt`` left to right."""
    cursor = 0
    for sent in sentences:
        for tok in sent.tokens:
            if tok.start is not None and tok.end is not None:
                cursor = max(cursor, tok.end)
                continue
            at = txt.find(tok.form, cursor)
            if at < 0:
                raise CorpusError(f"sentence {sent.doc_index} token {tok.index} {tok.form!r} not found in text after offset {cursor}")
            tok.start, tok.end = at, at + len(tok.form)
            cursor = tok.end


def import_standoff(doc_id: str, txt: str, a1: str, a2: str, sentences: List[Sentence]) -> Document:
    attach_offsets(sentences, txt)
    entities = list(_standoff_entities(a1.splitlines()))
    entities += list(_standoff_entities(a2.splitlines()))
    mentions = []
    for ent_id, etype, start, end in entities:
        if not 0 <= start < end <= len(txt):
            raise CorpusError(f"document {doc_id}: entity {ent_id} offsets {start}-{end} outside text")
        aligned = align_span(sentences, start, end)
        if aligned is None:
            raise CorpusError(
                f"document {doc_id}: entity {ent_id} [{start},{end}) cannot be covered by tokens of one sentence"
            )
        mentions.append(EntityMention(ent_id, aligned[0], aligned[1], aligned[2], etype))
    known = {m.id for m in mentions}
    relations = []
    for label, e1, e2 in _standoff_relations(a2.splitlines()):
        for arg in (e1, e2):
            if arg not in known:
                raise CorpusError(f"document {doc_id}: relation {label} has dangling argument {arg}")
        relations.append(RelationInstance(e1, e2, label))
    doc = Document(doc_id, sentences, mentions, relations, txt)
    validate_document(doc)
    return doc


# ---------------------------------------------------------------------------
# canonical JSONL

_TOKEN_SCHEMA = {
    "type": "object",
    "required": ["form", "pos", "head", "deprel"],
    "properties": {
        "form": {"type": "string"},
        "pos": {"type": "string"},
        "head": {"type": "integer", "minimum": 0},
        "deprel": {"type": "string", "minLength": 1},
        "start": {"type": ["integer", "null"]},
        "end": {"type": ["integer", "null"]},
    },
}

DOCUMENT_SCHEMA = {
    "type": "object",
    "required": ["id", "sentences", "mentions", "relations"],
    "properties": {
        "id": {"type": "string"},
        "text": {"type": ["string", "null"]},
        "sentences": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["tokens"],
                "properties": {"tokens": {"type": "array", "items": _TOKEN_SCHEMA}},
            },
        },
        "mentions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "sentence", "first", "last", "etype"],
                "properties": {
                    "id": {"type": "string"},
                    "sentence": {"type": "integer"},
                    "first": {"type": "integer"},
                    "last": {"type": "integer"},
                    "etype": {"type": "string"},
                },
            },
        },
        "relations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["e1", "e2", "label"],
                "properties": {"e1": {"type": "string"}, "e2": {"type": "string"}, "label": {"type": "string"}},
            },
        },
    },
}


def document_from_record(rec: dict) -> Document:
    sentences = []
    for si, s in enumerate(rec["sentences"]):
        toks = [
            Token(ti, t["form"], t["pos"], t["head"], t["deprel"], t.get("start"), t.get("end"))
            for ti, t in enumerate(s["tokens"], start=1)
        ]
        sentences.append(Sentence(si, toks))
    mentions = [EntityMention(m["id"], m["sentence"], m["first"], m["last"], m["etype"]) for m in rec["mentions"]]
    relations = [RelationInstance(r["e1"], r["e2"], r["label"]) for r in rec["relations"]]
    return Document(rec["id"], sentences, mentions, relations, rec.get("text"))


def document_to_record(doc: Document) -> dict:
    rec = {
        "id": doc.id,
        "sentences": [
            {
                "tokens": [
                    {"form": t.form, "pos": t.pos, "head": t.head, "deprel": t.deprel, "start": t.start, "end": t.end}
                    for t in s.tokens
                ]
            }
            for s in doc.sentences
        ],
        "mentions": [
            {"id": m.id, "sentence": m.sentence, "first": m.first, "last": m.last, "etype": m.etype}
            for m in doc.mentions
        ],
        "relations": [{"e1": r.e1, "e2": r.e2, "label": r.label} for r in doc.relations],
    }
    if doc.text is not None:
        rec["text"] = doc.text
    return rec


def load_jsonl(lines: Iterable[str]) -> List[Document]:
    validator = jsonschema.Draft7Validator(DOCUMENT_SCHEMA)
    docs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON: {exc.msg}", lineno) from None
        err = next(iter(validator.iter_errors(rec)), None)
        if err is not None:
            where = "/".join(str(p) for p in err.absolute_path) or "<record>"
            raise CorpusError(f"schema violation at {where}: {err.message}", lineno)
        doc = document_from_record(rec)
        try:
            validate_document(doc)
        except CorpusError as exc:
            raise CorpusError(exc.message, lineno) from None
        docs.append(doc)
    return docs


def dump_jsonl(docs: Iterable[Document]) -> str:
    return "".join(json.dumps(document_to_record(d), ensure_ascii=False) + "\n" for d in docs)


# ---------------------------------------------------------------------------
# candidates, sampling, splits


def _within(distance: int, k_max: Optional[float]) -> bool:
    return k_max is None or distance <= k_max


def generate_candidates(doc: Document, k_max: Optional[float], schema: RelationSchema) -> List[CandidatePair]:
    """Ordered, schema-typed mention pairs no more than ``k_max`` sentences apart.

    ``k_max=None`` (or ``math.inf``) means unbounded.
    """
    if k_max is not None and k_max < 0:
        raise ValueError("k_max must be >= 0")
    gold: Dict[Tuple[str, str], str] = {}
    for rel in sorted(doc.relations, key=lambda r: r.label):
        gold.setdefault((rel.e1, rel.e2), rel.label)
    order = sorted(doc.mentions, key=lambda m: (m.sentence, m.first, m.last, m.id))
    out = []
    for m1 in order:
        for m2 in order:
            if m1.id == m2.id or not schema.admits(m1.etype, m2.etype):
                continue
            dist = abs(m2.sentence - m1.sentence)
            if not _within(dist, k_max):
                continue
            out.append(CandidatePair(doc.id, m1.id, m2.id, gold.get((m1.id, m2.id), NONE_LABEL), dist))
    return out


def corpus_candidates(docs: Iterable[Document], k_max: Optional[float], schema: RelationSchema) -> List[CandidatePair]:
    return [c for d in docs for c in generate_candidates(d, k_max, schema)]


def sample_negatives(candidates: Sequence[CandidatePair], seed: int) -> List[CandidatePair]:
    """Keep every positive and as many uniformly drawn NONE pairs as there are positives."""
    pos_idx = [i for i, c in enumerate(candidates) if c.is_positive]
    neg_idx = [i for i, c in enumerate(candidates) if not c.is_positive]
    n_keep = min(len(pos_idx), len(neg_idx))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(neg_idx), size=n_keep, replace=False) if n_keep else []
    keep = set(pos_idx) | {neg_idx[j] for j in chosen}
    return [c for i, c in enumerate(candidates) if i in keep]


def _split_sizes(n: int, ratios: Sequence[float]) -> List[int]:
    raw = [r * n for r in ratios]
    sizes = [math.floor(x) for x in raw]
    short = n - sum(sizes)
    by_remainder = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in by_remainder[:short]:
        sizes[i] += 1
    return sizes


def split_corpus(docs: Sequence[Document], ratios: Sequence[float], seed: int) -> Tuple[List[Document], ...]:
    """Document-level seeded partition into ``len(ratios)`` parts (train/dev/test)."""
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be non-negative and sum to 1, got {tuple(ratios)}")
    nonzero = sum(1 for r in ratios if r > 0)
    if len(docs) < nonzero:
        raise ValueError(f"cannot split {len(docs)} documents into {nonzero} non-empty parts")
    sizes = _split_sizes(len(docs), ratios)
    perm = np.random.default_rng(seed).permutation(len(docs))
    parts: List[List[int]] = []
    offset = 0
    for size in sizes:
        parts.append(sorted(perm[offset : offset + size].tolist()))
        offset += size
    return tuple([docs[i] for i in part] for part in parts)


def cross_validation_folds(docs: Sequence[Document], n_folds: int, seed: int):
    """Yield ``(train, test)`` document lists for seeded n-fold cross-validation."""
    if n_folds < 2 or len(docs) < n_folds:
        raise ValueError(f"need at least {n_folds} documents and n_folds >= 2")
    perm = np.random.default_rng(seed).permutation(len(docs))
    fold_of = np.empty(len(docs), dtype=int)
    fold_of[perm] = np.arange(len(docs)) % n_folds
    for f in range(n_folds):
        yield [d for i, d in enumerate(docs) if fold_of[i] != f], [d for i, d in enumerate(docs) if fold_of[i] == f]


def relation_counts(docs: Iterable[Document]) -> Dict[str, Dict[str, int]]:
    """Gold relation counts per label split into intra-/inter-sentential."""
    counts: Dict[str, Dict[str, int]] = {}
    for doc in docs:
        by_id = doc.mention_index
        for rel in doc.relations:
            row = counts.setdefault(rel.label, {"intra": 0, "inter": 0})
            same = by_id[rel.e1].sentence == by_id[rel.e2].sentence
            row["intra" if same else "inter"] += 1
    return counts
