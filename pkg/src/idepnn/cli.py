"""Command-line entry point: ``idepnn <command> ...``.

Exit codes: 0 success, 2 usage/config/data error, 3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .corpus import (
    CorpusError,
    Document,
    RelationSchema,
    corpus_candidates,
    dump_jsonl,
    import_standoff,
    load_jsonl,
    parse_conllu_documents,
    relation_counts,
    sample_negatives,
    validate_document,
)
from .depgraph import GraphError, build_document_graph, describe_path, mention_node, shortest_path, to_dot
from .evaluation import EvaluationError, counts_tsv, ensemble, evaluate, report, threshold_filter
from .features import EmbeddingError, load_embeddings
from .model import VARIANTS, ModelConfig
from .sequence import Prediction
from .serialization import ModelFormatError, load_model, save_model
from .synthetic import FixtureSpec, generate_corpus
from .trainer import TrainingError, grad_check, predict_candidates, train

log = logging.getLogger("idepnn")

EXIT_OK, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3
DATA_ERRORS = (
    CorpusError,
    GraphError,
    EvaluationError,
    EmbeddingError,
    TrainingError,
    ModelFormatError,
    tomllib.TOMLDecodeError,
    OSError,
    ValueError,
)


class InvariantFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# run configuration


def parse_k(value) -> Optional[int]:
    """``inf``/``none``/absent mean no sentence-range limit."""
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return None
    if isinstance(value, str):
        if value.lower() in ("inf", "none", "all"):
            return None
        value = int(value)
    if isinstance(value, bool) or int(value) != value or value < 0:
        raise ValueError(f"sentence range k must be a non-negative integer or 'inf', got {value!r}")
    return int(value)


@dataclass
class RunConfig:
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    embeddings: Optional[str] = None
    model_out: Optional[str] = None
    log: Optional[str] = None
    balance_negatives: bool = True
    k_eval: List[Optional[int]] = field(default_factory=lambda: [0, 1, 2, 3])
    thresholds: List[float] = field(default_factory=list)
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self, need: Sequence[str] = ()) -> None:
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"run config needs '{name}'")
        for name in ("train", "dev", "test", "embeddings"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise ValueError(f"{name} path does not exist: {path}")
        for p in self.thresholds:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"threshold {p} outside [0, 1]")


def load_run_config(path: Optional[str]) -> RunConfig:
    """Read a TOML run file with ``[data]``, ``[model]`` and ``[eval]`` tables."""
    raw: dict = {}
    if path:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    unknown = set(raw) - {"data", "model", "eval"}
    if unknown:
        raise ValueError(f"unknown config tables {sorted(unknown)}")
    base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    data = dict(raw.get("data", {}))
    for key in ("train", "dev", "test", "embeddings", "model_out", "log"):
        if key in data:
            data[key] = os.path.join(base, data[key])
    model = dict(raw.get("model", {}))
    if "k_train" in model:
        model["k_train"] = parse_k(model["k_train"])
    if "features" in model:
        model["features"] = tuple(model["features"])
    ev = dict(raw.get("eval", {}))
    if "k_eval" in ev:
        ev["k_eval"] = [parse_k(k) for k in ev["k_eval"]]
    fields = {f.name for f in dataclasses.fields(RunConfig)} - {"model"}
    extra = (set(data) | set(ev)) - fields
    if extra:
        raise ValueError(f"unknown config keys {sorted(extra)}")
    return RunConfig(**data, **ev, model=ModelConfig.from_dict(model))


# ---------------------------------------------------------------------------
# I/O helpers


def read_corpus(path: str) -> List[Document]:
    with open(path, encoding="utf-8") as fh:
        return load_jsonl(fh)


def write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


PRED_HEADER = "doc_id\te1\te2\tlabel\tprobability"


def predictions_tsv(preds: Sequence[Prediction]) -> str:
    lines = [PRED_HEADER]
    for p in preds:
        lines.append("\t".join([*p.candidate, p.label, repr(float(p.probability))]))
    return "\n".join(lines) + "\n"


def read_predictions(path: str) -> List[Prediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != PRED_HEADER:
            raise ValueError(f"{path}:1: not a prediction file")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            out.append(Prediction(parts[3], float(parts[4]), np.array([]), tuple(parts[:3])))
    return out


def _read_optional(path: str) -> str:
    if not os.path.exists(path):
        return ""
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _counts_summary(docs: Sequence[Document]) -> str:
    n_sent = sum(len(d.sentences) for d in docs)
    n_ment = sum(len(d.mentions) for d in docs)
    n_rel = sum(len(d.relations) for d in docs)
    lines = [f"documents={len(docs)} sentences={n_sent} mentions={n_ment} relations={n_rel}"]
    lines.append("label\tintra\tinter")
    for label, c in sorted(relation_counts(docs).items()):
        lines.append(f"{label}\t{c['intra']}\t{c['inter']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    if args.synthetic is not None:
        docs = generate_corpus(FixtureSpec(num_docs=args.synthetic, seed=args.seed))
    else:
        if not args.conllu:
            raise ValueError("ingest needs --conllu or --synthetic")
        docs = []
        for path in args.conllu:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            stem = os.path.splitext(os.path.basename(path))[0]
            try:
                parsed = parse_conllu_documents(text, default_id=stem)
            except CorpusError as exc:
                where = f"{path}:{exc.line}" if exc.line is not None else path
                raise CorpusError(f"{where}: {exc.message}") from None
            for doc_id, sentences in parsed:
                if args.standoff:
                    base = os.path.join(args.standoff, doc_id)
                    parts = [_read_optional(base + ext) for ext in (".txt", ".a1", ".a2")]
                    if not parts[0]:
                        raise CorpusError(f"{base}.txt: missing text for document {doc_id}")
                    doc = import_standoff(doc_id, parts[0], parts[1], parts[2], sentences)
                else:
                    doc = Document(doc_id, sentences)
                validate_document(doc)
                docs.append(doc)
    write_text(args.output, dump_jsonl(docs))
    # keep stdout clean when it carries the corpus
    summary = sys.stderr if args.output in (None, "-") else sys.stdout
    summary.write(_counts_summary(docs))
    return EXIT_OK


def cmd_candidates(args) -> int:
    docs = read_corpus(args.corpus)
    schema = RelationSchema.infer(docs)
    cands = corpus_candidates(docs, parse_k(args.k_eval), schema)
    if args.balance:
        cands = sample_negatives(cands, args.seed)
    lines = ["doc_id\te1\te2\tlabel\tdistance"]
    lines += [f"{c.doc_id}\t{c.e1}\t{c.e2}\t{c.label}\t{c.sentence_distance}" for c in cands]
    write_text(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    m = run.model
    if getattr(args, "variant", None):
        m = dataclasses.replace(m, variant=args.variant)
    if getattr(args, "k_train", None) is not None:
        m = dataclasses.replace(m, k_train=parse_k(args.k_train))
    if getattr(args, "seed", None) is not None:
        m = dataclasses.replace(m, seed=args.seed)
    if getattr(args, "max_epochs", None) is not None:
        m = dataclasses.replace(m, max_epochs=args.max_epochs)
    run.model = m
    for name in ("train", "dev", "test", "embeddings", "model_out", "log"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(run, name, value)
    if getattr(args, "k_eval", None):
        run.k_eval = [parse_k(k) for k in args.k_eval]
    if getattr(args, "threshold", None):
        run.thresholds = list(args.threshold)
    return run


def cmd_train(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args)
    run.validate(need=("train", "model_out"))
    cfg = run.model
    train_docs = read_corpus(run.train)
    dev_docs = read_corpus(run.dev) if run.dev else []
    schema = RelationSchema.infer(train_docs)
    train_c = corpus_candidates(train_docs, cfg.k_train, schema)
    if run.balance_negatives:
        train_c = sample_negatives(train_c, cfg.seed)
    dev_c = corpus_candidates(dev_docs, cfg.k_train, schema)
    pretrained = None
    if run.embeddings:
        with open(run.embeddings, encoding="utf-8") as fh:
            pretrained = load_embeddings(fh, cfg.word_dim, cfg.seed)

    rows = ["epoch\ttrain_loss\tdev_loss\tdev_f1"]

    def on_epoch(row: dict) -> None:
        rows.append(f"{row['epoch']}\t{row['train_loss']:.6f}\t{row['dev_loss']:.6f}\t{row['dev_f1']:.4f}")
        if run.log is None:
            print(rows[-1], flush=True)

    model = train(train_c, dev_c, cfg, train_docs + dev_docs, pretrained, schema.labels, on_epoch)
    model.metadata["schema"] = {lab: list(t) for lab, t in sorted(schema.roles.items())}
    if run.log:
        write_text(run.log, "\n".join(rows) + "\n")
    save_model(model, run.model_out)
    md = model.metadata
    print(
        f"model={run.model_out} variant={cfg.variant} epochs={md['epochs_run']} best_epoch={md['best_epoch']} "
        f"best_dev_f1={md['best_dev_f1']:.4f} skipped_train={md['skipped_train']}"
    )
    return EXIT_OK


def _load_models(paths: Sequence[str]):
    models = [load_model(p) for p in paths]
    labels = {frozenset(m.labels) for m in models}
    if len(labels) > 1:
        raise EvaluationError(f"models disagree on the label universe: {sorted(sorted(s) for s in labels)}")
    return models


def _schema(models, docs: Sequence[Document]) -> RelationSchema:
    """Schema stored with the models; falls back to the corpus gold relations."""
    roles: dict = {}
    for m in models:
        roles.update(m.metadata.get("schema", {}))
    if not roles:
        return RelationSchema.infer(docs)
    return RelationSchema(roles)


def cmd_predict(args) -> int:
    (model,) = _load_models([args.model])
    docs = read_corpus(args.corpus)
    schema = _schema([model], docs)
    cands = corpus_candidates(docs, parse_k(args.k_eval), schema)
    preds = predict_candidates(model, docs, cands)
    if args.threshold is not None:
        preds = threshold_filter(preds, args.threshold)
    write_text(args.output, predictions_tsv(preds))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    sets = [read_predictions(p) for p in args.predictions]
    universes = [{tuple(p.candidate) for p in s} for s in sets]
    if args.strict and any(u != universes[0] for u in universes[1:]):
        raise EvaluationError("prediction files cover different candidate sets")
    merged = ensemble(sets)
    merged.sort(key=lambda p: p.candidate)
    write_text(args.output, predictions_tsv(merged))
    return EXIT_OK


def cmd_eval(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args)
    corpus = args.corpus or run.test
    if corpus is None:
        raise ValueError("eval needs --corpus or [data].test")
    docs = read_corpus(corpus)
    models = _load_models(args.model)
    schema = _schema(models, docs)
    gold = corpus_candidates(docs, None, schema)
    universe = {c.key for c in gold}
    preds = [predict_candidates(m, docs, gold) for m in models]
    reports = []
    names = [os.path.basename(p) for p in args.model]
    for name, model, ps in zip(names, models, preds):
        row = []
        for k in run.k_eval:
            rep = evaluate(ps, gold, k, schema.labels, model.config.k_train)
            rep.model = name
            row.append(rep)
        reports.append(row)
    if len(models) > 1 or args.ensemble:
        merged = ensemble(preds, universe)
        reports.append([_named(evaluate(merged, gold, k, schema.labels), "ensemble") for k in run.k_eval])
        base = merged
    else:
        base = preds[0]
    for p_min in run.thresholds:
        kept = threshold_filter(base, p_min)
        reports.append([_named(evaluate(kept, gold, k, schema.labels), f"p>={p_min:g}") for k in run.k_eval])
    text, js = report(reports)
    sys.stdout.write(text)
    if args.out:
        write_text(args.out + ".txt", text)
        write_text(args.out + ".json", js + "\n")
        write_text(args.out + ".counts.tsv", counts_tsv(reports))
    return EXIT_OK


def _named(rep, name):
    rep.model = name
    return rep


def cmd_gradcheck(args) -> int:
    components = ["recursive", "sequence", "model"] if args.component == "all" else [args.component]
    failed = False
    for comp in components:
        cfg = ModelConfig(variant=args.variant)
        err = grad_check(cfg, args.cases, args.epsilon, comp, args.seed)
        ok = err < args.tolerance
        failed |= not ok
        label = f"{comp}({args.variant})" if comp == "model" else comp
        print(f"{label}\tcases={args.cases}\tmax_rel_err={err:.3e}\t{'PASS' if ok else 'FAIL'}")
    if failed:
        raise InvariantFailure("analytic and numeric gradients disagree")
    return EXIT_OK


def cmd_inspect(args) -> int:
    docs = {d.id: d for d in read_corpus(args.corpus)}
    if args.doc not in docs:
        raise CorpusError(f"unknown document id {args.doc!r}")
    doc = docs[args.doc]
    ids = {m.id for m in doc.mentions}
    for mid in (args.e1, args.e2):
        if mid not in ids:
            raise CorpusError(f"unknown mention id {mid!r} in document {args.doc}")
    graph = build_document_graph(doc)
    a, b = mention_node(doc, doc.mention(args.e1)), mention_node(doc, doc.mention(args.e2))
    path = shortest_path(graph, a, b)
    print(describe_path(graph, path))
    print(f"length={len(path.nodes)} nexts_crossings={path.nexts_crossings}")
    if args.dot:
        write_text(args.dot, to_dot(graph, path, doc.id))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idepnn", description="Inter-sentential dependency-path relation extraction.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="CoNLL-U (+ standoff) or synthetic corpus to canonical JSONL")
    s.add_argument("--conllu", nargs="*", default=[], help="CoNLL-U files; '# newdoc id = X' starts a document")
    s.add_argument("--standoff", help="directory with <doc>.txt/.a1/.a2 annotation files")
    s.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic documents instead")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", help="JSONL output (default stdout)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("candidates", help="list typed candidate pairs within sentence range k")
    s.add_argument("--corpus", required=True)
    s.add_argument("--k-eval", default="inf", help="maximum sentence distance (default inf)")
    s.add_argument("--balance", action="store_true", help="downsample NONE pairs to the number of positives")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_candidates)

    s = sub.add_parser("train", help="train one model variant")
    s.add_argument("config", nargs="?", help="TOML run file")
    s.add_argument("--train")
    s.add_argument("--dev")
    s.add_argument("--embeddings")
    s.add_argument("--model-out", dest="model_out")
    s.add_argument("--log", help="TSV training log (default stdout)")
    s.add_argument("--variant", choices=VARIANTS)
    s.add_argument("--k-train")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-epochs", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="k-grid report for one or more models, with ensemble and thresholds")
    s.add_argument("config", nargs="?", help="TOML run file")
    s.add_argument("--model", nargs="+", required=True)
    s.add_argument("--corpus")
    s.add_argument("--k-eval", nargs="+")
    s.add_argument("--threshold", type=float, nargs="+")
    s.add_argument("--ensemble", action="store_true", help="also report the union of positive predictions")
    s.add_argument("--out", help="prefix for .txt/.json/.counts.tsv reports")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="predict labels for candidates in a corpus")
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--k-eval", default="inf")
    s.add_argument("--threshold", type=float)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("ensemble", help="union of positive predictions from several prediction files")
    s.add_argument("predictions", nargs="+")
    s.add_argument("--strict", action="store_true", help="require identical candidate sets")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    s.add_argument("--component", choices=("all", "recursive", "sequence", "model"), default="all")
    s.add_argument("--variant", choices=VARIANTS, default="iDepNN-ADP")
    s.add_argument("--cases", type=int, default=50)
    s.add_argument("--epsilon", type=float, default=1e-4)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("inspect", help="print and draw the dependency path between two mentions")
    s.add_argument("--corpus", required=True)
    s.add_argument("--doc", required=True)
    s.add_argument("--e1", required=True)
    s.add_argument("--e2", required=True)
    s.add_argument("--dot", help="write a Graphviz DOT file")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
