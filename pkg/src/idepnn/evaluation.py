"""Sentence-range stratified scoring, ensembling and confidence filtering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .corpus import NONE_LABEL, CandidatePair
from .sequence import Prediction

Key = Tuple[str, str, str]


class EvaluationError(ValueError):
    pass


def _prf(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class LabelScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def prf(self) -> Tuple[float, float, float]:
        return _prf(self.tp, self.fp, self.fn)


@dataclass
class EvalReport:
    per_label: Dict[str, LabelScore]
    eval_k: Optional[int] = None
    train_k: Optional[int] = None
    model: Optional[str] = None

    @property
    def macro(self) -> Tuple[float, float, float]:
        """Unweighted means of per-label P, R and F1 over the positive labels."""
        if not self.per_label:
            return 0.0, 0.0, 0.0
        scores = [s.prf for s in self.per_label.values()]
        n = len(scores)
        return tuple(sum(s[i] for s in scores) / n for i in range(3))

    @property
    def pr(self) -> int:
        return sum(s.tp + s.fp for s in self.per_label.values())

    def totals(self) -> Tuple[int, int, int]:
        s = self.per_label.values()
        return sum(x.tp for x in s), sum(x.fp for x in s), sum(x.fn for x in s)

    def to_dict(self) -> dict:
        p, r, f = self.macro
        return {
            "train_k": self.train_k,
            "eval_k": self.eval_k,
            "pr": self.pr,
            "macro": {"p": p, "r": r, "f1": f},
            "per_label": {
                lab: dict(zip(("tp", "fp", "fn", "p", "r", "f1"), (s.tp, s.fp, s.fn, *s.prf)))
                for lab, s in sorted(self.per_label.items())
            },
        }


def filter_by_k(candidates: Iterable[CandidatePair], k: Optional[int]) -> List[CandidatePair]:
    if k is None:
        return list(candidates)
    if k < 0:
        raise ValueError("k must be >= 0")
    return [c for c in candidates if c.sentence_distance <= k]


def evaluate(
    predictions: Iterable[Prediction],
    gold: Sequence[CandidatePair],
    k: Optional[int] = None,
    labels: Optional[Iterable[str]] = None,
    train_k: Optional[int] = None,
) -> EvalReport:
    """Score ``predictions`` against the gold candidates within sentence range ``k``.

    Candidates without a prediction count as predicted NONE. Predictions on
    candidates outside range ``k`` are ignored; predictions on candidates
    absent from ``gold`` altogether are an error.
    """
    universe = {c.key: c for c in gold}
    kept = {c.key for c in filter_by_k(gold, k)}
    predicted: Dict[Key, str] = {}
    for pred in predictions:
        key = tuple(pred.candidate)
        if key not in universe:
            raise EvaluationError(f"prediction for unknown candidate {key}")
        if key in kept:
            predicted[key] = pred.label
    label_set: Set[str] = set(labels or ())
    label_set |= {universe[k_].label for k_ in kept} | set(predicted.values())
    label_set.discard(NONE_LABEL)
    per_label = {lab: LabelScore() for lab in sorted(label_set)}
    for key in kept:
        g = universe[key].label
        p = predicted.get(key, NONE_LABEL)
        if p == g:
            if g != NONE_LABEL:
                per_label[g].tp += 1
            continue
        if p != NONE_LABEL:
            per_label[p].fp += 1
        if g != NONE_LABEL:
            per_label[g].fn += 1
    return EvalReport(per_label, eval_k=k, train_k=train_k)


def ensemble(prediction_sets: Sequence[Sequence[Prediction]], universe: Optional[Set[Key]] = None) -> List[Prediction]:
    """Union of positive predictions across models.

    Conflicting positive labels go to the more probable prediction (earlier model
    on ties); the kept probability is the highest among models agreeing on it.
    """
    if universe is not None:
        for i, preds in enumerate(prediction_sets):
            for pred in preds:
                if tuple(pred.candidate) not in universe:
                    raise EvaluationError(f"model {i} predicts candidate {pred.candidate} outside the shared universe")
    votes: Dict[Key, List[Prediction]] = {}
    for preds in prediction_sets:
        for pred in preds:
            if pred.label != NONE_LABEL:
                votes.setdefault(tuple(pred.candidate), []).append(pred)
    out = []
    for key, preds in votes.items():
        best = preds[0]
        for p in preds[1:]:
            if p.probability > best.probability:
                best = p
        prob = max(p.probability for p in preds if p.label == best.label)
        out.append(Prediction(best.label, prob, best.distribution, key))
    return out


def threshold_filter(predictions: Iterable[Prediction], p_min: float) -> List[Prediction]:
    if not 0.0 <= p_min <= 1.0:
        raise ValueError("p_min must lie in [0, 1]")
    return [p for p in predictions if p.probability >= p_min]


def _flatten(reports) -> List[EvalReport]:
    flat: List[EvalReport] = []
    for item in reports:
        if isinstance(item, EvalReport):
            flat.append(item)
        else:
            flat.extend(item)
    return flat


def _k(k: Optional[int]) -> str:
    return "inf" if k is None else f"<={k}" if k else "0"


def report(reports: Sequence[Union[EvalReport, Sequence[EvalReport]]]) -> Tuple[str, str]:
    """Aligned text table and JSON list for a train-k x eval-k grid, row-major."""
    flat = _flatten(reports)
    header = ("model", "train_k", "eval_k", "pr", "P", "R", "F1")
    rows = []
    for rep in flat:
        p, r, f = rep.macro
        rows.append((rep.model or "-", _k(rep.train_k), _k(rep.eval_k), str(rep.pr), f"{p:.3f}", f"{r:.3f}", f"{f:.3f}"))
    text = ""
    if rows:
        widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
        text = "\n".join(lines) + "\n"
    return text, json.dumps([rep.to_dict() for rep in flat], indent=2, sort_keys=True)


def counts_tsv(reports: Sequence[Union[EvalReport, Sequence[EvalReport]]]) -> str:
    """TP/FP/FN per (train k, eval k) cell, for bar plots of false positives by range."""
    lines = ["model\ttrain_k\teval_k\ttp\tfp\tfn"]
    for rep in _flatten(reports):
        tp, fp, fn = rep.totals()
        lines.append(f"{rep.model or '-'}\t{_k(rep.train_k)}\t{_k(rep.eval_k)}\t{tp}\t{fp}\t{fn}")
    return "\n".join(lines) + "\n"
