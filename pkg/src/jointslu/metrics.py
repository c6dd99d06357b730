"""Intent accuracy, span-level slot F1 and overall (frame) accuracy."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence


def bio_spans(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """(start, end_inclusive, type) spans of a BIO sequence.

    An I- tag that does not continue a span of its own type opens a new span,
    so arbitrary tag sequences never raise.
    """
    spans = []
    start, kind = None, None
    for i, tag in enumerate(list(tags) + ["O"]):
        if tag.startswith("B-") or tag == "O" or (tag.startswith("I-") and tag[2:] != kind):
            if start is not None:
                spans.append((start, i - 1, kind))
            start, kind = (i, tag[2:]) if tag != "O" else (None, None)
        elif not tag.startswith("I-"):
            # unknown tag scheme: treat like O
            if start is not None:
                spans.append((start, i - 1, kind))
            start, kind = None, None
    return spans


def intent_accuracy(preds: Iterable[Iterable[str]], golds: Iterable[Iterable[str]]) -> float:
    pairs = list(zip(preds, golds))
    if not pairs:
        return 0.0
    return sum(set(p) == set(g) for p, g in pairs) / len(pairs)


@dataclass
class SpanCounts:
    gold: int
    predicted: int
    matched: int

    @property
    def precision(self) -> float:
        return self.matched / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.matched / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def span_counts(pred_seqs, gold_seqs) -> SpanCounts:
    gold_n = pred_n = matched = 0
    for pred, gold in zip(pred_seqs, gold_seqs):
        ps, gs = Counter(bio_spans(pred)), Counter(bio_spans(gold))
        pred_n += sum(ps.values())
        gold_n += sum(gs.values())
        matched += sum((ps & gs).values())
    return SpanCounts(gold_n, pred_n, matched)


def token_counts(pred_seqs, gold_seqs) -> SpanCounts:
    """Token-level diagnostic: every non-O token is a unit."""
    gold_n = pred_n = matched = 0
    for pred, gold in zip(pred_seqs, gold_seqs):
        for p, g in zip(pred, gold):
            pred_n += p != "O"
            gold_n += g != "O"
            matched += p != "O" and p == g
    return SpanCounts(gold_n, pred_n, matched)


def slot_f1(pred_seqs, gold_seqs, token_level: bool = False) -> tuple[float, float, float]:
    c = token_counts(pred_seqs, gold_seqs) if token_level else span_counts(pred_seqs, gold_seqs)
    return c.precision, c.recall, c.f1


def overall_accuracy(pred_intents, gold_intents, pred_slots, gold_slots) -> float:
    rows = list(zip(pred_intents, gold_intents, pred_slots, gold_slots))
    if not rows:
        return 0.0
    ok = sum(set(pi) == set(gi) and list(ps) == list(gs) for pi, gi, ps, gs in rows)
    return ok / len(rows)


@dataclass
class EvalReport:
    intent_acc: float
    slot_f1: float
    slot_precision: float
    slot_recall: float
    overall_acc: float
    samples: int
    gold_spans: int
    predicted_spans: int
    matched_spans: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("intent_acc", f"{self.intent_acc:.4f}"),
            ("slot_f1", f"{self.slot_f1:.4f}"),
            ("slot_precision", f"{self.slot_precision:.4f}"),
            ("slot_recall", f"{self.slot_recall:.4f}"),
            ("overall_acc", f"{self.overall_acc:.4f}"),
            ("samples", str(self.samples)),
            ("gold_spans", str(self.gold_spans)),
            ("predicted_spans", str(self.predicted_spans)),
            ("matched_spans", str(self.matched_spans)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def evaluate_predictions(pred_intents, gold_intents, pred_slots, gold_slots) -> EvalReport:
    pred_intents, gold_intents = list(pred_intents), list(gold_intents)
    pred_slots, gold_slots = list(pred_slots), list(gold_slots)
    counts = span_counts(pred_slots, gold_slots)
    return EvalReport(
        intent_acc=intent_accuracy(pred_intents, gold_intents),
        slot_f1=counts.f1,
        slot_precision=counts.precision,
        slot_recall=counts.recall,
        overall_acc=overall_accuracy(pred_intents, gold_intents, pred_slots, gold_slots),
        samples=len(gold_intents),
        gold_spans=counts.gold,
        predicted_spans=counts.predicted,
        matched_spans=counts.matched,
    )
