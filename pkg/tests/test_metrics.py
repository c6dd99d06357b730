import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from jointslu.metrics import (
    EvalReport,
    bio_spans,
    evaluate_predictions,
    intent_accuracy,
    overall_accuracy,
    slot_f1,
)


def test_intent_accuracy_set_semantics():
    assert intent_accuracy([{"A", "B"}], [{"B", "A"}]) == 1.0
    assert intent_accuracy([{"A"}], [{"A", "B"}]) == 0.0
    assert intent_accuracy([{"A"}, {"B"}], [{"A"}, {"C"}]) == 0.5
    assert intent_accuracy([], []) == 0.0


def test_span_extraction():
    assert bio_spans(["B-x", "I-x", "O", "B-y"]) == [(0, 1, "x"), (3, 3, "y")]
    assert bio_spans(["I-x", "I-x"]) == [(0, 1, "x")]
    assert bio_spans(["B-x", "I-y"]) == [(0, 0, "x"), (1, 1, "y")]
    assert bio_spans(["O", "O"]) == []


def test_slot_f1_examples():
    gold = [["B-x", "I-x", "O"]]
    assert slot_f1(gold, gold) == (1.0, 1.0, 1.0)
    assert slot_f1([["O", "O", "O"]], gold) == (0.0, 0.0, 0.0)
    assert slot_f1([["B-x", "O", "O"]], gold) == (0.0, 0.0, 0.0)
    # token-level diagnostic gives partial credit for the same pair
    p, r, f = slot_f1([["B-x", "O", "O"]], gold, token_level=True)
    assert (p, r) == (1.0, 0.5) and f == pytest.approx(2 / 3)


def test_slot_f1_hand_counts():
    pred = [["B-a", "I-a", "B-b"], ["O", "B-c"]]
    gold = [["B-a", "I-a", "O"], ["B-c", "I-c"]]
    p, r, f = slot_f1(pred, gold)
    assert p == pytest.approx(1 / 3) and r == pytest.approx(1 / 2) and f == pytest.approx(0.4)


def test_overall_accuracy():
    gi = [{"A"}, {"A", "B"}]
    gs = [["O", "B-x"], ["B-y"]]
    assert overall_accuracy(gi, gi, gs, gs) == 1.0
    assert overall_accuracy(gi, gi, [["O", "O"], ["B-y"]], gs) == 0.5
    assert overall_accuracy([{"A"}, {"A"}], gi, gs, gs) == 0.5


def test_report_text_and_json_agree():
    rep = evaluate_predictions([{"A"}, {"B"}], [{"A"}, {"A"}], [["B-x"], ["O"]], [["B-x"], ["B-x"]])
    data = json.loads(rep.to_json())
    assert data["overall_acc"] == 0.5 and data["gold_spans"] == 2 and data["matched_spans"] == 1
    text = dict(line.split() for line in rep.to_text().splitlines())
    for k, v in data.items():
        assert float(text[k]) == pytest.approx(v, abs=5e-5)
    assert EvalReport(**data) == rep


_tags = st.lists(st.sampled_from(["O", "B-x", "I-x", "B-y", "I-y", "I-z"]), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(_tags)
def test_span_extraction_matches_conlleval_rules(tags):
    assert set(bio_spans(tags)) == oracles.chunks(tags)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(_tags, _tags), min_size=1, max_size=6), st.randoms())
def test_corpus_properties(pairs, rnd):
    pred = [p[: len(g)] + ["O"] * (len(g) - len(p)) for p, g in pairs]
    gold = [g for _, g in pairs]
    intents = [{rnd.choice("AB")} for _ in pairs]
    gold_intents = [{rnd.choice("AB")} for _ in pairs]
    rep = evaluate_predictions(intents, gold_intents, pred, gold)
    assert rep.overall_acc <= rep.intent_acc
    assert 0.0 <= rep.slot_f1 <= 1.0
    order = list(range(len(pred)))
    random.Random(0).shuffle(order)
    assert slot_f1([pred[i] for i in order], [gold[i] for i in order]) == slot_f1(pred, gold)
