"""Samples, dataset-file ingestion, label indexing and a synthetic corpus.

Dataset files use the MixATIS/MixSNIPS block layout::

    list O
    flights O
    to O
    dallas B-toloc.city_name
    atis_flight#atis_airfare

one ``token tag`` line per word, then the '#'-joined intent line, then a
blank line.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

UNK = "<unk>"
_TAG_RE = re.compile(r"^(O|[BI]-\S+)$")


class DatasetParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Sample:
    tokens: tuple[str, ...]
    slot_tags: tuple[str, ...]
    intents: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "slot_tags", tuple(self.slot_tags))
        object.__setattr__(self, "intents", frozenset(self.intents))
        if not self.tokens:
            raise ValueError("a sample needs at least one token")
        if len(self.tokens) != len(self.slot_tags):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.slot_tags)} slot tags"
            )
        for tag in self.slot_tags:
            if not _TAG_RE.match(tag):
                raise ValueError(f"malformed slot tag {tag!r}")
        if not self.intents:
            raise ValueError("a sample needs at least one intent")

    def __len__(self):
        return len(self.tokens)


def validate_sample(sample: Sample) -> list[str]:
    """Soft BIO checks. Returns one message per I- tag that does not continue
    a span of the same type; the sample itself is left untouched."""
    issues = []
    prev = "O"
    for i, tag in enumerate(sample.slot_tags):
        if tag.startswith("I-") and prev[2:] != tag[2:]:
            issues.append(f"token {i}: {tag} does not continue a {tag[2:]} span")
        prev = tag
    return issues


def parse_dataset(text: str, lowercase: bool = False) -> list[Sample]:
    samples: list[Sample] = []
    block: list[tuple[int, str]] = []

    def flush():
        if not block:
            return
        *word_lines, (intent_no, intent_line) = block
        if len(intent_line.split()) != 1:
            raise DatasetParseError("expected a single '#'-joined intent field", intent_no)
        if not word_lines:
            raise DatasetParseError("empty block: no token lines before intents", intent_no)
        tokens, tags = [], []
        for no, line in word_lines:
            fields = line.split()
            if len(fields) != 2:
                raise DatasetParseError(
                    f"expected 'token slot_tag', got {len(fields)} field(s)", no
                )
            tok, tag = fields
            tokens.append(tok.lower() if lowercase else tok)
            tags.append(tag)
        intents = [s.strip() for s in intent_line.split("#") if s.strip()]
        try:
            samples.append(Sample(tokens, tags, intents))
        except ValueError as exc:
            raise DatasetParseError(str(exc), intent_no) from None
        block.clear()

    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            flush()
        else:
            block.append((no, line))
    flush()
    return samples


def read_dataset(path, lowercase: bool = False) -> list[Sample]:
    with open(path, encoding="utf-8") as f:
        return parse_dataset(f.read(), lowercase=lowercase)


def serialize_dataset(samples: Iterable[Sample]) -> str:
    out = []
    for s in samples:
        out.extend(f"{tok} {tag}" for tok, tag in zip(s.tokens, s.slot_tags))
        out.append("#".join(sorted(s.intents)))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def to_jsonl(samples: Iterable[Sample]) -> str:
    return "".join(
        json.dumps(
            {"tokens": list(s.tokens), "slots": list(s.slot_tags), "intents": sorted(s.intents)}
        )
        + "\n"
        for s in samples
    )


def from_jsonl(text: str) -> list[Sample]:
    samples = []
    for line in text.splitlines():
        if line.strip():
            rec = json.loads(line)
            samples.append(Sample(rec["tokens"], rec["slots"], rec["intents"]))
    return samples


# -- vocabularies ---------------------------------------------------------
class Index:
    """Dense bijection between strings and ids ``0..len-1``."""

    def __init__(self, items: Sequence[str]):
        self.items = list(items)
        self.ids = {s: i for i, s in enumerate(self.items)}
        if len(self.ids) != len(self.items):
            raise ValueError("duplicate entries in index")

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return item in self.ids

    def __eq__(self, other):
        return isinstance(other, Index) and self.items == other.items

    def id(self, item: str) -> int:
        return self.ids[item]

    def item(self, i: int) -> str:
        return self.items[i]


@dataclass(frozen=True)
class Vocabularies:
    word_index: Index
    slot_index: Index
    intent_index: Index
    lowercase: bool = False

    UNK_ID = 0

    @property
    def n_intents(self) -> int:
        return len(self.intent_index)

    @property
    def n_slots(self) -> int:
        return len(self.slot_index)

    def word_ids(self, tokens: Sequence[str]) -> list[int]:
        ids = self.word_index.ids
        if self.lowercase:
            tokens = [t.lower() for t in tokens]
        return [ids.get(t, self.UNK_ID) for t in tokens]

    def to_json(self) -> dict:
        return {
            "words": self.word_index.items,
            "slots": self.slot_index.items,
            "intents": self.intent_index.items,
            "lowercase": self.lowercase,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "Vocabularies":
        if rec["words"][0] != UNK:
            raise ValueError("word index must start with the UNK entry")
        return cls(Index(rec["words"]), Index(rec["slots"]), Index(rec["intents"]), rec.get("lowercase", False))


def build_vocab(samples: Sequence[Sample], lowercase: bool = False) -> Vocabularies:
    if not samples:
        raise ValueError("cannot build vocabularies from an empty sample list")
    words, slots, intents = set(), set(), set()
    for s in samples:
        words.update(t.lower() if lowercase else t for t in s.tokens)
        slots.update(s.slot_tags)
        intents.update(s.intents)
    words.discard(UNK)
    return Vocabularies(
        Index([UNK] + sorted(words)), Index(sorted(slots)), Index(sorted(intents)), lowercase
    )


@dataclass(frozen=True)
class EncodedSample:
    word_ids: np.ndarray
    slot_ids: np.ndarray
    intent_multi_hot: np.ndarray
    slot_one_hots: np.ndarray
    sample: Sample | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.word_ids)


def encode_sample(s: Sample, v: Vocabularies) -> EncodedSample:
    unknown = [t for t in s.slot_tags if t not in v.slot_index]
    if unknown:
        raise KeyError(f"unknown slot label(s) {sorted(set(unknown))}")
    unknown = [i for i in s.intents if i not in v.intent_index]
    if unknown:
        raise KeyError(f"unknown intent label(s) {sorted(unknown)}")
    slot_ids = np.array([v.slot_index.id(t) for t in s.slot_tags], dtype=np.int64)
    multi_hot = np.zeros(v.n_intents)
    multi_hot[[v.intent_index.id(i) for i in s.intents]] = 1.0
    one_hots = np.zeros((len(s), v.n_slots))
    one_hots[np.arange(len(s)), slot_ids] = 1.0
    return EncodedSample(
        np.array(v.word_ids(s.tokens), dtype=np.int64), slot_ids, multi_hot, one_hots, s
    )


# -- synthetic corpus -----------------------------------------------------
_VERBS = ["book", "find", "play", "show", "set", "add", "check", "rate", "get", "search"]
_FILLER = ["please", "the", "a", "me", "for", "now", "some"]


def _templates(n_templates: int) -> list[dict]:
    out = []
    for k in range(n_templates):
        verb = _VERBS[k % len(_VERBS)] + ("" if k < len(_VERBS) else str(k // len(_VERBS)))
        out.append(
            {
                "intent": f"intent_{k}",
                "trigger": verb,
                "slot": f"slot{k}",
                "values": [[f"v{k}a"], [f"v{k}b", f"v{k}c"], [f"v{k}d", f"v{k}e", f"v{k}f"]],
            }
        )
    return out


def generate_synthetic(n_templates: int, n_samples: int, seed: int) -> list[Sample]:
    """Utterances of 1-3 clauses; each clause is an intent trigger word,
    optional filler and a B-/I- tagged value span tied to that intent."""
    if n_templates < 2:
        raise ValueError("need at least two templates")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = random.Random(seed)
    templates = _templates(n_templates)
    samples = []
    for _ in range(n_samples):
        k = rng.choices([1, 2, 3], weights=[0.45, 0.4, 0.15])[0]
        chosen = rng.sample(templates, min(k, n_templates))
        tokens, tags = [], []
        for ci, t in enumerate(chosen):
            if ci:
                tokens.append("and")
                tags.append("O")
            tokens.append(t["trigger"])
            tags.append("O")
            if rng.random() < 0.5:
                tokens.append(rng.choice(_FILLER))
                tags.append("O")
            value = rng.choice(t["values"])
            for vi, word in enumerate(value):
                tokens.append(word)
                tags.append(("B-" if vi == 0 else "I-") + t["slot"])
        samples.append(Sample(tokens, tags, [t["intent"] for t in chosen]))
    return samples
