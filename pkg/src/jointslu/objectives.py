"""Loss terms: supervised task losses, stage margin penalties, supervised
contrastive losses against labelled feature queues, and their combinations.

Label similarity between two label vectors is their inner product. Queued
features are plain arrays, so gradients flow only through the anchors.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

PROB_EPS = 1e-12


# -- supervised -----------------------------------------------------------
def intent_loss(gold: np.ndarray, probs0, probs1) -> Tensor:
    """Binary cross-entropy of both stages' token intent probabilities
    against the utterance multi-hot (broadcast to every token), summed."""
    gold = np.asarray(gold, dtype=np.float64)
    total = None
    for probs in (probs0, probs1):
        p = T.clip(T.as_tensor(probs), PROB_EPS, 1.0 - PROB_EPS)
        term = -(T.log(p) * gold + T.log(1.0 - p) * (1.0 - gold)).sum()
        total = term if total is None else total + term
    return total


def slot_loss(gold_one_hots: np.ndarray, probs0, probs1) -> Tensor:
    gold = np.asarray(gold_one_hots, dtype=np.float64)
    total = None
    for probs in (probs0, probs1):
        p = T.clip(T.as_tensor(probs), PROB_EPS, 1.0 - PROB_EPS)
        term = -(T.log(p) * gold).sum()
        total = term if total is None else total + term
    return total


def margin_penalty(gold: np.ndarray, probs0, probs1) -> Tensor:
    """Sum over gold-positive entries of ``max(0, stage1 - stage2)``.

    ``gold`` is either ``[n, N]`` or an utterance-level ``[N]`` vector that is
    broadcast over tokens.
    """
    diff = T.as_tensor(probs0) - T.as_tensor(probs1)
    return (T.relu(diff) * np.asarray(gold, dtype=np.float64)).sum()


def coguiding_objective(
    l_intent, l_slot, mp_intent, mp_slot, gamma: float = 0.9, beta_i: float = 1e-6, beta_s: float = 1.0
):
    return gamma * (l_intent + beta_i * mp_intent) + (1.0 - gamma) * (l_slot + beta_s * mp_slot)


def scl_objective(base, mi, sgmi, s, igs, eta_i: float = 0.1, eta_s: float = 0.01):
    return base + eta_i * (mi + sgmi) + eta_s * (s + igs)


# -- contrastive ----------------------------------------------------------
def cosine_sim(a, b, tau: float = 0.07) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity of a zero-norm vector")
    return float(a @ b / (na * nb * tau))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("queued feature with zero norm")
    return x / norms


def sentence_slot_vector(slot_one_hots: np.ndarray, o_id: int | None) -> np.ndarray:
    """Mean of the one-hots of non-O tokens; all-O utterances give zeros."""
    oh = np.asarray(slot_one_hots, dtype=np.float64)
    keep = np.ones(len(oh), dtype=bool) if o_id is None else oh[:, o_id] == 0
    if not keep.any():
        return np.zeros(oh.shape[1])
    return oh[keep].mean(axis=0)


def intent_queue_weights(anchor_label, queue_labels, anchor_ss=None, queue_ss=None, lam: float = 0.0) -> np.ndarray:
    """Normalized positive weights over queue entries (zeros if no positive)."""
    sim = np.asarray(queue_labels) @ np.asarray(anchor_label, dtype=np.float64)
    if lam and anchor_ss is not None:
        sim = sim + lam * lam * (np.asarray(queue_ss) @ np.asarray(anchor_ss, dtype=np.float64))
    total = sim.sum()
    return sim / total if total > 0 else np.zeros_like(sim)


def _utterance_scl(anchor: Tensor, queue_feats: np.ndarray, mu: np.ndarray, tau: float) -> Tensor:
    if not mu.any():
        return Tensor(0.0)
    a = T.l2_normalize(T.as_tensor(anchor).reshape(1, -1))
    logits = (a @ _unit_rows(queue_feats).T) * (1.0 / tau)  # [1, K]
    return -(T.log_softmax(logits, axis=1) * mu[None, :]).sum()


def multi_intent_scl(anchor, queue_feats, anchor_label, queue_labels, tau: float = 0.07) -> Tensor:
    """Anchor is the mean stage-1 intent feature of the utterance."""
    if len(queue_feats) == 0:
        return Tensor(0.0)
    mu = intent_queue_weights(anchor_label, queue_labels)
    return _utterance_scl(anchor, np.asarray(queue_feats), mu, tau)


def sg_multi_intent_scl(
    anchor, queue_feats, anchor_label, queue_labels, anchor_ss, queue_ss, lam: float = 0.5, tau: float = 0.07
) -> Tensor:
    """Like ``multi_intent_scl`` but positives are weighted by the joint
    label ``[intents, lam * sentence slot vector]``."""
    if len(queue_feats) == 0:
        return Tensor(0.0)
    mu = intent_queue_weights(anchor_label, queue_labels, anchor_ss, queue_ss, lam)
    return _utterance_scl(anchor, np.asarray(queue_feats), mu, tau)


def _word_scl(anchors: Tensor, word_feats: np.ndarray, weights: np.ndarray, tau: float) -> Tensor:
    positives = weights.sum(axis=1)  # M_i
    has_pos = positives > 0
    if not has_pos.any():
        return Tensor(0.0)
    coef = np.where(has_pos[:, None], weights / np.where(has_pos, positives, 1.0)[:, None], 0.0)
    a = T.l2_normalize(T.as_tensor(anchors))
    logits = (a @ _unit_rows(word_feats).T) * (1.0 / tau)  # [n, M]
    return -(T.log_softmax(logits, axis=1) * coef).sum()


def slot_scl(anchors, word_feats, anchor_one_hots, word_one_hots, tau: float = 0.07) -> Tensor:
    """Anchors are the stage-1 slot features of the utterance's tokens;
    ``word_feats``/``word_one_hots`` are all queued words, flattened."""
    if len(word_feats) == 0:
        return Tensor(0.0)
    weights = np.asarray(anchor_one_hots) @ np.asarray(word_one_hots).T
    return _word_scl(T.as_tensor(anchors), np.asarray(word_feats), weights, tau)


def ig_slot_scl(
    anchors,
    word_feats,
    anchor_one_hots,
    word_one_hots,
    anchor_intents,
    word_intents,
    lam: float = 0.5,
    tau: float = 0.07,
) -> Tensor:
    """Slot contrastive loss with joint labels ``[slot, lam * intents]``.

    ``word_intents`` holds, per queued word, the multi-hot of its utterance.
    """
    if len(word_feats) == 0:
        return Tensor(0.0)
    weights = np.asarray(anchor_one_hots) @ np.asarray(word_one_hots).T
    if lam:
        shared = np.asarray(word_intents) @ np.asarray(anchor_intents, dtype=np.float64)  # [M]
        weights = weights + lam * lam * shared[None, :]
    return _word_scl(T.as_tensor(anchors), np.asarray(word_feats), weights, tau)


# -- queues ---------------------------------------------------------------
QUEUE_FIELDS = ("utt0", "utt1", "words0", "words1", "intent_labels", "slot_labels", "sentence_slots")


@dataclass
class QueueSnapshot:
    """Arrays frozen for one batch; per-word arrays are flattened over instances."""

    utt0: np.ndarray
    utt1: np.ndarray
    intent_labels: np.ndarray
    sentence_slots: np.ndarray
    words0: np.ndarray
    words1: np.ndarray
    word_slots: np.ndarray
    word_intents: np.ndarray

    def __len__(self):
        return len(self.utt0)


class SampleQueues:
    """Seven index-aligned FIFO queues of detached features and labels."""

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("queue size must be >= 1")
        self.size = size
        self.utt0: deque = deque(maxlen=size)
        self.utt1: deque = deque(maxlen=size)
        self.words0: deque = deque(maxlen=size)
        self.words1: deque = deque(maxlen=size)
        self.intent_labels: deque = deque(maxlen=size)
        self.slot_labels: deque = deque(maxlen=size)
        self.sentence_slots: deque = deque(maxlen=size)

    def __len__(self):
        return len(self.utt0)

    def push(self, utt0, utt1, words0, words1, intent_labels, slot_labels, sentence_slots) -> None:
        items = dict(
            utt0=utt0, utt1=utt1, words0=words0, words1=words1,
            intent_labels=intent_labels, slot_labels=slot_labels, sentence_slots=sentence_slots,
        )
        missing = [k for k, v in items.items() if v is None]
        if missing:
            raise ValueError(f"misaligned queue push, missing: {', '.join(missing)}")
        n = len(slot_labels)
        if len(words0) != n or len(words1) != n:
            raise ValueError("per-word features and slot labels differ in length")
        for k, v in items.items():
            arr = v.data if isinstance(v, Tensor) else v
            getattr(self, k).append(np.array(arr, dtype=np.float64, copy=True))

    def snapshot(self) -> QueueSnapshot:
        if not len(self):
            empty = np.zeros((0, 0))
            return QueueSnapshot(empty, empty, empty, empty, empty, empty, empty, empty)
        lengths = [len(s) for s in self.slot_labels]
        return QueueSnapshot(
            utt0=np.stack(self.utt0),
            utt1=np.stack(self.utt1),
            intent_labels=np.stack(self.intent_labels),
            sentence_slots=np.stack(self.sentence_slots),
            words0=np.concatenate(self.words0),
            words1=np.concatenate(self.words1),
            word_slots=np.concatenate(self.slot_labels),
            word_intents=np.repeat(np.stack(self.intent_labels), lengths, axis=0),
        )

    def state(self) -> dict:
        return {k: [a.copy() for a in getattr(self, k)] for k in QUEUE_FIELDS}


# -- per-sample assembly --------------------------------------------------
TERM_NAMES = ("L_I", "L_S", "Lmp_I", "Lmp_S", "SCL_MI", "SCL_SGMI", "SCL_S", "SCL_IGS")


def sample_terms(trace, enc, snapshot: QueueSnapshot | None, config, o_id: int | None) -> dict[str, Tensor]:
    """Every loss term of one utterance as a Tensor scalar."""
    s1, s2 = trace.stage1, trace.stage2
    gold_i, gold_s = enc.intent_multi_hot, enc.slot_one_hots
    terms = {
        "L_I": intent_loss(gold_i, s1.intent_probs, s2.intent_probs),
        "L_S": slot_loss(gold_s, s1.slot_probs, s2.slot_probs),
        "Lmp_I": margin_penalty(gold_i, s1.intent_probs, s2.intent_probs),
        "Lmp_S": margin_penalty(gold_s, s1.slot_probs, s2.slot_probs),
    }
    zero = Tensor(0.0)
    if not config.scl_enabled or snapshot is None or not len(snapshot):
        terms.update(SCL_MI=zero, SCL_SGMI=zero, SCL_S=zero, SCL_IGS=zero)
        return terms
    ss = sentence_slot_vector(gold_s, o_id)
    tau = config.tau
    terms["SCL_MI"] = multi_intent_scl(
        s1.intent_features.mean(axis=0), snapshot.utt0, gold_i, snapshot.intent_labels, tau
    )
    terms["SCL_SGMI"] = sg_multi_intent_scl(
        s2.intent_features.mean(axis=0), snapshot.utt1, gold_i, snapshot.intent_labels,
        ss, snapshot.sentence_slots, config.lambda_i, tau,
    )
    terms["SCL_S"] = slot_scl(s1.slot_features, snapshot.words0, gold_s, snapshot.word_slots, tau)
    terms["SCL_IGS"] = ig_slot_scl(
        s2.slot_features, snapshot.words1, gold_s, snapshot.word_slots,
        gold_i, snapshot.word_intents, config.lambda_s, tau,
    )
    return terms


def total_loss(terms: dict[str, Tensor], config) -> Tensor:
    base = coguiding_objective(
        terms["L_I"], terms["L_S"], terms["Lmp_I"], terms["Lmp_S"],
        config.gamma, config.beta_i, config.beta_s,
    )
    if not config.scl_enabled:
        return base
    return scl_objective(
        base, terms["SCL_MI"], terms["SCL_SGMI"], terms["SCL_S"], terms["SCL_IGS"],
        config.eta_i, config.eta_s,
    )


def queue_entry(trace, enc, o_id: int | None) -> dict:
    """Detached features and labels of one utterance, ready for ``push``."""
    s1, s2 = trace.stage1, trace.stage2
    return dict(
        utt0=s1.intent_features.data.mean(axis=0),
        utt1=s2.intent_features.data.mean(axis=0),
        words0=s1.slot_features.data,
        words1=s2.slot_features.data,
        intent_labels=enc.intent_multi_hot,
        slot_labels=enc.slot_one_hots,
        sentence_slots=sentence_slot_vector(enc.slot_one_hots, o_id),
    )
