"""Training loop, evaluation, checkpoints and the finite-difference gradient check."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import objectives as obj
from . import tensor as T
from .config import TrainConfig
from .corpus import EncodedSample, Sample, Vocabularies, build_vocab, encode_sample
from .layers import load_checkpoint, save_checkpoint
from .metrics import EvalReport, evaluate_predictions
from .model import JointModel

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CSV_COLUMNS = ("epoch",) + obj.TERM_NAMES + ("total",)

__all__ = [
    "TrainConfig", "TrainState", "adam_step", "train_epoch", "evaluate", "fit",
    "train_until_converged", "grad_check", "micro_config", "save_model", "load_model",
]


def adam_step(params: dict, grads: dict, moments: dict, lr: float, weight_decay: float, t: int) -> None:
    """In-place Adam update with L2 decay folded into the gradient.

    ``moments`` maps path -> (m, v) arrays and is updated in place.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for path, p in params.items():
        data = p.data if isinstance(p, T.Tensor) else p
        g = grads[path] + weight_decay * data
        m, v = moments[path]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        data -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


@dataclass
class TrainState:
    model: JointModel
    vocab: Vocabularies
    moments: dict
    queues: obj.SampleQueues
    step: int = 0
    epoch: int = 0
    best_overall: float = -1.0
    best_epoch: int = -1
    best_checkpoint: str | None = None
    best_params: dict | None = None
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, config: TrainConfig, vocab: Vocabularies) -> "TrainState":
        model = JointModel(config, len(vocab.word_index), vocab.n_intents, vocab.n_slots)
        moments = {k: (np.zeros_like(p.data), np.zeros_like(p.data)) for k, p in model.params.items()}
        return cls(model, vocab, moments, obj.SampleQueues(config.queue_size))

    @property
    def config(self) -> TrainConfig:
        return self.model.config


def _o_id(vocab: Vocabularies) -> int | None:
    return vocab.slot_index.id("O") if "O" in vocab.slot_index else None


def train_epoch(state: TrainState, corpus: Sequence[EncodedSample], config: TrainConfig | None = None) -> dict:
    """One pass over ``corpus``; returns per-sample mean of every loss term."""
    config = config or state.config
    model = state.model
    params = model.params
    o_id = _o_id(state.vocab)
    rng = np.random.default_rng([config.seed, state.epoch])
    order = rng.permutation(len(corpus))
    sums = dict.fromkeys(obj.TERM_NAMES + ("total",), 0.0)
    dropout_rng = rng if config.dropout > 0 else None
    for start in range(0, len(order), config.batch_size):
        batch = [corpus[i] for i in order[start : start + config.batch_size]]
        snapshot = state.queues.snapshot() if config.scl_enabled else None
        losses, entries = [], []
        for enc in batch:
            trace = model.forward(enc.word_ids, dropout_rng=dropout_rng)
            terms = obj.sample_terms(trace, enc, snapshot, config, o_id)
            loss = obj.total_loss(terms, config)
            if not math.isfinite(loss.item()):
                raise FloatingPointError(
                    f"non-finite loss at epoch {state.epoch}: "
                    + ", ".join(f"{k}={v.item():.4g}" for k, v in terms.items())
                )
            for k, v in terms.items():
                sums[k] += v.item()
            sums["total"] += loss.item()
            losses.append(loss)
            entries.append(obj.queue_entry(trace, enc, o_id))
        grads = T.grad_of(T.sum_all(losses), params)
        state.step += 1
        adam_step(params, grads, state.moments, config.lr, config.weight_decay, state.step)
        for entry in entries:
            state.queues.push(**entry)
    state.epoch += 1
    return {k: v / max(len(corpus), 1) for k, v in sums.items()}


def predict_samples(model: JointModel, vocab: Vocabularies, samples: Sequence[Sample]):
    intents, slots = [], []
    for s in samples:
        pred = model.predict(vocab.word_ids(s.tokens))
        intents.append({vocab.intent_index.item(j) for j in pred.intents})
        slots.append([vocab.slot_index.item(j) for j in pred.slots])
    return intents, slots


def evaluate(model: JointModel, vocab: Vocabularies, samples: Sequence[Sample]) -> EvalReport:
    pred_intents, pred_slots = predict_samples(model, vocab, samples)
    return evaluate_predictions(
        pred_intents, [s.intents for s in samples], pred_slots, [s.slot_tags for s in samples]
    )


def margin_penalties(model: JointModel, corpus: Sequence[EncodedSample]) -> tuple[float, float]:
    """Corpus totals of the intent and slot margin penalties under current params."""
    mp_i = mp_s = 0.0
    with T.no_grad():
        for enc in corpus:
            tr = model.forward(enc.word_ids)
            mp_i += obj.margin_penalty(enc.intent_multi_hot, tr.stage1.intent_probs, tr.stage2.intent_probs).item()
            mp_s += obj.margin_penalty(enc.slot_one_hots, tr.stage1.slot_probs, tr.stage2.slot_probs).item()
    return mp_i, mp_s


# -- checkpoints ----------------------------------------------------------
def _meta_path(ckpt) -> Path:
    return Path(str(ckpt) + ".meta.json")


def save_model(path, model: JointModel, vocab: Vocabularies, arrays: dict | None = None) -> None:
    """Binary parameter file plus a ``.meta.json`` sidecar with config and vocab."""
    config = model.config.to_dict()
    save_checkpoint(path, arrays if arrays is not None else model.params.arrays(), config)
    _meta_path(path).write_text(
        json.dumps({"config": config, "vocab": vocab.to_json()}, sort_keys=True), encoding="utf-8"
    )


def load_model(path) -> tuple[JointModel, Vocabularies]:
    meta_file = _meta_path(path)
    if not Path(path).exists() or not meta_file.exists():
        raise FileNotFoundError(f"checkpoint {path} (or its .meta.json) not found")
    meta = json.loads(meta_file.read_text(encoding="utf-8"))
    config = TrainConfig.from_dict(meta["config"])
    vocab = Vocabularies.from_json(meta["vocab"])
    model = JointModel(config, len(vocab.word_index), vocab.n_intents, vocab.n_slots)
    model.params.load_arrays(load_checkpoint(path, config.to_dict()))
    return model, vocab


# -- full run -------------------------------------------------------------
def fit(
    config: TrainConfig,
    train: Sequence[Sample],
    dev: Sequence[Sample] | None = None,
    out_dir=None,
    vocab: Vocabularies | None = None,
    stop_at_overall: float | None = None,
) -> TrainState:
    """Train with per-epoch dev selection on overall accuracy.

    Without ``dev`` the training split is used for selection. With
    ``out_dir`` the best checkpoint and ``losses.csv`` are written there.
    ``stop_at_overall`` ends training once the selection score reaches it.
    """
    vocab = vocab or build_vocab(train, lowercase=config.lowercase)
    encoded = [encode_sample(s, vocab) for s in train]
    dev = list(dev) if dev is not None else list(train)
    state = TrainState.create(config, vocab)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    stale = 0
    for _ in range(config.epochs):
        losses = train_epoch(state, encoded, config)
        report = evaluate(state.model, vocab, dev)
        row = {"epoch": state.epoch, **losses, "dev_overall": report.overall_acc}
        state.history.append(row)
        log.info("epoch %d total=%.4f dev_overall=%.4f", state.epoch, losses["total"], report.overall_acc)
        if report.overall_acc > state.best_overall:
            state.best_overall = report.overall_acc
            state.best_epoch = state.epoch
            state.best_params = state.model.params.copy_arrays()
            stale = 0
            if out is not None:
                state.best_checkpoint = str(out / "best.ckpt")
                save_model(state.best_checkpoint, state.model, vocab)
        else:
            stale += 1
        if stale >= config.patience:
            log.info("no dev improvement for %d epochs, stopping", stale)
            break
        if stop_at_overall is not None and report.overall_acc >= stop_at_overall:
            break
    if out is not None:
        write_loss_csv(out / "losses.csv", state.history)
    return state


def write_loss_csv(path, history: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[k])) for k in CSV_COLUMNS[1:]])


@dataclass
class ConvergenceResult:
    state: TrainState
    first_perfect_epoch: int | None
    converged: bool
    overall_acc: float
    margin_penalty: tuple[float, float]  # per-sample means (intent, slot)


def train_until_converged(
    config: TrainConfig, samples: Sequence[Sample], max_epochs: int = 300, mp_tol: float = 1e-3
) -> ConvergenceResult:
    """Fit ``samples`` until they are all predicted correctly and the summed
    per-sample margin penalties drop below ``mp_tol``, or ``max_epochs`` pass.

    Selection is on the training split itself; the returned state holds the
    final (not best) parameters.
    """
    vocab = build_vocab(samples, lowercase=config.lowercase)
    encoded = [encode_sample(s, vocab) for s in samples]
    state = TrainState.create(config, vocab)
    first = None
    acc, mp = 0.0, (math.inf, math.inf)
    n = max(len(samples), 1)
    while state.epoch < max_epochs:
        losses = train_epoch(state, encoded, config)
        acc = evaluate(state.model, vocab, samples).overall_acc
        state.history.append({"epoch": state.epoch, **losses, "dev_overall": acc})
        if acc < 1.0:
            continue
        first = first or state.epoch
        totals = margin_penalties(state.model, encoded)
        mp = (totals[0] / n, totals[1] / n)
        if sum(mp) < mp_tol:
            return ConvergenceResult(state, first, True, acc, mp)
    return ConvergenceResult(state, first, False, acc, mp)


# -- gradient check -------------------------------------------------------
@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_path: str
    worst_term: str
    per_term: dict
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def to_text(self, per_term: bool = False) -> str:
        lines = [
            f"checked {self.n_checked} parameter entries",
            f"max relative error {self.max_rel_error:.3e} ({self.worst_term} @ {self.worst_path})",
            f"tolerance {self.tolerance:.0e}: {'PASS' if self.passed else 'FAIL'}",
        ]
        if per_term:
            lines.append(f"{'term':<10} {'max_rel_err':>12}  worst parameter")
            for name, (err, path) in self.per_term.items():
                lines.append(f"{name:<10} {err:>12.3e}  {path}")
        return "\n".join(lines)


def micro_config(seed: int = 0) -> TrainConfig:
    """Gradient-check sizes. The label width differs from d so the label
    adapters are exercised, and the loss weights are far from zero so no
    term is drowned out in the combined objective."""
    return TrainConfig(
        word_dim=8, label_dim=6, hidden_dim=8, attention_dim=8, decoder_dim=8,
        heads=2, gnn_layers=2, window=1, queue_size=3, seed=seed,
        gamma=0.7, beta_i=0.5, beta_s=0.5, eta_i=0.3, eta_s=0.2,
        lambda_i=0.7, lambda_s=0.6,
    )


def micro_setup(seed: int = 0, config: TrainConfig | None = None):
    """A tiny model (d=8, N_I=3, N_S=4, K_queue=3) with a pre-filled queue and
    a 5-token utterance whose loss exercises every term."""
    rng = np.random.default_rng(seed)
    config = config or micro_config(seed)
    intents, slots = ["a", "b", "c"], ["B-x", "I-x", "B-y", "O"]
    words = [f"w{i}" for i in range(6)]
    train = [
        Sample(["w0", "w1", "w2", "w3", "w4"], ["O", "B-x", "I-x", "B-y", "O"], ["a", "b"]),
        Sample(["w5", "w2", "w1"], ["B-y", "O", "B-x"], ["b"]),
        Sample(["w3", "w4", "w0", "w1"], ["B-x", "I-x", "O", "B-y"], ["a", "c"]),
        Sample(["w1", "w2"], ["O", "B-x"], ["c"]),
    ]
    vocab = build_vocab(train)
    assert len(vocab.word_index) == len(words) + 1
    assert vocab.intent_index.items == intents and vocab.slot_index.items == sorted(slots)
    model = JointModel(config, len(vocab.word_index), vocab.n_intents, vocab.n_slots)
    for t in model.params.values():
        t.data = rng.normal(0.0, 0.6, size=t.data.shape)
    queues = obj.SampleQueues(config.queue_size)
    for s in train[1:]:
        enc = encode_sample(s, vocab)
        n, d = len(s), config.hidden_dim
        queues.push(
            rng.normal(size=d), rng.normal(size=d), rng.normal(size=(n, d)), rng.normal(size=(n, d)),
            enc.intent_multi_hot, enc.slot_one_hots,
            obj.sentence_slot_vector(enc.slot_one_hots, vocab.slot_index.id("O")),
        )
    return model, vocab, encode_sample(train[0], vocab), queues


def grad_check(
    config: TrainConfig | None = None,
    seed: int = 0,
    n_params: int = 240,
    eps: float = 1e-4,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Analytic vs central finite-difference gradients of every loss term and
    of the full contrastive objective on the micro model.

    Relative error is ``|a - f| / max(|a|, |f|, 1e-6)``; the floor keeps
    entries whose true gradient is ~0 from dividing rounding noise by zero.
    The stage-1 discrete decisions (argmax slots, voted intents) are pinned
    to the unperturbed values so the loss is smooth in the parameters.
    """
    model, vocab, enc, queues = micro_setup(seed, config)
    cfg = model.config
    o_id = vocab.slot_index.id("O")
    snapshot = queues.snapshot()
    with T.no_grad():
        base = model.forward(enc.word_ids)
    pins = dict(slot_pred=base.slot_pred, intent_set=base.intent_set)

    def all_terms() -> dict[str, T.Tensor]:
        trace = model.forward(enc.word_ids, **pins)
        terms = obj.sample_terms(trace, enc, snapshot, cfg, o_id)
        terms["total"] = obj.total_loss(terms, cfg)
        return terms

    names = obj.TERM_NAMES + ("total",)
    analytic = {}
    for name in names:
        loss = all_terms()[name]
        analytic[name] = T.grad_of(loss, model.params)

    rng = np.random.default_rng(seed + 1)
    paths = list(model.params)
    picks = []
    # every tensor at least once, the rest proportional to size
    for path in paths:
        picks.append((path, tuple(int(rng.integers(0, s)) for s in model.params[path].shape)))
    sizes = np.array([model.params[p].data.size for p in paths], dtype=float)
    while len(picks) < n_params:
        path = paths[rng.choice(len(paths), p=sizes / sizes.sum())]
        picks.append((path, tuple(int(rng.integers(0, s)) for s in model.params[path].shape)))

    per_term = {name: (0.0, "") for name in names}
    for path, idx in picks:
        arr = model.params[path].data
        orig = arr[idx]
        with T.no_grad():
            arr[idx] = orig + eps
            plus = {k: v.item() for k, v in all_terms().items()}
            arr[idx] = orig - eps
            minus = {k: v.item() for k, v in all_terms().items()}
        arr[idx] = orig
        for name in names:
            fd = (plus[name] - minus[name]) / (2 * eps)
            an = analytic[name][path][idx]
            err = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
            if err > per_term[name][0]:
                per_term[name] = (err, f"{path}{list(idx)}")
    worst_term = max(per_term, key=lambda k: per_term[k][0])
    return GradCheckReport(
        max_rel_error=per_term[worst_term][0],
        worst_path=per_term[worst_term][1],
        worst_term=worst_term,
        per_term=per_term,
        n_checked=len(picks),
        tolerance=tolerance,
    )
