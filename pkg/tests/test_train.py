import csv
import math

import numpy as np
import pytest

from jointslu import objectives as obj
from jointslu.config import TrainConfig
from jointslu.corpus import build_vocab, encode_sample, generate_synthetic
from jointslu.train import (
    TrainState,
    adam_step,
    evaluate,
    fit,
    grad_check,
    load_model,
    train_epoch,
)

TINY = TrainConfig(word_dim=8, label_dim=8, hidden_dim=8, attention_dim=8, decoder_dim=8, heads=2,
                   window=1, batch_size=3, queue_size=5, epochs=3, seed=5, lr=3e-3)


@pytest.fixture(scope="module")
def tiny_data():
    samples = generate_synthetic(3, 8, seed=2)
    vocab = build_vocab(samples)
    return samples, vocab, [encode_sample(s, vocab) for s in samples]


def reference_adam(p, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook loop: one scalar, returns the trajectory."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        g = g + wd * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append(p)
    return out


# -- optimizer -------------------------------------------------------------
def test_adam_zero_grad_no_decay_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    moments = {"w": (np.zeros(2), np.zeros(2))}
    adam_step(p, {"w": np.zeros(2)}, moments, 1e-3, 0.0, 1)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_magnitude_is_lr():
    p = {"w": np.array([0.5])}
    adam_step(p, {"w": np.array([1.0])}, {"w": (np.zeros(1), np.zeros(1))}, 1e-3, 0.0, 1)
    assert 0.5 - p["w"][0] == pytest.approx(1e-3 / (1 + 1e-8), rel=1e-12)


def test_adam_matches_reference_trajectory():
    grads = [0.3, -1.2, 0.05, 2.0, 0.0]
    p = {"w": np.array([0.7])}
    moments = {"w": (np.zeros(1), np.zeros(1))}
    got = []
    for t, g in enumerate(grads, start=1):
        adam_step(p, {"w": np.array([g])}, moments, 5e-3, 1e-2, t)
        got.append(p["w"][0])
    np.testing.assert_allclose(got, reference_adam(0.7, grads, 5e-3, 1e-2), rtol=1e-14)
    with pytest.raises(ValueError):
        adam_step(p, {"w": np.array([1.0])}, moments, 1e-3, 0.0, 0)


# -- epochs ----------------------------------------------------------------
def test_queue_length_after_first_batch(tiny_data):
    _, vocab, enc = tiny_data
    state = TrainState.create(TINY, vocab)
    cfg = TINY.replace(batch_size=4)
    state_b = TrainState.create(cfg, vocab)
    train_epoch(state_b, enc[:4], cfg)
    assert len(state_b.queues) == 4
    train_epoch(state, enc, TINY)  # 8 samples through a queue of 5
    assert len(state.queues) == 5
    assert state.step == 3 and state.epoch == 1


def test_training_is_bit_deterministic(tiny_data):
    _, vocab, enc = tiny_data
    runs = []
    for _ in range(2):
        state = TrainState.create(TINY, vocab)
        losses = [train_epoch(state, enc) for _ in range(2)]
        runs.append((losses, state.model.params.copy_arrays()))
    assert runs[0][0] == runs[1][0]
    for k, a in runs[0][1].items():
        assert a.tobytes() == runs[1][1][k].tobytes()


def test_scl_disabled_gives_plain_objective(tiny_data):
    _, vocab, enc = tiny_data
    cfg = TINY.replace(scl_enabled=False)
    state = TrainState.create(cfg, vocab)
    train_epoch(state, enc, cfg)
    losses = train_epoch(state, enc, cfg)
    assert all(losses[k] == 0.0 for k in ("SCL_MI", "SCL_SGMI", "SCL_S", "SCL_IGS"))
    expected = cfg.gamma * (losses["L_I"] + cfg.beta_i * losses["Lmp_I"]) + (1 - cfg.gamma) * (
        losses["L_S"] + cfg.beta_s * losses["Lmp_S"]
    )
    assert losses["total"] == pytest.approx(expected, rel=1e-12)


def test_scl_terms_active_after_first_batch(tiny_data):
    _, vocab, enc = tiny_data
    state = TrainState.create(TINY, vocab)
    train_epoch(state, enc)
    losses = train_epoch(state, enc)
    assert losses["SCL_MI"] > 0 and losses["SCL_S"] > 0


def test_non_finite_parameters_abort(tiny_data):
    _, vocab, enc = tiny_data
    state = TrainState.create(TINY, vocab)
    state.model.params["dec1.slot.b1"].data[:] = np.inf
    with pytest.raises(FloatingPointError):
        train_epoch(state, enc)


# -- evaluation ------------------------------------------------------------
def test_evaluate_is_side_effect_free(tiny_data):
    samples, vocab, enc = tiny_data
    state = TrainState.create(TINY, vocab)
    train_epoch(state, enc)
    before = state.model.params.copy_arrays()
    queues = state.queues.state()
    moments = {k: (m.copy(), v.copy()) for k, (m, v) in state.moments.items()}
    first = evaluate(state.model, vocab, samples)
    assert evaluate(state.model, vocab, samples) == first
    for k, a in before.items():
        assert np.array_equal(a, state.model.params[k].data)
        assert np.array_equal(moments[k][0], state.moments[k][0])
    after = state.queues.state()
    assert all(np.array_equal(a, b) for f in obj.QUEUE_FIELDS for a, b in zip(queues[f], after[f]))


def test_zero_model_is_at_chance(tiny_data):
    samples, vocab, _ = tiny_data
    state = TrainState.create(TINY, vocab)
    state.model.params.zero_()
    assert evaluate(state.model, vocab, samples).overall_acc <= 0.25


def test_fit_checkpoint_round_trip(tiny_data, tmp_path):
    samples, vocab, _ = tiny_data
    state = fit(TINY, samples[:6], dev=samples[6:], out_dir=tmp_path)
    assert state.best_checkpoint == str(tmp_path / "best.ckpt")
    model, vocab2 = load_model(state.best_checkpoint)
    assert vocab2 == state.vocab
    assert evaluate(model, vocab2, samples[6:]).overall_acc == state.best_overall
    with open(tmp_path / "losses.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["epoch", *obj.TERM_NAMES, "total"]
    assert len(rows) == 1 + len(state.history) and len(state.history) <= TINY.epochs


def test_load_model_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "nope.ckpt")


# -- converged overfit run -------------------------------------------------
def test_loss_decreases_over_first_ten_epochs(overfit):
    result, _, _ = overfit
    totals = [row["total"] for row in result.state.history[:10]]
    assert totals[-1] < totals[0]


def test_margin_penalties_vanish_when_converged(overfit):
    result, _, _ = overfit
    assert result.converged and result.overall_acc == 1.0
    assert result.margin_penalty[0] < 1e-3 and result.margin_penalty[1] < 1e-3


# -- gradient check --------------------------------------------------------
def test_grad_check_passes_every_term():
    report = grad_check(seed=0, n_params=200)
    assert report.n_checked >= 200
    assert report.passed, report.to_text(per_term=True)
    assert set(report.per_term) == set(obj.TERM_NAMES) | {"total"}
    assert all(err <= 1e-4 for err, _ in report.per_term.values())
    assert report.worst_path in report.to_text()
