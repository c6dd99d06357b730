"""
Overfitting a small synthetic corpus
====================================

Twenty generated utterances, almost half of them carrying two or three
intents. Training continues until every utterance is decoded exactly and
the second stage is at least as confident as the first on the gold labels.
Takes about a minute on one core.
"""

import time
from pathlib import Path

from jointslu.config import TrainConfig
from jointslu.corpus import generate_synthetic
from jointslu.train import evaluate, train_until_converged

samples = generate_synthetic(n_templates=6, n_samples=20, seed=7)
for s in samples[:3]:
    print(" ".join(s.tokens), "->", "#".join(sorted(s.intents)))

config = TrainConfig.from_json(Path(__file__).resolve().parent.parent / "configs" / "overfit.json")
t0 = time.perf_counter()
result = train_until_converged(config, samples, max_epochs=300)
print(f"first perfect epoch {result.first_perfect_epoch}, stopped at {result.state.epoch}"
      f" after {time.perf_counter() - t0:.0f} s")

# loss curve, every 20 epochs
for row in result.state.history[::20]:
    print(f"epoch {row['epoch']:>3}  total {row['total']:8.4f}  overall {row['dev_overall']:.2f}")

#%%
# Final report and a look at one multi-intent prediction
model, vocab = result.state.model, result.state.vocab
print(evaluate(model, vocab, samples).to_text())
s = next(s for s in samples if len(s.intents) > 1)
pred = model.predict(vocab.word_ids(s.tokens))
print(list(zip(s.tokens, (vocab.slot_index.item(j) for j in pred.slots))))
print("intents:", sorted(vocab.intent_index.item(j) for j in pred.intents))
print("margin penalties per utterance (intent, slot):", result.margin_penalty)
