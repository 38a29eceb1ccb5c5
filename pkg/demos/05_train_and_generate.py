"""End to end: search paths, train briefly, generate with the trace.

A shortened version of the acceptance overfit run (about a minute). The
full 500-step run lives in tests/test_acceptance.py.

Run from the repository root:  python3 demos/05_train_and_generate.py
"""

import time

import numpy as np

from empdial.cli import run_paths
from empdial.cognition import LexiconTagger, load_triples
from empdial.data import load_corpus, prepare_batch
from empdial.metrics import evaluate, validation_ppl
from empdial.model import EmpathyModel, ModelConfig
from empdial.training import TrainConfig, train

corpus = load_corpus("tests/fixtures/corpus")
store, _ = load_triples("tests/fixtures/triples.tsv")
tagger = LexiconTagger.from_file("tests/fixtures/pos_lexicon.json")

config = ModelConfig(vocab_size=len(corpus.vocab), d_model=48, emo_dim=48,
                     act_dim=48, latent_dim=24, ffn_dim=96)
records, stats = run_paths(corpus, store, 0, tagger, config)
cache = {r["id"]: r for r in records}
print("path coverage:", {k: stats[k] for k in
                         ("total", "primary", "pseudo", "fallback_pct")})

model = EmpathyModel(config, np.random.default_rng(7))
n_params = sum(p.data.size for p in model.parameters())
print(f"model: {n_params} parameters at width {config.d_model}")

train_cfg = TrainConfig(batch_size=8, epochs=200, max_steps=200,
                        learning_rate=2e-3, anneal_batches=80, seed=7)
t0 = time.time()
history = train(model, corpus, cache, train_cfg)
print(f"trained {len(history.batch_losses)} batches in {time.time() - t0:.0f}s; "
      f"loss {history.batch_losses[0]:.2f} -> {history.batch_losses[-1]:.2f}")
print("teacher-forced train PPL:",
      round(validation_ppl(model, corpus, cache, split='train'), 3))

print("\n== greedy generation with the inference trace ==")
for dialogue in corpus.train[:3]:
    batch = prepare_batch(dialogue, corpus.vocab)
    trace = model.generate(batch, cache.get(dialogue.dialogue_id), corpus.vocab)
    print(f"\n{dialogue.dialogue_id}: {dialogue.turns[0].text}")
    print("  gold:     ", " ".join(dialogue.gold.tokens))
    print("  generated:", " ".join(trace.response_tokens))
    print(f"  emotions {trace.speaker_emotion}/{trace.listener_emotion}, "
          f"act {trace.act}, beta {trace.beta:.3f}")
    print("  knowledge:", "; ".join(trace.verbalized_paths) or "(none)")

print("\n== metrics on the test split ==")
record = evaluate(model, corpus, cache, split="test")
print({k: (round(v, 4) if isinstance(v, float) else v)
       for k, v in record.to_dict().items()})
