"""Emotional context encoding: segments, classifiers, self-attention.

Run from the repository root:  python3 demos/02_emotion_encoding.py
"""

import numpy as np

from empdial.data import EMOTIONS, load_corpus, prepare_batch
from empdial.encoders import EmotionalContextEncoder, classify_emotion

corpus = load_corpus("tests/fixtures/corpus")
dialogue = corpus.train[2]  # the multi-turn one
print("dialogue", dialogue.dialogue_id)
for turn in dialogue.turns:
    act = f" / {turn.act}" if turn.act else ""
    print(f"  [{turn.role:8s}] {turn.text}  ({turn.emotion}{act})")

batch = prepare_batch(dialogue, corpus.vocab)
print("\nsegment lengths: ctx", len(batch.ctx_ids), "| speaker",
      len(batch.speaker_ids), "| listener", len(batch.listener_ids),
      "| response", len(batch.response_ids))

rng = np.random.default_rng(0)
enc = EmotionalContextEncoder(vocab_size=len(corpus.vocab), d_model=24,
                              emo_dim=24, n_emotions=len(EMOTIONS), n_heads=2,
                              ffn_dim=48, n_layers=1, rng=rng)
encoded = enc.encode(batch)
print("H_ctx", encoded.h_ctx.shape, "| H_speaker", encoded.h_speaker.shape,
      "| H_listener", encoded.h_listener.shape)

p_s = classify_emotion(enc.cls_row(encoded.h_speaker), enc.w_speaker)
print("\nuntrained speaker emotion distribution sums to",
      round(float(p_s.data.sum()), 9))
top = np.argsort(p_s.data)[-3:][::-1]
print("top-3 guesses:", [(EMOTIONS[i], round(float(p_s.data[i]), 4)) for i in top])
print("gold speaker emotion:", EMOTIONS[batch.speaker_emotion])

row_s, row_l = enc.emotion_rows(batch.speaker_emotion, batch.listener_emotion)
hat_s, hat_l = enc.emotional_representations(encoded, row_s, row_l)
print("\nemotion self-attention keeps shapes:", hat_s.shape, hat_l.shape)
other_row, _ = enc.emotion_rows((batch.speaker_emotion + 1) % 32, 0)
hat_other = enc.emo_attn_speaker(encoded.h_speaker, other_row)
print("different emotion id changes the representation:",
      not np.allclose(hat_s.data, hat_other.data))
