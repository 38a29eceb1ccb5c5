"""Emotional context encoding.

Both interlocutors' turn streams are encoded against the full dialogue
history, classified into emotion categories, then re-encoded with the
looked-up emotion embedding so downstream latents can see both emotional
states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import (EmbeddingTable, InterEncoder, Linear, Module,
                     MultiHeadAttention, TransformerEncoder)

# Reserved vocabulary slots. These ids are fixed: padding 0, unknown 1,
# the sequence-classification marker 2, then start and end of sequence.
PAD, UNK, CLS, SOS, EOS = 0, 1, 2, 3, 4
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SOS]", "[EOS]")


class Vocab:
    """Bijective token<->id map over the non-reserved tokens."""

    def __init__(self, tokens=()):
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(RESERVED_TOKENS)}
        self.id_to_token: list[str] = list(RESERVED_TOKENS)
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def encode(self, tokens) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id


@dataclass
class ContextBatch:
    """One dialogue prepared for the model.

    All id sequences except the response start with [CLS]. Labels are
    category indices into the emotion and act catalogs.
    """

    dialogue_id: str
    ctx_ids: list[int]          # [CLS] + full history
    speaker_ids: list[int]      # [CLS] + speaker turns
    listener_ids: list[int]     # [CLS] + listener turns (may be [CLS] alone)
    response_ids: list[int]     # gold response, no [CLS]
    speaker_emotion: int
    listener_emotion: int
    act: int
    ctx_tokens: list[str] = field(default_factory=list)
    speaker_token_seqs: list[list[str]] = field(default_factory=list)

    def validate(self, n_emotions: int, n_acts: int):
        for name, seq in (("ctx", self.ctx_ids), ("speaker", self.speaker_ids),
                          ("listener", self.listener_ids)):
            if not seq or seq[0] != CLS:
                raise ValueError(f"{name} ids must start with [CLS]")
        if len(self.speaker_ids) > len(self.ctx_ids) or len(self.listener_ids) > len(self.ctx_ids):
            raise ValueError("segment longer than full context")
        if not 0 <= self.speaker_emotion < n_emotions:
            raise ValueError(f"speaker emotion {self.speaker_emotion} out of range")
        if not 0 <= self.listener_emotion < n_emotions:
            raise ValueError(f"listener emotion {self.listener_emotion} out of range")
        if not 0 <= self.act < n_acts:
            raise ValueError(f"act {self.act} out of range")
        return self


@dataclass
class EncodedContext:
    h_ctx: Tensor        # [c x d]
    h_resp: Tensor       # [n x d]
    h_speaker: Tensor    # [s x d]
    h_listener: Tensor   # [l x d]


def classify_emotion(h0: Tensor, w: Tensor) -> Tensor:
    """Softmax(W h0) over emotion categories; h0 is a [CLS] row vector."""
    logits = ad.reshape(ad.matmul(w, ad.reshape(h0, (h0.shape[0], 1))), (w.shape[0],))
    return ad.softmax(logits)


def emotion_losses(p_speaker: Tensor, p_listener: Tensor,
                   speaker_label: int, listener_label: int):
    """Negative log-likelihood of the gold labels under each distribution."""
    l_s = ad.neg(ad.safe_log(ad.take(p_speaker, speaker_label)))
    l_l = ad.neg(ad.safe_log(ad.take(p_listener, listener_label)))
    return l_s, l_l


class EmotionSelfAttention(Module):
    """Concatenate a broadcast emotion vector to every position, run one
    self-attention layer over the widened rows, project back to d."""

    def __init__(self, d_model: int, emo_dim: int, n_heads: int,
                 rng: np.random.Generator):
        super().__init__()
        self.attn = self.add_module("attn", MultiHeadAttention(d_model + emo_dim, n_heads, rng))
        self.out = self.add_module("out", Linear(d_model + emo_dim, d_model, rng))

    def __call__(self, h: Tensor, emo_row: Tensor) -> Tensor:
        widened = ad.concat([h, ad.repeat_rows(emo_row, h.shape[0])], axis=1)
        attended, _ = self.attn(widened, widened, widened)
        return self.out(attended)


class EmotionalContextEncoder(Module):
    """Token embeddings, the two encoder stacks, emotion classifiers and
    the emotion self-attention branches."""

    def __init__(self, vocab_size: int, d_model: int, emo_dim: int,
                 n_emotions: int, n_heads: int, ffn_dim: int, n_layers: int,
                 rng: np.random.Generator, preload: np.ndarray | None = None,
                 share_emo_attention: bool = False):
        super().__init__()
        self.n_emotions = n_emotions
        self.embedding = self.add_module(
            "embedding", EmbeddingTable(vocab_size, d_model, rng, preload=preload))
        self.trans_enc = self.add_module(
            "trans_enc", TransformerEncoder(d_model, n_heads, ffn_dim, n_layers, rng))
        self.itr_enc = self.add_module(
            "itr_enc", InterEncoder(d_model, n_heads, ffn_dim, n_layers, rng))
        self.w_speaker = self.register("w_speaker", ad.param((n_emotions, d_model), rng))
        self.w_listener = self.register("w_listener", ad.param((n_emotions, d_model), rng))
        self.emo_speaker = self.register("emo_speaker", ad.param((n_emotions, emo_dim), rng))
        self.emo_listener = self.register("emo_listener", ad.param((n_emotions, emo_dim), rng))
        self.emo_attn_speaker = self.add_module(
            "emo_attn_speaker", EmotionSelfAttention(d_model, emo_dim, n_heads, rng))
        if share_emo_attention:
            self.emo_attn_listener = self.emo_attn_speaker
        else:
            self.emo_attn_listener = self.add_module(
                "emo_attn_listener", EmotionSelfAttention(d_model, emo_dim, n_heads, rng))

    def encode(self, batch: ContextBatch) -> EncodedContext:
        e_ctx = self.embedding(batch.ctx_ids)
        e_resp = self.embedding(batch.response_ids)
        e_speaker = self.embedding(batch.speaker_ids)
        e_listener = self.embedding(batch.listener_ids)
        return EncodedContext(
            h_ctx=self.trans_enc(e_ctx),
            h_resp=self.trans_enc(e_resp),
            h_speaker=self.itr_enc(e_speaker, e_ctx),
            h_listener=self.itr_enc(e_listener, e_ctx),
        )

    def cls_row(self, h: Tensor) -> Tensor:
        return ad.reshape(ad.narrow(h, 0, 0, 1), (h.shape[1],))

    def emotion_distributions(self, enc: EncodedContext):
        p_s = classify_emotion(self.cls_row(enc.h_speaker), self.w_speaker)
        p_l = classify_emotion(self.cls_row(enc.h_listener), self.w_listener)
        return p_s, p_l

    def emotion_rows(self, speaker_emotion: int, listener_emotion: int):
        dim = self.emo_speaker.shape[1]
        row_s = ad.reshape(ad.embedding(self.emo_speaker, [speaker_emotion]), (dim,))
        row_l = ad.reshape(ad.embedding(self.emo_listener, [listener_emotion]), (dim,))
        return row_s, row_l

    def emotional_representations(self, enc: EncodedContext, row_s: Tensor,
                                  row_l: Tensor):
        hat_s = self.emo_attn_speaker(enc.h_speaker, row_s)
        hat_l = self.emo_attn_listener(enc.h_listener, row_l)
        return hat_s, hat_l
