"""Three-stage response generation.

The start token embedding is augmented with the act feature, the decoder
stack runs masked self-attention, context cross-attention and keyword
attention over weight-scaled context rows, and every step's output mixes
a vocabulary distribution with a copy distribution over the context token
ids, gated by a scalar computed from the decoder state and the latent.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import EOS
from .layers import DecoderLayer, Linear, Module, causal_mask, sinusoidal_positions


def act_augmented_sos(act_emb: Tensor, sos_emb: Tensor, w_t: Tensor) -> Tensor:
    """W_t (act (+) sos): mixes the act feature into the start embedding."""
    joined = ad.concat([act_emb, sos_emb], axis=0)
    return ad.reshape(ad.matmul(w_t, ad.reshape(joined, (joined.shape[0], 1))),
                      (w_t.shape[0],))


class ResponseDecoder(Module):
    """Transformer decoder stack returning hidden states and the last
    layer's head-averaged cross-attention weights (reused for copying)."""

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int, n_layers: int,
                 rng: np.random.Generator, keywords_attention: bool = True,
                 use_positions: bool = True):
        super().__init__()
        self.d_model = d_model
        self.keywords_attention = keywords_attention
        self.use_positions = use_positions
        self.layers = [self.add_module(f"layer{i}",
                                       DecoderLayer(d_model, n_heads, ffn_dim, rng,
                                                    keywords_attention=keywords_attention))
                       for i in range(n_layers)]

    def __call__(self, target_emb: Tensor, hat_ctx: Tensor,
                 g: np.ndarray | None):
        t = target_emb.shape[0]
        h = target_emb
        if self.use_positions:
            h = ad.add(h, Tensor(sinusoidal_positions(t, self.d_model)))
        kv_scaled = None
        if self.keywords_attention:
            if g is None:
                raise ValueError("keyword attention needs the context weight vector")
            kv_scaled = ad.scale_rows(hat_ctx, Tensor(np.asarray(g)))
        mask = causal_mask(t)
        cross = None
        for layer in self.layers:
            h, cross = layer(h, hat_ctx, kv_scaled, mask)
        return h, cross


class PointerGenerator(Module):
    """Gated mixture of vocabulary softmax and context copying."""

    def __init__(self, d_model: int, latent_dim: int, vocab_size: int,
                 rng: np.random.Generator):
        super().__init__()
        self.vocab_size = vocab_size
        self.vocab_proj = self.add_module("vocab_proj",
                                          Linear(d_model + latent_dim, vocab_size, rng))
        self.gate = self.add_module("gate", Linear(d_model + latent_dim, 1, rng))

    def step(self, h_t: Tensor, z: Tensor, ctx_attn: Tensor, ctx_ids,
             p_gen_override: float | None = None) -> Tensor:
        """Distribution over the vocabulary for one decoding step.

        ctx_attn holds this step's attention weights over the context
        positions; its mass is scattered onto the context token ids and
        blended with the vocabulary softmax by the generation gate.
        """
        state = ad.concat([h_t, z], axis=0)
        vocab_dist = ad.softmax(self.vocab_proj(state))
        copy_dist = ad.scatter_sum(ctx_attn, ctx_ids, self.vocab_size)
        if p_gen_override is None:
            p_gen = ad.sigmoid(self.gate(state))           # shape (1,)
        else:
            p_gen = Tensor(np.asarray([p_gen_override]))
        keep = ad.add_scalar(ad.neg(p_gen), 1.0)
        return ad.add(ad.mul(p_gen, vocab_dist), ad.mul(keep, copy_dist))


def step_distributions(decoder: ResponseDecoder, pointer: PointerGenerator,
                       target_emb: Tensor, hat_ctx: Tensor, g, z: Tensor,
                       ctx_ids, p_gen_override: float | None = None):
    """Per-step output distributions for a teacher-forced target prefix."""
    h, cross = decoder(target_emb, hat_ctx, g)
    t = h.shape[0]
    dists = []
    for i in range(t):
        h_i = ad.reshape(ad.narrow(h, 0, i, 1), (h.shape[1],))
        attn_i = ad.reshape(ad.narrow(cross, 0, i, 1), (cross.shape[1],))
        dists.append(pointer.step(h_i, z, attn_i, ctx_ids,
                                  p_gen_override=p_gen_override))
    return dists


def reconstruction_nll(dists, gold_ids, pad_id: int = 0) -> Tensor:
    """Teacher-forced negative log-likelihood, averaged over non-pad gold
    tokens."""
    picked = []
    for dist, gold in zip(dists, gold_ids):
        if gold == pad_id:
            continue
        picked.append(ad.reshape(ad.take(dist, int(gold)), (1,)))
    if not picked:
        raise ValueError("no non-pad gold tokens to score")
    return ad.neg(ad.tmean(ad.safe_log(ad.concat(picked, axis=0))))


def greedy_decode(embed_step, decoder: ResponseDecoder,
                  pointer: PointerGenerator, sos_emb: Tensor, hat_ctx: Tensor,
                  g, z: Tensor, ctx_ids, max_steps: int = 50) -> list[int]:
    """Argmax decoding; stops at EOS or after max_steps tokens.

    embed_step maps a token id to its embedding row. The returned ids do
    not include EOS. Deterministic given z and the parameters.
    """
    generated: list[int] = []
    prefix = [ad.reshape(sos_emb, (1, sos_emb.shape[0]))]
    for _ in range(max_steps):
        target_emb = ad.concat(prefix, axis=0) if len(prefix) > 1 else prefix[0]
        h, cross = decoder(target_emb, hat_ctx, g)
        last = h.shape[0] - 1
        h_t = ad.reshape(ad.narrow(h, 0, last, 1), (h.shape[1],))
        attn_t = ad.reshape(ad.narrow(cross, 0, last, 1), (cross.shape[1],))
        dist = pointer.step(h_t, z, attn_t, ctx_ids)
        next_id = int(np.argmax(dist.data))
        if next_id == EOS:
            break
        generated.append(next_id)
        prefix.append(ad.reshape(embed_step(next_id), (1, sos_emb.shape[0])))
    return generated
