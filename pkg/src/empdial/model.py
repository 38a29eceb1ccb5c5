"""The assembled empathetic response model.

Wires the emotional context encoder, the dual-latent CVAE, the knowledge
fusion stack, the act predictor and the pointer decoder together, with
switches that remove each of the three facets for ablation runs. Every
forward records which components actually executed so tests can assert
the switches remove exactly what they claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .affection import (BowProjection, PriorNet, RecogNet, bow_loss, cvae_loss,
                        fuse, kl_divergence, reparameterize, similarity_beta)
from .behavior import ACTS, ActEmbedding, act_loss, predict_act
from .cognition import KnowledgeEncoder, KnowledgeFusion, attention_over_context
from .data import EMOTIONS, tokenize
from .decoder import (PointerGenerator, ResponseDecoder, act_augmented_sos,
                      greedy_decode, reconstruction_nll, step_distributions)
from .encoders import (EOS, PAD, SOS, UNK, ContextBatch,
                       EmotionalContextEncoder, Vocab, classify_emotion,
                       emotion_losses)
from .layers import Module


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 300
    emo_dim: int = 300
    act_dim: int = 300
    latent_dim: int = 200
    n_heads: int = 2
    enc_layers: int = 1
    dec_layers: int = 1
    ffn_dim: int = 600
    n_emotions: int = len(EMOTIONS)
    n_acts: int = len(ACTS)
    max_decode_len: int = 50
    share_emo_attention: bool = False
    ablate_cog: bool = False
    ablate_aff: bool = False
    ablate_beh: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ForwardRecord:
    components: set[str]
    losses: dict[str, Tensor]
    dists: list[Tensor]
    targets: list[int]
    alpha: float
    latent_source: str
    z: Tensor
    beta: float | None = None
    pred_speaker_emotion: int | None = None
    pred_listener_emotion: int | None = None
    pred_act: int | None = None


@dataclass
class GenerationTrace:
    response_ids: list[int]
    response_tokens: list[str]
    speaker_emotion: str
    listener_emotion: str | None
    act: str | None
    tau_r: list[str] = field(default_factory=list)
    verbalized_paths: list[str] = field(default_factory=list)
    beta: float | None = None


class EmpathyModel(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 preload_embeddings: np.ndarray | None = None):
        super().__init__()
        self.config = config
        c = config
        self.encoder = self.add_module("encoder", EmotionalContextEncoder(
            c.vocab_size, c.d_model, c.emo_dim, c.n_emotions, c.n_heads,
            c.ffn_dim, c.enc_layers, rng, preload=preload_embeddings,
            share_emo_attention=c.share_emo_attention))
        self.prior_speaker = self.add_module("prior_speaker",
                                             PriorNet(c.d_model, c.latent_dim, rng))
        self.recog_speaker = self.add_module("recog_speaker",
                                             RecogNet(c.d_model, c.latent_dim, rng))
        if not c.ablate_aff:
            self.prior_listener = self.add_module("prior_listener",
                                                  PriorNet(c.d_model, c.latent_dim, rng))
            self.recog_listener = self.add_module("recog_listener",
                                                  RecogNet(c.d_model, c.latent_dim, rng))
        if not c.ablate_cog:
            self.know_encoder = self.add_module("know_encoder",
                                                KnowledgeEncoder(c.d_model, rng))
            self.know_fusion = self.add_module("know_fusion",
                                               KnowledgeFusion(c.d_model, rng))
        if not c.ablate_beh:
            self.w_act = self.register("w_act", ad.param((c.n_acts, c.d_model), rng))
            self.act_embedding = self.add_module("act_embedding",
                                                 ActEmbedding(c.act_dim, rng, c.n_acts))
            self.w_t = self.register("w_t",
                                     ad.param((c.d_model, c.d_model + c.act_dim), rng))
        self.decoder = self.add_module("decoder", ResponseDecoder(
            c.d_model, c.n_heads, c.ffn_dim, c.dec_layers, rng,
            keywords_attention=not c.ablate_cog))
        self.pointer = self.add_module("pointer", PointerGenerator(
            c.d_model, c.latent_dim, c.vocab_size, rng))
        self.bow = self.add_module("bow", BowProjection(
            c.latent_dim, c.d_model, c.vocab_size, rng))

    # -- knowledge preparation ------------------------------------------

    def embed_token_static(self, vocab: Vocab):
        """Detached embedding lookup for the offline-style attention
        vector; out-of-vocabulary tokens use the UNK row."""
        table = self.encoder.embedding.table.data

        def embed(token: str) -> np.ndarray:
            return table[vocab.token_to_id.get(token, UNK)]
        return embed

    def knowledge_inputs(self, record: dict | None, batch: ContextBatch,
                         vocab: Vocab):
        """Token ids of the verbalized paths plus the context attention
        vector g, recomputed from tau_r against the current embeddings."""
        if self.config.ablate_cog or record is None:
            return None, None, [], []
        verbalized = record.get("verbalized", [])
        tau_r = record.get("tau_r", [])
        know_tokens = [tok for sentence in verbalized for tok in tokenize(sentence)]
        know_ids = vocab.encode(know_tokens) if know_tokens else []
        embed = self.embed_token_static(vocab)
        g = attention_over_context(["[CLS]"] + batch.ctx_tokens, tau_r, embed)
        return know_ids, g, tau_r, verbalized

    # -- forward ---------------------------------------------------------

    def forward(self, batch: ContextBatch, record: dict | None, vocab: Vocab,
                mode: str = "train", alpha: float = 1.0, sampler=None,
                p_gen_override: float | None = None) -> ForwardRecord:
        """Run the full pipeline for one dialogue.

        mode "train" draws latents from the recognition networks and uses
        gold labels for embedding lookups; mode "eval" draws from the
        priors and uses predicted labels. ``sampler(dim)`` supplies the
        reparameterization noise (zeros when absent, giving the mean).
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        c = self.config
        components: set[str] = set()
        losses: dict[str, Tensor] = {}
        sampler = sampler or (lambda dim: np.zeros(dim))

        enc = self.encoder.encode(batch)
        components.add("context_encoder")

        p_s = classify_emotion(self.encoder.cls_row(enc.h_speaker),
                               self.encoder.w_speaker)
        pred_s = int(np.argmax(p_s.data))
        components.add("speaker_emotion")
        pred_l = None
        if not c.ablate_aff:
            p_l = classify_emotion(self.encoder.cls_row(enc.h_listener),
                                   self.encoder.w_listener)
            pred_l = int(np.argmax(p_l.data))
            components.add("listener_emotion")
            l_s, l_l = emotion_losses(p_s, p_l, batch.speaker_emotion,
                                      batch.listener_emotion)
            losses["l_s"] = l_s
            losses["l_l"] = l_l
        else:
            losses["l_s"] = ad.neg(ad.safe_log(ad.take(p_s, batch.speaker_emotion)))

        emo_s_label = batch.speaker_emotion if mode == "train" else pred_s
        if not c.ablate_aff:
            emo_l_label = batch.listener_emotion if mode == "train" else pred_l
            row_s, row_l = self.encoder.emotion_rows(emo_s_label, emo_l_label)
            hat_s, hat_l = self.encoder.emotional_representations(enc, row_s, row_l)
        else:
            row_s, _ = self.encoder.emotion_rows(emo_s_label, 0)
            hat_s = self.encoder.emo_attn_speaker(enc.h_speaker, row_s)
            hat_l = None
        components.add("emotion_self_attention")

        # latent variables
        prior_s = self.prior_speaker(hat_s)
        recog_s = self.recog_speaker(hat_s, enc.h_resp)
        kl_s = kl_divergence(recog_s, prior_s)
        losses["kl_s"] = kl_s
        source = recog_s if mode == "train" else prior_s
        eps_s = Tensor(np.asarray(sampler(c.latent_dim)))
        z_s = reparameterize(source, eps_s)
        latent_source = "recognition" if mode == "train" else "prior"
        beta_value = None
        if not c.ablate_aff:
            prior_l = self.prior_listener(hat_l)
            recog_l = self.recog_listener(hat_l, enc.h_resp)
            kl_l = kl_divergence(recog_l, prior_l)
            losses["kl_l"] = kl_l
            source_l = recog_l if mode == "train" else prior_l
            eps_l = Tensor(np.asarray(sampler(c.latent_dim)))
            z_l = reparameterize(source_l, eps_l)
            beta = similarity_beta(row_s, row_l)
            beta_value = float(beta.data)
            z = fuse(z_s, z_l, beta)
            components.add("latent_fusion")
        else:
            z = z_s
        components.add("latent_" + latent_source)

        # knowledge fusion
        know_ids, g, _, _ = self.knowledge_inputs(record, batch, vocab)
        if not c.ablate_cog:
            if know_ids:
                know_emb = self.encoder.embedding(know_ids)
                h_know = self.know_encoder(know_emb)
                components.add("knowledge_encoder")
            else:
                h_know = None
            hat_ctx, _ = self.know_fusion(enc.h_ctx, h_know)
            components.add("knowledge_fusion")
            if g is None or len(g) != len(batch.ctx_ids):
                g = np.full(len(batch.ctx_ids), 1.0 / len(batch.ctx_ids))
        else:
            hat_ctx = enc.h_ctx
            g = None

        # dialogue act
        pred_act = None
        act_row = None
        if not c.ablate_beh:
            hat_ctx_cls = self.encoder.cls_row(hat_ctx)
            p_a = predict_act(hat_ctx_cls, self.w_act)
            pred_act = int(np.argmax(p_a.data))
            losses["l_act"] = act_loss(p_a, batch.act)
            act_label = batch.act if mode == "train" else pred_act
            act_row = self.act_embedding(act_label)
            components.add("act_predictor")

        # decode teacher-forced
        sos_emb = self.encoder.embedding.row(SOS)
        if act_row is not None:
            start = act_augmented_sos(act_row, sos_emb, self.w_t)
            components.add("act_augmented_start")
        else:
            start = sos_emb
        targets = list(batch.response_ids) + [EOS]
        rows = [ad.reshape(start, (1, c.d_model))]
        if batch.response_ids:
            rows.append(self.encoder.embedding(batch.response_ids))
        target_emb = ad.concat(rows, axis=0) if len(rows) > 1 else rows[0]
        dists = step_distributions(self.decoder, self.pointer, target_emb,
                                   hat_ctx, g, z, batch.ctx_ids,
                                   p_gen_override=p_gen_override)
        losses["recon"] = reconstruction_nll(dists, targets, pad_id=PAD)
        components.add("pointer_decoder")

        losses["l_bow"] = bow_loss(z, ad.tmean(enc.h_ctx, axis=0), targets,
                                   self.bow, pad_id=PAD)
        kl_l_part = losses.get("kl_l")
        if kl_l_part is None:
            kl_l_part = Tensor(np.asarray(0.0))
        losses["l_cvae"] = cvae_loss(losses["kl_s"], kl_l_part,
                                     losses["recon"], alpha)

        return ForwardRecord(components=components, losses=losses, dists=dists,
                             targets=targets, alpha=alpha,
                             latent_source=latent_source, z=z, beta=beta_value,
                             pred_speaker_emotion=pred_s,
                             pred_listener_emotion=pred_l, pred_act=pred_act)

    # -- generation ------------------------------------------------------

    def generate(self, batch: ContextBatch, record: dict | None, vocab: Vocab,
                 sampler=None) -> GenerationTrace:
        """Greedy response with the inference-time trace fields."""
        c = self.config
        sampler = sampler or (lambda dim: np.zeros(dim))
        enc = self.encoder.encode(batch)
        p_s = classify_emotion(self.encoder.cls_row(enc.h_speaker),
                               self.encoder.w_speaker)
        pred_s = int(np.argmax(p_s.data))
        pred_l = None
        beta_value = None
        if not c.ablate_aff:
            p_l_dist = classify_emotion(self.encoder.cls_row(enc.h_listener),
                                        self.encoder.w_listener)
            pred_l = int(np.argmax(p_l_dist.data))
            row_s, row_l = self.encoder.emotion_rows(pred_s, pred_l)
            hat_s, hat_l = self.encoder.emotional_representations(enc, row_s, row_l)
            prior_s = self.prior_speaker(hat_s)
            prior_l = self.prior_listener(hat_l)
            z_s = reparameterize(prior_s, Tensor(np.asarray(sampler(c.latent_dim))))
            z_l = reparameterize(prior_l, Tensor(np.asarray(sampler(c.latent_dim))))
            beta = similarity_beta(row_s, row_l)
            beta_value = float(beta.data)
            z = fuse(z_s, z_l, beta)
        else:
            row_s, _ = self.encoder.emotion_rows(pred_s, 0)
            hat_s = self.encoder.emo_attn_speaker(enc.h_speaker, row_s)
            prior_s = self.prior_speaker(hat_s)
            z = reparameterize(prior_s, Tensor(np.asarray(sampler(c.latent_dim))))

        know_ids, g, tau_r, verbalized = self.knowledge_inputs(record, batch, vocab)
        if not c.ablate_cog:
            if know_ids:
                h_know = self.know_encoder(self.encoder.embedding(know_ids))
            else:
                h_know = None
            hat_ctx, _ = self.know_fusion(enc.h_ctx, h_know)
            if g is None or len(g) != len(batch.ctx_ids):
                g = np.full(len(batch.ctx_ids), 1.0 / len(batch.ctx_ids))
        else:
            hat_ctx = enc.h_ctx
            g = None
            tau_r, verbalized = [], []

        act_name = None
        act_row = None
        if not c.ablate_beh:
            p_a = predict_act(self.encoder.cls_row(hat_ctx), self.w_act)
            pred_act = int(np.argmax(p_a.data))
            act_name = ACTS[pred_act]
            act_row = self.act_embedding(pred_act)

        sos_emb = self.encoder.embedding.row(SOS)
        start = (act_augmented_sos(act_row, sos_emb, self.w_t)
                 if act_row is not None else sos_emb)
        ids = greedy_decode(lambda i: self.encoder.embedding.row(i),
                            self.decoder, self.pointer, start, hat_ctx, g, z,
                            batch.ctx_ids, max_steps=c.max_decode_len)
        return GenerationTrace(
            response_ids=ids, response_tokens=vocab.decode(ids),
            speaker_emotion=EMOTIONS[pred_s],
            listener_emotion=EMOTIONS[pred_l] if pred_l is not None else None,
            act=act_name, tau_r=list(tau_r), verbalized_paths=list(verbalized),
            beta=beta_value)
