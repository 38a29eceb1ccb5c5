"""Evaluation metrics: perplexity, distinct n-grams, label accuracies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Corpus, prepare_batch
from .encoders import PAD
from .model import EmpathyModel


def distinct_n(responses: list[list[str]], n: int,
               per_response: bool = False) -> float:
    """Unique n-grams over total n-grams.

    Pooled over the whole corpus by default; the per-response variant
    averages the ratio across responses that have at least one n-gram.
    """
    def ngrams(tokens):
        return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]

    if per_response:
        ratios = []
        for resp in responses:
            grams = ngrams(resp)
            if grams:
                ratios.append(len(set(grams)) / len(grams))
        return float(np.mean(ratios)) if ratios else 0.0
    all_grams = [g for resp in responses for g in ngrams(resp)]
    if not all_grams:
        return 0.0
    return len(set(all_grams)) / len(all_grams)


def perplexity_from_nll(total_nll: float, total_tokens: int) -> float:
    if total_tokens == 0:
        return float("inf")
    return float(np.exp(total_nll / total_tokens))


@dataclass
class MetricsRecord:
    ppl: float
    dist1: float
    dist2: float
    emosa: float
    emola: float | None
    acta: float | None

    def to_dict(self):
        return {"ppl": self.ppl, "dist1": self.dist1, "dist2": self.dist2,
                "emosa": self.emosa, "emola": self.emola, "acta": self.acta}


def validation_ppl(model: EmpathyModel, corpus: Corpus, path_cache: dict,
                   split: str = "valid") -> float:
    """Teacher-forced perplexity only (no generation); used for
    checkpoint selection during training."""
    dialogues = corpus.split(split)
    vocab = corpus.vocab
    merge = model.config.ablate_aff
    total_nll = 0.0
    total_tokens = 0
    for d in dialogues:
        batch = prepare_batch(d, vocab, merge_speaker_stream=merge)
        rec = model.forward(batch, path_cache.get(batch.dialogue_id), vocab,
                            mode="eval", alpha=1.0)
        for dist, gold in zip(rec.dists, rec.targets):
            if gold == PAD:
                continue
            total_nll += -float(np.log(max(dist.data[gold], 1e-300)))
            total_tokens += 1
    return perplexity_from_nll(total_nll, total_tokens)


def evaluate(model: EmpathyModel, corpus: Corpus, path_cache: dict,
             split: str = "test") -> MetricsRecord:
    """Teacher-forced perplexity, greedy-response diversity and label
    accuracies over one split.

    Latents come from the prior networks at their means (the test-time
    path), so the numbers are deterministic.
    """
    dialogues = corpus.split(split)
    if not dialogues:
        raise ValueError(f"split {split!r} is empty")
    vocab = corpus.vocab
    merge = model.config.ablate_aff
    total_nll = 0.0
    total_tokens = 0
    emo_s_hits = 0
    emo_l_hits = 0
    act_hits = 0
    responses = []
    for d in dialogues:
        batch = prepare_batch(d, vocab, merge_speaker_stream=merge)
        record = path_cache.get(batch.dialogue_id)
        rec = model.forward(batch, record, vocab, mode="eval", alpha=1.0)
        for dist, gold in zip(rec.dists, rec.targets):
            if gold == PAD:
                continue
            total_nll += -float(np.log(max(dist.data[gold], 1e-300)))
            total_tokens += 1
        if rec.pred_speaker_emotion == batch.speaker_emotion:
            emo_s_hits += 1
        if rec.pred_listener_emotion is not None and \
                rec.pred_listener_emotion == batch.listener_emotion:
            emo_l_hits += 1
        if rec.pred_act is not None and rec.pred_act == batch.act:
            act_hits += 1
        trace = model.generate(batch, record, vocab)
        responses.append(trace.response_tokens)
    n = len(dialogues)
    return MetricsRecord(
        ppl=perplexity_from_nll(total_nll, total_tokens),
        dist1=distinct_n(responses, 1),
        dist2=distinct_n(responses, 2),
        emosa=emo_s_hits / n,
        emola=None if model.config.ablate_aff else emo_l_hits / n,
        acta=None if model.config.ablate_beh else act_hits / n,
    )
