"""Dialogue act prediction and act feature embedding."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Module

# Fixed catalog order; indices are wire format for datasets and checkpoints.
ACTS = ("agreeing", "acknowledging", "encouraging", "consoling",
        "sympathizing", "suggesting", "questioning", "wishing")
ACT_INDEX = {name: i for i, name in enumerate(ACTS)}


def predict_act(hat_ctx_cls: Tensor, w_act: Tensor) -> Tensor:
    """Softmax(W_a h) over the act catalog from the fused-context [CLS] row."""
    logits = ad.reshape(ad.matmul(w_act, ad.reshape(hat_ctx_cls, (hat_ctx_cls.shape[0], 1))),
                        (w_act.shape[0],))
    return ad.softmax(logits)


def act_loss(p_act: Tensor, act_label: int) -> Tensor:
    return ad.neg(ad.safe_log(ad.take(p_act, act_label)))


class ActEmbedding(Module):
    """Trainable act feature table, one row per catalog entry."""

    def __init__(self, act_dim: int, rng: np.random.Generator,
                 n_acts: int = len(ACTS)):
        super().__init__()
        self.n_acts = n_acts
        self.table = self.register("table", ad.param((n_acts, act_dim), rng))

    def __call__(self, act: int) -> Tensor:
        if not 0 <= act < self.n_acts:
            raise IndexError(f"act index {act} out of range for {self.n_acts} acts")
        return ad.reshape(ad.embedding(self.table, [act]), (self.table.shape[1],))
