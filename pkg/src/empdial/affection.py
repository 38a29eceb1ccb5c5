"""Dual-latent conditional variational autoencoder.

Separate speaker and listener Gaussians, each with a prior network seeing
only context and a recognition network that additionally sees the encoded
gold response. The two samples are fused by an emotional-similarity
weight computed from the looked-up emotion embedding rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Linear, Module


@dataclass
class GaussianParams:
    mu: Tensor       # [dz]
    log_var: Tensor  # [dz]


class LatentMLP(Module):
    """3-layer MLP with tanh hidden activations; the final linear layer
    emits 2*dz values split into mean and log-variance."""

    def __init__(self, in_dim: int, hidden: int, latent_dim: int,
                 rng: np.random.Generator):
        super().__init__()
        self.latent_dim = latent_dim
        self.l1 = self.add_module("l1", Linear(in_dim, hidden, rng))
        self.l2 = self.add_module("l2", Linear(hidden, hidden, rng))
        self.l3 = self.add_module("l3", Linear(hidden, 2 * latent_dim, rng))

    def __call__(self, x: Tensor) -> GaussianParams:
        h = ad.tanh(self.l1(x))
        h = ad.tanh(self.l2(h))
        out = self.l3(h)
        mu = ad.narrow(out, 0, 0, self.latent_dim)
        log_var = ad.narrow(out, 0, self.latent_dim, self.latent_dim)
        return GaussianParams(mu=mu, log_var=log_var)


class PriorNet(Module):
    """Gaussian parameters from the emotional context alone."""

    def __init__(self, d_model: int, latent_dim: int, rng: np.random.Generator):
        super().__init__()
        self.mlp = self.add_module("mlp", LatentMLP(d_model, d_model, latent_dim, rng))

    def __call__(self, hat_h: Tensor) -> GaussianParams:
        return self.mlp(ad.tmean(hat_h, axis=0))


class RecogNet(Module):
    """Gaussian parameters from the emotional context and the response."""

    def __init__(self, d_model: int, latent_dim: int, rng: np.random.Generator):
        super().__init__()
        self.mlp = self.add_module("mlp", LatentMLP(2 * d_model, d_model, latent_dim, rng))

    def __call__(self, hat_h: Tensor, h_resp: Tensor) -> GaussianParams:
        pooled = ad.concat([ad.tmean(hat_h, axis=0), ad.tmean(h_resp, axis=0)], axis=0)
        return self.mlp(pooled)


def reparameterize(p: GaussianParams, eps: Tensor) -> Tensor:
    """z = mu + exp(log_var / 2) * eps, differentiable in mu and log_var."""
    return ad.add(p.mu, ad.mul(ad.exp(ad.scale(p.log_var, 0.5)), eps))


def similarity_beta(row_s: Tensor, row_l: Tensor) -> Tensor:
    """(1 + cosine) / 2 between the two emotion embedding rows, in [0, 1].

    A zero-norm operand makes cosine undefined; the weight falls back to
    0.5 and the event is counted in diagnostics.
    """
    ns = float(np.linalg.norm(row_s.data))
    nl = float(np.linalg.norm(row_l.data))
    if ns == 0.0 or nl == 0.0:
        ad.diagnostics.zero_norm_similarity += 1
        warnings.warn("zero-norm emotion embedding; similarity weight falls back to 0.5")
        return Tensor(np.asarray(0.5))
    cos = ad.div(ad.dot(row_s, row_l),
                 ad.sqrt(ad.mul(ad.dot(row_s, row_s), ad.dot(row_l, row_l))))
    return ad.add_scalar(ad.scale(cos, 0.5), 0.5)


def fuse(z_s: Tensor, z_l: Tensor, beta: Tensor) -> Tensor:
    """beta * z_s + (1 - beta) * z_l."""
    one_minus = ad.add_scalar(ad.neg(beta), 1.0)
    return ad.add(ad.mul(beta, z_s), ad.mul(one_minus, z_l))


def kl_divergence(q: GaussianParams, p: GaussianParams) -> Tensor:
    """Analytic KL(q || p) for diagonal Gaussians, summed over dimensions.

    0.5 * sum(log_var_p - log_var_q + exp(log_var_q - log_var_p)
              + (mu_q - mu_p)^2 / exp(log_var_p) - 1)
    """
    diff_lv = ad.sub(q.log_var, p.log_var)
    dmu = ad.sub(q.mu, p.mu)
    quad = ad.mul(ad.mul(dmu, dmu), ad.exp(ad.neg(p.log_var)))
    per_dim = ad.add_scalar(ad.add(ad.add(ad.neg(diff_lv), ad.exp(diff_lv)), quad), -1.0)
    return ad.scale(ad.tsum(per_dim), 0.5)


def kl_anneal(batch_index: int, horizon: int = 15000) -> float:
    """Linear KL weight ramp, clamped to [0, 1] over the batch horizon."""
    if batch_index < 0:
        raise ValueError(f"negative batch index {batch_index}")
    if horizon <= 0:
        return 1.0
    return min(1.0, batch_index / horizon)


class BowProjection(Module):
    """Vocabulary logits from the fused latent and the pooled context."""

    def __init__(self, latent_dim: int, d_model: int, vocab_size: int,
                 rng: np.random.Generator):
        super().__init__()
        self.proj = self.add_module("proj", Linear(latent_dim + d_model, vocab_size, rng))

    def __call__(self, z: Tensor, ctx_pooled: Tensor) -> Tensor:
        return self.proj(ad.concat([z, ctx_pooled], axis=0))


def bow_loss(z: Tensor, ctx_pooled: Tensor, response_ids, projection: BowProjection,
             pad_id: int = 0) -> Tensor:
    """Mean negative log-likelihood of the response tokens under one
    order-free projection of [z (+) pooled context]."""
    targets = [i for i in response_ids if i != pad_id]
    if not targets:
        raise ValueError("bag-of-words loss needs a non-empty response")
    log_probs = ad.log_softmax(projection(z, ctx_pooled))
    return ad.neg(ad.tmean(ad.gather(log_probs, targets)))


def cvae_loss(kl_speaker: Tensor, kl_listener: Tensor, reconstruction: Tensor,
              alpha: float) -> Tensor:
    """alpha-weighted KL terms plus the reconstruction negative
    log-likelihood (one term, computed over the fused-z decoder output)."""
    return ad.add(ad.scale(ad.add(kl_speaker, kl_listener), alpha), reconstruction)
