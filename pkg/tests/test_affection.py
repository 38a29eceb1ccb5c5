"""Dual-latent CVAE: priors, recognition, fusion, KL, annealing, BOW."""

import math
import warnings

import numpy as np
import pytest

from empdial import autodiff as ad
from empdial.autodiff import Graph, Tensor, tensor
from empdial.affection import (
    BowProjection, GaussianParams, PriorNet, RecogNet, bow_loss, cvae_loss,
    fuse, kl_anneal, kl_divergence, reparameterize, similarity_beta,
)
from empdial.gradcheck import check_gradients

from oracles import analytic_kl, mc_kl_estimate


def gp(mu, lv):
    return GaussianParams(mu=tensor(np.asarray(mu, dtype=float)),
                          log_var=tensor(np.asarray(lv, dtype=float)))


class TestPriorRecogNets:
    def test_output_dimensions(self):
        rng = np.random.default_rng(0)
        prior = PriorNet(6, 200, rng)
        out = prior(tensor(rng.standard_normal((4, 6))))
        assert out.mu.shape == (200,)
        assert out.log_var.shape == (200,)

    def test_zero_weights_give_standard_normal(self):
        rng = np.random.default_rng(1)
        prior = PriorNet(5, 4, rng)
        for p in prior.parameters():
            p.data[...] = 0.0
        out = prior(tensor(rng.standard_normal((3, 5))))
        assert np.allclose(out.mu.data, 0.0)
        assert np.allclose(out.log_var.data, 0.0)

    def test_recognition_with_zeroed_response_slot_equals_prior(self):
        """The recognition net's first layer sees [context, response]; when
        its response block is zero and the context block copies the prior's
        weights, the two nets agree."""
        rng = np.random.default_rng(2)
        d, dz = 5, 3
        prior = PriorNet(d, dz, rng)
        recog = RecogNet(d, dz, rng)
        recog.mlp.l1.w.data[...] = 0.0
        recog.mlp.l1.w.data[:d, :] = prior.mlp.l1.w.data
        recog.mlp.l1.b.data[...] = prior.mlp.l1.b.data
        recog.mlp.l2.copy_from(prior.mlp.l2)
        recog.mlp.l3.copy_from(prior.mlp.l3)
        hat = tensor(rng.standard_normal((4, d)))
        resp = tensor(rng.standard_normal((2, d)))
        a = prior(hat)
        b = recog(hat, resp)
        assert np.allclose(a.mu.data, b.mu.data)
        assert np.allclose(a.log_var.data, b.log_var.data)

    def test_kl_gradient_through_mlps(self):
        rng = np.random.default_rng(3)
        prior = PriorNet(4, 3, rng)
        recog = RecogNet(4, 3, rng)
        hat = ad.param((3, 4), rng, scale=0.5)
        resp = ad.param((2, 4), rng, scale=0.5)
        params = dict(prior.named_parameters(prefix="prior."))
        params.update(recog.named_parameters(prefix="recog."))
        params.update({"hat": hat, "resp": resp})
        res = check_gradients(lambda: kl_divergence(recog(hat, resp), prior(hat)),
                              params, name="kl_through_mlps")
        assert res.passed, res.worst


class TestReparameterize:
    def test_zero_eps_returns_mean(self):
        p = gp([1.0, -2.0], [0.3, 0.7])
        z = reparameterize(p, tensor(np.zeros(2)))
        assert np.allclose(z.data, [1.0, -2.0])

    def test_unit_variance_adds_eps(self):
        p = gp([1.0, 2.0], [0.0, 0.0])
        z = reparameterize(p, tensor([0.5, -0.5]))
        assert np.allclose(z.data, [1.5, 1.5])

    def test_sample_mean_matches_mu(self):
        """Monte-Carlo oracle: the sample mean over 1e5 draws lands within
        3 sigma / sqrt(N) of mu."""
        rng = np.random.default_rng(4)
        mu = np.array([0.7, -1.2, 0.1])
        lv = np.array([0.4, -0.3, 0.9])
        p = gp(mu, lv)
        n = 100_000
        eps = rng.standard_normal((n, 3))
        std = np.exp(0.5 * lv)
        samples = mu + std * eps  # same formula, vectorized
        single = reparameterize(p, tensor(eps[0])).data
        assert np.allclose(single, samples[0])
        tol = 3 * std / math.sqrt(n)
        assert np.all(np.abs(samples.mean(axis=0) - mu) < tol)

    def test_differentiable_in_mu_and_log_var(self):
        rng = np.random.default_rng(5)
        mu = ad.param((3,), rng, scale=0.5)
        lv = ad.param((3,), rng, scale=0.5)
        eps = tensor(rng.standard_normal(3))
        mix = tensor(rng.standard_normal(3))
        res = check_gradients(
            lambda: ad.tsum(ad.mul(reparameterize(GaussianParams(mu, lv), eps), mix)),
            {"mu": mu, "lv": lv}, name="reparameterize")
        assert res.passed, res.worst


class TestSimilarityBeta:
    def test_identical_vectors(self):
        v = tensor([0.3, 0.4, 0.5])
        assert np.isclose(similarity_beta(v, v).item(), 1.0)

    def test_antiparallel_vectors(self):
        v = tensor([1.0, -2.0])
        w = tensor([-1.0, 2.0])
        assert np.isclose(similarity_beta(v, w).item(), 0.0)

    def test_orthogonal_vectors(self):
        assert np.isclose(similarity_beta(tensor([1.0, 0.0]),
                                          tensor([0.0, 1.0])).item(), 0.5)

    def test_zero_norm_falls_back_with_warning(self):
        ad.diagnostics.reset()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            b = similarity_beta(tensor([0.0, 0.0]), tensor([1.0, 0.0]))
        assert b.item() == 0.5
        assert ad.diagnostics.zero_norm_similarity == 1
        assert caught

    def test_range_and_gradients(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            a = tensor(rng.standard_normal(4))
            b = tensor(rng.standard_normal(4))
            val = similarity_beta(a, b).item()
            assert 0.0 <= val <= 1.0
        a = ad.param((4,), rng, scale=1.0)
        b = ad.param((4,), rng, scale=1.0)
        res = check_gradients(lambda: similarity_beta(a, b), {"a": a, "b": b},
                              name="similarity_beta")
        assert res.passed, res.worst


class TestFuse:
    def test_endpoints_and_midpoint(self):
        z_s = tensor([1.0, 2.0])
        z_l = tensor([-1.0, -2.0])
        assert np.allclose(fuse(z_s, z_l, tensor(1.0)).data, z_s.data)
        assert np.allclose(fuse(z_s, z_l, tensor(0.0)).data, z_l.data)
        assert np.allclose(fuse(z_s, z_l, tensor(0.5)).data, 0.0)

    def test_output_inside_segment(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            z_s = rng.standard_normal(5)
            z_l = rng.standard_normal(5)
            beta = rng.uniform()
            z = fuse(tensor(z_s), tensor(z_l), tensor(beta)).data
            lo = np.minimum(z_s, z_l) - 1e-12
            hi = np.maximum(z_s, z_l) + 1e-12
            assert np.all(z >= lo) and np.all(z <= hi)


class TestKL:
    def test_identical_distributions_zero(self):
        q = gp([0.5, -0.5], [0.2, -0.2])
        assert abs(kl_divergence(q, q).item()) < 1e-12

    def test_standard_normal_closed_form(self):
        mu = np.array([0.7, -1.1, 0.4])
        q = gp(mu, np.zeros(3))
        p = gp(np.zeros(3), np.zeros(3))
        assert np.isclose(kl_divergence(q, p).item(), 0.5 * np.sum(mu ** 2))

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(8)
        mu_q, lv_q = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)
        mu_p, lv_p = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)
        got = kl_divergence(gp(mu_q, lv_q), gp(mu_p, lv_p)).item()
        assert np.isclose(got, analytic_kl(mu_q, lv_q, mu_p, lv_p), rtol=1e-12)
        mc = mc_kl_estimate(mu_q, lv_q, mu_p, lv_p, 1_000_000, rng)
        assert abs(got - mc) / max(abs(got), 1e-9) < 0.01

    def test_non_negative_on_random_pairs(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            q = gp(rng.uniform(-3, 3, 5), rng.uniform(-2, 2, 5))
            p = gp(rng.uniform(-3, 3, 5), rng.uniform(-2, 2, 5))
            assert kl_divergence(q, p).item() >= -1e-12


class TestAnneal:
    def test_boundary_values(self):
        assert kl_anneal(0) == 0.0
        assert kl_anneal(15000) == 1.0
        assert kl_anneal(7500) == 0.5
        assert kl_anneal(10 ** 9) == 1.0

    def test_monotone_and_clamped(self):
        prev = -1.0
        for i in range(0, 20001, 100):
            a = kl_anneal(i)
            assert 0.0 <= a <= 1.0
            assert a >= prev
            prev = a

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            kl_anneal(-1)


class TestBowLoss:
    def test_zero_projection_gives_log_vocab(self):
        rng = np.random.default_rng(10)
        proj = BowProjection(3, 4, 20, rng)
        for p in proj.parameters():
            p.data[...] = 0.0
        loss = bow_loss(tensor(rng.standard_normal(3)),
                        tensor(rng.standard_normal(4)), [5, 6, 7], proj)
        assert np.isclose(loss.item(), math.log(20))

    def test_confident_token_drives_loss_to_zero(self):
        rng = np.random.default_rng(11)
        proj = BowProjection(3, 4, 10, rng)
        for p in proj.parameters():
            p.data[...] = 0.0
        proj.proj.b.data[7] = 50.0
        loss = bow_loss(tensor(np.zeros(3)), tensor(np.zeros(4)), [7], proj)
        assert loss.item() < 1e-9

    def test_empty_response_rejected(self):
        rng = np.random.default_rng(12)
        proj = BowProjection(2, 2, 5, rng)
        with pytest.raises(ValueError):
            bow_loss(tensor(np.zeros(2)), tensor(np.zeros(2)), [0, 0], proj, pad_id=0)

    def test_gradient_wrt_latent(self):
        rng = np.random.default_rng(13)
        proj = BowProjection(3, 4, 8, rng)
        z = ad.param((3,), rng, scale=0.5)
        ctx = tensor(rng.standard_normal(4))
        res = check_gradients(lambda: bow_loss(z, ctx, [2, 5], proj),
                              {"z": z}, name="bow_wrt_z")
        assert res.passed, res.worst


class TestCvaeLoss:
    def test_alpha_zero_is_pure_reconstruction(self):
        kl_s, kl_l = tensor(1.3), tensor(0.7)
        recon = tensor(2.5)
        assert np.isclose(cvae_loss(kl_s, kl_l, recon, 0.0).item(), 2.5)

    def test_identical_prior_recog_reconstruction_only(self):
        q = gp([0.4, 0.1], [0.2, -0.1])
        recon = tensor(1.9)
        total = cvae_loss(kl_divergence(q, q), kl_divergence(q, q), recon, 1.0)
        assert np.isclose(total.item(), 1.9)

    def test_components_sum_exactly(self):
        """Log-replay: the reported total recomposes from logged parts."""
        rng = np.random.default_rng(14)
        for _ in range(25):
            kl_s = tensor(rng.uniform(0, 3))
            kl_l = tensor(rng.uniform(0, 3))
            recon = tensor(rng.uniform(0, 5))
            alpha = float(rng.uniform())
            total = cvae_loss(kl_s, kl_l, recon, alpha).item()
            replay = alpha * (kl_s.item() + kl_l.item()) + recon.item()
            assert total == pytest.approx(replay, rel=0, abs=0)


class TestSamplerHookObservability:
    def test_train_uses_recognition_eval_uses_prior(self, corpus, path_cache):
        from empdial.data import prepare_batch
        from empdial.model import EmpathyModel, ModelConfig
        rng = np.random.default_rng(15)
        cfg = ModelConfig(vocab_size=len(corpus.vocab), d_model=12, emo_dim=12,
                          act_dim=12, latent_dim=6, ffn_dim=24)
        model = EmpathyModel(cfg, rng)
        batch = prepare_batch(corpus.train[0], corpus.vocab)
        record = path_cache.get(batch.dialogue_id)
        calls = []

        def sampler(dim):
            calls.append(dim)
            return np.zeros(dim)

        rec_t = model.forward(batch, record, corpus.vocab, mode="train",
                              sampler=sampler)
        rec_e = model.forward(batch, record, corpus.vocab, mode="eval",
                              sampler=sampler)
        assert rec_t.latent_source == "recognition"
        assert rec_e.latent_source == "prior"
        assert len(calls) == 4  # speaker and listener draws in both modes
