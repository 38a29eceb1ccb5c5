"""Dual latent variables: prior vs recognition, similarity fusion, KL.

Run from the repository root:  python3 demos/03_dual_latents.py
"""

import numpy as np

from empdial.affection import (GaussianParams, PriorNet, RecogNet, fuse,
                               kl_anneal, kl_divergence, reparameterize,
                               similarity_beta)
from empdial.autodiff import tensor

rng = np.random.default_rng(0)
d, dz = 16, 8
prior = PriorNet(d, dz, rng)
recog = RecogNet(d, dz, rng)

hat_ctx = tensor(rng.standard_normal((5, d)))
h_resp = tensor(rng.standard_normal((3, d)))

p = prior(hat_ctx)
q = recog(hat_ctx, h_resp)
print("prior mu[:4] =", np.round(p.mu.data[:4], 4))
print("recog mu[:4] =", np.round(q.mu.data[:4], 4))
print("KL(recog || prior) =", round(kl_divergence(q, p).item(), 6))

print("\n== reparameterized sampling ==")
eps = rng.standard_normal(dz)
z = reparameterize(q, tensor(eps))
print("z = mu + std*eps, first coords:", np.round(z.data[:4], 4))
print("eps = 0 returns the mean:",
      np.allclose(reparameterize(q, tensor(np.zeros(dz))).data, q.mu.data))

print("\n== emotional similarity weight ==")
for name, (u, v) in {
    "identical": ([1.0, 2.0], [1.0, 2.0]),
    "orthogonal": ([1.0, 0.0], [0.0, 1.0]),
    "antiparallel": ([1.0, -1.0], [-1.0, 1.0]),
}.items():
    beta = similarity_beta(tensor(u), tensor(v)).item()
    print(f"  {name:12s} beta = {beta:.3f}")

z_s = tensor(np.ones(dz))
z_l = tensor(-np.ones(dz))
print("fuse(beta=0.25) first coord:",
      fuse(z_s, z_l, tensor(0.25)).data[0], " (0.25*1 + 0.75*(-1))")

print("\n== KL annealing over the batch index ==")
for i in (0, 3000, 7500, 12000, 15000, 25000):
    print(f"  batch {i:6d} -> alpha {kl_anneal(i):.3f}")

print("\n== analytic KL vs closed form for N(mu, I) || N(0, I) ==")
mu = rng.standard_normal(dz)
got = kl_divergence(GaussianParams(tensor(mu), tensor(np.zeros(dz))),
                    GaussianParams(tensor(np.zeros(dz)), tensor(np.zeros(dz)))).item()
print("KL =", round(got, 6), "| ||mu||^2 / 2 =", round(0.5 * np.sum(mu ** 2), 6))
