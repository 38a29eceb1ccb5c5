"""The full finite-difference suite: every differentiable op plus the
composite layers, each checked on random small tensors across seeds."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, tensor, tsum, mul
from .affection import PriorNet, RecogNet, kl_divergence, reparameterize
from .decoder import PointerGenerator
from .encoders import EmotionSelfAttention
from .gradcheck import CheckReport, check_gradients
from .layers import DecoderLayer, GRUCell, InterEncoder, causal_mask


def _mix(rng, shape):
    return tensor(rng.standard_normal(shape))


def _op_checks(seed: int):
    rng = np.random.default_rng(seed)
    checks = []

    def param(shape, scale=0.6):
        return ad.param(shape, rng, scale=scale)

    a, b = param((3, 4)), param((4, 5))
    m = _mix(rng, (3, 5))
    checks.append(("op.matmul", lambda: tsum(mul(ad.matmul(a, b), m)),
                   {"a": a, "b": b}))

    x1 = param((4, 5), scale=1.0)
    m1 = _mix(rng, (4, 5))
    checks.append(("op.softmax", lambda: tsum(mul(ad.softmax(x1, axis=-1), m1)),
                   {"x": x1}))
    x1b = param((4, 5), scale=1.0)
    checks.append(("op.log_softmax", lambda: tsum(mul(ad.log_softmax(x1b, axis=-1), m1)),
                   {"x": x1b}))

    x2 = param((6,), scale=1.0)
    checks.append(("op.cross_entropy", lambda: ad.cross_entropy(x2, 2), {"x": x2}))

    xa, xb = param((4, 3)), param((3,))
    m2 = _mix(rng, (4, 3))
    checks.append(("op.add_broadcast", lambda: tsum(mul(ad.add(xa, xb), m2)),
                   {"a": xa, "b": xb}))

    xm, ym = param((3, 3)), param((3, 3))
    m3 = _mix(rng, (3, 3))
    checks.append(("op.mul", lambda: tsum(mul(mul(xm, ym), m3)), {"a": xm, "b": ym}))
    xd, yd = param((3, 3)), param((3, 3))
    checks.append(("op.div", lambda: tsum(mul(ad.div(xd, ad.add_scalar(mul(yd, yd), 1.0)), m3)),
                   {"a": xd, "b": yd}))

    for name, fn in (("tanh", ad.tanh), ("relu", ad.relu), ("sigmoid", ad.sigmoid),
                     ("exp", ad.exp)):
        xe = param((4, 3), scale=0.8)
        xe.data[np.abs(xe.data) < 0.05] += 0.1
        me = _mix(rng, (4, 3))
        checks.append((f"op.{name}", (lambda f=fn, x=xe, mm=me: tsum(mul(f(x), mm))),
                       {"x": xe}))

    xs = param((4,), scale=0.5)
    checks.append(("op.sqrt", lambda: tsum(ad.sqrt(ad.add_scalar(mul(xs, xs), 1.0))),
                   {"x": xs}))
    xl = param((4,), scale=0.5)
    checks.append(("op.safe_log", lambda: tsum(ad.safe_log(ad.add_scalar(mul(xl, xl), 0.5))),
                   {"x": xl}))

    c1, c2 = param((2, 3)), param((2, 2))
    m4 = _mix(rng, (2, 5))
    checks.append(("op.concat", lambda: tsum(mul(ad.concat([c1, c2], axis=1), m4)),
                   {"a": c1, "b": c2}))
    n1 = param((4, 5))
    m5 = _mix(rng, (2, 5))
    checks.append(("op.narrow", lambda: tsum(mul(ad.narrow(n1, 0, 1, 2), m5)), {"x": n1}))

    table = param((6, 4))
    m6 = _mix(rng, (3, 4))
    checks.append(("op.embedding", lambda: tsum(mul(ad.embedding(table, [1, 3, 1]), m6)),
                   {"table": table}))
    vec = param((6,))
    m7 = _mix(rng, (4,))
    checks.append(("op.gather", lambda: tsum(mul(ad.gather(vec, [0, 2, 2, 5]), m7)),
                   {"v": vec}))
    w8 = param((4,))
    m8 = _mix(rng, (7,))
    checks.append(("op.scatter_sum", lambda: tsum(mul(ad.scatter_sum(w8, [1, 1, 3, 6], 7), m8)),
                   {"w": w8}))

    ln_x = param((3, 5), scale=1.0)
    ln_g = param((5,))
    ln_g.data += 1.0
    ln_b = param((5,))
    m9 = _mix(rng, (3, 5))
    checks.append(("op.layer_norm",
                   lambda: tsum(mul(ad.layer_norm(ln_x, ln_g, ln_b), m9)),
                   {"x": ln_x, "gain": ln_g, "bias": ln_b}))

    sr_m, sr_w = param((4, 3)), param((4,))
    m10 = _mix(rng, (4, 3))
    checks.append(("op.scale_rows", lambda: tsum(mul(ad.scale_rows(sr_m, sr_w), m10)),
                   {"m": sr_m, "w": sr_w}))
    rr = param((3,))
    m11 = _mix(rng, (4, 3))
    checks.append(("op.repeat_rows", lambda: tsum(mul(ad.repeat_rows(rr, 4), m11)),
                   {"row": rr}))

    red = param((3, 4))
    m12 = _mix(rng, (4,))
    checks.append(("op.mean_axis", lambda: tsum(mul(ad.tmean(red, axis=0), m12)),
                   {"x": red}))
    red2 = param((3, 4))
    m13 = _mix(rng, (3,))
    checks.append(("op.sum_axis", lambda: tsum(mul(ad.tsum(red2, axis=1), m13)),
                   {"x": red2}))
    tr = param((3, 4))
    m14 = _mix(rng, (4, 3))
    checks.append(("op.transpose", lambda: tsum(mul(ad.transpose(tr), m14)), {"x": tr}))
    return checks


def _composite_checks(seed: int):
    rng = np.random.default_rng(seed)
    checks = []

    itr = InterEncoder(6, 2, 8, 1, rng)
    q = ad.param((2, 6), rng, scale=0.6)
    ctx = ad.param((3, 6), rng, scale=0.6)
    mix = _mix(rng, (2, 6))
    params = dict(itr.named_parameters())
    params.update({"q": q, "ctx": ctx})
    checks.append(("layer.itr_enc", lambda: tsum(mul(itr(q, ctx), mix)), params))

    esa = EmotionSelfAttention(6, 4, 2, rng)
    h = ad.param((3, 6), rng, scale=0.6)
    emo = ad.param((4,), rng, scale=0.6)
    mix2 = _mix(rng, (3, 6))
    params = dict(esa.named_parameters())
    params.update({"h": h, "emo": emo})
    checks.append(("layer.emotion_self_attention",
                   lambda: tsum(mul(esa(h, emo), mix2)), params))

    prior = PriorNet(6, 4, rng)
    recog = RecogNet(6, 4, rng)
    hat = ad.param((3, 6), rng, scale=0.6)
    resp = ad.param((2, 6), rng, scale=0.6)
    eps = Tensor(rng.standard_normal(4))
    mixz = _mix(rng, (4,))
    params = dict(prior.named_parameters(prefix="prior."))
    params.update(dict(recog.named_parameters(prefix="recog.")))
    params.update({"hat": hat, "resp": resp})

    def cvae_forward():
        p = prior(hat)
        q_ = recog(hat, resp)
        z = reparameterize(q_, eps)
        return ad.add(kl_divergence(q_, p), tsum(mul(z, mixz)))

    checks.append(("layer.cvae_mlps", cvae_forward, params))

    cell = GRUCell(4, 5, rng)
    gx = ad.param((1, 4), rng, scale=0.6)
    gh = ad.param((1, 5), rng, scale=0.6)
    mix3 = _mix(rng, (1, 5))
    params = dict(cell.named_parameters())
    params.update({"x": gx, "h": gh})
    checks.append(("layer.gru_cell", lambda: tsum(mul(cell(gx, gh), mix3)), params))

    dec = DecoderLayer(6, 2, 8, rng, keywords_attention=True)
    dx = ad.param((2, 6), rng, scale=0.6)
    dctx = ad.param((3, 6), rng, scale=0.6)
    gw = ad.param((3,), rng, scale=0.4)
    gw.data += 0.8
    mix4 = _mix(rng, (2, 6))
    params = dict(dec.named_parameters())
    params.update({"x": dx, "ctx": dctx, "g": gw})

    def dec_forward():
        kv = ad.scale_rows(dctx, gw)
        y, _ = dec(dx, dctx, kv, causal_mask(2))
        return tsum(mul(y, mix4))

    checks.append(("layer.decoder_layer", dec_forward, params))

    ptr = PointerGenerator(5, 3, 9, rng)
    ph = ad.param((5,), rng, scale=0.6)
    pz = ad.param((3,), rng, scale=0.6)
    pattn = ad.param((4,), rng, scale=0.3)
    pattn.data = np.abs(pattn.data) + 0.05
    mix5 = _mix(rng, (9,))
    params = dict(ptr.named_parameters())
    params.update({"h": ph, "z": pz, "attn": pattn})
    checks.append(("layer.pointer_step",
                   lambda: tsum(mul(ptr.step(ph, pz, pattn, [1, 4, 4, 7]), mix5)),
                   params))
    return checks


def run_suite(seeds=(0, 1, 2, 3, 4), rtol: float = 1e-4) -> CheckReport:
    """Every op and composite layer, finite-difference checked per seed."""
    report = CheckReport()
    for seed in seeds:
        for name, forward, params in _op_checks(seed) + _composite_checks(seed):
            report.results.append(
                check_gradients(forward, params, rtol=rtol,
                                name=f"{name}[seed={seed}]"))
    return report
