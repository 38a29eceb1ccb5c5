"""Neural building blocks on top of the tensor engine.

Single-sequence (unbatched) layers: inputs are [t x d] matrices, one
dialogue at a time. Multi-head attention keeps per-head projection
matrices so no column slicing is needed in backward.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Minimal parameter container with deterministic registration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, "Module"] = {}

    def register(self, name: str, t: Tensor) -> Tensor:
        self._params[name] = t
        return t

    def add_module(self, name: str, m: "Module") -> "Module":
        self._children[name] = m
        return m

    def named_parameters(self, prefix: str = ""):
        for name, t in self._params.items():
            yield (prefix + name, t)
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix + cname + ".")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def copy_from(self, other: "Module"):
        """Copy parameter values by matching qualified names."""
        theirs = dict(other.named_parameters())
        for name, p in self.named_parameters():
            p.data[...] = theirs[name].data


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.w = self.register("w", ad.param((in_dim, out_dim), rng))
        self.b = self.register("b", Tensor(np.zeros(out_dim), requires_grad=True)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        vec = x.ndim == 1
        if vec:
            x = ad.reshape(x, (1, x.shape[0]))
        y = ad.matmul(x, self.w)
        if self.b is not None:
            y = ad.add(y, self.b)
        return ad.reshape(y, (y.shape[1],)) if vec else y


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gain = self.register("gain", Tensor(np.ones(dim), requires_grad=True))
        self.bias = self.register("bias", Tensor(np.zeros(dim), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Classic fixed sin/cos position table, [length x dim]."""
    pos = np.arange(length)[:, None].astype(np.float64)
    i = np.arange(dim // 2)[None, :].astype(np.float64)
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim - dim // 2])
    return table


def causal_mask(t: int) -> np.ndarray:
    """Additive mask forbidding attention to future positions."""
    m = np.zeros((t, t))
    m[np.triu_indices(t, k=1)] = -1e9
    return m


class MultiHeadAttention(Module):
    """Scaled dot-product attention with per-head projections.

    Returns both the output and the head-averaged attention weights so the
    pointer mechanism can reuse them as a copy distribution.
    """

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        super().__init__()
        if d_model % n_heads:
            raise ValueError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_k = d_model // n_heads
        self.wq = [self.register(f"wq{h}", ad.param((d_model, self.d_k), rng))
                   for h in range(n_heads)]
        self.wk = [self.register(f"wk{h}", ad.param((d_model, self.d_k), rng))
                   for h in range(n_heads)]
        self.wv = [self.register(f"wv{h}", ad.param((d_model, self.d_k), rng))
                   for h in range(n_heads)]
        self.wo = self.register("wo", ad.param((d_model, d_model), rng))

    def __call__(self, query: Tensor, key: Tensor, value: Tensor,
                 mask: np.ndarray | None = None):
        inv_sqrt = 1.0 / np.sqrt(self.d_k)
        heads = []
        attn_sum = None
        for h in range(self.n_heads):
            q = ad.matmul(query, self.wq[h])
            k = ad.matmul(key, self.wk[h])
            v = ad.matmul(value, self.wv[h])
            scores = ad.scale(ad.matmul(q, ad.transpose(k)), inv_sqrt)
            if mask is not None:
                scores = ad.add(scores, Tensor(mask))
            attn = ad.softmax(scores, axis=-1)
            heads.append(ad.matmul(attn, v))
            attn_sum = attn if attn_sum is None else ad.add(attn_sum, attn)
        out = ad.matmul(ad.concat(heads, axis=1), self.wo)
        return out, ad.scale(attn_sum, 1.0 / self.n_heads)


class FeedForward(Module):
    def __init__(self, d_model: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.l1 = self.add_module("l1", Linear(d_model, hidden, rng))
        self.l2 = self.add_module("l2", Linear(hidden, d_model, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(ad.relu(self.l1(x)))


class EncoderLayer(Module):
    """Attention block with residuals and post-layer-norm.

    Self-attention when ctx is None, cross-attention (keys/values from
    ctx) otherwise.
    """

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int,
                 rng: np.random.Generator):
        super().__init__()
        self.attn = self.add_module("attn", MultiHeadAttention(d_model, n_heads, rng))
        self.ln1 = self.add_module("ln1", LayerNorm(d_model))
        self.ffn = self.add_module("ffn", FeedForward(d_model, ffn_dim, rng))
        self.ln2 = self.add_module("ln2", LayerNorm(d_model))

    def __call__(self, x: Tensor, ctx: Tensor | None = None,
                 mask: np.ndarray | None = None):
        kv = x if ctx is None else ctx
        attn_out, weights = self.attn(x, kv, kv, mask=mask)
        h = self.ln1(ad.add(x, attn_out))
        y = self.ln2(ad.add(h, self.ffn(h)))
        return y, weights


class TransformerEncoder(Module):
    """Self-attention encoder stack over embedded tokens."""

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int, n_layers: int,
                 rng: np.random.Generator, use_positions: bool = True):
        super().__init__()
        self.d_model = d_model
        self.use_positions = use_positions
        self.layers = [self.add_module(f"layer{i}",
                                       EncoderLayer(d_model, n_heads, ffn_dim, rng))
                       for i in range(n_layers)]

    def __call__(self, emb: Tensor) -> Tensor:
        h = emb
        if self.use_positions:
            h = ad.add(h, Tensor(sinusoidal_positions(emb.shape[0], self.d_model)))
        for layer in self.layers:
            h, _ = layer(h)
        return h


class InterEncoder(Module):
    """Cross-attention encoder: queries from one sequence, keys and values
    from the embedded context sequence at every layer."""

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int, n_layers: int,
                 rng: np.random.Generator, use_positions: bool = True):
        super().__init__()
        self.d_model = d_model
        self.use_positions = use_positions
        self.layers = [self.add_module(f"layer{i}",
                                       EncoderLayer(d_model, n_heads, ffn_dim, rng))
                       for i in range(n_layers)]

    def __call__(self, query_emb: Tensor, ctx_emb: Tensor) -> Tensor:
        h = query_emb
        ctx = ctx_emb
        if self.use_positions:
            h = ad.add(h, Tensor(sinusoidal_positions(h.shape[0], self.d_model)))
            ctx = ad.add(ctx, Tensor(sinusoidal_positions(ctx.shape[0], self.d_model)))
        for layer in self.layers:
            h, _ = layer(h, ctx=ctx)
        return h


class DecoderLayer(Module):
    """Masked self-attention, context cross-attention, optional keyword
    attention over weight-scaled context rows, then a feed-forward block.

    The keyword attention sits immediately after cross-attention with its
    own residual; its queries are the cross-attention block output.
    """

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int,
                 rng: np.random.Generator, keywords_attention: bool = True):
        super().__init__()
        self.keywords_attention = keywords_attention
        self.self_attn = self.add_module("self_attn", MultiHeadAttention(d_model, n_heads, rng))
        self.ln1 = self.add_module("ln1", LayerNorm(d_model))
        self.cross_attn = self.add_module("cross_attn", MultiHeadAttention(d_model, n_heads, rng))
        self.ln2 = self.add_module("ln2", LayerNorm(d_model))
        if keywords_attention:
            self.kw_attn = self.add_module("kw_attn", MultiHeadAttention(d_model, n_heads, rng))
            self.ln3 = self.add_module("ln3", LayerNorm(d_model))
        self.ffn = self.add_module("ffn", FeedForward(d_model, ffn_dim, rng))
        self.ln4 = self.add_module("ln4", LayerNorm(d_model))

    def __call__(self, x: Tensor, ctx: Tensor, kv_scaled: Tensor | None,
                 mask: np.ndarray):
        sa, _ = self.self_attn(x, x, x, mask=mask)
        h = self.ln1(ad.add(x, sa))
        ca, cross_weights = self.cross_attn(h, ctx, ctx)
        h = self.ln2(ad.add(h, ca))
        if self.keywords_attention:
            if kv_scaled is None:
                raise ValueError("keywords attention requires scaled context rows")
            ka, _ = self.kw_attn(h, kv_scaled, kv_scaled)
            h = self.ln3(ad.add(h, ka))
        y = self.ln4(ad.add(h, self.ffn(h)))
        return y, cross_weights


class GRUCell(Module):
    """Single gated recurrent unit step on row vectors [1 x dim]."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        for gate in ("r", "z", "n"):
            self.register(f"w{gate}", ad.param((in_dim, hidden), rng))
            self.register(f"u{gate}", ad.param((hidden, hidden), rng))
            self.register(f"b{gate}", Tensor(np.zeros(hidden), requires_grad=True))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        p = self._params
        r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p["wr"]), ad.matmul(h, p["ur"])), p["br"]))
        z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p["wz"]), ad.matmul(h, p["uz"])), p["bz"]))
        n = ad.tanh(ad.add(ad.add(ad.matmul(x, p["wn"]),
                                  ad.mul(r, ad.matmul(h, p["un"]))), p["bn"]))
        one_minus_z = ad.add_scalar(ad.neg(z), 1.0)
        return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))


class BiGRU(Module):
    """Stacked bidirectional GRU; output width is 2 x hidden per layer."""

    def __init__(self, in_dim: int, hidden: int, n_layers: int,
                 rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.cells = []
        width = in_dim
        for i in range(n_layers):
            fwd = self.add_module(f"fwd{i}", GRUCell(width, hidden, rng))
            bwd = self.add_module(f"bwd{i}", GRUCell(width, hidden, rng))
            self.cells.append((fwd, bwd))
            width = 2 * hidden

    def __call__(self, x: Tensor) -> Tensor:
        t = x.shape[0]
        h = x
        for fwd, bwd in self.cells:
            rows = [ad.narrow(h, 0, i, 1) for i in range(t)]
            state = Tensor(np.zeros((1, self.hidden)))
            forward = []
            for i in range(t):
                state = fwd(rows[i], state)
                forward.append(state)
            state = Tensor(np.zeros((1, self.hidden)))
            back = [None] * t
            for i in reversed(range(t)):
                state = bwd(rows[i], state)
                back[i] = state
            h = ad.concat([ad.concat([forward[i], back[i]], axis=1) for i in range(t)],
                          axis=0)
        return h


class EmbeddingTable(Module):
    """Shared token embedding; rows may be preloaded from a vector file."""

    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator,
                 preload: np.ndarray | None = None):
        super().__init__()
        init = rng.uniform(-0.02, 0.02, size=(vocab_size, dim))
        if preload is not None:
            loaded = ~np.all(preload == 0.0, axis=1)
            init[loaded] = preload[loaded]
        self.table = self.register("table", Tensor(init, requires_grad=True))

    def __call__(self, ids) -> Tensor:
        return ad.embedding(self.table, ids)

    def row(self, idx: int) -> Tensor:
        return ad.reshape(ad.embedding(self.table, [idx]), (self.table.shape[1],))
