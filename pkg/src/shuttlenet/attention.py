"""Type-area attention and the encoder/decoder layers built around it.

Every head projects with full d x d matrices and the concatenated heads
are mapped back to d by an (h*d x d) output matrix.
"""
from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .autograd import Module, Tensor
from .embedding import PairedSequence

MASK_FILL = -1e9


def _check_mask(mask: np.ndarray | None, shape: tuple[int, ...]) -> np.ndarray | None:
    if mask is None:
        return None
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), shape)
    if not mask.any(axis=-1).all():
        raise ValueError("attention mask leaves a query with no allowed key")
    return mask


def causal_mask(n: int) -> np.ndarray:
    """Allowed-attention matrix: position i sees positions <= i."""
    return np.tril(np.ones((n, n), dtype=bool))


def attention_mask(key_valid: np.ndarray | None, n_query: int, n_key: int,
                   causal: bool = False) -> np.ndarray | None:
    """Combine a (B, Lk) key-validity mask with an optional causal mask into (B|1, Lq, Lk)."""
    mask = None
    if key_valid is not None:
        mask = np.asarray(key_valid, dtype=bool)[:, None, :]
    if causal:
        if n_query != n_key:
            raise ValueError("causal masking needs equal query and key lengths")
        c = causal_mask(n_query)
        mask = c if mask is None else (mask & c)
    return mask


class TAAHead(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.W_Qs = ag.parameter((d, d), rng)
        self.W_Ks = ag.parameter((d, d), rng)
        self.W_Vs = ag.parameter((d, d), rng)
        self.W_Qa = ag.parameter((d, d), rng)
        self.W_Ka = ag.parameter((d, d), rng)
        self.W_Va = ag.parameter((d, d), rng)


def taa(E_s: Tensor, E_a: Tensor, mask, head: TAAHead, return_weights: bool = False):
    """Single type-area attention head.

    Scores sum the four type/area query-key products and are scaled by
    sqrt(4d); the values are V_a + V_s.
    """
    if E_s.shape != E_a.shape:
        raise ValueError("type and area streams must have equal shape")
    d = E_s.shape[-1]
    Q_s, K_s, V_s = E_s @ head.W_Qs, E_s @ head.W_Ks, E_s @ head.W_Vs
    Q_a, K_a, V_a = E_a @ head.W_Qa, E_a @ head.W_Ka, E_a @ head.W_Va
    # (Q_a + Q_s)(K_a + K_s)^T expands to exactly the four cross terms
    scores = ag.matmul(Q_a, K_a.swap_last()) + ag.matmul(Q_a, K_s.swap_last()) \
        + ag.matmul(Q_s, K_a.swap_last()) + ag.matmul(Q_s, K_s.swap_last())
    scores = scores * (1.0 / math.sqrt(4.0 * d))
    mask = _check_mask(mask, scores.shape)
    if mask is not None:
        scores = ag.masked_fill(scores, ~mask, MASK_FILL)
    weights = ag.softmax(scores, axis=-1)
    out = ag.matmul(weights, V_a + V_s)
    return (out, weights) if return_weights else out


class MultiHeadTAA(Module):
    def __init__(self, d: int, n_heads: int, rng: np.random.Generator):
        if n_heads < 1:
            raise ValueError("need at least one head")
        self.heads = [TAAHead(d, rng) for _ in range(n_heads)]
        self.W_o = ag.parameter((n_heads * d, d), rng)


def multi_head_taa(E_s: Tensor, E_a: Tensor, mask, params: MultiHeadTAA) -> Tensor:
    heads = [taa(E_s, E_a, mask, h) for h in params.heads]
    return ag.concat(heads, axis=-1) @ params.W_o


class AttentionHead(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.W_Q = ag.parameter((d, d), rng)
        self.W_K = ag.parameter((d, d), rng)
        self.W_V = ag.parameter((d, d), rng)


class MultiHeadAttention(Module):
    """Standard single-stream attention (full-width heads, 1/sqrt(d) scale)."""

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator):
        self.heads = [AttentionHead(d, rng) for _ in range(n_heads)]
        self.W_o = ag.parameter((n_heads * d, d), rng)

    def __call__(self, query: Tensor, memory: Tensor, mask=None) -> Tensor:
        if memory.shape[-2] == 0:
            raise ValueError("attention over an empty key sequence")
        d = query.shape[-1]
        outs = []
        for h in self.heads:
            q, k, v = query @ h.W_Q, memory @ h.W_K, memory @ h.W_V
            scores = ag.matmul(q, k.swap_last()) * (1.0 / math.sqrt(d))
            m = _check_mask(mask, scores.shape)
            if m is not None:
                scores = ag.masked_fill(scores, ~m, MASK_FILL)
            outs.append(ag.matmul(ag.softmax(scores, axis=-1), v))
        return ag.concat(outs, axis=-1) @ self.W_o


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = ag.constant_parameter((d,), 1.0)
        self.bias = ag.constant_parameter((d,), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.gain, self.bias)


class FeedForward(Module):
    def __init__(self, d: int, inner: int, rng: np.random.Generator):
        self.W_1 = ag.parameter((d, inner), rng)
        self.b_1 = ag.constant_parameter((inner,), 0.0)
        self.W_2 = ag.parameter((inner, d), rng)
        self.b_2 = ag.constant_parameter((d,), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.relu(x @ self.W_1 + self.b_1) @ self.W_2 + self.b_2


class FirstSublayer(Module):
    """Self-attention over the paired streams.

    With ``use_taa`` the streams go through type-area attention and the
    residual is E_s + E_a. Without it the streams are concatenated,
    projected to d, and fed through ordinary self-attention.
    """

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator, use_taa: bool = True):
        self.use_taa = use_taa
        if use_taa:
            self.taa = MultiHeadTAA(d, n_heads, rng)
        else:
            self.W_cat = ag.parameter((2 * d, d), rng)
            self.attn = MultiHeadAttention(d, n_heads, rng)

    def __call__(self, pair: PairedSequence, mask) -> tuple[Tensor, Tensor]:
        if self.use_taa:
            return multi_head_taa(pair.s, pair.a, mask, self.taa), pair.s + pair.a
        x = ag.concat([pair.s, pair.a], axis=-1) @ self.W_cat
        return self.attn(x, x, mask), x


class EncoderLayer(Module):
    def __init__(self, d: int, n_heads: int, ff_dim: int, rng: np.random.Generator,
                 dropout: float = 0.1, use_taa: bool = True):
        self.dropout = dropout
        self.self_attn = FirstSublayer(d, n_heads, rng, use_taa)
        self.norm_1 = LayerNorm(d)
        self.ff = FeedForward(d, ff_dim, rng)
        self.norm_2 = LayerNorm(d)

    def __call__(self, pair: PairedSequence, key_valid: np.ndarray | None = None,
                 rng: np.random.Generator | None = None) -> Tensor:
        n = len(pair)
        mask = attention_mask(key_valid, n, n)
        attn, residual = self.self_attn(pair, mask)
        x = self.norm_1(residual + ag.dropout(attn, self.dropout, rng))
        return self.norm_2(x + ag.dropout(self.ff(x), self.dropout, rng))


class DecoderLayer(Module):
    def __init__(self, d: int, n_heads: int, ff_dim: int, rng: np.random.Generator,
                 dropout: float = 0.1, use_taa: bool = True):
        self.dropout = dropout
        self.self_attn = FirstSublayer(d, n_heads, rng, use_taa)
        self.norm_1 = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, n_heads, rng)
        self.norm_2 = LayerNorm(d)
        self.ff = FeedForward(d, ff_dim, rng)
        self.norm_3 = LayerNorm(d)

    def __call__(self, pair: PairedSequence, memory: Tensor,
                 key_valid: np.ndarray | None = None,
                 memory_valid: np.ndarray | None = None,
                 rng: np.random.Generator | None = None) -> Tensor:
        if memory.shape[-2] == 0:
            raise ValueError("decoder needs a non-empty encoder context")
        n = len(pair)
        attn, residual = self.self_attn(pair, attention_mask(key_valid, n, n, causal=True))
        x = self.norm_1(residual + ag.dropout(attn, self.dropout, rng))
        cross_mask = attention_mask(memory_valid, n, memory.shape[-2])
        x = self.norm_2(x + ag.dropout(self.cross_attn(x, memory, cross_mask), self.dropout, rng))
        return self.norm_3(x + ag.dropout(self.ff(x), self.dropout, rng))


def encoder_layer(pair: PairedSequence, pad_mask: np.ndarray | None, layer: EncoderLayer,
                  rng: np.random.Generator | None = None) -> Tensor:
    """``pad_mask`` is True at padded positions."""
    valid = None if pad_mask is None else ~np.asarray(pad_mask, dtype=bool)
    return layer(pair, valid, rng)


def decoder_layer(pair: PairedSequence, encoder_ctx: Tensor, layer: DecoderLayer,
                  pad_mask: np.ndarray | None = None,
                  memory_pad_mask: np.ndarray | None = None,
                  rng: np.random.Generator | None = None) -> Tensor:
    valid = None if pad_mask is None else ~np.asarray(pad_mask, dtype=bool)
    mvalid = None if memory_pad_mask is None else ~np.asarray(memory_pad_mask, dtype=bool)
    return layer(pair, encoder_ctx, valid, mvalid, rng)
