"""Rally extractor (whole rally) and player extractor (per-player subsequences).

Arrays follow a batch-first layout: ``types`` and ``players`` are (B, L)
integer arrays, ``coords`` is (B, L, 2). Every rally in a batch shares the
same number of observed strokes ``tau``; decoder inputs are padded at the
end, and causal masking keeps padding from reaching real positions.
"""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from .attention import DecoderLayer, EncoderLayer
from .autograd import Module, Tensor
from .embedding import EmbeddingTables, PairedSequence, add_positional, embed


class ExtractorStack(Module):
    """One encoder layer and one decoder layer."""

    def __init__(self, d: int, n_heads: int, ff_dim: int, rng: np.random.Generator,
                 dropout: float = 0.1, use_taa: bool = True):
        self.encoder = EncoderLayer(d, n_heads, ff_dim, rng, dropout, use_taa)
        self.decoder = DecoderLayer(d, n_heads, ff_dim, rng, dropout, use_taa)

    def __call__(self, enc: PairedSequence, dec: PairedSequence,
                 rng: np.random.Generator | None = None) -> Tensor:
        memory = self.encoder(enc, None, rng)
        return self.decoder(dec, memory, None, None, rng)


def _embed(arrays, tables):
    types, coords, players = arrays
    return embed(types, coords, players, tables)


def tre_forward(observed, targets, tables: EmbeddingTables, stack: ExtractorStack,
                rng: np.random.Generator | None = None) -> Tensor:
    """Rally contexts, one per decode position.

    ``observed`` and ``targets`` are (types, coords, players) triples;
    ``targets`` holds the decoder inputs (the stroke preceding each
    predicted stroke). Encoder positions are 0..tau-1 and decoder
    positions continue at tau.
    """
    tau = observed[0].shape[-1]
    if tau < 1:
        raise ValueError("tau must be at least 1")
    enc = add_positional(_embed(observed, tables), 0)
    dec = add_positional(_embed(targets, tables), tau)
    return stack(enc, dec, rng)


def decode_roles(tau: int, n: int) -> np.ndarray:
    """Role (0 server, 1 receiver) of each decoder input stroke."""
    return (np.arange(tau - 1, tau - 1 + n) % 2).astype(int)


def tpe_contexts(enc_a: PairedSequence, enc_b: PairedSequence,
                 dec_a: PairedSequence, dec_b: PairedSequence,
                 stack: ExtractorStack, rng: np.random.Generator | None = None):
    """Run the shared stack over each player's (encoder, decoder) pair.

    Swapping the A and B arguments swaps the outputs.
    """
    out_a = stack(enc_a, dec_a, rng) if len(dec_a) else None
    out_b = stack(enc_b, dec_b, rng) if len(dec_b) else None
    return out_a, out_b


def _empty_side(like: PairedSequence) -> PairedSequence:
    shape = like.s.shape[:-2] + (1, like.s.shape[-1])
    return PairedSequence(ag.Tensor(np.zeros(shape)), ag.Tensor(np.zeros(shape)))


def tpe_forward(observed, targets, tables: EmbeddingTables, stack: ExtractorStack,
                rng: np.random.Generator | None = None):
    """Per-player decoder contexts ``(dec_a, dec_b, roles)``.

    Observed strokes and decoder inputs are each split by player. Player
    positions restart at 0 in the encoder and continue from that player's
    observed count in the decoder. A player with no observed stroke
    (tau == 1) gets a single all-zero encoder position.
    """
    tau = observed[0].shape[-1]
    if tau < 1:
        raise ValueError("tau must be at least 1")
    n = targets[0].shape[-1]
    obs_roles = np.arange(tau) % 2
    roles = decode_roles(tau, n)

    obs = _embed(observed, tables)
    tgt = _embed(targets, tables)
    encs, decs = [], []
    for role in (0, 1):
        oi = np.flatnonzero(obs_roles == role)
        di = np.flatnonzero(roles == role)
        if len(oi):
            enc = add_positional(obs.take(oi), 0)
        else:
            enc = _empty_side(obs)
        encs.append(enc)
        decs.append(add_positional(tgt.take(di), len(oi)))
    out_a, out_b = tpe_contexts(encs[0], encs[1], decs[0], decs[1], stack, rng)
    return out_a, out_b, roles


def align_contexts(dec_a, dec_b, decode_players, a_label=0):
    """Expand per-player contexts to every decode position by copy-forward.

    Position i receives the context of that player's latest stroke at or
    before i, or zeros before the player's first stroke in the horizon.
    Works on Tensors (differentiable) and on ndarrays / lists of vectors.
    """
    roles = np.array([0 if p == a_label else 1 for p in decode_players], dtype=int)
    n_a, n_b = int((roles == 0).sum()), int((roles == 1).sum())
    ptr_a = np.cumsum(roles == 0) - 1
    ptr_b = np.cumsum(roles == 1) - 1

    if isinstance(dec_a, Tensor) or isinstance(dec_b, Tensor):
        ref = dec_a if isinstance(dec_a, Tensor) else dec_b
        return _align_tensor(dec_a, n_a, ptr_a, ref), _align_tensor(dec_b, n_b, ptr_b, ref)

    seq_a = np.asarray(dec_a, dtype=np.float64)
    seq_b = np.asarray(dec_b, dtype=np.float64)
    # an empty side takes its width from the other side
    width = next((s.shape[-1] for s in (seq_a, seq_b) if s.ndim > 1 and s.shape[0]), 1)

    def expand(seq, count, ptr):
        if seq.shape[0] != count:
            raise ValueError(f"context count {seq.shape[0]} != strokes in horizon {count}")
        zero = np.zeros(width)
        return np.stack([seq[k] if k >= 0 else zero for k in ptr]) if len(ptr) else np.zeros((0, width))

    return expand(seq_a, n_a, ptr_a), expand(seq_b, n_b, ptr_b)


def _align_tensor(seq, count, ptr, ref: Tensor) -> Tensor:
    zeros_shape = ref.shape[:-2] + (1, ref.shape[-1])
    zero = ag.Tensor(np.zeros(zeros_shape))
    if seq is None:
        if count:
            raise ValueError("missing contexts for a player with strokes in the horizon")
        seq = ag.Tensor(np.zeros(ref.shape[:-2] + (0, ref.shape[-1])))
    if seq.shape[-2] != count:
        raise ValueError(f"context count {seq.shape[-2]} != strokes in horizon {count}")
    padded = ag.concat([seq, zero], axis=-2)
    # ptr == -1 selects the appended zero row
    idx = np.where(ptr >= 0, ptr, count)
    return padded[..., idx, :]
