"""ShuttleNet assembly: embeddings -> extractors -> fusion -> heads."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Module, Tensor
from .embedding import EmbeddingTables
from .extractors import ExtractorStack, align_contexts, tpe_forward, tre_forward
from .fusion import PGFN, AblationFlags
from .predictor import HeadOutput, HeadParams, area_loss, heads_forward, total_loss, type_loss
from .rally_data import MAX_RALLY_LEN, VOCAB, Dataset, Rally


@dataclass(frozen=True)
class ModelConfig:
    n_players: int
    d: int = 32
    n_heads: int = 2
    ff_dim: int = 64
    dropout: float = 0.1
    max_len: int = MAX_RALLY_LEN
    n_types: int = len(VOCAB)
    flags: AblationFlags = field(default_factory=AblationFlags)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("n_players", "d", "n_heads", "ff_dim", "dropout",
                                             "max_len", "n_types")}
        out["flags"] = self.flags.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        raw = dict(raw)
        raw["flags"] = AblationFlags(**raw.get("flags", {}))
        return cls(**raw)


@dataclass
class Batch:
    """Padded stroke arrays for rallies that share ``tau``.

    ``types`` (B, T) with 0 as padding, ``coords`` (B, T, 2),
    ``players`` (B, T) registry indices, ``lengths`` (B,).
    """

    types: np.ndarray
    coords: np.ndarray
    players: np.ndarray
    lengths: np.ndarray
    tau: int

    @property
    def horizon(self) -> int:
        return self.types.shape[1] - self.tau

    def observed(self):
        t = self.tau
        return self.types[:, :t], self.coords[:, :t], self.players[:, :t]

    def decoder_inputs(self, n: int | None = None):
        t = self.tau
        n = self.horizon if n is None else n
        return (self.types[:, t - 1:t - 1 + n], self.coords[:, t - 1:t - 1 + n],
                self.players[:, t - 1:t - 1 + n])

    def targets(self):
        t = self.tau
        return self.types[:, t:], self.coords[:, t:], self.players[:, t:]

    def target_mask(self) -> np.ndarray:
        n = self.horizon
        return (self.tau + np.arange(n))[None, :] < self.lengths[:, None]


def make_batch(rallies: Sequence[Rally], players: Sequence[str], tau: int) -> Batch:
    if not rallies:
        raise ValueError("empty batch")
    short = [r.rally_id for r in rallies if len(r) <= tau]
    if short:
        raise ValueError(f"rallies not longer than tau={tau}: {short[:5]}")
    index = {p: i for i, p in enumerate(players)}
    T = max(len(r) for r in rallies)
    B = len(rallies)
    types = np.zeros((B, T), dtype=int)
    coords = np.zeros((B, T, 2))
    pl = np.zeros((B, T), dtype=int)
    lengths = np.zeros(B, dtype=int)
    for b, r in enumerate(rallies):
        n = len(r)
        lengths[b] = n
        types[b, :n] = [VOCAB.index(s.shot_type) for s in r.strokes]
        coords[b, :n] = [(s.x, s.y) for s in r.strokes]
        pl[b, :n] = [index[s.player_id] for s in r.strokes]
        # pad with the alternation so player indices stay meaningful
        pl[b, n:] = [pl[b, (i % 2)] for i in range(n, T)]
    return Batch(types, coords, pl, lengths, tau)


class ShuttleNet(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        f = cfg.flags
        self.embedding = EmbeddingTables(cfg.n_types, cfg.n_players, cfg.d, rng)
        if f.use_L:
            self.tre = ExtractorStack(cfg.d, cfg.n_heads, cfg.ff_dim, rng, cfg.dropout, f.use_taa)
        if f.use_A or f.use_B:
            # one stack serves both players
            self.tpe = ExtractorStack(cfg.d, cfg.n_heads, cfg.ff_dim, rng, cfg.dropout, f.use_taa)
        self.fusion = PGFN(cfg.d, rng, f)
        self.heads = HeadParams(cfg.d, cfg.n_types, rng)

    def contexts(self, observed, dec_inputs, rng=None) -> dict[str, Tensor | None]:
        f = self.cfg.flags
        out: dict[str, Tensor | None] = {"A": None, "B": None, "L": None}
        if f.use_L:
            out["L"] = tre_forward(observed, dec_inputs, self.embedding, self.tre, rng)
        if f.use_A or f.use_B:
            dec_a, dec_b, roles = tpe_forward(observed, dec_inputs, self.embedding, self.tpe, rng)
            h_a, h_b = align_contexts(dec_a, dec_b, roles)
            out["A"], out["B"] = (h_a if f.use_A else None), (h_b if f.use_B else None)
        return out

    def forward(self, observed, dec_inputs, target_players: np.ndarray,
                rng: np.random.Generator | None = None) -> HeadOutput:
        """Head outputs for every decode position.

        ``rng`` drives dropout; pass None for evaluation.
        """
        ctx = self.contexts(observed, dec_inputs, rng)
        z = self.fusion(ctx["A"], ctx["B"], ctx["L"])
        return heads_forward(z, self.embedding.player[target_players], self.heads)

    def batch_forward(self, batch: Batch, rng=None) -> HeadOutput:
        return self.forward(batch.observed(), batch.decoder_inputs(), batch.targets()[2], rng)

    def loss(self, batch: Batch, rng=None) -> tuple[Tensor, Tensor, Tensor]:
        out = self.batch_forward(batch, rng)
        types, coords, _ = batch.targets()
        mask = batch.target_mask()
        lt = type_loss(out.logits, types, mask)
        la = area_loss(out.mu, out.log_sigma, out.rho, coords, mask)
        return total_loss(lt, la), lt, la


def usable_rallies(dataset: Dataset, tau: int) -> list[Rally]:
    return [r for r in dataset.rallies if len(r) > tau]
