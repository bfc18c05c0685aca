"""Type/area/player embeddings, sinusoidal positions and the per-player split."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Module, Tensor
from .rally_data import MAX_RALLY_LEN


class EmbeddingTables(Module):
    """Shot-type (N_s x d), player (N_p x d) and area (2 x d) projections.

    A single instance serves both the encoder and decoder sides.
    """

    def __init__(self, n_types: int, n_players: int, d: int, rng: np.random.Generator):
        self.d = d
        self.shot = ag.parameter((n_types, d), rng, name="M_s")
        self.player = ag.parameter((n_players, d), rng, name="M_p")
        self.area = ag.parameter((2, d), rng, name="M_a")


@dataclass
class PairedSequence:
    """Type stream and area stream, each (..., L, d)."""

    s: Tensor
    a: Tensor

    def __post_init__(self):
        if self.s.shape != self.a.shape:
            raise ValueError(f"stream shapes differ: {self.s.shape} vs {self.a.shape}")

    def __len__(self) -> int:
        return self.s.shape[-2]

    def take(self, index) -> "PairedSequence":
        return PairedSequence(self.s[..., index, :], self.a[..., index, :])


def embed(types: np.ndarray, coords: np.ndarray, players: np.ndarray,
          tables: EmbeddingTables) -> PairedSequence:
    """e_s = M_s[type] + M_p[player];  e_a = relu(xy @ M_a) + M_p[player]."""
    types = np.asarray(types)
    players = np.asarray(players)
    n_types, n_players = tables.shot.shape[0], tables.player.shape[0]
    if types.size and (types.min() < 0 or types.max() >= n_types):
        raise IndexError("shot type index out of vocabulary")
    if players.size and (players.min() < 0 or players.max() >= n_players):
        raise IndexError("player index out of registry")
    p = tables.player[players]
    e_s = tables.shot[types] + p
    e_a = ag.relu(ag.matmul(np.asarray(coords, dtype=np.float64), tables.area)) + p
    return PairedSequence(e_s, e_a)


def sinusoid(positions: Sequence[int] | np.ndarray, d: int) -> np.ndarray:
    """Fixed transformer encoding: even channels sin, odd channels cos."""
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    pair = np.arange(d) // 2
    angle = pos / np.power(10000.0, 2.0 * pair / d)
    return np.where(np.arange(d) % 2 == 0, np.sin(angle), np.cos(angle))


def add_positional(seq: PairedSequence, start_pos: int = 0,
                   positions: Sequence[int] | None = None,
                   max_len: int = MAX_RALLY_LEN) -> PairedSequence:
    """Add the same encoding to both streams; positions default to start_pos, start_pos+1, ..."""
    n = len(seq)
    if positions is None:
        if start_pos < 0:
            raise ValueError("start_pos must be non-negative")
        positions = np.arange(start_pos, start_pos + n)
    positions = np.asarray(positions, dtype=int)
    if positions.shape != (n,):
        raise ValueError("one position per sequence element required")
    if n and (positions.min() < 0 or positions.max() >= max_len):
        raise ValueError(f"positions must lie in [0, {max_len})")
    pe = sinusoid(positions, seq.s.shape[-1])
    return PairedSequence(seq.s + pe, seq.a + pe)


@dataclass(frozen=True)
class IndexMaps:
    a: np.ndarray
    b: np.ndarray
    length: int


def player_roles(players: Sequence, server=None) -> np.ndarray:
    """0 where ``server`` (default: the first entry) plays, 1 for the opponent.

    Raises ValueError unless the labels strictly alternate.
    """
    players = list(players)
    if not players:
        return np.zeros(0, dtype=int)
    server = players[0] if server is None else server
    roles = np.array([0 if p == server else 1 for p in players], dtype=int)
    if np.any(roles[1:] == roles[:-1]):
        raise ValueError("players do not alternate")
    other = {p for p in players if p != server}
    if len(other) > 1:
        raise ValueError("more than two players in sequence")
    return roles


def split_by_player(seq, players: Sequence, server=None):
    """Split along the position axis into the server's and the opponent's subsequences.

    ``seq`` may be a PairedSequence, a Tensor, an ndarray or a plain list.
    Returns ``(seq_a, seq_b, maps)`` where ``maps`` records the original
    positions for ``interleave``.
    """
    roles = player_roles(players, server)
    idx_a, idx_b = np.flatnonzero(roles == 0), np.flatnonzero(roles == 1)
    maps = IndexMaps(idx_a, idx_b, len(roles))
    if isinstance(seq, PairedSequence):
        return seq.take(idx_a), seq.take(idx_b), maps
    if isinstance(seq, Tensor):
        return seq[..., idx_a, :], seq[..., idx_b, :], maps
    if isinstance(seq, np.ndarray):
        return seq[idx_a], seq[idx_b], maps
    return [seq[i] for i in idx_a], [seq[i] for i in idx_b], maps


def interleave(seq_a, seq_b, maps: IndexMaps):
    """Inverse of ``split_by_player`` for lists and ndarrays."""
    if isinstance(seq_a, np.ndarray):
        out = np.empty((maps.length,) + seq_a.shape[1:], dtype=seq_a.dtype)
        out[maps.a] = seq_a
        out[maps.b] = seq_b
        return out
    out = [None] * maps.length
    for i, v in zip(maps.a, seq_a):
        out[i] = v
    for i, v in zip(maps.b, seq_b):
        out[i] = v
    return out
