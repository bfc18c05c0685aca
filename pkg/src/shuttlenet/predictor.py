"""Shot-type and landing-area heads, and the training losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Module, Tensor
from .numerics import GaussianParams, bvn_nll_tensor, cross_entropy_tensor

PAD_INDEX = 0


class HeadParams(Module):
    def __init__(self, d: int, n_types: int, rng: np.random.Generator):
        self.W_s = ag.parameter((d, n_types), rng)
        self.W_a = ag.parameter((d, 5), rng)


@dataclass
class HeadOutput:
    """Batched head outputs; ``logits`` has the pad class already masked."""

    logits: Tensor
    mu: Tensor
    log_sigma: Tensor
    rho: Tensor

    def type_probs(self) -> np.ndarray:
        return ag.softmax(self.logits).data

    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma.data)


def heads_forward(z: Tensor, target_player: Tensor, heads: HeadParams) -> HeadOutput:
    """Both heads read z + embedding of the player about to hit."""
    x = z + target_player
    logits = x @ heads.W_s
    pad = np.zeros(logits.shape[-1], dtype=bool)
    pad[PAD_INDEX] = True
    logits = ag.masked_fill(logits, pad, -1e9)
    raw = x @ heads.W_a
    return HeadOutput(logits, raw[..., 0:2], raw[..., 2:4], ag.tanh(raw[..., 4]))


@dataclass(frozen=True)
class StepPrediction:
    type_probs: np.ndarray
    gaussian: GaussianParams


def predict_step(z_i, target_player_embedding, heads: HeadParams) -> StepPrediction:
    """Single-position prediction from plain vectors."""
    z = ag.as_tensor(np.asarray(z_i, dtype=np.float64))
    p = ag.as_tensor(np.asarray(target_player_embedding, dtype=np.float64))
    if z.shape != p.shape or z.shape[-1] != heads.W_s.shape[0]:
        raise ValueError("z and player embedding must both be d-vectors")
    with ag.no_grad():
        out = heads_forward(z, p, heads)
    mu, sigma = out.mu.data, out.sigma()
    g = GaussianParams(float(mu[0]), float(mu[1]), float(sigma[0]), float(sigma[1]),
                       float(out.rho.data))
    return StepPrediction(out.type_probs(), g)


def _masked_mean(values: Tensor, mask: np.ndarray) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("no unmasked positions")
    return ag.tsum(ag.masked_fill(values, ~mask, 0.0)) * (1.0 / count)


def type_loss(logits: Tensor, true_types: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean cross-entropy over positions where ``mask`` is True."""
    true_types = np.where(mask, true_types, 1)
    return _masked_mean(cross_entropy_tensor(logits, true_types), mask)


def area_loss(mu: Tensor, log_sigma: Tensor, rho: Tensor, true_coords: np.ndarray,
              mask: np.ndarray) -> Tensor:
    """Mean bivariate-normal NLL over positions where ``mask`` is True."""
    true_coords = np.where(np.asarray(mask, dtype=bool)[..., None], true_coords, 0.0)
    return _masked_mean(bvn_nll_tensor(true_coords, mu, log_sigma, rho), mask)


def total_loss(lt, la):
    return lt + la
