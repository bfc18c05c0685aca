"""Dense numeric helpers: softmax, bivariate normal density/sampling, gradient checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor

LOG_2PI = math.log(2.0 * math.pi)
RHO_FLOOR = 1e-9

Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    """Seeded generator; the same seed always yields the same stream."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def spawn_rngs(seed: int, n: int, stream: int = 0) -> list[Rng]:
    """``n`` independent generators derived from ``seed``.

    Child ``k`` does not depend on ``n``, so the first ``n`` streams of a
    larger spawn are identical to a smaller one.
    """
    root = np.random.SeedSequence(seed, spawn_key=(stream,))
    return [np.random.default_rng(child) for child in root.spawn(n)]


@dataclass(frozen=True)
class GaussianParams:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    rho: float

    def __post_init__(self):
        vals = (self.mu_x, self.mu_y, self.sigma_x, self.sigma_y, self.rho)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite Gaussian parameters: {vals}")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValueError("sigma must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax input must be finite")
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def bvn_nll(x: float, y: float, g: GaussianParams) -> float:
    """Negative log density of (x, y) under a correlated bivariate normal."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("bvn_nll: non-finite point")
    dx = (x - g.mu_x) / g.sigma_x
    dy = (y - g.mu_y) / g.sigma_y
    one_m_r2 = max(1.0 - g.rho * g.rho, RHO_FLOOR)
    quad = (dx * dx + dy * dy - 2.0 * g.rho * dx * dy) / one_m_r2
    return (LOG_2PI + math.log(g.sigma_x) + math.log(g.sigma_y)
            + 0.5 * math.log(one_m_r2) + 0.5 * quad)


def bvn_sample(g: GaussianParams, rng: Rng) -> tuple[float, float]:
    z1, z2 = rng.standard_normal(2)
    x = g.mu_x + g.sigma_x * z1
    y = g.mu_y + g.sigma_y * (g.rho * z1 + math.sqrt(1.0 - g.rho * g.rho) * z2)
    return float(x), float(y)


def bvn_sample_array(mu: np.ndarray, sigma: np.ndarray, rho: np.ndarray,
                     rng: Rng) -> np.ndarray:
    """Vectorised ``bvn_sample``: mu, sigma are (..., 2), rho is (...)."""
    z = rng.standard_normal(mu.shape)
    x = mu[..., 0] + sigma[..., 0] * z[..., 0]
    y = mu[..., 1] + sigma[..., 1] * (rho * z[..., 0] + np.sqrt(1.0 - rho * rho) * z[..., 1])
    return np.stack([x, y], axis=-1)


# differentiable counterparts used by the model

def bvn_nll_tensor(target: np.ndarray, mu: Tensor, log_sigma: Tensor, rho: Tensor) -> Tensor:
    """Elementwise NLL; target and mu are (..., 2), log_sigma (..., 2), rho (...)."""
    sigma = ag.exp(log_sigma)
    z = ag.div(ag.sub(target, mu), sigma)
    zx, zy = z[..., 0], z[..., 1]
    one_m_r2 = ag.clip_min(ag.sub(1.0, ag.square(rho)), RHO_FLOOR)
    cross = ag.mul(ag.mul(rho, zx), zy)
    quad = ag.add(ag.square(zx), ag.square(zy)) - 2.0 * cross
    return (LOG_2PI + log_sigma.sum(axis=-1) + 0.5 * ag.log(one_m_r2)
            + 0.5 * ag.div(quad, one_m_r2))


def cross_entropy_tensor(logits: Tensor, target: np.ndarray) -> Tensor:
    """Per-position -log softmax(logits)[target]; target is an int array."""
    logp = ag.log_softmax(logits, axis=-1)
    idx = np.indices(target.shape)
    return -logp[tuple(idx) + (target,)]


class GradCheckError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"parameter scalar #{index}: {message}")
        self.index = index


def grad_check(loss: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``loss`` rebuilds the graph from the current parameter values each call.
    The error per scalar is |ga - gf| / max(1, |ga|, |gf|).
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-6, 1e-4]")
    for p in params:
        p.grad = None
    out = loss()
    if not np.isfinite(out.data).all():
        raise GradCheckError(-1, "loss is not finite at the unperturbed point")
    out.backward()
    worst = 0.0
    offset = 0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss().item()
            flat[j] = orig - eps
            down = loss().item()
            flat[j] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise GradCheckError(offset + j, "loss is not finite under perturbation")
            gf = (up - down) / (2.0 * eps)
            ga = float(analytic.reshape(-1)[j])
            err = abs(ga - gf) / max(1.0, abs(ga), abs(gf))
            worst = max(worst, err)
        offset += flat.size
    return worst
