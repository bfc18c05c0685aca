"""Training loop, best-of-K evaluation, forecasting and model persistence."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import autograd as ag
from .fusion import AblationFlags
from .model import Batch, ModelConfig, ShuttleNet, make_batch, usable_rallies
from .numerics import GaussianParams, make_rng, spawn_rngs
from .rally_data import VOCAB, Dataset, Rally, Stroke

logger = logging.getLogger(__name__)

MODEL_FORMAT = "shuttlenet-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    d: int = 32
    n_heads: int = 2
    ff_dim: int = 64
    max_len: int = 35
    dropout: float = 0.1
    batch_size: int = 32
    epochs: int = 150
    learning_rate: float = 1e-4
    tau: int = 4
    K: int = 10
    seed: int = 0
    flags: AblationFlags = field(default_factory=AblationFlags)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("d", "n_heads", "ff_dim", "max_len", "batch_size", "K", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.learning_rate < 0:
            raise ValueError("epochs and learning_rate must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.tau >= self.max_len:
            raise ValueError("tau must be below max_len")

    def model_config(self, n_players: int) -> ModelConfig:
        return ModelConfig(n_players=n_players, d=self.d, n_heads=self.n_heads,
                           ff_dim=self.ff_dim, dropout=self.dropout, max_len=self.max_len,
                           flags=self.flags)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flags"] = self.flags.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        if "flags" in raw:
            raw["flags"] = AblationFlags(**raw["flags"])
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in known})


class Adam:
    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    model: ShuttleNet
    history: list[float]
    type_history: list[float]
    area_history: list[float]
    config: TrainConfig
    players: tuple[str, ...]
    mean: tuple[float, float] | None
    skipped: int = 0


def _batches(rallies: list[Rally], size: int, rng: np.random.Generator | None):
    order = np.arange(len(rallies)) if rng is None else rng.permutation(len(rallies))
    for start in range(0, len(order), size):
        yield [rallies[i] for i in order[start:start + size]]


def train(dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator | None = None,
          log_every: int = 0) -> TrainResult:
    """Teacher-forced training with Adam on the summed type and area losses.

    ``dataset`` should already be normalised. Everything random (init,
    shuffling, dropout) is drawn from ``rng`` (default: seeded by cfg.seed).
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    rallies = usable_rallies(dataset, cfg.tau)
    skipped = len(dataset.rallies) - len(rallies)
    if skipped:
        logger.info("skipping %d rallies with <= %d strokes", skipped, cfg.tau)
    if not rallies:
        raise ValueError(f"no rally is longer than tau={cfg.tau}")
    model = ShuttleNet(cfg.model_config(len(dataset.players)), rng)
    opt = Adam(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    history, type_hist, area_hist = [], [], []
    for epoch in range(cfg.epochs):
        tot = lt_sum = la_sum = 0.0
        strokes = 0
        for chunk in _batches(rallies, cfg.batch_size, rng):
            batch = make_batch(chunk, dataset.players, cfg.tau)
            model.zero_grad()
            loss, lt, la = model.loss(batch, rng)
            loss.backward()
            opt.step()
            n = int(batch.target_mask().sum())
            tot += loss.item() * n
            lt_sum += lt.item() * n
            la_sum += la.item() * n
            strokes += n
        history.append(tot / strokes)
        type_hist.append(lt_sum / strokes)
        area_hist.append(la_sum / strokes)
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d loss %.4f (type %.4f, area %.4f)", epoch + 1,
                        history[-1], type_hist[-1], area_hist[-1])
    return TrainResult(model, history, type_hist, area_hist, cfg, dataset.players,
                       dataset.mean, skipped)


def type_accuracy(model: ShuttleNet, dataset: Dataset, tau: int) -> float:
    """Teacher-forced argmax accuracy of the shot-type head (no dropout)."""
    rallies = usable_rallies(dataset, tau)
    with ag.no_grad():
        batch = make_batch(rallies, dataset.players, tau)
        out = model.batch_forward(batch)
    mask = batch.target_mask()
    pred = out.logits.data.argmax(axis=-1)
    return float((pred == batch.targets()[0])[mask].mean())


# ---------------------------------------------------------------- rollouts

@dataclass
class RolloutArrays:
    """One autoregressive rollout over a batch; leading dims (B, n)."""

    types: np.ndarray
    coords: np.ndarray
    log_probs: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray


def _sample_types(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf <= u[:, None]).sum(axis=-1)
    idx = np.minimum(idx, probs.shape[-1] - 1)
    # the pad class has zero mass; guard against u == 0 landing on it
    return np.maximum(idx, 1)


def rollout(model: ShuttleNet, batch: Batch, rng: np.random.Generator,
            n_steps: int | None = None) -> RolloutArrays:
    """Sample strokes tau+1 .. tau+n, feeding each sample back as the next decoder input."""
    n = batch.horizon if n_steps is None else n_steps
    B = batch.types.shape[0]
    tau = batch.tau
    observed = batch.observed()
    players = batch.players
    dec_types = np.zeros((B, n), dtype=int)
    dec_coords = np.zeros((B, n, 2))
    dec_types[:, 0] = batch.types[:, tau - 1]
    dec_coords[:, 0] = batch.coords[:, tau - 1]
    out = RolloutArrays(np.zeros((B, n), dtype=int), np.zeros((B, n, 2)),
                        np.zeros((B, n, model.cfg.n_types)), np.zeros((B, n, 2)),
                        np.zeros((B, n, 2)), np.zeros((B, n)))
    with ag.no_grad():
        for j in range(n):
            dec = (dec_types[:, :j + 1], dec_coords[:, :j + 1], players[:, tau - 1:tau + j])
            head = model.forward(observed, dec, players[:, tau:tau + j + 1])
            logits = head.logits.data[:, j]
            logp = ag.log_softmax(ag.Tensor(logits)).data
            probs = np.exp(logp)
            mu = head.mu.data[:, j]
            sigma = np.exp(head.log_sigma.data[:, j])
            rho = head.rho.data[:, j]
            types = _sample_types(probs, rng)
            z = rng.standard_normal((B, 2))
            xy = np.stack([mu[:, 0] + sigma[:, 0] * z[:, 0],
                           mu[:, 1] + sigma[:, 1] * (rho * z[:, 0] + np.sqrt(1 - rho * rho) * z[:, 1])],
                          axis=-1)
            out.types[:, j], out.coords[:, j] = types, xy
            out.log_probs[:, j], out.mu[:, j], out.sigma[:, j], out.rho[:, j] = logp, mu, sigma, rho
            if j + 1 < n:
                dec_types[:, j + 1] = types
                dec_coords[:, j + 1] = xy
    return out


@dataclass
class Metrics:
    ce: float
    mse: float
    mae: float
    n_strokes: int
    n_rallies: int
    per_rally: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"ce": self.ce, "mse": self.mse, "mae": self.mae,
                "n_strokes": self.n_strokes, "n_rallies": self.n_rallies}


def score_rollouts(true_types: np.ndarray, true_coords: np.ndarray, mask: np.ndarray,
                   rollouts: Sequence[RolloutArrays]) -> tuple[np.ndarray, list[dict]]:
    """Pick, per rally, the rollout with the least squared coordinate error.

    Returns the chosen rollout index per rally and per-rally sums
    (ce, se, ae, strokes) on the chosen rollout. Squared error sums dx^2+dy^2
    per stroke; absolute error sums |dx|+|dy|.
    """
    m = mask.astype(float)
    sse = np.stack([(((r.coords - true_coords) ** 2).sum(-1) * m).sum(-1) for r in rollouts])
    best = sse.argmin(axis=0)
    B = true_types.shape[0]
    rows = []
    for b in range(B):
        r = rollouts[best[b]]
        valid = mask[b]
        t = true_types[b, valid]
        ce = -r.log_probs[b, valid, t].sum()
        diff = r.coords[b, valid] - true_coords[b, valid]
        rows.append({"rollout": int(best[b]), "ce": float(ce),
                     "se": float((diff ** 2).sum()), "ae": float(np.abs(diff).sum()),
                     "strokes": int(valid.sum())})
    return best, rows


def evaluate(model: ShuttleNet, dataset: Dataset, tau: int, K: int = 10, seed: int = 0,
             return_rollouts: bool = False):
    """Best-of-K metrics on every rally longer than ``tau``.

    Rollout k always draws from the k-th stream spawned from ``seed``, so the
    rollouts for K are a prefix of those for any larger K.
    """
    rallies = usable_rallies(dataset, tau)
    if not rallies:
        raise ValueError(f"no rally is longer than tau={tau}")
    batch = make_batch(rallies, dataset.players, tau)
    rngs = spawn_rngs(seed, K, stream=1)
    rolls = [rollout(model, batch, r) for r in rngs]
    types, coords, _ = batch.targets()
    mask = batch.target_mask()
    best, rows = score_rollouts(types, coords, mask, rolls)
    for row, r in zip(rows, rallies):
        row["rally_id"] = r.rally_id
    n = sum(r["strokes"] for r in rows)
    metrics = Metrics(ce=sum(r["ce"] for r in rows) / n, mse=sum(r["se"] for r in rows) / n,
                      mae=sum(r["ae"] for r in rows) / n, n_strokes=n, n_rallies=len(rows),
                      per_rally=rows)
    if return_rollouts:
        return metrics, rolls, batch
    return metrics


# ---------------------------------------------------------------- forecasting

@dataclass
class ForecastStep:
    position: int
    player: str
    shot_type: str
    x: float
    y: float
    type_probs: dict[str, float]
    gaussian: GaussianParams

    def top_types(self, k: int = 3) -> list[tuple[str, float]]:
        return sorted(self.type_probs.items(), key=lambda kv: -kv[1])[:k]


@dataclass
class Rollout:
    steps: list[ForecastStep]

    def __len__(self) -> int:
        return len(self.steps)


def forecast(model: ShuttleNet, observed: Sequence[Stroke], players: Sequence[str],
             horizon: int, num_rollouts: int, seed: int = 0,
             mean: tuple[float, float] | None = None,
             next_players: Sequence[str] | None = None) -> list[Rollout]:
    """Sample ``num_rollouts`` continuations of an observed stroke sequence.

    ``observed`` uses raw court coordinates; ``mean`` (the training mean)
    is subtracted on the way in and added back to every emitted coordinate.
    ``next_players`` overrides who hits each forecast stroke (default:
    continue the alternation) for matchup comparisons.
    """
    observed = list(observed)
    tau = len(observed)
    if tau < 1:
        raise ValueError("need at least one observed stroke")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if tau + horizon > model.cfg.max_len:
        raise ValueError(f"observed + horizon = {tau + horizon} exceeds max_len {model.cfg.max_len}")
    ids = [s.player_id for s in observed]
    first, second = ids[0], (ids[1] if tau > 1 else None)
    for i, p in enumerate(ids):
        if (i % 2 == 0 and p != first) or (i % 2 == 1 and p != second):
            raise ValueError("observed strokes do not alternate between two players")
    if next_players is None:
        if second is None:
            raise ValueError("next_players is required when only one stroke is observed")
        next_players = [first if (tau + j) % 2 == 0 else second for j in range(horizon)]
    next_players = list(next_players)
    if len(next_players) != horizon:
        raise ValueError("next_players must list one player per forecast stroke")
    index = {p: i for i, p in enumerate(players)}
    for p in ids + next_players:
        if p not in index:
            raise KeyError(f"player {p!r} not in the model's registry")
    mx, my = mean if mean is not None else (0.0, 0.0)

    T = tau + horizon
    types = np.zeros((1, T), dtype=int)
    coords = np.zeros((1, T, 2))
    pl = np.zeros((1, T), dtype=int)
    types[0, :tau] = [VOCAB.index(s.shot_type) for s in observed]
    coords[0, :tau] = [(s.x - mx, s.y - my) for s in observed]
    pl[0] = [index[p] for p in ids + next_players]
    batch = Batch(types, coords, pl, np.array([T]), tau)

    out = []
    for r in spawn_rngs(seed, num_rollouts, stream=2):
        ra = rollout(model, batch, r, horizon)
        steps = []
        for j in range(horizon):
            probs = np.exp(ra.log_probs[0, j])
            steps.append(ForecastStep(
                position=tau + j + 1, player=next_players[j],
                shot_type=VOCAB.name(int(ra.types[0, j])),
                x=float(ra.coords[0, j, 0] + mx), y=float(ra.coords[0, j, 1] + my),
                type_probs={VOCAB.name(i): float(probs[i]) for i in range(1, len(VOCAB))},
                gaussian=GaussianParams(float(ra.mu[0, j, 0] + mx), float(ra.mu[0, j, 1] + my),
                                        float(ra.sigma[0, j, 0]), float(ra.sigma[0, j, 1]),
                                        float(ra.rho[0, j]))))
        out.append(Rollout(steps))
    return out


def forecast_to_json(rollouts: Sequence[Rollout]) -> str:
    return json.dumps({"rollouts": [
        [{"position": s.position, "player": s.player, "shot_type": s.shot_type,
          "x": s.x, "y": s.y, "type_probs": s.type_probs,
          "gaussian": asdict(s.gaussian)} for s in r.steps]
        for r in rollouts]}, indent=2)


# ---------------------------------------------------------------- persistence

def save_model(path, result: TrainResult) -> None:
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "model_config": result.model.cfg.to_dict(),
        "train_config": result.config.to_dict(),
        "players": list(result.players),
        "mean": list(result.mean) if result.mean is not None else None,
        "history": result.history,
    }
    arrays = {f"param:{k}": v for k, v in result.model.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


@dataclass
class LoadedModel:
    model: ShuttleNet
    players: tuple[str, ...]
    mean: tuple[float, float] | None
    train_config: TrainConfig
    history: list[float]


def load_model(path) -> LoadedModel:
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise ValueError(f"{path}: not a model file")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != MODEL_FORMAT or meta.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model format/version "
                             f"{meta.get('format')}/{meta.get('version')}")
        state = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
    cfg = ModelConfig.from_dict(meta["model_config"])
    model = ShuttleNet(cfg, make_rng(0))
    model.load_state_dict(state)
    mean = tuple(meta["mean"]) if meta["mean"] is not None else None
    return LoadedModel(model, tuple(meta["players"]), mean,
                       TrainConfig.from_dict(meta["train_config"]), meta.get("history", []))
