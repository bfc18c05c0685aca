"""Acceptance checks. Each test prints one PASS/FAIL line with its measured value.

Run with ``pytest tests/test_acceptance.py -v`` to see the lines in context.
"""
import math
import time

import numpy as np
import pytest

from shuttlenet import autograd as ag
from shuttlenet.attention import TAAHead, taa
from shuttlenet.extractors import align_contexts
from shuttlenet.fusion import PGFN, AblationFlags
from shuttlenet.harness import TrainConfig, evaluate, train, type_accuracy
from shuttlenet.model import Batch, ModelConfig, ShuttleNet
from shuttlenet.numerics import GaussianParams, LOG_2PI, bvn_nll, grad_check, make_rng
from shuttlenet.rally_data import (SynthConfig, default_archetypes, gen_synthetic,
                                   normalize_coords, sharpen, split_dataset)


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


def _random_batch(rng, n_players, length, tau, batch=1):
    types = rng.integers(1, 11, size=(batch, length))
    coords = rng.normal(size=(batch, length, 2))
    players = np.zeros((batch, length), dtype=int)
    for b in range(batch):
        a, c = rng.choice(n_players, size=2, replace=False)
        players[b] = [a if i % 2 == 0 else c for i in range(length)]
    return types, coords, players


def test_gradient_fidelity(report):
    rng = make_rng(0)
    cfg = ModelConfig(n_players=2, d=4, n_heads=2, ff_dim=8, dropout=0.0)
    model = ShuttleNet(cfg, rng)
    types, coords, players = _random_batch(rng, 2, 6, 2)
    batch = Batch(types, coords, players, np.array([6]), 2)
    start = time.perf_counter()
    err = grad_check(lambda: model.loss(batch)[0], model.parameters(), 1e-6)
    elapsed = time.perf_counter() - start
    report("gradient fidelity", err < 1e-4 and elapsed < 60,
           f"max rel err {err:.2e} over {model.num_parameters()} params in {elapsed:.1f}s "
           f"(need < 1e-4, < 60s)")


def test_taa_degeneracy(report):
    rng = make_rng(1)
    d, L = 6, 7
    head = TAAHead(d, rng)
    for name in ("W_Qa", "W_Ka", "W_Va"):
        getattr(head, name).data[:] = 0.0
    E_s, E_a = rng.normal(size=(L, d)), rng.normal(size=(L, d))
    got = taa(ag.Tensor(E_s), ag.Tensor(E_a), None, head).data
    q, k, v = E_s @ head.W_Qs.data, E_s @ head.W_Ks.data, E_s @ head.W_Vs.data
    s = q @ k.T / math.sqrt(4 * d)
    w = np.exp(s - s.max(axis=1, keepdims=True))
    want = (w / w.sum(axis=1, keepdims=True)) @ v
    diff = float(np.abs(got - want).max())
    report("TAA degeneracy", diff < 1e-12, f"max |diff| {diff:.1e} (need < 1e-12)")


def test_causality(report):
    rng = make_rng(2)
    model = ShuttleNet(ModelConfig(n_players=4, d=8, n_heads=2, ff_dim=16, dropout=0.0), rng)
    worst = 0.0
    for _ in range(100):
        tau = int(rng.integers(1, 6))
        n = int(rng.integers(2, 9))
        types, coords, players = _random_batch(rng, 4, tau + n, tau)
        observed = (types[:, :tau], coords[:, :tau], players[:, :tau])
        dec = (types[:, tau - 1:tau - 1 + n], coords[:, tau - 1:tau - 1 + n],
               players[:, tau - 1:tau - 1 + n])
        tgt = players[:, tau:tau + n]
        with ag.no_grad():
            base = model.forward(observed, dec, tgt)
            i = int(rng.integers(0, n - 1))
            t2, c2 = dec[0].copy(), dec[1].copy()
            t2[:, i + 1:] = rng.integers(1, 11, size=t2[:, i + 1:].shape)
            c2[:, i + 1:] += rng.normal(size=c2[:, i + 1:].shape)
            pert = model.forward(observed, (t2, c2, dec[2]), tgt)
        for a, b in ((base.logits, pert.logits), (base.mu, pert.mu),
                     (base.log_sigma, pert.log_sigma), (base.rho, pert.rho)):
            worst = max(worst, float(np.abs(a.data[:, :i + 1] - b.data[:, :i + 1]).max()))
    report("causality", worst < 1e-12, f"max change at earlier positions {worst:.1e} over 100 rallies")


def _scan_oracle(dec_a, dec_b, roles, d):
    last = {0: np.zeros(d), 1: np.zeros(d)}
    seen = {0: 0, 1: 0}
    src = {0: dec_a, 1: dec_b}
    out_a, out_b = [], []
    for r in roles:
        last[r] = src[r][seen[r]]
        seen[r] += 1
        out_a.append(last[0])
        out_b.append(last[1])
    return np.array(out_a), np.array(out_b)


def test_alignment(report):
    a = [np.full(3, v) for v in (1.0, 2.0, 3.0)]
    b = [np.full(3, v) for v in (-1.0, -2.0, -3.0)]
    H_A, H_B = align_contexts(a, b, [0, 1, 0, 1, 0, 1])
    pattern_ok = (np.array_equal(H_A, [a[0], a[0], a[1], a[1], a[2], a[2]])
                  and np.array_equal(H_B, [np.zeros(3), b[0], b[0], b[1], b[1], b[2]]))
    rng = make_rng(3)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        first = int(rng.integers(0, 2))
        roles = [(first + j) % 2 for j in range(n)]
        d = int(rng.integers(1, 5))
        dec_a = rng.normal(size=(roles.count(0), d))
        dec_b = rng.normal(size=(roles.count(1), d))
        got = align_contexts(dec_a, dec_b, roles)
        want = _scan_oracle(dec_a, dec_b, roles, d)
        if not (np.array_equal(got[0], want[0]) and np.array_equal(got[1], want[1])):
            mismatches += 1
    report("alignment", pattern_ok and mismatches == 0,
           f"A-first pattern {'exact' if pattern_ok else 'WRONG'}; "
           f"{mismatches}/1000 mismatches vs scan oracle")


def test_pgfn_zero_case(report):
    rng = make_rng(4)
    f = PGFN(8, rng)
    z0 = f(*(ag.Tensor(np.zeros(8)) for _ in range(3))).data
    exact = bool(np.all(z0 == 0.5))
    lo, hi = 1.0, 0.0
    for scale in (0.01, 1.0, 10.0):
        for _ in range(50):
            z = f(*(ag.Tensor(rng.normal(scale=scale, size=(4, 8))) for _ in range(3))).data
            lo, hi = min(lo, z.min()), max(hi, z.max())
    report("PGFN zero case", exact and 0.0 < lo and hi < 1.0,
           f"zero input -> 0.5 {'exactly' if exact else 'NOT exactly'}; outputs in [{lo:.3g}, {hi:.3g}]")


def _log_density(x, y, g):
    cov = np.array([[g.sigma_x ** 2, g.rho * g.sigma_x * g.sigma_y],
                    [g.rho * g.sigma_x * g.sigma_y, g.sigma_y ** 2]])
    diff = np.array([x - g.mu_x, y - g.mu_y])
    return -0.5 * diff @ np.linalg.solve(cov, diff) - math.log(2 * math.pi * math.sqrt(np.linalg.det(cov)))


def test_density_head(report):
    at_origin = abs(bvn_nll(0.0, 0.0, GaussianParams(0, 0, 1, 1, 0)) - LOG_2PI)
    rng = make_rng(5)
    worst = 0.0
    for _ in range(1000):
        g = GaussianParams(rng.normal(), rng.normal(), rng.uniform(0.2, 3), rng.uniform(0.2, 3),
                           rng.uniform(-0.95, 0.95))
        x, y = rng.normal(0, 2, size=2)
        worst = max(worst, abs(bvn_nll(x, y, g) + _log_density(x, y, g)))
    report("density head", at_origin < 1e-12 and worst < 1e-10,
           f"|nll(0,0) - log 2pi| {at_origin:.1e}; max oracle diff {worst:.1e} over 1000 cases")


def test_overfit_sanity(report):
    archetypes = [sharpen(a, 8.0) for a in default_archetypes()]
    ds = gen_synthetic(SynthConfig(n_matches=1, rallies_per_match=20, n_players=2,
                                   archetypes=archetypes), make_rng(0))
    ds = normalize_coords(ds)
    cfg = TrainConfig(d=8, epochs=300, learning_rate=5e-3, batch_size=4, tau=4, dropout=0.0)
    start = time.perf_counter()
    res = train(ds, cfg)
    acc = type_accuracy(res.model, ds, cfg.tau)
    elapsed = time.perf_counter() - start
    ratio = res.history[-1] / res.history[0]
    report("overfit sanity", ratio <= 0.2 and acc >= 0.9 and elapsed < 600,
           f"final/first loss {ratio:.3f} (<= 0.2), train type accuracy {acc:.3f} (>= 0.9), "
           f"{elapsed:.0f}s")


def _player_split(seed):
    ds = gen_synthetic(SynthConfig(n_matches=8, rallies_per_match=30, n_players=4), make_rng(seed))
    train_ds, test_ds = split_dataset(ds)
    train_ds = normalize_coords(train_ds)
    return train_ds, normalize_coords(test_ds, train_ds.mean)


def test_player_context_value(report):
    start = time.perf_counter()
    full, rally_only = [], []
    for seed in range(5):
        train_ds, test_ds = _player_split(seed)
        for flags, sink in ((AblationFlags(), full),
                            (AblationFlags(use_A=False, use_B=False), rally_only)):
            res = train(train_ds, TrainConfig(epochs=100, learning_rate=1e-3, seed=seed, flags=flags))
            sink.append(evaluate(res.model, test_ds, 4, K=10, seed=seed).ce)
    elapsed = time.perf_counter() - start
    a, b = float(np.mean(full)), float(np.mean(rally_only))
    report("player-context value", a < b and elapsed < 1800,
           f"mean test CE full {a:.4f} vs rally-only {b:.4f} over 5 seeds, {elapsed:.0f}s")


def test_best_of_k_monotonic(report):
    train_ds, test_ds = _player_split(11)
    res = train(train_ds, TrainConfig(d=16, ff_dim=32, epochs=10, learning_rate=1e-3))
    one = evaluate(res.model, test_ds, 4, K=1, seed=3)
    ten = evaluate(res.model, test_ds, 4, K=10, seed=3)
    worse = sum(b["se"] > a["se"] for a, b in zip(one.per_rally, ten.per_rally))
    report("best-of-K monotonicity", worse == 0 and ten.mse <= one.mse,
           f"MSE K=10 {ten.mse:.4f} vs K=1 {one.mse:.4f}; {worse}/{ten.n_rallies} rallies worse")


def test_determinism(report):
    train_ds, test_ds = _player_split(12)
    cfg = TrainConfig(d=16, ff_dim=32, epochs=5, learning_rate=1e-3, seed=4)
    runs = [evaluate(train(train_ds, cfg).model, test_ds, 4, K=5, seed=4).as_dict() for _ in range(2)]
    diff = max(abs(runs[0][k] - runs[1][k]) for k in ("ce", "mse", "mae"))
    report("determinism", diff <= 1e-12, f"max metric divergence {diff:.1e}")


def test_parameter_sharing(report):
    from shuttlenet.embedding import EmbeddingTables
    from shuttlenet.extractors import ExtractorStack
    model = ShuttleNet(ModelConfig(n_players=4), make_rng(0))
    tables, seen, todo = [], set(), [model]
    while todo:
        obj = todo.pop()
        if id(obj) in seen:
            continue
        seen.add(id(obj))
        if isinstance(obj, EmbeddingTables):
            tables.append(obj)
        if isinstance(obj, ag.Module):
            todo.extend(vars(obj).values())
        elif isinstance(obj, (list, tuple)):
            todo.extend(obj)
    shot_params = [n for n, _ in model.named_parameters() if n.endswith("shot")]
    one_stack = ExtractorStack(32, 2, 64, make_rng(1)).num_parameters()
    ok = len(tables) == 1 and len(shot_params) == 1 and model.tpe.num_parameters() == one_stack
    report("parameter sharing", ok,
           f"{len(tables)} embedding table set(s), {len(shot_params)} shot table(s); "
           f"TPE params {model.tpe.num_parameters()} vs one stack {one_stack}")
