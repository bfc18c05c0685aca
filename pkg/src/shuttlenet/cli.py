"""Command-line entry points: synth, train, evaluate, forecast, ablate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .fusion import AblationFlags
from .harness import (TrainConfig, evaluate, forecast, forecast_to_json, load_model, save_model,
                      train)
from .numerics import make_rng
from .rally_data import (SynthConfig, gen_synthetic, load_rallies, make_dataset,
                         normalize_coords, split_dataset, write_rallies)

logger = logging.getLogger("shuttlenet")

ABLATIONS = [
    AblationFlags(use_L=False),
    AblationFlags(use_A=False),
    AblationFlags(use_B=False),
    AblationFlags(use_A=False, use_B=False),
    AblationFlags(use_alpha=False),
    AblationFlags(use_beta=False),
    AblationFlags(use_taa=False),
    AblationFlags(),
]


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--d", type=int, default=d.d)
    g.add_argument("--heads", type=int, default=d.n_heads)
    g.add_argument("--ff-dim", type=int, default=d.ff_dim)
    g.add_argument("--dropout", type=float, default=d.dropout)
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--lr", type=float, default=d.learning_rate)
    g.add_argument("--tau", type=int, default=d.tau)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--split", type=float, default=0.8, help="per-match train fraction")
    a = p.add_argument_group("ablation")
    for name in ("L", "A", "B", "alpha", "beta", "taa"):
        a.add_argument(f"--no-{name}", action="store_true", help=f"disable {name}")


def _train_config(args) -> TrainConfig:
    flags = AblationFlags(use_L=not args.no_L, use_A=not args.no_A, use_B=not args.no_B,
                          use_alpha=not args.no_alpha, use_beta=not args.no_beta,
                          use_taa=not args.no_taa)
    return TrainConfig(d=args.d, n_heads=args.heads, ff_dim=args.ff_dim, dropout=args.dropout,
                       batch_size=args.batch_size, epochs=args.epochs, learning_rate=args.lr,
                       tau=args.tau, seed=args.seed, flags=flags)


def _load(path):
    ds = load_rallies(path)
    for rej in ds.rejected:
        logger.warning("rejected %s", rej)
    if not ds.rallies:
        raise ValueError(f"{path}: no valid rallies")
    return ds


def _splits(ds, ratio, players=None, mean=None):
    train_ds, test_ds = split_dataset(ds, ratio)
    if players is not None:
        test_ds = make_dataset(test_ds.rallies, players=players)
    train_ds = normalize_coords(train_ds)
    return train_ds, normalize_coords(test_ds, mean if mean is not None else train_ds.mean)


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_file(args.config) if args.config else SynthConfig()
    overrides = {k: v for k, v in (("n_matches", args.matches),
                                   ("rallies_per_match", args.rallies_per_match),
                                   ("n_players", args.players)) if v is not None}
    cfg = replace(cfg, **overrides)
    ds = gen_synthetic(cfg, make_rng(args.seed))
    write_rallies(ds, args.out)
    print(f"wrote {len(ds.rallies)} rallies ({ds.num_strokes} strokes) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    train_ds, _ = _splits(_load(args.data), args.split)
    res = train(train_ds, cfg, log_every=args.log_every)
    save_model(args.out, res)
    print(f"trained {len(res.history)} epochs on {len(train_ds.rallies) - res.skipped} rallies; "
          f"final loss {res.history[-1]:.4f}" if res.history else "no epochs run")
    print(f"model written to {args.out}")
    return 0


def _print_metrics(m, label="") -> None:
    prefix = f"{label}: " if label else ""
    print(f"{prefix}CE {m.ce:.4f}  MSE {m.mse:.4f}  MAE {m.mae:.4f}  "
          f"({m.n_strokes} strokes, {m.n_rallies} rallies)")
    for k, v in m.as_dict().items():
        print(f"{k}={v}")


def cmd_evaluate(args) -> int:
    lm = load_model(args.model)
    ds = _load(args.data)
    if args.all:
        test_ds = normalize_coords(make_dataset(ds.rallies, players=lm.players), lm.mean)
    else:
        _, test_ds = _splits(ds, args.split, lm.players, lm.mean)
    tau = args.tau if args.tau is not None else lm.train_config.tau
    m = evaluate(lm.model, test_ds, tau, K=args.K, seed=args.seed)
    _print_metrics(m)
    return 0


def cmd_forecast(args) -> int:
    lm = load_model(args.model)
    ds = load_rallies(args.observed)
    if ds.rejected or len(ds.rallies) != 1:
        problems = "; ".join(str(r) for r in ds.rejected) or f"{len(ds.rallies)} rallies found"
        raise ValueError(f"{args.observed}: expected exactly one valid stroke sequence ({problems})")
    observed = ds.rallies[0].strokes
    nxt = args.next_players.split(",") if args.next_players else None
    rollouts = forecast(lm.model, observed, lm.players, args.horizon, args.rollouts,
                        seed=args.seed, mean=lm.mean, next_players=nxt)
    text = forecast_to_json(rollouts)
    if args.out == "-":
        print(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {len(rollouts)} rollouts x {args.horizon} steps to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    base = _train_config(args)
    if args.seeds < 1:
        raise ValueError("--seeds must be at least 1")
    train_ds, test_ds = _splits(_load(args.data), args.split)
    seeds = [base.seed + k for k in range(args.seeds)]
    rows = []
    for flags in ABLATIONS:
        runs = []
        for seed in seeds:
            res = train(train_ds, replace(base, flags=flags, seed=seed))
            runs.append(evaluate(res.model, test_ds, base.tau, K=args.K, seed=seed).as_dict())
        stats = {k: (float(np.mean([r[k] for r in runs])), float(np.std([r[k] for r in runs])))
                 for k in ("ce", "mse", "mae")}
        rows.append((flags.label(), stats))
        logger.info("%s done", flags.label())
    width = max(len(r[0]) for r in rows)
    cell = 17 if len(seeds) > 1 else 8
    print(f"{'Model':<{width}}  {'CE':>{cell}}  {'MSE':>{cell}}  {'MAE':>{cell}}")
    for label, stats in rows:
        cells = [f"{m:.4f} +/- {sd:.4f}" if len(seeds) > 1 else f"{m:.4f}"
                 for m, sd in stats.values()]
        print(f"{label:<{width}}  " + "  ".join(f"{c:>{cell}}" for c in cells))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump([{"model": label, "seeds": seeds,
                        **{k: {"mean": m, "std": sd} for k, (m, sd) in stats.items()}}
                       for label, stats in rows], fh, indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shuttlenet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic rally CSV")
    s.add_argument("--config", help="SynthConfig JSON file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--matches", type=int)
    s.add_argument("--rallies-per-match", type=int)
    s.add_argument("--players", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train on the train split and write a model file")
    t.add_argument("data")
    t.add_argument("--out", required=True)
    t.add_argument("--log-every", type=int, default=0)
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="best-of-K CE/MSE/MAE on the test split")
    e.add_argument("model")
    e.add_argument("data")
    e.add_argument("--tau", type=int)
    e.add_argument("--K", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--split", type=float, default=0.8)
    e.add_argument("--all", action="store_true", help="score every rally instead of the test split")
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("forecast", help="sample continuations of an observed stroke sequence")
    f.add_argument("model")
    f.add_argument("observed", help="CSV fragment with the observed strokes of one rally")
    f.add_argument("--horizon", type=int, required=True)
    f.add_argument("--rollouts", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--next-players", help="comma-separated hitters for the forecast strokes")
    f.add_argument("--out", default="-")
    f.set_defaults(func=cmd_forecast)

    a = sub.add_parser("ablate", help="train and evaluate every ablation variant")
    a.add_argument("data")
    a.add_argument("--K", type=int, default=10)
    a.add_argument("--seeds", type=int, default=1, help="report mean +/- stdev over this many seeds")
    a.add_argument("--json", help="also write the table as JSON")
    _add_train_flags(a)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
