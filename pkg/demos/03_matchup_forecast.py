"""Ask the same opening against two different receivers."""
# %%
from shuttlenet import (SynthConfig, TrainConfig, forecast, gen_synthetic, normalize_coords,
                        train)
from shuttlenet.numerics import make_rng

ds = gen_synthetic(SynthConfig(n_matches=8, rallies_per_match=30, n_players=4), make_rng(1))
raw = ds
ds = normalize_coords(ds)
res = train(ds, TrainConfig(d=16, ff_dim=32, epochs=30, learning_rate=1e-3, tau=3))

# %% P00 and P02 play the attacker archetype, P01 and P03 the defender
opening = next(r for r in raw.rallies if len(r) > 4 and r.player_a == "P00").strokes[:3]
for s in opening:
    print(f"  {s.player_id} {s.shot_type:15s} ({s.x:+.2f}, {s.y:+.2f})")

server, receiver = opening[0].player_id, opening[1].player_id
for who in sorted({receiver, "P01", "P02"} - {server}):
    roll = forecast(res.model, opening, res.players, 1, 1, seed=0, mean=res.mean,
                    next_players=[who])
    step = roll[0].steps[0]
    top = ", ".join(f"{t} {p:.2f}" for t, p in step.top_types(3))
    g = step.gaussian
    print(f"{who} next: {top} | landing mean ({g.mu_x:+.2f}, {g.mu_y:+.2f})")
