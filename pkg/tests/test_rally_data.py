import io
import json
from collections import Counter, defaultdict
from dataclasses import replace

import numpy as np
import pytest

from shuttlenet.numerics import make_rng
from shuttlenet.rally_data import (CSV_HEADER, SHOT_TYPES, VOCAB, Archetype, Rally, Stroke,
                                   SynthConfig, default_archetypes, denormalize_coords,
                                   gen_synthetic, load_rallies, make_dataset, normalize_coords,
                                   rally_problems, sharpen, split_dataset, write_rallies)

HEADER = ",".join(CSV_HEADER)


def _csv(rows):
    return HEADER + "\n" + "\n".join(rows) + "\n"


def test_vocab_layout():
    assert len(VOCAB) == 11
    assert VOCAB.name(0) == "<pad>"
    assert [VOCAB.index(t) for t in SHOT_TYPES] == list(range(1, 11))
    assert "spike" not in VOCAB


def test_load_minimal():
    text = _csv([
        "r1,m1,1,alice,short service,0.1,0.9",
        "r1,m1,2,bob,lob,-0.2,-2.3",
        "r1,m1,3,alice,smash,0.5,1.1",
        "r1,m1,4,bob,defensive shot,0.0,-1.0",
    ])
    ds = load_rallies(text)
    assert len(ds.rallies) == 1 and len(ds.rallies[0]) == 4
    r = ds.rallies[0]
    assert r.player_a == "alice" and r.player_b == "bob"
    assert ds.players == ("alice", "bob")
    assert not ds.rejected


def test_unknown_type_rejected_with_row():
    text = _csv([
        "r1,m1,1,alice,short service,0.1,0.9",
        "r1,m1,2,bob,spike,-0.2,-2.3",
        "r2,m1,1,bob,long service,0.1,2.4",
        "r2,m1,2,alice,clear,0.1,-2.4",
    ])
    ds = load_rallies(text)
    assert [r.rally_id for r in ds.rallies] == ["r2"]
    (rej,) = ds.rejected
    assert rej.rally_id == "r1"
    assert any("row 2" in reason and "spike" in reason for reason in rej.reasons)


@pytest.mark.parametrize("rows,needle", [
    (["r1,m1,1,a,short service,0,0.5", "r1,m1,2,a,lob,0,-2"], "share a player"),
    (["r1,m1,1,a,short service,0,0.5", "r1,m1,2,b,lob,0,-2", "r1,m1,3,b,lob,0,2"], "alternation"),
    (["r1,m1,1,a,short service,nan,0.5", "r1,m1,2,b,lob,0,-2"], "non-finite"),
    (["r1,m1,1,a,clear,0,0.5", "r1,m1,2,b,lob,0,-2"], "not a service"),
])
def test_invalid_rallies(rows, needle):
    ds = load_rallies(_csv(rows))
    assert not ds.rallies
    assert needle in str(ds.rejected[0])


def test_bad_header():
    with pytest.raises(ValueError):
        load_rallies("a,b,c\n1,2,3\n")


def test_round_trip(tmp_path):
    ds = gen_synthetic(SynthConfig(n_matches=3, rallies_per_match=7), make_rng(1))
    path = tmp_path / "rallies.csv"
    write_rallies(ds, path)
    back = load_rallies(path)
    assert back.rallies == ds.rallies
    buf = io.StringIO()
    write_rallies(ds, buf)
    assert load_rallies(buf.getvalue()).rallies == ds.rallies


def _match(match_id, n):
    return [Rally(f"{match_id}-{i}", match_id, (
        Stroke(1, "a", "short service", 0.0, 1.0), Stroke(2, "b", "lob", 0.0, -2.0)))
        for i in range(n)]


@pytest.mark.parametrize("n,expected", [(10, (8, 2)), (5, (4, 1)), (1, (1, 0)), (2, (1, 1))])
def test_split_counts(n, expected):
    train, test = split_dataset(make_dataset(_match("m", n)), 0.8)
    assert (len(train.rallies), len(test.rallies)) == expected


def test_split_is_per_match_partition():
    rng = make_rng(0)
    rallies = []
    sizes = {}
    for m in range(12):
        n = int(rng.integers(1, 25))
        sizes[f"m{m}"] = n
        rallies += _match(f"m{m}", n)
    d = make_dataset(rallies)
    train, test = split_dataset(d, 0.8)
    # brute-force recount per match
    for mid, n in sizes.items():
        k = max(1, int(np.floor(0.8 * n + 1e-9)))
        tr = [r for r in train.rallies if r.match_id == mid]
        te = [r for r in test.rallies if r.match_id == mid]
        assert (len(tr), len(te)) == (k, n - k)
        # chronological: train is the prefix
        assert [r.rally_id for r in tr + te] == [r.rally_id for r in d.rallies if r.match_id == mid]
    ids_tr = {r.rally_id for r in train.rallies}
    ids_te = {r.rally_id for r in test.rallies}
    assert not ids_tr & ids_te and ids_tr | ids_te == {r.rally_id for r in d.rallies}


def test_split_ratio_bounds():
    with pytest.raises(ValueError):
        split_dataset(make_dataset(_match("m", 3)), 1.0)


def test_normalize_simple():
    r = Rally("r", "m", (Stroke(1, "a", "short service", 1.0, 1.0), Stroke(2, "b", "lob", 3.0, 3.0)))
    d = normalize_coords(make_dataset([r]))
    assert d.mean == (2.0, 2.0)
    assert [(s.x, s.y) for s in d.rallies[0].strokes] == [(-1.0, -1.0), (1.0, 1.0)]


def test_normalize_centered_and_inverse():
    ds = gen_synthetic(SynthConfig(n_matches=2, rallies_per_match=5), make_rng(3))
    norm = normalize_coords(ds)
    again = normalize_coords(denormalize_coords(replace(norm, mean=None)))
    for r1, r2 in zip(norm.rallies, again.rallies):
        for s1, s2 in zip(r1.strokes, r2.strokes):
            assert abs(s1.x - s2.x) < 1e-12 and abs(s1.y - s2.y) < 1e-12
    back = denormalize_coords(norm)
    for r1, r2 in zip(ds.rallies, back.rallies):
        for s1, s2 in zip(r1.strokes, r2.strokes):
            assert abs(s1.x - s2.x) < 1e-12 and abs(s1.y - s2.y) < 1e-12


def test_normalize_test_split_with_train_mean():
    ds = gen_synthetic(SynthConfig(n_matches=2, rallies_per_match=10), make_rng(3))
    train, test = split_dataset(ds)
    ntrain = normalize_coords(train)
    ntest = normalize_coords(test, ntrain.mean)
    assert ntest.mean == ntrain.mean


def test_generated_rallies_valid():
    ds = gen_synthetic(SynthConfig(n_matches=1, rallies_per_match=5), make_rng(0))
    assert len(ds.rallies) == 5
    for r in ds.rallies:
        assert rally_problems(r) == []
        assert 4 <= len(r) <= 35


def test_length_mean_near_ten():
    ds = gen_synthetic(SynthConfig(n_matches=20, rallies_per_match=100), make_rng(0))
    lengths = [len(r) for r in ds.rallies]
    assert 9.0 < np.mean(lengths) < 11.0
    assert min(lengths) >= 4 and max(lengths) <= 35


def test_deterministic_transition():
    archs = default_archetypes()
    lob_after_smash = {**archs[0].transitions, "smash": {"lob": 1.0}}
    cfg = SynthConfig(n_matches=4, rallies_per_match=30, n_players=2, archetypes=[
        replace(archs[0], transitions=lob_after_smash),
        replace(archs[1], transitions={**archs[1].transitions, "smash": {"lob": 1.0}})])
    ds = gen_synthetic(cfg, make_rng(1))
    after = [r.strokes[i + 1].shot_type for r in ds.rallies for i in range(len(r) - 1)
             if r.strokes[i].shot_type == "smash"]
    assert after and set(after) == {"lob"}


def test_transition_frequencies():
    cfg = SynthConfig(n_matches=10, rallies_per_match=200, n_players=2)
    ds = gen_synthetic(cfg, make_rng(2))
    style = {"P00": cfg.archetypes[0], "P01": cfg.archetypes[1]}
    counts = defaultdict(Counter)
    for r in ds.rallies:
        for prev, cur in zip(r.strokes, r.strokes[1:]):
            counts[(cur.player_id, prev.shot_type)][cur.shot_type] += 1
    assert sum(sum(c.values()) for c in counts.values()) > 10_000
    checked = 0
    for (player, incoming), c in counts.items():
        n = sum(c.values())
        if n < 1000:
            continue
        for resp, p in style[player].transitions[incoming].items():
            assert abs(c[resp] / n - p) < 0.03, (player, incoming, resp)
        checked += 1
    assert checked >= 4


def test_degenerate_row_rejected():
    arch = default_archetypes()[0]
    bad = replace(arch, transitions={**arch.transitions, "lob": {"smash": 0.0}})
    with pytest.raises(ValueError, match="degenerate"):
        SynthConfig(archetypes=[bad, default_archetypes()[1]]).validate()


def test_config_json_round_trip(tmp_path):
    cfg = SynthConfig(n_matches=2, rallies_per_match=3)
    path = tmp_path / "synth.json"
    path.write_text(cfg.to_json())
    back = SynthConfig.from_file(path)
    assert back == cfg
    assert json.loads(cfg.to_json())["archetypes"][0]["name"] == "attacker"


def test_landing_side_matches_hitter():
    ds = gen_synthetic(SynthConfig(n_matches=2, rallies_per_match=20), make_rng(4))
    ys_a = [s.y for r in ds.rallies for s in r.strokes[0::2]]
    ys_b = [s.y for r in ds.rallies for s in r.strokes[1::2]]
    assert np.mean(np.array(ys_a) > 0) > 0.95 and np.mean(np.array(ys_b) < 0) > 0.95


def test_sharpen_concentrates_rows():
    arch = default_archetypes()[0]
    sharp = sharpen(arch, 8.0)
    for incoming, row in arch.transitions.items():
        new = sharp.transitions[incoming]
        assert sum(new.values()) == pytest.approx(1.0, abs=1e-12)
        top = max(row, key=row.get)
        assert max(new, key=new.get) == top and new[top] >= row[top]
    same = sharpen(arch, 1.0)
    for incoming, row in arch.transitions.items():
        for k, v in row.items():
            assert same.transitions[incoming][k] == pytest.approx(v, abs=1e-12)
