"""Rally/stroke records, CSV ingestion, per-match splitting and a synthetic generator.

Coordinate frame: the server's half of the court is y < 0, the net is y = 0,
and one unit is half the court width. Landing points of a stroke therefore
sit on the opposite side from the hitter.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SHOT_TYPES: tuple[str, ...] = (
    "net shot",
    "clear",
    "push/rush",
    "smash",
    "defensive shot",
    "drive",
    "lob",
    "drop",
    "short service",
    "long service",
)
PAD = "<pad>"
SERVICE_TYPES = ("short service", "long service")
MAX_RALLY_LEN = 35
CSV_HEADER = ("rally_id", "match_id", "seq_no", "player", "shot_type", "x", "y")


class ShotVocab:
    """Shot-type vocabulary; index 0 is padding, 1..10 are the real types."""

    def __init__(self, names: Sequence[str] = SHOT_TYPES):
        if len(names) != 10 or len(set(names)) != 10:
            raise ValueError("vocabulary needs exactly 10 distinct shot types")
        self.names: tuple[str, ...] = (PAD,) + tuple(names)
        self._index = {n: i for i, n in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self._index and name != PAD

    def index(self, name: str) -> int:
        if name not in self:
            raise KeyError(f"unknown shot type {name!r}")
        return self._index[name]

    def name(self, idx: int) -> str:
        return self.names[idx]

    @property
    def service_indices(self) -> tuple[int, ...]:
        return tuple(self._index[s] for s in SERVICE_TYPES)


VOCAB = ShotVocab()


@dataclass(frozen=True)
class Stroke:
    seq_no: int
    player_id: str
    shot_type: str
    x: float
    y: float


@dataclass(frozen=True)
class Rally:
    rally_id: str
    match_id: str
    strokes: tuple[Stroke, ...]

    @property
    def player_a(self) -> str:
        return self.strokes[0].player_id

    @property
    def player_b(self) -> str:
        return self.strokes[1].player_id

    def __len__(self) -> int:
        return len(self.strokes)


def rally_problems(rally: Rally, max_len: int = MAX_RALLY_LEN) -> list[str]:
    """Every invariant a rally breaks, as human-readable messages (empty when valid)."""
    problems: list[str] = []
    n = len(rally.strokes)
    if n < 2:
        problems.append(f"rally has {n} stroke(s); at least 2 required")
    if n > max_len:
        problems.append(f"rally has {n} strokes; max is {max_len}")
    for i, s in enumerate(rally.strokes):
        if s.seq_no != i + 1:
            problems.append(f"stroke {i + 1}: seq_no {s.seq_no} out of order")
        if s.shot_type not in VOCAB:
            problems.append(f"stroke {s.seq_no}: unknown shot type {s.shot_type!r}")
        if not (math.isfinite(s.x) and math.isfinite(s.y)):
            problems.append(f"stroke {s.seq_no}: non-finite coordinate")
    if n >= 2:
        a, b = rally.strokes[0].player_id, rally.strokes[1].player_id
        if a == b:
            problems.append("first two strokes share a player")
        for i, s in enumerate(rally.strokes):
            expected = a if i % 2 == 0 else b
            if s.player_id != expected:
                problems.append(f"stroke {s.seq_no}: player {s.player_id!r} breaks alternation "
                                f"(expected {expected!r})")
    if n and rally.strokes[0].shot_type not in SERVICE_TYPES:
        problems.append(f"serve has type {rally.strokes[0].shot_type!r}, not a service")
    return problems


@dataclass(frozen=True)
class Rejection:
    rally_id: str
    rows: tuple[int, ...]
    reasons: tuple[str, ...]

    def __str__(self) -> str:
        rows = ",".join(str(r) for r in self.rows)
        return f"rally {self.rally_id} (rows {rows}): " + "; ".join(self.reasons)


@dataclass(frozen=True)
class Dataset:
    rallies: tuple[Rally, ...]
    players: tuple[str, ...]
    mean: tuple[float, float] | None = None
    rejected: tuple[Rejection, ...] = ()

    def player_index(self, player_id: str) -> int:
        return self.players.index(player_id)

    @property
    def num_strokes(self) -> int:
        return sum(len(r) for r in self.rallies)

    def matches(self) -> dict[str, list[Rally]]:
        out: dict[str, list[Rally]] = {}
        for r in self.rallies:
            out.setdefault(r.match_id, []).append(r)
        return out


def make_dataset(rallies: Iterable[Rally], players: Sequence[str] | None = None,
                 mean=None, rejected=()) -> Dataset:
    rallies = tuple(rallies)
    seen = sorted({s.player_id for r in rallies for s in r.strokes})
    if players is None:
        players = seen
    else:
        missing = set(seen) - set(players)
        if missing:
            raise ValueError(f"players missing from registry: {sorted(missing)}")
    return Dataset(rallies, tuple(players), mean, tuple(rejected))


# ---------------------------------------------------------------- CSV

def load_rallies(source, max_len: int = MAX_RALLY_LEN) -> Dataset:
    """Parse a rally CSV (path, file object or text).

    Invalid rallies are dropped and reported in ``Dataset.rejected``; each
    rejection lists the offending data rows (1-based, header excluded).
    """
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, newline="", encoding="utf-8") as fh:
            return _parse(fh, max_len)
    if isinstance(source, str):
        return _parse(io.StringIO(source), max_len)
    return _parse(source, max_len)


def _parse(fh, max_len: int) -> Dataset:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise ValueError(f"expected header {','.join(CSV_HEADER)}, got {header}")
    groups: dict[str, dict] = {}
    for rowno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"row {rowno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        rally_id, match_id, seq_no, player, shot, x, y = (c.strip() for c in row)
        g = groups.setdefault(rally_id, {"match": match_id, "rows": [], "strokes": [], "errors": []})
        g["rows"].append(rowno)
        if match_id != g["match"]:
            g["errors"].append(f"row {rowno}: match_id {match_id!r} differs within rally")
        if shot not in VOCAB:
            g["errors"].append(f"row {rowno}: unknown shot type {shot!r}")
        try:
            xv, yv, sq = float(x), float(y), int(seq_no)
        except ValueError:
            g["errors"].append(f"row {rowno}: unparseable number")
            continue
        if not (math.isfinite(xv) and math.isfinite(yv)):
            g["errors"].append(f"row {rowno}: non-finite coordinate")
        g["strokes"].append(Stroke(sq, player, shot, xv, yv))

    rallies, rejected = [], []
    for rally_id, g in groups.items():
        strokes = tuple(sorted(g["strokes"], key=lambda s: s.seq_no))
        rally = Rally(rally_id, g["match"], strokes)
        errors = g["errors"] or rally_problems(rally, max_len)
        if errors:
            rejected.append(Rejection(rally_id, tuple(g["rows"]), tuple(errors)))
            logger.warning("rejected %s", rejected[-1])
        else:
            rallies.append(rally)
    return make_dataset(rallies, rejected=rejected)


def write_rallies(dataset: Dataset, dest) -> None:
    """Write rallies in the canonical CSV layout; ``repr`` floats round-trip exactly."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in dataset.rallies:
            for s in r.strokes:
                w.writerow([r.rally_id, r.match_id, s.seq_no, s.player_id, s.shot_type,
                            repr(float(s.x)), repr(float(s.y))])
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------- split / normalise

def split_dataset(d: Dataset, ratio: float = 0.8) -> tuple[Dataset, Dataset]:
    """Chronological per-match split: the first floor(ratio*n) rallies train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    train, test = [], []
    for match_id, rallies in d.matches().items():
        n = len(rallies)
        if n == 1:
            logger.warning("match %s has a single rally; it goes to train", match_id)
        k = max(1, math.floor(ratio * n + 1e-9))
        train.extend(rallies[:k])
        test.extend(rallies[k:])
    train_players = {s.player_id for r in train for s in r.strokes}
    unseen = {s.player_id for r in test for s in r.strokes} - train_players
    if unseen:
        raise ValueError(f"test players absent from train: {sorted(unseen)}")
    return (replace(d, rallies=tuple(train), rejected=()),
            replace(d, rallies=tuple(test), rejected=()))


def coordinate_mean(d: Dataset) -> tuple[float, float]:
    xy = np.array([(s.x, s.y) for r in d.rallies for s in r.strokes], dtype=np.float64)
    if xy.size == 0:
        return (0.0, 0.0)
    m = xy.mean(axis=0)
    return (float(m[0]), float(m[1]))


def _shift(d: Dataset, dx: float, dy: float) -> tuple[Rally, ...]:
    return tuple(
        replace(r, strokes=tuple(replace(s, x=s.x + dx, y=s.y + dy) for s in r.strokes))
        for r in d.rallies)


def normalize_coords(d: Dataset, mean: tuple[float, float] | None = None) -> Dataset:
    """Centre coordinates on ``mean`` (default: this dataset's own mean).

    Pass the training-set mean when normalising a test split.
    """
    if d.mean is not None:
        raise ValueError("dataset is already normalised")
    mean = coordinate_mean(d) if mean is None else (float(mean[0]), float(mean[1]))
    return replace(d, rallies=_shift(d, -mean[0], -mean[1]), mean=mean)


def denormalize_coords(d: Dataset) -> Dataset:
    if d.mean is None:
        return d
    return replace(d, rallies=_shift(d, d.mean[0], d.mean[1]), mean=None)


# ---------------------------------------------------------------- synthetic data

@dataclass
class Archetype:
    """A playing style.

    ``transitions[incoming][response]`` is the probability of answering an
    incoming shot type with a response type. ``landing[type]`` is a
    two-component Gaussian mixture over landing points in the hitter's
    frame (+y is the opponent's half); each component is
    ``[weight, mean_x, mean_y, std_x, std_y]``.
    """

    name: str
    transitions: dict[str, dict[str, float]]
    landing: dict[str, list[list[float]]]
    short_service_prob: float = 0.7


@dataclass
class SynthConfig:
    """Synthetic rally generator settings.

    Fields
    ------
    n_matches: number of matches.
    rallies_per_match: rallies per match.
    n_players: size of the player pool; players are assigned archetypes
        round-robin, and each match draws two distinct players.
    archetypes: list of ``Archetype`` (two or more).
    mean_length: target mean rally length before clipping to
        [min_length, max_length].
    """

    n_matches: int = 10
    rallies_per_match: int = 30
    n_players: int = 4
    archetypes: list[Archetype] = field(default_factory=lambda: default_archetypes())
    mean_length: float = 10.0
    min_length: int = 4
    max_length: int = MAX_RALLY_LEN

    def validate(self) -> None:
        if self.n_matches < 1 or self.rallies_per_match < 1:
            raise ValueError("need at least one match and one rally per match")
        if self.n_players < 2:
            raise ValueError("need at least two players")
        if len(self.archetypes) < 2:
            raise ValueError("need at least two archetypes")
        if not 2 <= self.min_length <= self.max_length <= MAX_RALLY_LEN:
            raise ValueError("length bounds must satisfy 2 <= min <= max <= 35")
        if self.mean_length < self.min_length:
            raise ValueError("mean_length below min_length")
        for arch in self.archetypes:
            for incoming in SHOT_TYPES:
                row = arch.transitions.get(incoming)
                if row is None:
                    raise ValueError(f"{arch.name}: no transition row for {incoming!r}")
                unknown = set(row) - set(SHOT_TYPES)
                if unknown:
                    raise ValueError(f"{arch.name}/{incoming}: unknown types {sorted(unknown)}")
                probs = np.array(list(row.values()), dtype=float)
                if (not np.all(np.isfinite(probs)) or np.any(probs < 0)
                        or abs(probs.sum() - 1.0) > 1e-6):
                    raise ValueError(f"{arch.name}: degenerate transition row for {incoming!r}")
            for shot in SHOT_TYPES:
                comps = arch.landing.get(shot)
                if comps is None or len(comps) != 2:
                    raise ValueError(f"{arch.name}: landing for {shot!r} needs 2 components")
                w = np.array([c[0] for c in comps])
                if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
                    raise ValueError(f"{arch.name}/{shot}: mixture weights must sum to 1")
                if any(c[3] <= 0 or c[4] <= 0 for c in comps):
                    raise ValueError(f"{arch.name}/{shot}: std must be positive")
            if not 0.0 <= arch.short_service_prob <= 1.0:
                raise ValueError(f"{arch.name}: short_service_prob outside [0, 1]")

    def to_json(self) -> str:
        from dataclasses import asdict
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SynthConfig":
        raw = json.loads(text)
        if "archetypes" in raw:
            raw["archetypes"] = [Archetype(**a) for a in raw["archetypes"]]
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# rough landing zones in the hitter's frame (x across, y deep into the far half)
_ZONES = {
    "net shot": [[0.5, -0.5, 0.4, 0.2, 0.15], [0.5, 0.5, 0.4, 0.2, 0.15]],
    "clear": [[0.5, -0.6, 2.3, 0.25, 0.2], [0.5, 0.6, 2.3, 0.25, 0.2]],
    "push/rush": [[0.5, -0.7, 1.4, 0.2, 0.25], [0.5, 0.7, 1.4, 0.2, 0.25]],
    "smash": [[0.5, -0.6, 1.2, 0.25, 0.3], [0.5, 0.6, 1.2, 0.25, 0.3]],
    "defensive shot": [[0.5, -0.3, 0.9, 0.3, 0.3], [0.5, 0.3, 2.2, 0.3, 0.2]],
    "drive": [[0.5, -0.8, 1.3, 0.15, 0.3], [0.5, 0.8, 1.3, 0.15, 0.3]],
    "lob": [[0.5, -0.6, 2.4, 0.2, 0.15], [0.5, 0.6, 2.4, 0.2, 0.15]],
    "drop": [[0.5, -0.6, 0.6, 0.2, 0.2], [0.5, 0.6, 0.6, 0.2, 0.2]],
    "short service": [[0.5, -0.15, 0.9, 0.1, 0.08], [0.5, 0.15, 0.9, 0.1, 0.08]],
    "long service": [[0.5, -0.5, 2.5, 0.15, 0.08], [0.5, 0.5, 2.5, 0.15, 0.08]],
}


def _rows(spec: dict[str, dict[str, float]]) -> dict[str, dict[str, float]]:
    rows = {}
    for incoming in SHOT_TYPES:
        row = spec.get(incoming, spec["*"])
        total = sum(row.values())
        rows[incoming] = {k: v / total for k, v in row.items()}
    return rows


def default_archetypes() -> list[Archetype]:
    """Two contrasting styles: a net-rushing attacker and a baseline defender."""
    attacker = _rows({
        "short service": {"push/rush": 0.6, "net shot": 0.4},
        "long service": {"smash": 0.8, "clear": 0.2},
        "clear": {"smash": 0.8, "drop": 0.2},
        "lob": {"smash": 0.85, "drop": 0.15},
        "defensive shot": {"smash": 0.5, "net shot": 0.5},
        "smash": {"net shot": 0.6, "drive": 0.4},
        "*": {"net shot": 0.45, "push/rush": 0.35, "drive": 0.2},
    })
    defender = _rows({
        "short service": {"lob": 0.8, "net shot": 0.2},
        "long service": {"clear": 0.85, "drop": 0.15},
        "smash": {"defensive shot": 0.9, "lob": 0.1},
        "clear": {"clear": 0.7, "drop": 0.3},
        "drive": {"lob": 0.7, "defensive shot": 0.3},
        "*": {"lob": 0.6, "clear": 0.3, "drop": 0.1},
    })
    return [
        Archetype("attacker", attacker, dict(_ZONES), short_service_prob=0.9),
        Archetype("defender", defender, dict(_ZONES), short_service_prob=0.2),
    ]


def sharpen(arch: Archetype, power: float) -> Archetype:
    """Raise every transition probability to ``power`` and renormalise.

    power > 1 concentrates each row on its most likely response.
    """
    if power <= 0:
        raise ValueError("power must be positive")
    rows = {}
    for incoming, row in arch.transitions.items():
        w = {k: v ** power for k, v in row.items()}
        total = sum(w.values())
        rows[incoming] = {k: v / total for k, v in w.items()}
    return replace(arch, transitions=rows)


def _pick(rng: np.random.Generator, probs: dict[str, float]) -> str:
    names = list(probs)
    p = np.array([probs[n] for n in names], dtype=float)
    return names[int(rng.choice(len(names), p=p / p.sum()))]


def _land(rng: np.random.Generator, comps: list[list[float]], hitter_sign: float) -> tuple[float, float]:
    w = np.array([c[0] for c in comps])
    c = comps[int(rng.choice(len(comps), p=w / w.sum()))]
    x = rng.normal(c[1], c[3])
    y = rng.normal(c[2], c[4])
    # server (player A) stands at y < 0 and hits towards +y
    return float(x * hitter_sign), float(y * hitter_sign)


def _rally_length(cfg: SynthConfig, rng: np.random.Generator) -> int:
    # shifted geometric; mean ~ min_length + 1/p - 1
    p = 1.0 / max(1.0, cfg.mean_length - cfg.min_length + 1.0)
    n = cfg.min_length + int(rng.geometric(p)) - 1
    return int(min(max(n, cfg.min_length), cfg.max_length))


def gen_synthetic(cfg: SynthConfig, rng: np.random.Generator) -> Dataset:
    cfg.validate()
    players = [f"P{i:02d}" for i in range(cfg.n_players)]
    style = {p: cfg.archetypes[i % len(cfg.archetypes)] for i, p in enumerate(players)}
    rallies = []
    for m in range(cfg.n_matches):
        pa, pb = (players[i] for i in rng.choice(cfg.n_players, size=2, replace=False))
        match_id = f"M{m:03d}"
        for r in range(cfg.rallies_per_match):
            server, receiver = (pa, pb) if rng.random() < 0.5 else (pb, pa)
            length = _rally_length(cfg, rng)
            strokes = []
            prev = None
            for i in range(length):
                hitter = server if i % 2 == 0 else receiver
                arch = style[hitter]
                if prev is None:
                    shot = ("short service" if rng.random() < arch.short_service_prob
                            else "long service")
                else:
                    shot = _pick(rng, arch.transitions[prev])
                sign = 1.0 if i % 2 == 0 else -1.0
                x, y = _land(rng, arch.landing[shot], sign)
                strokes.append(Stroke(i + 1, hitter, shot, x, y))
                prev = shot
            rallies.append(Rally(f"{match_id}-R{r:03d}", match_id, tuple(strokes)))
    return make_dataset(rallies, players=players)
