"""Position-aware gated fusion of rally and player contexts, with ablation switches."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Module, Tensor

STREAMS = ("A", "B", "L")


@dataclass(frozen=True)
class AblationFlags:
    use_L: bool = True
    use_A: bool = True
    use_B: bool = True
    use_alpha: bool = True
    use_beta: bool = True
    use_taa: bool = True

    def __post_init__(self):
        if not (self.use_L or self.use_A or self.use_B):
            raise ValueError("at least one of use_L / use_A / use_B must be set")

    @property
    def active(self) -> tuple[str, ...]:
        return tuple(s for s in STREAMS if getattr(self, f"use_{s}"))

    def label(self) -> str:
        off = [f"w/o {s}" for s in ("L", "A", "B") if not getattr(self, f"use_{s}")]
        off += [f"w/o {n}" for n, flag in (("alpha", self.use_alpha), ("beta", self.use_beta),
                                            ("TAA", self.use_taa)) if not flag]
        return " + ".join(off) if off else "ShuttleNet"

    def to_dict(self) -> dict:
        return asdict(self)


class PGFN(Module):
    """Per active stream k: h~_k = tanh(h_k W_k),
    alpha_k = sigmoid([h~ of all active streams] Wt_k),
    z = sigmoid(sum_k beta_k * alpha_k * h~_k).

    With a single active stream there is nothing to fuse and the stream's
    context is passed through unchanged.
    """

    def __init__(self, d: int, rng: np.random.Generator, flags: AblationFlags = AblationFlags()):
        self.flags = flags
        self.d = d
        k = len(flags.active)
        if k == 1:
            return
        for s in flags.active:
            setattr(self, f"W_{s}", ag.parameter((d, d), rng))
            if flags.use_alpha:
                setattr(self, f"Wt_{s}", ag.parameter((k * d, d), rng))
            if flags.use_beta:
                setattr(self, f"beta_{s}", ag.constant_parameter((d,), 1.0))

    def __call__(self, h_A: Tensor | None, h_B: Tensor | None, h_L: Tensor | None) -> Tensor:
        return pgfn(h_A, h_B, h_L, self)


def pgfn(h_A, h_B, h_L, params: PGFN, return_gates: bool = False):
    flags = params.flags
    given = {"A": h_A, "B": h_B, "L": h_L}
    active = flags.active
    for s in active:
        h = given[s]
        if h is None or h.shape[-1] != params.d:
            raise ValueError(f"stream {s}: expected a {params.d}-dimensional context")
    if len(active) == 1:
        return (given[active[0]], {}) if return_gates else given[active[0]]

    hidden = {s: ag.tanh(ag.as_tensor(given[s]) @ getattr(params, f"W_{s}")) for s in active}
    joint = ag.concat([hidden[s] for s in active], axis=-1)
    gates = {}
    total = None
    for s in active:
        term = hidden[s]
        if flags.use_alpha:
            alpha = ag.sigmoid(joint @ getattr(params, f"Wt_{s}"))
            gates[s] = alpha
            term = term * alpha
        if flags.use_beta:
            term = term * getattr(params, f"beta_{s}")
        total = term if total is None else total + term
    z = ag.sigmoid(total)
    return (z, gates) if return_gates else z
