"""Type-area attention on a toy rally, step by step."""
# %%
import numpy as np

from shuttlenet import autograd as ag
from shuttlenet.attention import TAAHead, taa
from shuttlenet.embedding import EmbeddingTables, add_positional, embed
from shuttlenet.numerics import make_rng
from shuttlenet.rally_data import VOCAB

rng = make_rng(0)
d = 8
tables = EmbeddingTables(len(VOCAB), 2, d, rng)

# five strokes: serve, lob, smash, defensive shot, net shot
shots = ["short service", "lob", "smash", "defensive shot", "net shot"]
types = np.array([VOCAB.index(s) for s in shots])
coords = np.array([[0.1, 0.9], [-0.2, -2.3], [0.5, 1.1], [0.0, -1.0], [0.3, 0.4]])
players = np.array([0, 1, 0, 1, 0])

seq = add_positional(embed(types, coords, players, tables))
print("type stream", seq.s.shape, "area stream", seq.a.shape)

# %% attention weights, causal
head = TAAHead(d, rng)
mask = np.tril(np.ones((5, 5), dtype=bool))
out, w = taa(seq.s, seq.a, mask, head, return_weights=True)
np.set_printoptions(precision=3, suppress=True)
print(w.data)

# %% zero the area projections: what is left is plain attention on the type stream
for name in ("W_Qa", "W_Ka", "W_Va"):
    getattr(head, name).data[:] = 0.0
_, w_type_only = taa(seq.s, seq.a, mask, head, return_weights=True)
print("rows still sum to one:", np.allclose(w_type_only.data.sum(-1), 1.0))
print(w_type_only.data)
