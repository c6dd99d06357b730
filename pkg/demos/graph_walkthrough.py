"""
Label graphs and relation-aware attention
=========================================

Builds the two graphs used by the second decoding stage for a short
utterance, prints their edges, and runs one attention layer over them to
show that each relation is normalized on its own.
"""

import numpy as np

from jointslu.graphs import build_i2s_graph, build_s2i_graph, edge_list_text
from jointslu.hgat import init_hgat_layer, hgat_layer
from jointslu.layers import ParamStore

# five tokens, two predicted intents, window 1
n, m, w = 5, 2, 1
s2i = build_s2i_graph(n, w)
i2s = build_i2s_graph(n, m, w)
print(f"S2I graph: {s2i.node_count} nodes, {len(s2i.edges)} edges")
print(f"I2S graph: {i2s.node_count} nodes, {len(i2s.edges)} edges")

# the edges arriving at the third intent node
for line in edge_list_text(s2i).splitlines():
    if line.split()[0].endswith("→I3"):
        print("  ", line)

# every intent label node sees every slot node, whatever the window
print("IL1 <- slots:", [i2s.node_label(j) for j in i2s.incoming(n, i2s.relations[3])])

#%%
# One attention layer with random weights. The returned weights have shape
# [relations, heads, nodes, nodes]; each relation's row sums to one on its own.
rng = np.random.default_rng(0)
d, heads = 8, 2
store = ParamStore()
params = init_hgat_layer(store, "demo", [r.name for r in s2i.relations], d, heads, rng)
H = rng.normal(size=(s2i.node_count, d))
out, alpha = hgat_layer(s2i, H, params, return_attention=True)
print("output", out.shape)
np.set_printoptions(precision=3, suppress=True)
print("row sums for node I3, head 0, per relation:", alpha[:, 0, 2, :].sum(axis=1))
