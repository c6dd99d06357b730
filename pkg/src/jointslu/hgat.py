"""Relation-aware multi-head graph attention.

For target node i and head k, every incoming edge ``j -> i`` of relation r
gets the score ``(Wq[r,k] h_i) . (Wk[r,k] h_j) / sqrt(scale)``. Scores are
normalized with a softmax over the neighbors of the *same* relation; the
value-projected neighbors of all relations are then summed, passed through
the activation, and the heads are concatenated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graphs import HeteroGraph
from .layers import ParamStore
from .tensor import Tensor


@dataclass
class HgatLayerParams:
    """Per-relation weights, each of shape ``[heads, out, d]``.

    ``value[r]`` maps d -> d/heads, ``query[r]`` and ``key[r]`` map d -> d_att.
    A single entry per list means the relation-collapsed (homogeneous) layer.
    """

    value: list[Tensor]
    query: list[Tensor]
    key: list[Tensor]

    @property
    def heads(self) -> int:
        return self.value[0].shape[0]

    @property
    def collapsed(self) -> bool:
        return len(self.value) == 1


def init_hgat_layer(
    store: ParamStore,
    prefix: str,
    relation_names: list[str],
    d: int,
    heads: int,
    rng: np.random.Generator,
) -> HgatLayerParams:
    if d % heads:
        raise ValueError(f"hidden size {d} is not divisible by {heads} heads")
    dv = d // heads
    value, query, key = [], [], []
    for rel in relation_names:
        value.append(store.uniform(f"{prefix}.{rel}.value", (heads, dv, d), d, rng))
        query.append(store.uniform(f"{prefix}.{rel}.query", (heads, dv, d), d, rng))
        key.append(store.uniform(f"{prefix}.{rel}.key", (heads, dv, d), d, rng))
    return HgatLayerParams(value, query, key)


def layer_params_from_store(
    store: ParamStore, prefix: str, relation_names: list[str]
) -> HgatLayerParams:
    return HgatLayerParams(
        [store[f"{prefix}.{r}.value"] for r in relation_names],
        [store[f"{prefix}.{r}.query"] for r in relation_names],
        [store[f"{prefix}.{r}.key"] for r in relation_names],
    )


def _edge_masks(g: HeteroGraph, collapsed: bool) -> np.ndarray:
    masks = g.masks
    if collapsed:
        masks = masks.any(axis=0, keepdims=True)
    if not masks.any(axis=(0, 2)).all():
        lonely = np.flatnonzero(~masks.any(axis=(0, 2)))
        raise ValueError(f"nodes without incoming edges: {lonely.tolist()}")
    return masks


def hgat_layer(
    g: HeteroGraph,
    H,
    params: HgatLayerParams,
    act=None,
    scale: str = "d",
    return_attention: bool = False,
):
    """One attention layer. ``H`` is ``[N, d]``; returns ``[N, d]``.

    ``scale`` picks the score divisor: ``"d"`` uses the node width,
    ``"d_att"`` the per-head projection width.
    With ``return_attention`` the ``[R, heads, N, N]`` weight array is
    returned as well (rows of relations a node lacks are all zero).
    """
    H = T.as_tensor(H)
    n_nodes, d = H.shape
    if n_nodes != g.node_count:
        raise ValueError(f"feature rows {n_nodes} != graph nodes {g.node_count}")
    if act is None:
        act = lambda x: T.leaky_relu(x, 0.01)
    masks = _edge_masks(g, params.collapsed)
    if len(params.value) != masks.shape[0]:
        raise ValueError(
            f"{len(params.value)} relation weight sets for {masks.shape[0]} relations"
        )

    Wv = T.stack(params.value)  # [R, K, dv, d]
    Wq = T.stack(params.query)  # [R, K, da, d]
    Wk = T.stack(params.key)
    Ht = H.T  # [d, N]
    q = (Wq @ Ht).swap_last()  # [R, K, N, da]
    k = Wk @ Ht  # [R, K, da, N]
    divisor = d if scale == "d" else Wq.shape[2]
    scores = (q @ k) * (1.0 / np.sqrt(divisor))  # [R, K, N, N]
    alpha = T.masked_softmax(scores, masks[:, None, :, :], axis=-1)
    agg = alpha @ H  # [R, K, N, d]
    heads_out = (agg @ Wv.swap_last()).sum(axis=0)  # [K, N, dv]
    out = act(heads_out).transpose(1, 0, 2).reshape(n_nodes, -1)
    return (out, alpha.data) if return_attention else out


def hgat_stack(g: HeteroGraph, H0, layers: list[HgatLayerParams], act=None, scale: str = "d"):
    if not layers:
        raise ValueError("need at least one HGAT layer")
    H = T.as_tensor(H0)
    for params in layers:
        H = hgat_layer(g, H, params, act=act, scale=scale)
    return H
