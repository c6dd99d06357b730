"""Heterogeneous semantics-label graphs.

Slot-to-intent graph: intent semantic nodes ``I_i`` plus predicted slot label
nodes ``SL_i``, all connections inside a local window.
Intent-to-slot graph: slot semantic nodes ``S_i`` (windowed among
themselves) plus predicted intent label nodes ``IL_k`` connected to
everything.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class NodeType(enum.Enum):
    IntentSemantic = "I"
    SlotLabel = "SL"
    SlotSemantic = "S"
    IntentLabel = "IL"


class RelationType(enum.Enum):
    # slot-to-intent graph
    IntentSemanticDep = (NodeType.IntentSemantic, NodeType.IntentSemantic)
    SlotToIntentGuidance = (NodeType.SlotLabel, NodeType.IntentSemantic)
    SlotLabelDep = (NodeType.SlotLabel, NodeType.SlotLabel)
    IntentToSlotLabelFeedback = (NodeType.IntentSemantic, NodeType.SlotLabel)
    # intent-to-slot graph
    SlotSemanticDep = (NodeType.SlotSemantic, NodeType.SlotSemantic)
    IntentToSlotGuidance = (NodeType.IntentLabel, NodeType.SlotSemantic)
    IntentLabelDep = (NodeType.IntentLabel, NodeType.IntentLabel)
    SlotToIntentLabelFeedback = (NodeType.SlotSemantic, NodeType.IntentLabel)

    @property
    def signature(self) -> tuple[NodeType, NodeType]:
        return self.value


S2I_RELATIONS = (
    RelationType.IntentSemanticDep,
    RelationType.SlotToIntentGuidance,
    RelationType.SlotLabelDep,
    RelationType.IntentToSlotLabelFeedback,
)
I2S_RELATIONS = (
    RelationType.SlotSemanticDep,
    RelationType.IntentToSlotGuidance,
    RelationType.IntentLabelDep,
    RelationType.SlotToIntentLabelFeedback,
)


@dataclass(frozen=True)
class HeteroGraph:
    node_count: int
    node_types: tuple[NodeType, ...]
    edges: tuple[tuple[int, int, RelationType], ...]
    relations: tuple[RelationType, ...] = field(default=S2I_RELATIONS)

    def __post_init__(self):
        if len(self.node_types) != self.node_count:
            raise ValueError("node_types length must equal node_count")
        seen = set()
        for src, dst, rel in self.edges:
            if not (0 <= src < self.node_count and 0 <= dst < self.node_count):
                raise ValueError(f"edge ({src}, {dst}) out of range")
            if rel not in self.relations:
                raise ValueError(f"relation {rel.name} does not belong to this graph")
            if (self.node_types[src], self.node_types[dst]) != rel.signature:
                raise ValueError(f"edge ({src}, {dst}) violates the {rel.name} signature")
            if (src, dst, rel) in seen:
                raise ValueError(f"duplicate edge ({src}, {dst}, {rel.name})")
            seen.add((src, dst, rel))

    @cached_property
    def masks(self) -> np.ndarray:
        """Boolean ``[R, N, N]``; ``masks[r, i, j]`` iff edge ``j -> i`` of relation r."""
        m = np.zeros((len(self.relations), self.node_count, self.node_count), dtype=bool)
        pos = {r: k for k, r in enumerate(self.relations)}
        for src, dst, rel in self.edges:
            m[pos[rel], dst, src] = True
        return m

    @cached_property
    def _incoming(self) -> dict:
        groups: dict = {}
        for src, dst, rel in self.edges:
            groups.setdefault((dst, rel), []).append(src)
        return {k: tuple(sorted(v)) for k, v in groups.items()}

    def incoming(self, dst: int, rel: RelationType) -> tuple[int, ...]:
        return self._incoming.get((dst, rel), ())

    def in_degree(self, dst: int) -> int:
        return sum(len(self.incoming(dst, r)) for r in self.relations)

    def node_label(self, i: int) -> str:
        """1-based display name, e.g. ``I3`` or ``IL1``."""
        kind = self.node_types[i]
        first = self.node_types.index(kind)
        return f"{kind.value}{i - first + 1}"


def _window(i: int, n: int, w: int) -> range:
    return range(max(0, i - w), min(n, i + w + 1))


def build_s2i_graph(n: int, w: int) -> HeteroGraph:
    if n < 1:
        raise ValueError("slot-to-intent graph needs n >= 1")
    if w < 0:
        raise ValueError("window must be >= 0")
    R = RelationType
    edges = []
    for i in range(n):
        for j in _window(i, n, w):
            edges.append((j, i, R.IntentSemanticDep))
            edges.append((n + j, i, R.SlotToIntentGuidance))
            edges.append((n + j, n + i, R.SlotLabelDep))
            edges.append((j, n + i, R.IntentToSlotLabelFeedback))
    types = (NodeType.IntentSemantic,) * n + (NodeType.SlotLabel,) * n
    return HeteroGraph(2 * n, types, tuple(edges), S2I_RELATIONS)


def build_i2s_graph(n: int, m: int, w: int) -> HeteroGraph:
    if n < 1 or m < 1:
        raise ValueError("intent-to-slot graph needs n >= 1 and m >= 1")
    if w < 0:
        raise ValueError("window must be >= 0")
    R = RelationType
    edges = []
    for i in range(n):
        for j in _window(i, n, w):
            edges.append((j, i, R.SlotSemanticDep))
        for k in range(m):
            edges.append((n + k, i, R.IntentToSlotGuidance))
    for k in range(m):
        for j in range(m):
            edges.append((n + j, n + k, R.IntentLabelDep))
        for i in range(n):
            edges.append((i, n + k, R.SlotToIntentLabelFeedback))
    types = (NodeType.SlotSemantic,) * n + (NodeType.IntentLabel,) * m
    return HeteroGraph(n + m, types, tuple(edges), I2S_RELATIONS)


def edge_list_text(g: HeteroGraph, labels: bool = True) -> str:
    """One edge per line, sorted by (dst, relation, src).

    ``labels=True`` gives ``I2→I3 IntentSemanticDep``; otherwise the plain
    ``src dst relation`` form with integer node ids.
    """
    order = {r: k for k, r in enumerate(g.relations)}
    lines = []
    for src, dst, rel in sorted(g.edges, key=lambda e: (e[1], order[e[2]], e[0])):
        if labels:
            lines.append(f"{g.node_label(src)}→{g.node_label(dst)} {rel.name}")
        else:
            lines.append(f"{src} {dst} {rel.name}")
    return "\n".join(lines)


def parse_edge_list(text: str) -> set[tuple[int, int, RelationType]]:
    """Inverse of ``edge_list_text(g, labels=False)``."""
    out = set()
    for line in text.splitlines():
        if line.strip():
            src, dst, rel = line.split()
            out.add((int(src), int(dst), RelationType[rel]))
    return out
