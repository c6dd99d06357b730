"""Two-stage joint model: shared encoder, initial estimation, then each task
re-decoded over a graph holding the other task's predicted labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as nn
from . import tensor as T
from .config import TrainConfig
from .graphs import I2S_RELATIONS, S2I_RELATIONS, build_i2s_graph, build_s2i_graph
from .hgat import HgatLayerParams, hgat_stack, init_hgat_layer, layer_params_from_store
from .tensor import Tensor


@dataclass
class StageOutputs:
    intent_probs: Tensor  # [n, N_I]
    slot_probs: Tensor  # [n, N_S]
    intent_features: Tensor  # [n, d]
    slot_features: Tensor  # [n, d]


@dataclass(frozen=True)
class Prediction:
    intents: tuple[int, ...]
    slots: tuple[int, ...]


@dataclass
class ForwardTrace:
    stage1: StageOutputs
    stage2: StageOutputs
    slot_pred: tuple[int, ...]
    intent_set: tuple[int, ...]
    aware_slot_features: Tensor | None = None
    extras: dict = field(default_factory=dict)


def intent_vote(intent_probs, threshold: float = 0.5) -> tuple[int, ...]:
    """Token-level voting: label j wins when more than half of the tokens
    give it probability above ``threshold``. An empty result falls back to
    the label with the highest mean probability (lowest id on ties)."""
    probs = np.asarray(intent_probs.data if isinstance(intent_probs, Tensor) else intent_probs)
    n = probs.shape[0]
    votes = (probs > threshold).sum(axis=0)
    chosen = np.flatnonzero(votes > n / 2)
    if chosen.size == 0:
        chosen = np.array([int(np.argmax(probs.mean(axis=0)))])
    return tuple(int(j) for j in chosen)


def _rel_names(relations, collapsed: bool) -> list[str]:
    return ["Collapsed"] if collapsed else [r.name for r in relations]


class JointModel:
    def __init__(self, config: TrainConfig, n_words: int, n_intents: int, n_slots: int, seed: int | None = None):
        self.config = config
        self.n_words = n_words
        self.n_intents = n_intents
        self.n_slots = n_slots
        self.params = nn.ParamStore()
        self.act = nn.activation(config.activation)
        rng = np.random.default_rng(config.seed if seed is None else seed)
        self._init_params(rng)

    # -- parameters -------------------------------------------------------
    def _init_params(self, rng) -> None:
        c, p = self.config, self.params
        d = c.hidden_dim
        d_enc = c.hidden_dim + c.attention_dim
        p.uniform("emb.word", (self.n_words, c.word_dim), c.word_dim, rng)
        nn.init_birnn(p, "enc.lstm", c.word_dim, c.hidden_dim, rng)
        nn.init_self_attention(p, "enc.attn", c.word_dim, c.attention_dim, rng)
        nn.init_birnn(p, "intent.lstm", d_enc, d, rng)
        nn.init_birnn(p, "slot.lstm", d_enc, d, rng)
        nn.init_decoder(p, "dec1.intent", d, c.decoder_dim, self.n_intents, rng)
        nn.init_decoder(p, "dec1.slot", d, c.decoder_dim, self.n_slots, rng)
        if c.s2i_guidance:
            p.uniform("emb.slot_label", (self.n_slots, c.label_dim), c.label_dim, rng)
            if c.label_dim != d:
                p.uniform("adapter.slot_label", (d, c.label_dim), c.label_dim, rng)
            for layer in range(c.gnn_layers):
                init_hgat_layer(p, f"hgat.s2i.{layer}", self._s2i_names, d, c.heads, rng)
            if not c.tie_decoders:
                nn.init_decoder(p, "dec2.intent", d, c.decoder_dim, self.n_intents, rng)
        if c.i2s_guidance:
            nn.init_birnn(p, "slot.aware_lstm", self.n_intents + d, d, rng)
            p.uniform("emb.intent_label", (self.n_intents, c.label_dim), c.label_dim, rng)
            if c.label_dim != d:
                p.uniform("adapter.intent_label", (d, c.label_dim), c.label_dim, rng)
            for layer in range(c.gnn_layers):
                init_hgat_layer(p, f"hgat.i2s.{layer}", self._i2s_names, d, c.heads, rng)
            if not c.tie_decoders:
                nn.init_decoder(p, "dec2.slot", d, c.decoder_dim, self.n_slots, rng)

    @property
    def _s2i_names(self) -> list[str]:
        return _rel_names(S2I_RELATIONS, not self.config.relations)

    @property
    def _i2s_names(self) -> list[str]:
        return _rel_names(I2S_RELATIONS, not self.config.relations)

    def hgat_layers(self, graph: str) -> list[HgatLayerParams]:
        names = self._s2i_names if graph == "s2i" else self._i2s_names
        return [
            layer_params_from_store(self.params, f"hgat.{graph}.{layer}", names)
            for layer in range(self.config.gnn_layers)
        ]

    def _dec2(self, task: str) -> str:
        return f"dec1.{task}" if self.config.tie_decoders else f"dec2.{task}"

    def _label_nodes(self, table: str, ids) -> Tensor:
        rows = T.take_rows(self.params[f"emb.{table}"], list(ids))
        adapter = f"adapter.{table}"
        if adapter in self.params:
            rows = T.linear(rows, self.params[adapter])
        return rows

    # -- forward pieces ---------------------------------------------------
    def encode_shared(self, word_ids, dropout_rng: np.random.Generator | None = None) -> Tensor:
        ids = np.asarray(word_ids, dtype=np.int64)
        if ids.size < 1:
            raise ValueError("cannot encode an empty utterance")
        x = T.take_rows(self.params["emb.word"], ids)
        if dropout_rng is not None and self.config.dropout > 0:
            keep = 1.0 - self.config.dropout
            x = x * (dropout_rng.random(x.shape) < keep) * (1.0 / keep)
        lstm_out = nn.birnn_forward(x, self.params, "enc.lstm")
        att_out = nn.self_attention(x, self.params, "enc.attn")
        return T.concat([lstm_out, att_out], axis=1)

    def stage1_forward(self, H: Tensor) -> StageOutputs:
        h_int = nn.birnn_forward(H, self.params, "intent.lstm")
        h_slot = nn.birnn_forward(H, self.params, "slot.lstm")
        return StageOutputs(
            intent_probs=nn.intent_token_decoder(h_int, self.params, "dec1.intent", self.act),
            slot_probs=nn.slot_token_decoder(h_slot, self.params, "dec1.slot", self.act),
            intent_features=h_int,
            slot_features=h_slot,
        )

    def stage2_intent_forward(self, stage1: StageOutputs, slot_pred) -> tuple[Tensor, Tensor]:
        """Returns (stage-2 intent probs, intent semantic node features)."""
        if not self.config.s2i_guidance:
            return stage1.intent_probs, stage1.intent_features
        n = stage1.intent_features.shape[0]
        graph = build_s2i_graph(n, self.config.window)
        nodes = T.concat([stage1.intent_features, self._label_nodes("slot_label", slot_pred)], axis=0)
        out = hgat_stack(graph, nodes, self.hgat_layers("s2i"), act=self.act, scale=self.config.hgat_scale)
        h_final = out[:n]
        probs = nn.intent_token_decoder(h_final, self.params, self._dec2("intent"), self.act)
        return probs, h_final

    def stage2_slot_forward(self, stage1: StageOutputs, intent_set) -> tuple[Tensor, Tensor, Tensor | None]:
        """Returns (stage-2 slot probs, slot semantic node features, intent-aware states)."""
        if not self.config.i2s_guidance:
            return stage1.slot_probs, stage1.slot_features, None
        intent_set = tuple(intent_set)
        if not intent_set:
            raise ValueError("intent-guided slot decoding needs at least one intent")
        n = stage1.slot_features.shape[0]
        aware_in = T.concat([stage1.intent_probs, stage1.slot_features], axis=1)
        h_aware = nn.birnn_forward(aware_in, self.params, "slot.aware_lstm")
        graph = build_i2s_graph(n, len(intent_set), self.config.window)
        nodes = T.concat([h_aware, self._label_nodes("intent_label", intent_set)], axis=0)
        out = hgat_stack(graph, nodes, self.hgat_layers("i2s"), act=self.act, scale=self.config.hgat_scale)
        h_final = out[:n]
        probs = nn.slot_token_decoder(h_final, self.params, self._dec2("slot"), self.act)
        return probs, h_final, h_aware

    def forward(
        self,
        word_ids,
        slot_pred=None,
        intent_set=None,
        dropout_rng: np.random.Generator | None = None,
    ) -> ForwardTrace:
        """Full two-stage pass. ``slot_pred`` / ``intent_set`` override the
        stage-1 decisions (used to pin the discrete choices in gradient checks)."""
        H = self.encode_shared(word_ids, dropout_rng)
        s1 = self.stage1_forward(H)
        if slot_pred is None:
            slot_pred = tuple(int(j) for j in np.argmax(s1.slot_probs.data, axis=1))
        if intent_set is None:
            intent_set = intent_vote(s1.intent_probs.data, self.config.threshold)
        int_probs, int_feats = self.stage2_intent_forward(s1, slot_pred)
        slot_probs, slot_feats, aware = self.stage2_slot_forward(s1, intent_set)
        s2 = StageOutputs(int_probs, slot_probs, int_feats, slot_feats)
        return ForwardTrace(s1, s2, tuple(slot_pred), tuple(intent_set), aware)

    def predict(self, word_ids) -> Prediction:
        with T.no_grad():
            trace = self.forward(word_ids)
        intents = intent_vote(trace.stage2.intent_probs.data, self.config.threshold)
        slots = tuple(int(j) for j in np.argmax(trace.stage2.slot_probs.data, axis=1))
        return Prediction(intents, slots)
