"""Random-instance builders shared by the unit and acceptance tests."""

import numpy as np

import oracles
from jointslu import objectives as obj
from jointslu import tensor as T
from jointslu.graphs import S2I_RELATIONS, HeteroGraph, NodeType
from jointslu.hgat import HgatLayerParams


# -- graph attention ----------------------------------------------------------
def make_params(rng, n_rel, heads, d, scale=0.7):
    dv = d // heads
    mk = lambda: [T.Tensor(rng.normal(0, scale, size=(heads, dv, d)), name="w") for _ in range(n_rel)]
    return HgatLayerParams(mk(), mk(), mk())


def nested(params):
    """Weights as ``W[r][k]`` nested lists for the loop oracle."""
    return [[[row.tolist() for row in w.data[k]] for k in range(w.shape[0])] for w in params]


def random_s2i_graph(rng, n_nodes, p=0.4):
    types = [NodeType.IntentSemantic if rng.random() < 0.5 else NodeType.SlotLabel for _ in range(n_nodes)]
    by_sig = {r.signature: r for r in S2I_RELATIONS}
    edges = []
    for src in range(n_nodes):
        for dst in range(n_nodes):
            if src == dst or rng.random() < p:
                edges.append((src, dst, by_sig[(types[src], types[dst])]))
    return HeteroGraph(n_nodes, tuple(types), tuple(edges), S2I_RELATIONS)


# -- contrastive losses -------------------------------------------------------
def _multi_hot(rng, n):
    v = (rng.random(n) < 0.4).astype(float)
    v[rng.integers(n)] = 1.0
    return v


def random_instance(rng, n_i=3, n_s=4, d=5):
    n = int(rng.integers(1, 5))
    k = int(rng.integers(1, 6))
    o_id = n_s - 1
    inst = {
        "anchor_u": rng.normal(size=d),
        "anchors_w": rng.normal(size=(n, d)),
        "intents": _multi_hot(rng, n_i),
        "slots": np.eye(n_s)[rng.integers(0, n_s, size=n)],
        "queue_u": rng.normal(size=(k, d)),
        "queue_intents": np.stack([_multi_hot(rng, n_i) for _ in range(k)]),
        "queue_words": [rng.normal(size=(int(rng.integers(1, 5)), d)) for _ in range(k)],
        "lam": float(rng.uniform(0, 1.5)),
        "tau": float(rng.choice([0.05, 0.07, 0.1])),
    }
    inst["queue_slots"] = [np.eye(n_s)[rng.integers(0, n_s, size=len(w))] for w in inst["queue_words"]]
    inst["ss"] = obj.sentence_slot_vector(inst["slots"], o_id)
    inst["queue_ss"] = np.stack([obj.sentence_slot_vector(s, o_id) for s in inst["queue_slots"]])
    return inst


def package_losses(x):
    flat_words = np.concatenate(x["queue_words"])
    flat_slots = np.concatenate(x["queue_slots"])
    word_intents = np.concatenate([np.tile(x["queue_intents"][k], (len(w), 1)) for k, w in enumerate(x["queue_words"])])
    return {
        "mi": obj.multi_intent_scl(x["anchor_u"], x["queue_u"], x["intents"], x["queue_intents"], x["tau"]).item(),
        "sgmi": obj.sg_multi_intent_scl(x["anchor_u"], x["queue_u"], x["intents"], x["queue_intents"],
                                        x["ss"], x["queue_ss"], x["lam"], x["tau"]).item(),
        "s": obj.slot_scl(x["anchors_w"], flat_words, x["slots"], flat_slots, x["tau"]).item(),
        "igs": obj.ig_slot_scl(x["anchors_w"], flat_words, x["slots"], flat_slots, x["intents"],
                               word_intents, x["lam"], x["tau"]).item(),
    }


def oracle_losses(x):
    L = lambda a: a.tolist()
    qw = [L(w) for w in x["queue_words"]]
    qs = [L(s) for s in x["queue_slots"]]
    return {
        "mi": oracles.utterance_scl(L(x["anchor_u"]), L(x["queue_u"]), L(x["intents"]), L(x["queue_intents"]), x["tau"]),
        "sgmi": oracles.utterance_scl(L(x["anchor_u"]), L(x["queue_u"]), L(x["intents"]), L(x["queue_intents"]),
                                      x["tau"], L(x["ss"]), L(x["queue_ss"]), x["lam"]),
        "s": oracles.word_scl(L(x["anchors_w"]), L(x["slots"]), qw, qs, x["tau"]),
        "igs": oracles.word_scl(L(x["anchors_w"]), L(x["slots"]), qw, qs, x["tau"],
                                L(x["intents"]), L(x["queue_intents"]), x["lam"]),
    }
