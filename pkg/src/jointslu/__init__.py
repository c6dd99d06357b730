"""Joint multi-intent detection and slot filling with two-stage mutual
guidance over heterogeneous label graphs, in plain numpy."""

from .config import TrainConfig
from .corpus import (
    Sample,
    Vocabularies,
    build_vocab,
    encode_sample,
    generate_synthetic,
    parse_dataset,
    read_dataset,
    serialize_dataset,
)
from .graphs import HeteroGraph, NodeType, RelationType, build_i2s_graph, build_s2i_graph, edge_list_text
from .hgat import hgat_layer, hgat_stack
from .metrics import EvalReport, evaluate_predictions, slot_f1
from .model import JointModel, Prediction, intent_vote
from .train import (
    TrainState,
    evaluate,
    fit,
    grad_check,
    load_model,
    save_model,
    train_epoch,
    train_until_converged,
)

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "Sample", "Vocabularies", "build_vocab", "encode_sample", "generate_synthetic",
    "parse_dataset", "read_dataset", "serialize_dataset",
    "HeteroGraph", "NodeType", "RelationType", "build_i2s_graph", "build_s2i_graph", "edge_list_text",
    "hgat_layer", "hgat_stack",
    "EvalReport", "evaluate_predictions", "slot_f1",
    "JointModel", "Prediction", "intent_vote",
    "TrainState", "evaluate", "fit", "grad_check", "load_model", "save_model", "train_epoch",
    "train_until_converged",
]
