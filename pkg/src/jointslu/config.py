from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


@dataclass
class TrainConfig:
    # sizes
    word_dim: int = 256
    label_dim: int = 256
    hidden_dim: int = 256
    attention_dim: int = 256
    decoder_dim: int = 256
    gnn_layers: int = 2
    heads: int = 4
    window: int = 3
    # architecture switches
    activation: str = "leaky_relu"
    hgat_scale: str = "d"
    relations: bool = True
    s2i_guidance: bool = True
    i2s_guidance: bool = True
    tie_decoders: bool = False
    threshold: float = 0.5
    dropout: float = 0.0
    # optimizer
    lr: float = 1e-3
    weight_decay: float = 1e-6
    # objective weights
    gamma: float = 0.9
    beta_i: float = 1e-6
    beta_s: float = 1.0
    tau: float = 0.07
    eta_i: float = 0.1
    eta_s: float = 0.01
    lambda_i: float = 0.5
    lambda_s: float = 0.5
    queue_size: int = 64
    scl_enabled: bool = True
    # loop
    batch_size: int = 16
    epochs: int = 100
    patience: int = 50
    seed: int = 0
    lowercase: bool = False

    def __post_init__(self):
        positive = (
            "word_dim", "label_dim", "hidden_dim", "attention_dim", "decoder_dim",
            "gnn_layers", "heads", "queue_size", "batch_size", "lr", "tau",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.window < 0 or self.patience < 0:
            raise ValueError("epochs, window and patience must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        for name in ("weight_decay", "beta_i", "beta_s", "eta_i", "eta_s", "lambda_i", "lambda_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.hidden_dim % 2:
            raise ValueError("hidden_dim must be even (split across LSTM directions)")
        if self.hidden_dim % self.heads:
            raise ValueError("hidden_dim must be divisible by heads")
        if self.hgat_scale not in ("d", "d_att"):
            raise ValueError("hgat_scale must be 'd' or 'd_att'")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, rec: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(rec) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**rec)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)
