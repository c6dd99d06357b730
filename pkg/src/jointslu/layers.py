"""Parameter store, differentiable building blocks and the checkpoint format."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

CHECKPOINT_MAGIC = b"JSLUCKPT"
CHECKPOINT_VERSION = 1


class ParamStore(dict):
    """Ordered mapping ``path -> Tensor`` of every learnable array."""

    def add(self, path: str, data: np.ndarray) -> Tensor:
        if path in self:
            raise KeyError(f"duplicate parameter path {path!r}")
        t = Tensor(np.array(data, dtype=np.float64), name=path)
        self[path] = t
        return t

    def uniform(self, path: str, shape: tuple, fan_in: int, rng: np.random.Generator) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self.add(path, rng.uniform(-bound, bound, size=shape))

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.items()}

    def copy_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self) - set(arrays)
        extra = set(arrays) - set(self)
        if missing or extra:
            raise ValueError(
                f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}"
            )
        for path, arr in arrays.items():
            if arr.shape != self[path].shape:
                raise ValueError(
                    f"shape mismatch for {path!r}: {arr.shape} vs {self[path].shape}"
                )
            self[path].data = np.array(arr, dtype=np.float64)

    def zero_(self, prefix: str = "") -> None:
        for path, t in self.items():
            if path.startswith(prefix):
                t.data = np.zeros_like(t.data)

    def count(self) -> int:
        return int(sum(t.data.size for t in self.values()))


def activation(name: str):
    if name == "leaky_relu":
        return lambda x: T.leaky_relu(x, 0.01)
    if name == "relu":
        return T.relu
    if name == "tanh":
        return T.tanh
    if name == "sigmoid":
        return T.sigmoid
    raise ValueError(f"unknown activation {name!r}")


# -- bidirectional LSTM ---------------------------------------------------
def init_birnn(store: ParamStore, prefix: str, d_in: int, d_out: int, rng) -> None:
    if d_out % 2:
        raise ValueError(f"BiLSTM output width must be even, got {d_out}")
    h = d_out // 2
    for direction in ("fwd", "bwd"):
        store.uniform(f"{prefix}.{direction}.w_ih", (4 * h, d_in), h, rng)
        store.uniform(f"{prefix}.{direction}.w_hh", (4 * h, h), h, rng)
        store.uniform(f"{prefix}.{direction}.bias", (4 * h,), h, rng)


def birnn_forward(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """Rows of ``x`` (n x d_in) -> n x d_out, forward half first."""
    if x.shape[0] < 1:
        raise ValueError("BiLSTM needs a non-empty sequence")
    halves = []
    for direction, rev in (("fwd", False), ("bwd", True)):
        halves.append(
            T.lstm(
                x,
                store[f"{prefix}.{direction}.w_ih"],
                store[f"{prefix}.{direction}.w_hh"],
                store[f"{prefix}.{direction}.bias"],
                reverse=rev,
            )
        )
    return T.concat(halves, axis=1)


# -- scaled dot-product self-attention -----------------------------------
def init_self_attention(store: ParamStore, prefix: str, d_in: int, d_att: int, rng) -> None:
    for proj in ("query", "key", "value"):
        store.uniform(f"{prefix}.{proj}", (d_att, d_in), d_in, rng)


def self_attention(
    x: Tensor, store: ParamStore, prefix: str, return_weights: bool = False
):
    q = T.linear(x, store[f"{prefix}.query"])
    k = T.linear(x, store[f"{prefix}.key"])
    v = T.linear(x, store[f"{prefix}.value"])
    scores = (q @ k.T) * (1.0 / np.sqrt(q.shape[1]))
    weights = T.softmax(scores, axis=1)
    out = weights @ v
    return (out, weights) if return_weights else out


# -- two-layer token decoders --------------------------------------------
def init_decoder(store: ParamStore, prefix: str, d_in: int, d_mid: int, n_out: int, rng):
    store.uniform(f"{prefix}.w2", (d_mid, d_in), d_in, rng)
    store.uniform(f"{prefix}.b2", (d_mid,), d_in, rng)
    store.uniform(f"{prefix}.w1", (n_out, d_mid), d_mid, rng)
    store.uniform(f"{prefix}.b1", (n_out,), d_mid, rng)


def _decoder_logits(h: Tensor, store: ParamStore, prefix: str, act) -> Tensor:
    mid = act(T.linear(h, store[f"{prefix}.w2"], store[f"{prefix}.b2"]))
    return T.linear(mid, store[f"{prefix}.w1"], store[f"{prefix}.b1"])


def intent_token_decoder(h: Tensor, store: ParamStore, prefix: str, act) -> Tensor:
    """Per-label sigmoid probabilities; ``h`` is one token (d,) or a stack (n, d)."""
    return T.sigmoid(_decoder_logits(h, store, prefix, act))


def slot_token_decoder(h: Tensor, store: ParamStore, prefix: str, act) -> Tensor:
    """Softmax distribution over slot labels per token."""
    return T.softmax(_decoder_logits(h, store, prefix, act), axis=-1)


# -- checkpoint -----------------------------------------------------------
def config_hash(config: dict) -> bytes:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).digest()


def save_checkpoint(path, arrays: dict[str, np.ndarray], config: dict) -> None:
    """Header (magic, version, config hash, count) then one record per tensor:
    path, shape, raw little-endian float64 data."""
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    buf += config_hash(config)
    buf += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        key = name.encode("utf-8")
        buf += struct.pack("<I", len(key)) + key
        buf += struct.pack("<I", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path, config: dict | None = None) -> dict[str, np.ndarray]:
    """Read a checkpoint; if ``config`` is given its hash must match the header."""
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = 8
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    digest = raw[pos : pos + 32]
    pos += 32
    if config is not None and digest != config_hash(config):
        raise ValueError(f"{path}: checkpoint was written for a different config")
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (klen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos : pos + klen].decode("utf-8")
        pos += klen
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return arrays
