"""Trainable text encoder: embedding table + mean pooling + dense tanh head.

Maps a token id sequence to a fixed-length vector h and provides exact
analytic parameter gradients for any upstream dL/dh. The interface (encode
returning (h, trace), backprop consuming the trace) is all downstream code
relies on, so a heavier backend can replace this one without touching
training or retrieval.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"SECK"
CHECKPOINT_VERSION = 1

INIT_SCALE = 0.05


@dataclass
class EncoderParams:
    """token_embeddings: (V, D); projection: (D, E); bias: (E,). float64."""

    token_embeddings: np.ndarray
    projection: np.ndarray
    bias: np.ndarray

    @property
    def vocab_size(self) -> int:
        return self.token_embeddings.shape[0]

    @property
    def token_dim(self) -> int:
        return self.token_embeddings.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.projection.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        """Parameter blocks in declared (checkpoint) order."""
        return {
            "token_embeddings": self.token_embeddings,
            "projection": self.projection,
            "bias": self.bias,
        }

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            token_embeddings=self.token_embeddings.copy(),
            projection=self.projection.copy(),
            bias=self.bias.copy(),
        )


@dataclass
class EncoderGrads:
    token_embeddings: np.ndarray
    projection: np.ndarray
    bias: np.ndarray

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "EncoderGrads":
        return cls(
            token_embeddings=np.zeros_like(params.token_embeddings),
            projection=np.zeros_like(params.projection),
            bias=np.zeros_like(params.bias),
        )

    def blocks(self) -> dict[str, np.ndarray]:
        return {
            "token_embeddings": self.token_embeddings,
            "projection": self.projection,
            "bias": self.bias,
        }


@dataclass(frozen=True)
class EncodeTrace:
    """Cached forward activations; enough to backprop exactly."""

    tokens: tuple[int, ...]
    pooled: np.ndarray
    output: np.ndarray


def init_params(vocab_size: int, token_dim: int, embed_dim: int, seed: int) -> EncoderParams:
    """Uniform init in [-0.05, 0.05], reproducible from the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    return EncoderParams(
        token_embeddings=rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, token_dim)),
        projection=rng.uniform(-INIT_SCALE, INIT_SCALE, size=(token_dim, embed_dim)),
        bias=np.zeros(embed_dim),
    )


def encode(params: EncoderParams, tokens) -> tuple[np.ndarray, EncodeTrace]:
    """h = tanh(W^T meanpool(embed(tokens)) + b). Pure in (params, tokens)."""
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot encode an empty token sequence")
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise ValueError("token id out of vocabulary range")
    pooled = params.token_embeddings[ids].mean(axis=0)
    h = np.tanh(pooled @ params.projection + params.bias)
    return h, EncodeTrace(tokens=tuple(int(t) for t in ids), pooled=pooled, output=h)


def backprop(
    params: EncoderParams,
    trace: EncodeTrace,
    grad_h: np.ndarray,
    out: EncoderGrads | None = None,
) -> EncoderGrads:
    """Accumulate exact gradients of <h, grad_h> into `out` (or a fresh
    zero grad struct). Only embedding rows of tokens present in the input
    receive nonzero gradient."""
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if grad_h.shape != trace.output.shape:
        raise ValueError("grad_h dimension mismatch")
    if out is None:
        out = EncoderGrads.zeros_like(params)
    g_z = grad_h * (1.0 - trace.output ** 2)  # tanh'
    out.bias += g_z
    out.projection += np.outer(trace.pooled, g_z)
    g_pooled = params.projection @ g_z
    ids = np.asarray(trace.tokens, dtype=np.int64)
    np.add.at(out.token_embeddings, ids, g_pooled / ids.size)
    return out


def distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance, the training-time separation measure."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(a - b))


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, the inference-time ranking measure."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(a @ b / (na * nb))


def save_checkpoint(params: EncoderParams, path: str | Path, seed: int = 0) -> None:
    """Header (magic, version, V, D, E, seed) then float32 blocks in
    declared order, all little-endian. save/load round-trips bitwise."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIQ",
                CHECKPOINT_VERSION,
                params.vocab_size,
                params.token_dim,
                params.embed_dim,
                seed,
            )
        )
        for block in params.blocks().values():
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        version, v, d, e, seed = struct.unpack("<IIIIQ", fh.read(24))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        raw = fh.read()
    expected = (v * d + d * e + e) * 4
    if len(raw) != expected:
        raise ValueError("checkpoint payload size mismatch")
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    emb, proj, bias = np.split(flat, [v * d, v * d + d * e])
    params = EncoderParams(
        token_embeddings=emb.reshape(v, d),
        projection=proj.reshape(d, e),
        bias=bias,
    )
    return params, {"version": version, "vocab_size": v, "token_dim": d, "embed_dim": e, "seed": seed}
