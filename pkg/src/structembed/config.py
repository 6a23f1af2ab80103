"""Run configuration: defaults, JSON file loading, and validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class Config:
    """All tunables in one place.

    Defaults follow the reference hyper-parameter setting: margins
    m_phi=2 / m_psi=0.5, loss mix gamma=0.5, score decay omega=0.05,
    damping alpha=0.15, fragment windows of 128 tokens, Adam at lr 5e-5
    with eps 1e-8, batch size 24.
    """

    # corpus
    max_seq_len: int = 128
    stride: int = 64
    vocab_size: int = 50_000
    undirected: bool = True

    # link analysis
    alpha: float = 0.15
    intimacy_tol: float = 1e-8
    intimacy_max_iters: int = 1000
    intimacy_cache: str | None = None

    # pair mining
    corruption_rate: float = 0.25
    mask_prob: float = 0.5

    # encoder
    token_dim: int = 64
    embed_dim: int = 128

    # training
    m_phi: float = 2.0
    m_psi: float = 0.5
    gamma: float = 0.5
    learning_rate: float = 5e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 24
    epochs: int = 1
    seed: int = 7
    checkpoint_every: int = 500
    hard_negative_grad: bool = True
    holdout_last_fragment: bool = True
    quintuple_log: str | None = None

    # retrieval
    top_k_fragments: int = 3
    omega: float = 0.05

    def __post_init__(self):
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")
        if not 1 <= self.stride <= self.max_seq_len:
            raise ValueError("stride must be in [1, max_seq_len]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.m_phi < 0 or self.m_psi < 0:
            raise ValueError("margins must be >= 0")
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError("corruption_rate must be in [0, 1]")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must be in [0, 1]")

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        """Load a JSON config file; keys absent from the file keep defaults."""
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kwargs) -> "Config":
        return dataclasses.replace(self, **kwargs)
