"""Synthetic clustered corpus generator for desk-scale experiments.

Documents draw tokens from a large shared pool plus a per-cluster pool,
with a per-document mixture over its cluster tokens so fragments of the
same document share a recognizable distribution. Edges are dense inside
clusters and sparse (1/20 the probability) across them, giving a noisy but
informative link structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CROSS_EDGE_DIVISOR = 20


@dataclass
class SyntheticCorpus:
    corpus_path: Path
    edges_path: Path
    clusters_path: Path
    clusters: list[int]
    doc_ids: list[str]


def generate_synthetic(
    n_docs: int,
    n_clusters: int,
    out_dir: str | Path,
    vocab_per_cluster: int = 60,
    shared_vocab: int = 400,
    intra_edge_prob: float = 0.2,
    seed: int = 7,
    shared_frac: float = 0.7,
    mixture_alpha: float = 0.25,
    doc_len_range: tuple[int, int] = (320, 560),
) -> SyntheticCorpus:
    """Write corpus.jsonl, edges.tsv, and clusters.json under out_dir.

    Deterministic for a fixed seed, byte for byte. Documents are assigned
    to clusters in contiguous blocks of n_docs / n_clusters.
    """
    if n_clusters < 2:
        raise ValueError("need at least 2 clusters")
    if n_docs % n_clusters != 0:
        raise ValueError("n_docs must be divisible by n_clusters")
    if vocab_per_cluster < 1 or shared_vocab < 1:
        raise ValueError("vocabulary pools must be non-empty")
    if not 0.0 <= intra_edge_prob <= 1.0:
        raise ValueError("intra_edge_prob must be in [0, 1]")
    lo, hi = doc_len_range
    if not 1 <= lo <= hi:
        raise ValueError("bad doc_len_range")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    per_cluster = n_docs // n_clusters
    clusters = [d // per_cluster for d in range(n_docs)]
    doc_ids = [f"doc{d:04d}" for d in range(n_docs)]

    shared_words = [f"s{i:04d}" for i in range(shared_vocab)]
    cluster_words = [
        [f"c{c:02d}t{i:03d}" for i in range(vocab_per_cluster)]
        for c in range(n_clusters)
    ]

    corpus_path = out / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for d in range(n_docs):
            c = clusters[d]
            weights = rng.dirichlet(np.full(vocab_per_cluster, mixture_alpha))
            length = int(rng.integers(lo, hi + 1))
            use_shared = rng.random(length) < shared_frac
            shared_pick = rng.integers(0, shared_vocab, size=length)
            cluster_pick = rng.choice(vocab_per_cluster, size=length, p=weights)
            words = [
                shared_words[shared_pick[t]]
                if use_shared[t]
                else cluster_words[c][cluster_pick[t]]
                for t in range(length)
            ]
            fh.write(json.dumps({"id": doc_ids[d], "text": " ".join(words)}) + "\n")

    edges_path = out / "edges.tsv"
    cross_prob = intra_edge_prob / CROSS_EDGE_DIVISOR
    with open(edges_path, "w", encoding="utf-8") as fh:
        for i in range(n_docs):
            for j in range(i + 1, n_docs):
                p = intra_edge_prob if clusters[i] == clusters[j] else cross_prob
                if rng.random() < p:
                    fh.write(f"{doc_ids[i]}\t{doc_ids[j]}\n")

    clusters_path = out / "clusters.json"
    clusters_path.write_text(
        json.dumps({doc_ids[d]: clusters[d] for d in range(n_docs)}),
        encoding="utf-8",
    )
    return SyntheticCorpus(
        corpus_path=corpus_path,
        edges_path=edges_path,
        clusters_path=clusters_path,
        clusters=clusters,
        doc_ids=doc_ids,
    )
