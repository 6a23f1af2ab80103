"""Evaluation harness: Recall@K over relevance ground truth, the
self-prediction task (held-out fragment as query), and representation-space
diagnostics for structural separation and margin ordering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from structembed.config import Config
from structembed.corpus import Corpus
from structembed.encoder import EncoderParams, encode
from structembed.intimacy import IntimacyMatrix, rank_neighbors
from structembed.mining import NoStructureError, partition
from structembed.retrieval import RetrievalIndex, query_embedding


@dataclass(frozen=True)
class RelevanceSet:
    """One free-text query and the doc ids that count as relevant hits."""

    query: str
    relevant: frozenset[str]

    def __post_init__(self):
        if not self.relevant:
            raise ValueError("relevant set must be non-empty")


def load_relevance(path: str | Path) -> list[RelevanceSet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                RelevanceSet(query=obj["query"], relevant=frozenset(obj["relevant"]))
            )
    return out


def recall_at_k(ranked_ids: list[str], relevance: RelevanceSet, k: int) -> float:
    """|relevant ∩ top-K| / |relevant|."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = len(set(ranked_ids[:k]) & relevance.relevant)
    return hits / len(relevance.relevant)


def self_prediction_eval(
    corpus: Corpus,
    index: RetrievalIndex,
    params: EncoderParams,
    cfg: Config | None = None,
    max_queries: int | None = None,
) -> dict:
    """Query with each document's held-out (last) fragment and measure how
    often the source document ranks first. Documents with a single fragment
    have no held-out fragment and are skipped."""
    cfg = cfg or Config()
    hits = 0
    n = 0
    for d, doc in enumerate(corpus.documents):
        if doc.n_fragments < 2:
            continue
        if max_queries is not None and n >= max_queries:
            break
        h_q, _ = encode(params, doc.fragments[-1].tokens)
        top = query_embedding(index, h_q, top_n=1, k=cfg.top_k_fragments, omega=cfg.omega)
        hits += int(top[0].doc_index == d)
        n += 1
    if n == 0:
        raise ValueError("no held-out fragments: every document has one fragment")
    return {"accuracy": hits / n, "n_queries": n, "hits": hits}


@dataclass
class DiagnosticsReport:
    """Distance statistics for structurally related vs unrelated document
    pairs, plus per-anchor level-ordering accuracy."""

    related_mean: float
    related_std: float
    unrelated_mean: float
    unrelated_std: float
    effect_size: float
    n_pairs: int
    level_order_accuracy: float
    adjacent_swap_fraction: float
    n_level_anchors: int

    def to_dict(self) -> dict:
        return {
            "related_mean": self.related_mean,
            "related_std": self.related_std,
            "unrelated_mean": self.unrelated_mean,
            "unrelated_std": self.unrelated_std,
            "effect_size": self.effect_size,
            "n_pairs": self.n_pairs,
            "level_order_accuracy": self.level_order_accuracy,
            "adjacent_swap_fraction": self.adjacent_swap_fraction,
            "n_level_anchors": self.n_level_anchors,
        }


def separation_diagnostics(
    corpus: Corpus,
    index: RetrievalIndex,
    intimacy: IntimacyMatrix,
    samples: int = 500,
    seed: int = 7,
) -> DiagnosticsReport:
    """Sample anchor/related and anchor/unrelated pairs (related means
    positive connectivity) and compare embedding distances; additionally
    check, per anchor with at least three partition levels, that mean
    distance to level-3 negatives <= level-2 <= level-1.

    A failure counts as an adjacent-level swap when the extreme levels are
    still ordered (level-3 mean <= level-1 mean). Documents are represented
    by their mean fragment embedding.
    """
    if samples < 100:
        raise ValueError("diagnostics need at least 100 sampled pairs")
    n = corpus.n_docs
    if n != index.n_docs:
        raise ValueError("corpus and index disagree on document count")
    rng = np.random.default_rng(seed)
    doc_emb = index.mean_doc_embeddings()

    related_anchors = []
    unrelated_anchors = []
    rows = {}
    for i in range(n):
        row = intimacy.row(i).copy()
        row[i] = 0.0
        rows[i] = row
        others_positive = int((row > 0).sum())
        if others_positive >= 1:
            related_anchors.append(i)
        if (n - 1) - others_positive >= 1:
            unrelated_anchors.append(i)
    if not related_anchors or not unrelated_anchors:
        raise ValueError("too few eligible anchors for pair sampling")

    def sample_pairs(anchors, want_positive):
        dists = np.empty(samples)
        for t in range(samples):
            i = int(anchors[rng.integers(len(anchors))])
            row = rows[i]
            mask = (row > 0) if want_positive else (row == 0)
            mask[i] = False
            candidates = np.flatnonzero(mask)
            j = int(candidates[rng.integers(len(candidates))])
            dists[t] = np.linalg.norm(doc_emb[i] - doc_emb[j])
        return dists

    rel = sample_pairs(related_anchors, True)
    unrel = sample_pairs(unrelated_anchors, False)
    pooled = np.sqrt((rel.var(ddof=1) + unrel.var(ddof=1)) / 2.0)
    effect = float((unrel.mean() - rel.mean()) / pooled) if pooled > 0 else 0.0

    # level ordering over anchors with >= 3 levels and non-empty level-1..3
    # negative ranges
    eligible = []
    for i in range(n):
        try:
            pl = partition(rank_neighbors(intimacy, i))
        except NoStructureError:
            continue
        if pl.levels >= 3 and all(pl.neg[l][0] <= pl.neg[l][1] for l in range(3)):
            eligible.append((i, pl))
    if eligible:
        if len(eligible) > samples:
            pick = rng.choice(len(eligible), size=samples, replace=False)
            eligible = [eligible[int(p)] for p in np.sort(pick)]
        correct = 0
        adjacent = 0
        for i, pl in eligible:
            means = []
            for l in range(3):
                lo, hi = pl.neg[l]
                docs = pl.order[lo - 1 : hi]
                means.append(
                    float(np.linalg.norm(doc_emb[docs] - doc_emb[i], axis=1).mean())
                )
            d1, d2, d3 = means
            if d3 <= d2 <= d1:
                correct += 1
            elif d3 <= d1:
                adjacent += 1
        failures = len(eligible) - correct
        accuracy = correct / len(eligible)
        adjacent_frac = adjacent / failures if failures else 1.0
    else:
        accuracy = 0.0
        adjacent_frac = 0.0

    return DiagnosticsReport(
        related_mean=float(rel.mean()),
        related_std=float(rel.std(ddof=1)),
        unrelated_mean=float(unrel.mean()),
        unrelated_std=float(unrel.std(ddof=1)),
        effect_size=effect,
        n_pairs=samples,
        level_order_accuracy=accuracy,
        adjacent_swap_fraction=adjacent_frac,
        n_level_anchors=len(eligible),
    )
