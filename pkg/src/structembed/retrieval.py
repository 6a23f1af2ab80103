"""Fragment-embedding index and ranked retrieval.

Every fragment of every document is encoded once and persisted. A query is
projected with the same encoder and compared against all fragments by
cosine; each document is scored by its top-K fragment similarities with
exponentially decaying rank weights exp(-omega * k), so the best-matching
fragment dominates but supporting matches still count.

Index file layout (little-endian): magic, version u32, embed dim u32,
entry count u64, 32-byte model fingerprint; then fixed-width records of
(doc ordinal u32, fragment position u16, float32[E]). The record region is
mmap-readable. Doc id strings live in a JSON sidecar next to the index.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from structembed import _kernels
from structembed.config import Config
from structembed.corpus import Corpus, Vocabulary, tokenize
from structembed.encoder import EncoderParams, encode

INDEX_MAGIC = b"SEIX"
INDEX_VERSION = 1


def fingerprint_file(path: str | Path) -> bytes:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).digest()


@dataclass
class RetrievalIndex:
    embed_dim: int
    fingerprint: bytes
    doc_ords: np.ndarray  # (n_entries,) uint32
    frag_pos: np.ndarray  # (n_entries,) uint16
    embeddings: np.ndarray  # (n_entries, E) float32
    doc_ids: list[str] | None = None

    def __post_init__(self):
        if len(self.fingerprint) != 32:
            raise ValueError("fingerprint must be 32 bytes")
        self._normalized = None
        self._offsets = None

    @property
    def n_entries(self) -> int:
        return len(self.doc_ords)

    @property
    def n_docs(self) -> int:
        return int(self.doc_ords[-1]) + 1 if self.n_entries else 0

    @property
    def doc_offsets(self) -> np.ndarray:
        """offsets[d]:offsets[d+1] bounds document d's entries (entries are
        written grouped by ascending doc ordinal)."""
        if self._offsets is None:
            self._offsets = np.searchsorted(
                self.doc_ords, np.arange(self.n_docs + 1)
            ).astype(np.int64)
        return self._offsets

    @property
    def normalized(self) -> np.ndarray:
        """Unit-norm float64 embeddings for cosine scoring."""
        if self._normalized is None:
            emb = self.embeddings.astype(np.float64)
            norms = np.linalg.norm(emb, axis=1, keepdims=True)
            self._normalized = emb / norms
        return self._normalized

    def doc_embeddings(self, d: int) -> np.ndarray:
        lo, hi = self.doc_offsets[d], self.doc_offsets[d + 1]
        return self.embeddings[lo:hi].astype(np.float64)

    def mean_doc_embeddings(self) -> np.ndarray:
        """(n_docs, E) float64 mean fragment embedding per document."""
        out = np.empty((self.n_docs, self.embed_dim), dtype=np.float64)
        offs = self.doc_offsets
        emb = self.embeddings.astype(np.float64)
        for d in range(self.n_docs):
            out[d] = emb[offs[d] : offs[d + 1]].mean(axis=0)
        return out


@dataclass
class ScoredDoc:
    doc_index: int
    score: float
    top_positions: list[int]
    doc_id: str | None = None


def build_index(
    corpus: Corpus, checkpoint_path: str | Path, cfg: Config | None = None
) -> RetrievalIndex:
    """Encode every fragment of every document exactly once.

    Dimension checks run before any encoding: the checkpoint vocabulary
    size must match the corpus vocabulary, and the output dim must match
    the config when one is given.
    """
    from structembed.encoder import load_checkpoint

    params, meta = load_checkpoint(checkpoint_path)
    if corpus.n_docs == 0:
        raise ValueError("empty corpus")
    if meta["vocab_size"] != len(corpus.vocabulary):
        raise ValueError(
            f"checkpoint vocab size {meta['vocab_size']} != corpus vocabulary "
            f"{len(corpus.vocabulary)}"
        )
    if cfg is not None and meta["embed_dim"] != cfg.embed_dim:
        raise ValueError(
            f"checkpoint embed dim {meta['embed_dim']} != configured {cfg.embed_dim}"
        )

    doc_ords = []
    frag_pos = []
    rows = []
    for d, doc in enumerate(corpus.documents):
        for frag in doc.fragments:
            h, _ = encode(params, frag.tokens)
            doc_ords.append(d)
            frag_pos.append(frag.position)
            rows.append(h)
    embeddings = np.asarray(rows, dtype=np.float32)
    if not np.isfinite(embeddings).all():
        raise ValueError("non-finite fragment embedding produced")
    if (np.abs(embeddings).sum(axis=1) == 0.0).any():
        raise ValueError("zero fragment embedding produced")
    return RetrievalIndex(
        embed_dim=params.embed_dim,
        fingerprint=fingerprint_file(checkpoint_path),
        doc_ords=np.asarray(doc_ords, dtype=np.uint32),
        frag_pos=np.asarray(frag_pos, dtype=np.uint16),
        embeddings=embeddings,
        doc_ids=[doc.doc_id for doc in corpus.documents],
    )


def _record_dtype(embed_dim: int) -> np.dtype:
    return np.dtype([("doc", "<u4"), ("pos", "<u2"), ("emb", "<f4", (embed_dim,))])


def save_index(index: RetrievalIndex, path: str | Path) -> None:
    path = Path(path)
    records = np.empty(index.n_entries, dtype=_record_dtype(index.embed_dim))
    records["doc"] = index.doc_ords
    records["pos"] = index.frag_pos
    records["emb"] = index.embeddings
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<IIQ", INDEX_VERSION, index.embed_dim, index.n_entries))
        fh.write(index.fingerprint)
        fh.write(records.tobytes())
    if index.doc_ids is not None:
        sidecar = path.with_name(path.name + ".meta.json")
        sidecar.write_text(json.dumps({"doc_ids": index.doc_ids}), encoding="utf-8")


def load_index(path: str | Path) -> RetrievalIndex:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != INDEX_MAGIC:
            raise ValueError(f"not an index file: {path}")
        version, embed_dim, count = struct.unpack("<IIQ", fh.read(16))
        if version != INDEX_VERSION:
            raise ValueError(f"unsupported index version {version}")
        fingerprint = fh.read(32)
    records = np.memmap(
        path, dtype=_record_dtype(embed_dim), mode="r", offset=52, shape=(count,)
    )
    doc_ids = None
    sidecar = path.with_name(path.name + ".meta.json")
    if sidecar.exists():
        doc_ids = json.loads(sidecar.read_text(encoding="utf-8"))["doc_ids"]
    return RetrievalIndex(
        embed_dim=embed_dim,
        fingerprint=fingerprint,
        doc_ords=np.array(records["doc"]),
        frag_pos=np.array(records["pos"]),
        embeddings=np.array(records["emb"]),
        doc_ids=doc_ids,
    )


def rank_weights(k: int, omega: float) -> np.ndarray:
    """exp(-omega * k) for ranks k = 1..K; strictly decreasing for omega>0."""
    return np.exp(-omega * np.arange(1, k + 1, dtype=np.float64))


def score_document(
    h_q: np.ndarray,
    frag_embeddings: np.ndarray,
    frag_positions: np.ndarray,
    k: int,
    omega: float,
    doc_index: int = 0,
    doc_id: str | None = None,
) -> ScoredDoc:
    """Score one document: cosine each fragment against the query, keep the
    K best (all of them if the document is shorter), and sum them under the
    decaying rank weights."""
    h_q = np.asarray(h_q, dtype=np.float64)
    qn = np.linalg.norm(h_q)
    if qn == 0.0:
        raise ValueError("zero query embedding")
    if len(frag_embeddings) == 0:
        raise ValueError("document has no fragments")
    emb = np.asarray(frag_embeddings, dtype=np.float64)
    sims = (emb / np.linalg.norm(emb, axis=1, keepdims=True)) @ (h_q / qn)
    order = np.argsort(-sims, kind="stable")[:k]
    weights = rank_weights(len(order), omega)
    score = float(np.sum(weights * sims[order]))
    return ScoredDoc(
        doc_index=doc_index,
        score=score,
        top_positions=[int(frag_positions[i]) for i in order],
        doc_id=doc_id,
    )


def score_all(
    index: RetrievalIndex, h_q: np.ndarray, k: int, omega: float
) -> tuple[np.ndarray, np.ndarray]:
    """Score every document against a query embedding via the kernel
    backend. Returns (scores[n_docs], top_entry_idx[n_docs, K])."""
    h_q = np.asarray(h_q, dtype=np.float64)
    qn = np.linalg.norm(h_q)
    if qn == 0.0:
        raise ValueError("zero query embedding")
    sims = index.normalized @ (h_q / qn)
    weights = rank_weights(k, omega)
    return _kernels.doc_scores(sims, index.doc_offsets, weights)


def query(
    index: RetrievalIndex,
    params: EncoderParams,
    vocab: Vocabulary,
    text: str,
    top_n: int = 10,
    k: int = 3,
    omega: float = 0.05,
    max_seq_len: int = 128,
) -> list[ScoredDoc]:
    """Rank documents for a free-text query.

    The query is tokenized with the training vocabulary, truncated to a
    single window, and encoded with the same model that built the index.
    Ties in score break to the lower document index.
    """
    tokens = tokenize(text, vocab)[:max_seq_len]
    if not tokens:
        raise ValueError("query has no tokens after tokenization")
    h_q, _ = encode(params, tokens)
    return query_embedding(index, h_q, top_n=top_n, k=k, omega=omega)


def query_embedding(
    index: RetrievalIndex,
    h_q: np.ndarray,
    top_n: int = 10,
    k: int = 3,
    omega: float = 0.05,
) -> list[ScoredDoc]:
    """Rank documents for an already-encoded query vector."""
    scores, top_idx = score_all(index, h_q, k, omega)
    n = len(scores)
    ranking = np.lexsort((np.arange(n), -scores))[: max(0, top_n)]
    out = []
    for d in ranking:
        entry_ids = [int(t) for t in top_idx[d] if t >= 0]
        out.append(
            ScoredDoc(
                doc_index=int(d),
                score=float(scores[d]),
                top_positions=[int(index.frag_pos[e]) for e in entry_ids],
                doc_id=index.doc_ids[int(d)] if index.doc_ids else None,
            )
        )
    return out
