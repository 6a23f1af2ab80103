"""Corpus model: tokenization, overlapping fragment windows, and file ingestion.

Corpus files are newline-delimited JSON objects {"id": str, "text": str}.
Edge files are tab-separated lines "src_id<TAB>dst_id[<TAB>weight]" with a
default weight of 1.0.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from structembed.config import Config

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"\w+")

MASK_TOKEN = "[MASK]"
UNK_TOKEN = "[UNK]"


class Vocabulary:
    """Bidirectional token<->id map with reserved MASK and UNK entries.

    Ids 0 and 1 are reserved for MASK and UNK; corpus tokens start at 2.
    """

    def __init__(self, tokens: list[str]):
        reserved = {MASK_TOKEN, UNK_TOKEN}
        if any(t in reserved for t in tokens):
            raise ValueError("reserved token found in vocabulary input")
        self.id_to_token: list[str] = [MASK_TOKEN, UNK_TOKEN] + list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate token in vocabulary input")
        self.mask_id = 0
        self.unk_id = 1

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def reserved_ids(self) -> tuple[int, int]:
        return (self.mask_id, self.unk_id)

    @classmethod
    def build(cls, texts, max_size: int = 50_000) -> "Vocabulary":
        """Build from raw texts, keeping the `max_size` most frequent words.

        Ties are broken lexicographically so the result is deterministic.
        """
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(_words(text))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([t for t, _ in ranked[:max_size]])

    def to_dict(self) -> dict:
        return {"tokens": self.id_to_token[2:]}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        return cls(list(data["tokens"]))


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Lowercase, split on whitespace/punctuation, and map words to ids.

    Words missing from the vocabulary map to the UNK id. Empty text gives
    an empty sequence.
    """
    return [vocab.token_to_id.get(w, vocab.unk_id) for w in _words(text)]


@dataclass(frozen=True)
class Fragment:
    """A token window of a document. `position` is 1-based within the doc."""

    tokens: tuple[int, ...]
    position: int


@dataclass(frozen=True)
class Document:
    doc_id: str
    raw_text: str
    fragments: tuple[Fragment, ...]

    @property
    def n_fragments(self) -> int:
        return len(self.fragments)


def fragment(tokens: list[int], max_seq_len: int, stride: int) -> list[Fragment]:
    """Split a token sequence into overlapping windows.

    Windows start at offsets 0, stride, 2*stride, ... and are clipped to the
    sequence end. A window is suppressed when the previous window already
    reaches the end of the sequence (it would be a strict suffix of it), so
    every token is covered and no window duplicates covered content.

    Raises ValueError for an empty token sequence: such documents are
    rejected because training must be able to sample a fragment.
    """
    if max_seq_len < 1:
        raise ValueError("max_seq_len must be >= 1")
    if not 1 <= stride <= max_seq_len:
        raise ValueError("stride must be in [1, max_seq_len]")
    n = len(tokens)
    if n == 0:
        raise ValueError("cannot fragment an empty token sequence")
    starts = [0]
    k = 1
    while k * stride < n and (k - 1) * stride + max_seq_len < n:
        starts.append(k * stride)
        k += 1
    return [
        Fragment(tokens=tuple(tokens[s : s + max_seq_len]), position=i + 1)
        for i, s in enumerate(starts)
    ]


class AdjacencyMatrix:
    """Sparse non-negative document graph with a zero diagonal."""

    def __init__(self, n: int):
        self.n = n
        self.entries: dict[tuple[int, int], float] = {}

    def add(self, i: int, j: int, weight: float) -> None:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"edge ({i},{j}) out of range for n={self.n}")
        if weight < 0:
            raise ValueError("edge weights must be >= 0")
        if i == j:
            return  # self-edges dropped at ingestion
        key = (i, j)
        # max keeps duplicate listings order-independent
        self.entries[key] = max(self.entries.get(key, 0.0), weight)

    def symmetrize(self) -> None:
        for (i, j), w in list(self.entries.items()):
            rev = (j, i)
            self.entries[rev] = max(self.entries.get(rev, 0.0), w)

    def __len__(self) -> int:
        return len(self.entries)

    def coo(self):
        """Return (rows, cols, weights) as parallel lists, sorted for determinism."""
        items = sorted(self.entries.items())
        rows = [ij[0] for ij, _ in items]
        cols = [ij[1] for ij, _ in items]
        vals = [w for _, w in items]
        return rows, cols, vals


@dataclass
class Corpus:
    """Documents indexed in ingestion order, their graph, and the vocabulary."""

    documents: list[Document]
    adjacency: AdjacencyMatrix
    vocabulary: Vocabulary
    warnings: dict = field(default_factory=dict)

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    def doc_index(self, doc_id: str) -> int:
        return self._id_map[doc_id]

    def __post_init__(self):
        if len(self.documents) != self.adjacency.n:
            raise ValueError("document count must equal adjacency dimension")
        self._id_map = {d.doc_id: i for i, d in enumerate(self.documents)}


def _read_records(corpus_path: str | Path) -> list[tuple[str, str]]:
    records = []
    with open(corpus_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{corpus_path}:{line_no}: invalid JSON") from exc
            if "id" not in obj or "text" not in obj:
                raise ValueError(f"{corpus_path}:{line_no}: missing 'id' or 'text'")
            records.append((str(obj["id"]), str(obj["text"])))
    return records


def ingest(
    corpus_path: str | Path,
    edges_path: str | Path | None,
    config: Config | None = None,
    vocabulary: Vocabulary | None = None,
) -> Corpus:
    """Load a corpus file plus an optional edge file into a Corpus.

    Documents are indexed in file order. Documents whose text tokenizes to
    nothing are dropped with a warning count; duplicate doc ids are an
    error. Edges referencing unknown ids are skipped and counted. When
    `config.undirected` is set the adjacency is symmetrized.

    A prebuilt `vocabulary` (e.g. the one saved at training time) can be
    supplied; otherwise one is built from the corpus text.
    """
    cfg = config or Config()
    records = _read_records(corpus_path)

    seen: set[str] = set()
    for doc_id, _ in records:
        if doc_id in seen:
            raise ValueError(f"duplicate doc_id: {doc_id!r}")
        seen.add(doc_id)

    vocab = vocabulary or Vocabulary.build((t for _, t in records), cfg.vocab_size)

    documents: list[Document] = []
    empty_docs = 0
    for doc_id, text in records:
        tokens = tokenize(text, vocab)
        if not tokens:
            empty_docs += 1
            logger.warning("dropping empty document %r", doc_id)
            continue
        frags = fragment(tokens, cfg.max_seq_len, cfg.stride)
        documents.append(Document(doc_id=doc_id, raw_text=text, fragments=tuple(frags)))
    if not documents:
        raise ValueError("no valid documents in corpus")

    id_map = {d.doc_id: i for i, d in enumerate(documents)}
    adjacency = AdjacencyMatrix(len(documents))
    skipped_edges = 0
    if edges_path is not None:
        with open(edges_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) not in (2, 3):
                    raise ValueError(f"{edges_path}:{line_no}: expected 2 or 3 fields")
                src, dst = parts[0], parts[1]
                weight = float(parts[2]) if len(parts) == 3 else 1.0
                if src not in id_map or dst not in id_map:
                    skipped_edges += 1
                    logger.warning("skipping edge with unknown id: %s -> %s", src, dst)
                    continue
                adjacency.add(id_map[src], id_map[dst], weight)
        if cfg.undirected:
            adjacency.symmetrize()

    return Corpus(
        documents=documents,
        adjacency=adjacency,
        vocabulary=vocab,
        warnings={"skipped_edges": skipped_edges, "empty_documents": empty_docs},
    )
