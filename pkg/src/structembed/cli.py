"""Command-line interface.

Subcommands: synth, train, index, query, eval, selfpred, diagnose.
Reports are emitted as JSON lines on stdout; progress goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from structembed.config import Config
from structembed.corpus import Vocabulary, ingest
from structembed.encoder import load_checkpoint
from structembed.evaluation import (
    load_relevance,
    recall_at_k,
    self_prediction_eval,
    separation_diagnostics,
)
from structembed.intimacy import compute_intimacy
from structembed.retrieval import (
    build_index,
    fingerprint_file,
    load_index,
    query,
    save_index,
)
from structembed.synth import generate_synthetic
from structembed.training import train

logger = logging.getLogger(__name__)


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _load_config(path: str | None) -> Config:
    return Config.from_file(path) if path else Config()


def _vocab_sidecar(model_path: str, override: str | None) -> tuple[Vocabulary, int]:
    """Locate the vocabulary sidecar written at training time; returns the
    vocabulary and the max_seq_len used for query truncation."""
    path = Path(override) if override else Path(model_path).with_suffix(".vocab.json")
    if not path.exists():
        raise FileNotFoundError(
            f"vocabulary sidecar {path} not found; pass --vocab explicitly"
        )
    data = json.loads(path.read_text(encoding="utf-8"))
    return Vocabulary.from_dict(data), int(data.get("max_seq_len", 128))


def _check_fingerprint(index, model_path: str) -> None:
    if index.fingerprint != fingerprint_file(model_path):
        raise ValueError("index was built from a different model checkpoint")


def cmd_synth(args) -> None:
    result = generate_synthetic(
        n_docs=args.docs,
        n_clusters=args.clusters,
        out_dir=args.out,
        vocab_per_cluster=args.vocab_per_cluster,
        shared_vocab=args.shared_vocab,
        intra_edge_prob=args.intra_edge_prob,
        seed=args.seed,
    )
    _emit(
        {
            "command": "synth",
            "corpus": str(result.corpus_path),
            "edges": str(result.edges_path),
            "clusters": str(result.clusters_path),
            "docs": args.docs,
            "seed": args.seed,
        }
    )


def cmd_train(args) -> None:
    cfg = _load_config(args.config)
    corpus = ingest(args.corpus, args.edges, cfg)
    result = train(corpus, cfg, args.out)
    _emit(
        {
            "command": "train",
            "steps": result.n_steps,
            "checkpoint": str(result.checkpoint_path),
            "vocab": str(result.vocab_path),
            "log": str(result.log_path),
            "config": cfg.to_dict(),
        }
    )


def cmd_index(args) -> None:
    cfg = _load_config(args.config)
    vocab, _ = _vocab_sidecar(args.model, args.vocab)
    corpus = ingest(args.corpus, None, cfg, vocabulary=vocab)
    index = build_index(corpus, args.model, cfg)
    save_index(index, args.out)
    _emit(
        {
            "command": "index",
            "entries": index.n_entries,
            "docs": index.n_docs,
            "out": str(args.out),
        }
    )


def cmd_query(args) -> None:
    index = load_index(args.index)
    _check_fingerprint(index, args.model)
    params, _ = load_checkpoint(args.model)
    vocab, max_seq_len = _vocab_sidecar(args.model, args.vocab)
    results = query(
        index,
        params,
        vocab,
        args.text,
        top_n=args.top,
        k=args.k,
        omega=args.omega,
        max_seq_len=max_seq_len,
    )
    for rank, sd in enumerate(results, start=1):
        _emit(
            {
                "rank": rank,
                "doc_id": sd.doc_id if sd.doc_id is not None else str(sd.doc_index),
                "score": sd.score,
            }
        )


def cmd_eval(args) -> None:
    index = load_index(args.index)
    _check_fingerprint(index, args.model)
    params, _ = load_checkpoint(args.model)
    vocab, max_seq_len = _vocab_sidecar(args.model, args.vocab)
    ks = [int(k) for k in args.k.split(",")]
    sets = load_relevance(args.relevance)
    top_n = max(ks)
    recalls = {k: [] for k in ks}
    for rs in sets:
        ranked = query(
            index, params, vocab, rs.query, top_n=top_n,
            k=args.frag_k, omega=args.omega, max_seq_len=max_seq_len,
        )
        ids = [sd.doc_id if sd.doc_id is not None else str(sd.doc_index) for sd in ranked]
        for k in ks:
            recalls[k].append(recall_at_k(ids, rs, k))
    _emit(
        {
            "command": "eval",
            "n_queries": len(sets),
            "recall": {str(k): sum(v) / len(v) if v else 0.0 for k, v in recalls.items()},
            "k": ks,
            "index": str(args.index),
            "model": str(args.model),
        }
    )


def cmd_selfpred(args) -> None:
    cfg = _load_config(args.config)
    index = load_index(args.index)
    _check_fingerprint(index, args.model)
    params, _ = load_checkpoint(args.model)
    vocab, _ = _vocab_sidecar(args.model, args.vocab)
    corpus = ingest(args.corpus, None, cfg, vocabulary=vocab)
    result = self_prediction_eval(corpus, index, params, cfg)
    _emit({"command": "selfpred", **result, "index": str(args.index)})


def cmd_diagnose(args) -> None:
    cfg = _load_config(args.config)
    index = load_index(args.index)
    corpus = ingest(args.corpus, args.edges, cfg)
    intimacy = compute_intimacy(
        corpus.adjacency, cfg.alpha, tol=cfg.intimacy_tol,
        max_iters=cfg.intimacy_max_iters,
    )
    report = separation_diagnostics(
        corpus, index, intimacy, samples=args.samples, seed=args.seed
    )
    _emit({"command": "diagnose", **report.to_dict(), "samples": args.samples, "seed": args.seed})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structembed",
        description="Structure-aware document embeddings and retrieval",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic clustered corpus")
    p.add_argument("--docs", type=int, default=200)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-per-cluster", type=int, default=60)
    p.add_argument("--shared-vocab", type=int, default=400)
    p.add_argument("--intra-edge-prob", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the encoder on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="encode all fragments into an index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="rank documents for a text query")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--omega", type=float, default=0.05)
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="Recall@K over a relevance file")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--relevance", required=True)
    p.add_argument("--k", default="5,10")
    p.add_argument("--frag-k", type=int, default=3)
    p.add_argument("--omega", type=float, default=0.05)
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfpred", help="held-out fragment self-prediction accuracy")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_selfpred)

    p = sub.add_parser("diagnose", help="representation-space diagnostics")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--config")
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
