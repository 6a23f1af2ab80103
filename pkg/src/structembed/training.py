"""Quintuplet-loss training: batch assembly, online hard-negative mining,
analytic gradients through all branches, and the Adam optimizer loop.

Per item the loss is

    (1 - gamma) * max(d(h_a, h_p) - d(h_a, h_n) + m_phi / level, 0)
        + gamma * max(d(h_a, h_s) - d(h_a, h_hn), 0 + m_psi, 0)

summed over the batch, where (p, n) are the structurally similar and
dissimilar documents, s is the corrupted anchor fragment, and hn is the
in-batch anchor closest to h_a. Deeper partition levels (structurally
harder negatives) get proportionally smaller required margins.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from structembed.config import Config
from structembed.corpus import Corpus, Document
from structembed.encoder import (
    EncoderGrads,
    EncoderParams,
    EncodeTrace,
    backprop,
    distance,
    encode,
    init_params,
    save_checkpoint,
)
from structembed.intimacy import IntimacyMatrix, compute_intimacy, rank_neighbors
from structembed.mining import (
    NoStructureError,
    PartitionLevels,
    Quintuple,
    corrupt,
    partition,
    sample_quintuple,
)

logger = logging.getLogger(__name__)


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible stream for a (seed, purpose, ...) key."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class MaterializedQuintuple:
    """A quintuple with concrete token sequences, ready to encode.

    Separating materialization from loss evaluation keeps the loss a pure
    function of the parameters, which is what the finite-difference
    gradient checks differentiate.
    """

    anchor_doc: int
    structural_valid: bool
    level: int
    anchor_tokens: tuple[int, ...]
    sem_pos_tokens: tuple[int, ...]
    struct_pos_doc: int | None = None
    struct_neg_doc: int | None = None
    struct_pos_tokens: tuple[int, ...] | None = None
    struct_neg_tokens: tuple[int, ...] | None = None
    quintuple: Quintuple | None = None


@dataclass
class BatchItem:
    """Encoded branches of one quintuple."""

    anchor_doc: int
    level: int
    structural_valid: bool
    h_anchor: np.ndarray
    trace_anchor: EncodeTrace
    h_sem: np.ndarray
    trace_sem: EncodeTrace
    struct_pos_doc: int | None = None
    h_pos: np.ndarray | None = None
    trace_pos: EncodeTrace | None = None
    h_neg: np.ndarray | None = None
    trace_neg: EncodeTrace | None = None


@dataclass
class LossReport:
    """Batch-level loss accounting. loss == (1-gamma)*loss_struct +
    gamma*loss_sem exactly."""

    loss: float
    loss_struct: float
    loss_sem: float
    gamma: float
    struct_active: list[bool]
    sem_active: list[bool]
    n_sem_skipped: int
    n_struct_invalid: int

    @property
    def active_struct_frac(self) -> float:
        """Fraction of structurally valid items whose hinge is active."""
        valid = len(self.struct_active) - self.n_struct_invalid
        if valid == 0:
            return 0.0
        active = sum(
            1
            for i, a in enumerate(self.struct_active)
            if a and self._valid_flags[i]
        )
        return active / valid

    _valid_flags: list[bool] = field(default_factory=list, repr=False)


def _train_fragment_count(doc: Document, cfg: Config) -> int:
    """Fragments available to training draws; the last one is withheld as
    the unseen-query holdout whenever the document has more than one."""
    if cfg.holdout_last_fragment and doc.n_fragments >= 2:
        return doc.n_fragments - 1
    return doc.n_fragments


def materialize(
    corpus: Corpus,
    pl: PartitionLevels | None,
    anchor: int,
    cfg: Config,
    rng: np.random.Generator,
) -> MaterializedQuintuple:
    """Draw the structural pair, all fragment indices, and the corruption
    plan for one anchor visit. Isolated anchors (no partition) carry only
    the content branches."""
    docs = corpus.documents
    quintuple = None
    if pl is not None:
        quintuple = sample_quintuple(pl, rng)

    def draw_fragment(doc_index: int):
        doc = docs[doc_index]
        idx = int(rng.integers(_train_fragment_count(doc, cfg)))
        return doc.fragments[idx]

    anchor_frag = draw_fragment(anchor)
    pos_tokens = neg_tokens = None
    pos_doc = neg_doc = None
    if quintuple is not None:
        pos_doc, neg_doc = quintuple.struct_pos, quintuple.struct_neg
        pos_tokens = draw_fragment(pos_doc).tokens
        neg_tokens = draw_fragment(neg_doc).tokens
    corruption_source = draw_fragment(anchor)
    spec = corrupt(
        corruption_source, cfg.corruption_rate, cfg.mask_prob, corpus.vocabulary, rng
    )
    if quintuple is not None:
        quintuple.sem_pos = spec
    return MaterializedQuintuple(
        anchor_doc=anchor,
        structural_valid=quintuple is not None,
        level=quintuple.level if quintuple is not None else 0,
        anchor_tokens=anchor_frag.tokens,
        sem_pos_tokens=spec.apply(),
        struct_pos_doc=pos_doc,
        struct_neg_doc=neg_doc,
        struct_pos_tokens=pos_tokens,
        struct_neg_tokens=neg_tokens,
        quintuple=quintuple,
    )


def encode_batch(params: EncoderParams, items: list[MaterializedQuintuple]) -> list[BatchItem]:
    batch = []
    for it in items:
        h_a, t_a = encode(params, it.anchor_tokens)
        h_s, t_s = encode(params, it.sem_pos_tokens)
        bi = BatchItem(
            anchor_doc=it.anchor_doc,
            level=it.level,
            structural_valid=it.structural_valid,
            h_anchor=h_a,
            trace_anchor=t_a,
            h_sem=h_s,
            trace_sem=t_s,
            struct_pos_doc=it.struct_pos_doc,
        )
        if it.structural_valid:
            bi.h_pos, bi.trace_pos = encode(params, it.struct_pos_tokens)
            bi.h_neg, bi.trace_neg = encode(params, it.struct_neg_tokens)
        batch.append(bi)
    return batch


def resolve_hard_negative(i: int, batch: list[BatchItem]) -> int | None:
    """Index of the batch anchor closest to anchor i, excluding i itself,
    any item for the same document, and the current structural positive
    (those are positives under the objective). Ties break to the lowest
    batch position. None when no candidate is eligible."""
    me = batch[i]
    best = None
    best_dist = np.inf
    for j, other in enumerate(batch):
        if j == i:
            continue
        if other.anchor_doc == me.anchor_doc:
            continue
        if me.struct_pos_doc is not None and other.anchor_doc == me.struct_pos_doc:
            continue
        d = distance(me.h_anchor, other.h_anchor)
        if d < best_dist:
            best = j
            best_dist = d
    return best


def quintuplet_loss(
    item: BatchItem, h_sem_neg: np.ndarray | None, cfg: Config
) -> tuple[float, float]:
    """Per-item hinge losses (structural, semantic). The structural margin
    shrinks with partition level: deeper levels hold harder negatives and
    require less separation."""
    loss_phi = 0.0
    if item.structural_valid:
        margin = cfg.m_phi / item.level
        loss_phi = max(
            distance(item.h_anchor, item.h_pos)
            - distance(item.h_anchor, item.h_neg)
            + margin,
            0.0,
        )
    loss_psi = 0.0
    if h_sem_neg is not None:
        loss_psi = max(
            distance(item.h_anchor, item.h_sem)
            - distance(item.h_anchor, h_sem_neg)
            + cfg.m_psi,
            0.0,
        )
    return loss_phi, loss_psi


def _unit_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a - b) / ||a - b||, or zeros at the non-differentiable origin."""
    diff = a - b
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        return np.zeros_like(diff)
    return diff / norm


def batch_loss_and_grads(
    params: EncoderParams, items: list[MaterializedQuintuple], cfg: Config
) -> tuple[LossReport, EncoderGrads]:
    """Encode every branch, mine hard negatives, and return the summed
    batch loss with exact parameter gradients (including the path through
    each mined negative's source anchor unless disabled)."""
    batch = encode_batch(params, items)
    hard_neg = [resolve_hard_negative(i, batch) for i in range(len(batch))]

    loss_struct = 0.0
    loss_sem = 0.0
    struct_active = []
    sem_active = []
    n_sem_skipped = 0
    grad_anchor = [np.zeros_like(b.h_anchor) for b in batch]
    grad_pos = [np.zeros_like(b.h_anchor) for b in batch]
    grad_neg = [np.zeros_like(b.h_anchor) for b in batch]
    grad_sem = [np.zeros_like(b.h_anchor) for b in batch]

    w_struct = 1.0 - cfg.gamma
    w_sem = cfg.gamma
    for i, item in enumerate(batch):
        j = hard_neg[i]
        h_hn = batch[j].h_anchor if j is not None else None
        if j is None:
            n_sem_skipped += 1
        loss_phi, loss_psi = quintuplet_loss(item, h_hn, cfg)
        loss_struct += loss_phi
        loss_sem += loss_psi
        struct_active.append(loss_phi > 0.0)
        sem_active.append(loss_psi > 0.0)

        if loss_phi > 0.0:
            u_pos = _unit_diff(item.h_anchor, item.h_pos)
            u_neg = _unit_diff(item.h_anchor, item.h_neg)
            grad_anchor[i] += w_struct * (u_pos - u_neg)
            grad_pos[i] += -w_struct * u_pos
            grad_neg[i] += w_struct * u_neg
        if loss_psi > 0.0:
            u_sem = _unit_diff(item.h_anchor, item.h_sem)
            u_hn = _unit_diff(item.h_anchor, h_hn)
            grad_anchor[i] += w_sem * (u_sem - u_hn)
            grad_sem[i] += -w_sem * u_sem
            if cfg.hard_negative_grad:
                grad_anchor[j] += w_sem * u_hn

    grads = EncoderGrads.zeros_like(params)
    for i, item in enumerate(batch):
        if grad_anchor[i].any():
            backprop(params, item.trace_anchor, grad_anchor[i], out=grads)
        if grad_sem[i].any():
            backprop(params, item.trace_sem, grad_sem[i], out=grads)
        if item.structural_valid:
            if grad_pos[i].any():
                backprop(params, item.trace_pos, grad_pos[i], out=grads)
            if grad_neg[i].any():
                backprop(params, item.trace_neg, grad_neg[i], out=grads)

    n_struct_invalid = sum(1 for b in batch if not b.structural_valid)
    report = LossReport(
        loss=w_struct * loss_struct + w_sem * loss_sem,
        loss_struct=loss_struct,
        loss_sem=loss_sem,
        gamma=cfg.gamma,
        struct_active=struct_active,
        sem_active=sem_active,
        n_sem_skipped=n_sem_skipped,
        n_struct_invalid=n_struct_invalid,
        _valid_flags=[b.structural_valid for b in batch],
    )
    return report, grads


class AdamState:
    """First/second moment accumulators for every parameter block."""

    def __init__(self, params: EncoderParams):
        self.m = {k: np.zeros_like(v) for k, v in params.blocks().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.blocks().items()}
        self.t = 0

    def step(self, params: EncoderParams, grads: EncoderGrads, cfg: Config) -> None:
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        for name, block in params.blocks().items():
            g = grads.blocks()[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / (1.0 - b1 ** self.t)
            v_hat = self.v[name] / (1.0 - b2 ** self.t)
            block -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def train_step(
    params: EncoderParams,
    items: list[MaterializedQuintuple],
    cfg: Config,
    adam: AdamState,
) -> LossReport:
    """One optimization step over a materialized batch; mutates params."""
    report, grads = batch_loss_and_grads(params, items, cfg)
    if not np.isfinite(report.loss):
        raise RuntimeError(
            "non-finite loss; diagnostic dump: "
            + json.dumps(
                {
                    "loss_struct": report.loss_struct,
                    "loss_sem": report.loss_sem,
                    "anchors": [it.anchor_doc for it in items],
                    "levels": [it.level for it in items],
                }
            )
        )
    adam.step(params, grads, cfg)
    return report


@dataclass
class TrainResult:
    params: EncoderParams
    checkpoint_path: Path
    vocab_path: Path
    log_path: Path
    n_steps: int
    intimacy: IntimacyMatrix


def _intimacy_for_training(corpus: Corpus, cfg: Config) -> IntimacyMatrix:
    if cfg.intimacy_cache:
        cache = Path(cfg.intimacy_cache)
        if cache.exists():
            return IntimacyMatrix.load_cache(cache, alpha=cfg.alpha)
        im = compute_intimacy(
            corpus.adjacency, cfg.alpha, tol=cfg.intimacy_tol,
            max_iters=cfg.intimacy_max_iters,
        )
        im.save_cache(cache)
        # round to the float32 cache precision so a run that computes and a
        # run that loads the cache see identical values
        im.values = im.values.astype(np.float32).astype(np.float64)
        return im
    return compute_intimacy(
        corpus.adjacency, cfg.alpha, tol=cfg.intimacy_tol,
        max_iters=cfg.intimacy_max_iters,
    )


def build_partitions(
    corpus: Corpus, intimacy: IntimacyMatrix
) -> list[PartitionLevels | None]:
    """Partition every anchor once; None marks isolated documents, which
    contribute only the semantic loss term."""
    out = []
    for i in range(corpus.n_docs):
        rn = rank_neighbors(intimacy, i)
        try:
            out.append(partition(rn))
        except NoStructureError:
            out.append(None)
    return out


def train(corpus: Corpus, cfg: Config, out_dir: str | Path) -> TrainResult:
    """Full training run: per-epoch reshuffled anchors, fresh quintuples on
    every visit, periodic checkpoints, and a JSONL loss log. The whole
    trajectory is a pure function of (seed, config, corpus)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    vocab_path = out / "model.vocab.json"
    sidecar = dict(corpus.vocabulary.to_dict())
    sidecar["max_seq_len"] = cfg.max_seq_len
    sidecar["stride"] = cfg.stride
    vocab_path.write_text(json.dumps(sidecar), encoding="utf-8")

    intimacy = _intimacy_for_training(corpus, cfg)
    partitions = build_partitions(corpus, intimacy)

    params = init_params(len(corpus.vocabulary), cfg.token_dim, cfg.embed_dim, cfg.seed)
    adam = AdamState(params)

    log_path = out / "train_log.jsonl"
    ckpt_path = out / "model.ckpt"
    dump_fh = open(cfg.quintuple_log, "w", encoding="utf-8") if cfg.quintuple_log else None
    step = 0
    try:
        with open(log_path, "w", encoding="utf-8") as log_fh:
            for epoch in range(cfg.epochs):
                order = derive_rng(cfg.seed, 1, epoch).permutation(corpus.n_docs)
                for lo in range(0, corpus.n_docs, cfg.batch_size):
                    anchors = order[lo : lo + cfg.batch_size]
                    if len(anchors) < 2:
                        continue  # hard-negative mining needs >= 2 items
                    items = [
                        materialize(
                            corpus,
                            partitions[a],
                            int(a),
                            cfg,
                            derive_rng(cfg.seed, 2, epoch, int(a)),
                        )
                        for a in anchors
                    ]
                    report = train_step(params, items, cfg, adam)
                    step += 1
                    log_fh.write(
                        json.dumps(
                            {
                                "step": step,
                                "loss": report.loss,
                                "loss_struct": report.loss_struct,
                                "loss_sem": report.loss_sem,
                                "active_struct_frac": report.active_struct_frac,
                            }
                        )
                        + "\n"
                    )
                    if dump_fh is not None:
                        for it in items:
                            if it.quintuple is not None:
                                dump_fh.write(
                                    json.dumps(
                                        {
                                            "anchor": it.anchor_doc,
                                            "level": it.level,
                                            "pos": it.struct_pos_doc,
                                            "neg": it.struct_neg_doc,
                                        }
                                    )
                                    + "\n"
                                )
                    if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                        save_checkpoint(params, out / f"ckpt_{step:06d}.ckpt", seed=cfg.seed)
                save_checkpoint(params, out / f"ckpt_epoch{epoch + 1}.ckpt", seed=cfg.seed)
    finally:
        if dump_fh is not None:
            dump_fh.close()

    save_checkpoint(params, ckpt_path, seed=cfg.seed)
    logger.info("training finished: %d steps", step)
    return TrainResult(
        params=params,
        checkpoint_path=ckpt_path,
        vocab_path=vocab_path,
        log_path=log_path,
        n_steps=step,
        intimacy=intimacy,
    )
