"""Training-pair mining: recursive neighbor partitioning, uniform quintuple
sampling, and token-corruption plans for the content-similarity branch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from structembed.corpus import Fragment, Vocabulary
from structembed.intimacy import RankedNeighbors


class NoStructureError(RuntimeError):
    """Anchor has no connected documents; structural sampling is undefined."""


@dataclass(frozen=True)
class PartitionLevels:
    """Per-level candidate position ranges over a ranked-neighbor sequence.

    Ranges are 1-based inclusive (lo, hi) pairs into the anchor's neighbor
    order; a range with lo > hi is empty. Level 1 positives span the whole
    connected block and the terminal level is the single strongest
    connection; negatives tile the remainder so deeper levels draw
    structurally closer (harder) negatives.
    """

    anchor: int
    n: int
    total: int
    levels: int
    pos: tuple[tuple[int, int], ...]
    neg: tuple[tuple[int, int], ...]
    order: np.ndarray

    def valid_levels(self) -> list[int]:
        """Levels whose positive and negative ranges are both non-empty."""
        return [
            l + 1
            for l in range(self.levels)
            if self.pos[l][0] <= self.pos[l][1] and self.neg[l][0] <= self.neg[l][1]
        ]


def partition(rn: RankedNeighbors) -> PartitionLevels:
    """Recursively halve the connected block into per-level candidate sets.

    With n connected documents there are L = floor(log2 n) + 1 levels. The
    level-l positive range is positions 1..ceil(n / 2^(l-1)), except the
    terminal level which is pinned to the single position 1. Level-1
    negatives are the unconnected block (n+1..total); deeper negatives are
    the slice between consecutive positive boundaries, so levels >= 2 tile
    positions 2..n exactly.
    """
    n = rn.n
    if n < 1:
        raise NoStructureError(f"anchor {rn.anchor} has no connected documents")
    levels = n.bit_length()  # floor(log2 n) + 1
    bounds = [-(-n // 2 ** l) for l in range(levels)]
    bounds[levels - 1] = 1
    pos = [(1, b) for b in bounds]
    neg = [(n + 1, rn.total)]
    for l in range(1, levels):
        neg.append((bounds[l] + 1, bounds[l - 1]))
    return PartitionLevels(
        anchor=rn.anchor,
        n=n,
        total=rn.total,
        levels=levels,
        pos=tuple(pos),
        neg=tuple(neg),
        order=rn.order,
    )


@dataclass(frozen=True)
class CorruptionSpec:
    """Replacement plan turning a fragment into its noisy positive twin."""

    source: Fragment
    positions: tuple[int, ...]
    replacements: tuple[int, ...]

    def apply(self) -> tuple[int, ...]:
        tokens = list(self.source.tokens)
        for p, r in zip(self.positions, self.replacements):
            tokens[p] = r
        return tuple(tokens)


@dataclass
class Quintuple:
    """One training item: anchor, structural pair, and corruption plan.

    The content-dissimilar member is mined online per batch, so it has no
    slot here. `sem_pos` is attached when the batch is materialized.
    """

    anchor: int
    level: int
    struct_pos: int
    struct_neg: int
    sem_pos: CorruptionSpec | None = None


def sample_quintuple(pl: PartitionLevels, rng: np.random.Generator) -> Quintuple:
    """Draw (level, positive, negative) uniformly per the partition.

    The level is uniform over levels whose candidate ranges are both
    non-empty; the positive and negative are uniform over their ranges.
    """
    valid = pl.valid_levels()
    if not valid:
        raise NoStructureError(
            f"anchor {pl.anchor} has no level with non-empty candidates"
        )
    level = valid[int(rng.integers(len(valid)))]
    plo, phi = pl.pos[level - 1]
    nlo, nhi = pl.neg[level - 1]
    pos_position = int(rng.integers(plo, phi + 1))
    neg_position = int(rng.integers(nlo, nhi + 1))
    return Quintuple(
        anchor=pl.anchor,
        level=level,
        struct_pos=int(pl.order[pos_position - 1]),
        struct_neg=int(pl.order[neg_position - 1]),
    )


def corrupt(
    frag: Fragment,
    rate: float,
    mask_prob: float,
    vocab: Vocabulary,
    rng: np.random.Generator,
) -> CorruptionSpec:
    """Plan replacement of round(rate * len) distinct token positions.

    Each chosen position becomes the MASK token with probability
    `mask_prob`, otherwise a uniformly random non-reserved vocabulary id.
    """
    if not frag.tokens:
        raise ValueError("cannot corrupt an empty fragment")
    if not 0.0 <= rate <= 1.0 or not 0.0 <= mask_prob <= 1.0:
        raise ValueError("rate and mask_prob must be in [0, 1]")
    size = len(frag.tokens)
    n_replace = round(rate * size)
    if n_replace == 0:
        return CorruptionSpec(source=frag, positions=(), replacements=())
    positions = np.sort(rng.choice(size, size=n_replace, replace=False))
    n_reserved = len(vocab.reserved_ids)
    if len(vocab) <= n_reserved:
        raise ValueError("vocabulary has no non-reserved tokens to sample")
    replacements = []
    for _ in positions:
        if rng.random() < mask_prob:
            replacements.append(vocab.mask_id)
        else:
            replacements.append(int(rng.integers(n_reserved, len(vocab))))
    return CorruptionSpec(
        source=frag,
        positions=tuple(int(p) for p in positions),
        replacements=tuple(replacements),
    )
