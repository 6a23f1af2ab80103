import numpy as np
import pytest

from structembed.corpus import Fragment, Vocabulary
from structembed.intimacy import RankedNeighbors
from structembed.mining import (
    NoStructureError,
    corrupt,
    partition,
    sample_quintuple,
)


def ranked(n, total, anchor=0):
    """RankedNeighbors with positions 1..total mapping to docs 1..total."""
    return RankedNeighbors(anchor=anchor, order=np.arange(1, total + 1), n=n)


class TestPartition:
    def test_figure_instance_n6(self):
        pl = partition(ranked(6, 9))
        assert pl.levels == 3
        assert pl.pos == ((1, 6), (1, 3), (1, 1))
        assert pl.neg == ((7, 9), (4, 6), (2, 3))

    def test_single_connection(self):
        pl = partition(ranked(1, 5))
        assert pl.levels == 1
        assert pl.pos == ((1, 1),)
        assert pl.neg == ((2, 5),)

    def test_odd_n5(self):
        pl = partition(ranked(5, 12))
        assert pl.levels == 3
        assert pl.pos == ((1, 5), (1, 3), (1, 1))
        assert pl.neg == ((6, 12), (4, 5), (2, 3))

    def test_no_structure(self):
        with pytest.raises(NoStructureError):
            partition(ranked(0, 5))

    def test_terminal_singleton_and_nesting_sweep(self):
        for n in range(1, 65):
            pl = partition(ranked(n, n + 10))
            assert pl.pos[-1] == (1, 1)
            assert pl.levels == int(np.floor(np.log2(n))) + 1
            for l in range(pl.levels - 1):
                lo1, hi1 = pl.pos[l]
                lo2, hi2 = pl.pos[l + 1]
                assert lo1 == lo2 == 1
                assert hi2 <= hi1  # nesting

    def test_level_pos_neg_disjoint(self):
        for n in range(1, 65):
            pl = partition(ranked(n, n + 20))
            for l in range(pl.levels):
                plo, phi = pl.pos[l]
                nlo, nhi = pl.neg[l]
                if nlo <= nhi:
                    assert nlo > phi or nhi < plo

    def test_negative_tiling_covers_2_to_n(self):
        for n in range(2, 65):
            pl = partition(ranked(n, n + 20))
            covered = set()
            for l in range(1, pl.levels):
                lo, hi = pl.neg[l]
                rng_set = set(range(lo, hi + 1))
                assert not covered & rng_set  # pairwise disjoint
                covered |= rng_set
            assert covered == set(range(2, n + 1))

    def test_fully_connected_anchor_level1_negatives_empty(self):
        pl = partition(ranked(6, 6))
        assert pl.neg[0] == (7, 6)  # empty
        assert 1 not in pl.valid_levels()
        assert pl.valid_levels() == [2, 3]


class TestSampleQuintuple:
    def test_level_frequencies_uniform(self):
        pl = partition(ranked(6, 9))
        rng = np.random.default_rng(7)
        n_draws = 10_000
        counts = np.zeros(4)
        for _ in range(n_draws):
            counts[sample_quintuple(pl, rng).level] += 1
        sigma = np.sqrt((1 / 3) * (2 / 3) / n_draws)
        for level in (1, 2, 3):
            assert abs(counts[level] / n_draws - 1 / 3) < 3 * sigma

    def test_terminal_level_positive_is_strongest(self):
        pl = partition(ranked(6, 9))
        rng = np.random.default_rng(0)
        for _ in range(200):
            q = sample_quintuple(pl, rng)
            if q.level == 3:
                assert q.struct_pos == pl.order[0]
                assert q.struct_neg in (pl.order[1], pl.order[2])

    def test_singleton_supports_deterministic(self):
        pl = partition(ranked(1, 2))  # pos {1..1}, neg {2..2}
        rng = np.random.default_rng(3)
        q = sample_quintuple(pl, rng)
        assert q.level == 1
        assert q.struct_pos == pl.order[0]
        assert q.struct_neg == pl.order[1]

    def test_members_in_declared_ranges(self):
        pl = partition(ranked(11, 30))
        rng = np.random.default_rng(5)
        for _ in range(500):
            q = sample_quintuple(pl, rng)
            plo, phi = pl.pos[q.level - 1]
            nlo, nhi = pl.neg[q.level - 1]
            pos_positions = set(pl.order[plo - 1 : phi])
            neg_positions = set(pl.order[nlo - 1 : nhi])
            assert q.struct_pos in pos_positions
            assert q.struct_neg in neg_positions
            assert q.struct_pos != q.struct_neg
            assert q.anchor not in (q.struct_pos, q.struct_neg)

    def test_support_coverage(self):
        # every candidate in every level range is eventually drawn
        pl = partition(ranked(6, 9))
        rng = np.random.default_rng(11)
        seen_pos = {l: set() for l in (1, 2, 3)}
        seen_neg = {l: set() for l in (1, 2, 3)}
        for _ in range(3000):
            q = sample_quintuple(pl, rng)
            seen_pos[q.level].add(q.struct_pos)
            seen_neg[q.level].add(q.struct_neg)
        for l in (1, 2, 3):
            plo, phi = pl.pos[l - 1]
            nlo, nhi = pl.neg[l - 1]
            assert seen_pos[l] == set(int(x) for x in pl.order[plo - 1 : phi])
            assert seen_neg[l] == set(int(x) for x in pl.order[nlo - 1 : nhi])

    def test_connected_negative_bias(self):
        # among valid levels, P(level >= 2) = (L-1)/L; levels >= 2 draw
        # negatives from the connected block
        pl = partition(ranked(6, 9))
        rng = np.random.default_rng(13)
        n_draws = 30_000
        deep = sum(sample_quintuple(pl, rng).level >= 2 for _ in range(n_draws))
        expected = (pl.levels - 1) / pl.levels
        sigma = np.sqrt(expected * (1 - expected) / n_draws)
        assert abs(deep / n_draws - expected) < 4 * sigma

    def test_error_when_no_negatives_anywhere(self):
        rn = ranked(1, 1)  # single neighbor, connected: no negatives exist
        pl = partition(rn)
        with pytest.raises(NoStructureError):
            sample_quintuple(pl, np.random.default_rng(0))


class TestCorrupt:
    @pytest.fixture
    def vocab(self):
        return Vocabulary([f"w{i}" for i in range(50)])

    def test_quarter_of_128(self, vocab, rng):
        frag = Fragment(tokens=tuple(range(2, 130)), position=1)
        spec = corrupt(frag, 0.25, 0.5, vocab, rng)
        assert len(spec.positions) == 32
        assert len(set(spec.positions)) == 32

    def test_rate_zero_identity(self, vocab, rng):
        frag = Fragment(tokens=(2, 3, 4), position=1)
        spec = corrupt(frag, 0.0, 0.5, vocab, rng)
        assert spec.apply() == frag.tokens

    def test_tiny_fragment_rounding(self, vocab, rng):
        frag = Fragment(tokens=(2, 3, 4, 5), position=1)
        spec = corrupt(frag, 0.25, 0.5, vocab, rng)
        assert len(spec.positions) == 1

    def test_length_preserved_and_ids_in_vocab(self, vocab, rng):
        frag = Fragment(tokens=tuple(rng.integers(2, 52, size=64)), position=1)
        spec = corrupt(frag, 0.25, 0.5, vocab, rng)
        out = spec.apply()
        assert len(out) == 64
        assert all(0 <= t < len(vocab) for t in out)
        # replacements are MASK or non-reserved, never UNK
        assert all(r == vocab.mask_id or r >= 2 for r in spec.replacements)

    def test_mask_prob_extremes(self, vocab):
        frag = Fragment(tokens=tuple(range(2, 42)), position=1)
        rng = np.random.default_rng(5)
        all_mask = corrupt(frag, 0.5, 1.0, vocab, rng)
        assert all(r == vocab.mask_id for r in all_mask.replacements)
        none_mask = corrupt(frag, 0.5, 0.0, vocab, rng)
        assert all(r != vocab.mask_id for r in none_mask.replacements)

    def test_untouched_positions_identical(self, vocab, rng):
        frag = Fragment(tokens=tuple(range(2, 34)), position=1)
        spec = corrupt(frag, 0.25, 0.5, vocab, rng)
        out = spec.apply()
        touched = set(spec.positions)
        for p, (orig, new) in enumerate(zip(frag.tokens, out)):
            if p not in touched:
                assert orig == new
