from pathlib import Path

import numpy as np
import pytest

from tokentiming.align import AxisSpan, parse_textgrid, parse_word_alignment
from tokentiming.crossval import (
    ContractError,
    CorpusStats,
    FilterConfig,
    FilterVerdict,
    UtterancePair,
    check_boundary_distance,
    check_coverage,
    check_order_consistency,
    comparable_blocks,
    corpus_stats,
    filter_alignments,
    filter_utterance,
    format_verdict,
)

FIXTURES = Path(__file__).parent / "fixtures" / "crossval"


def spans(*ranges, t=None):
    """AxisSpans over char ranges; times default to 0.1 s per char."""
    out = []
    for k, (a, b) in enumerate(ranges):
        s, e = (a * 0.1, b * 0.1) if t is None else t[k]
        out.append(AxisSpan(a, b, s, e))
    return tuple(out)


def pair(a, b, n=10):
    return UtterancePair("u", "x" * n, a, b)


class TestCoverage:
    def test_identical(self):
        s = spans((0, 5), (5, 10))
        assert check_coverage(pair(s, s))

    def test_missing_last_word(self):
        assert not check_coverage(pair(spans((0, 5), (5, 10)), spans((0, 5))))

    def test_grouping_ignored(self):
        assert check_coverage(pair(spans((0, 4)), spans((0, 2), (2, 4)), 4))


class TestOrder:
    def test_nested(self):
        assert check_order_consistency(pair(spans((0, 5), (5, 10)), spans((0, 10))))

    def test_crossing(self):
        assert not check_order_consistency(pair(spans((0, 6), (6, 10)), spans((0, 4), (4, 10))))

    def test_identical(self):
        s = spans((0, 3), (3, 10))
        assert check_order_consistency(pair(s, s))

    def test_symmetric(self):
        a, b = spans((0, 6), (6, 10)), spans((0, 4), (4, 10))
        assert check_order_consistency(pair(a, b)) == check_order_consistency(pair(b, a))


class TestBoundary:
    def test_identical(self):
        s = spans((0, 10))
        assert check_boundary_distance(pair(s, s)) == (True, 0.0)

    def test_start_151(self):
        a = spans((0, 10), t=[(0.100, 0.500)])
        b = spans((0, 10), t=[(0.251, 0.500)])
        assert check_boundary_distance(pair(a, b), FilterConfig(150)) == (False, 151.0)

    def test_duration_term(self):
        a = spans((0, 10), t=[(0.100, 0.500)])
        b = spans((0, 10), t=[(0.200, 0.540)])
        ok, worst = check_boundary_distance(pair(a, b))
        assert ok and worst == 100.0

    def test_duration_dominates(self):
        a = spans((0, 10), t=[(0.100, 0.500)])
        b = spans((0, 10), t=[(0.000, 0.600)])
        assert check_boundary_distance(pair(a, b))[1] == 200.0

    def test_grouped_blocks(self):
        a = spans((0, 5), (5, 10), t=[(0.0, 0.4), (0.5, 0.9)])
        b = spans((0, 10), t=[(0.05, 0.95)])
        assert comparable_blocks(pair(a, b)) == [((0.0, 0.9), (0.05, 0.95))]

    def test_crossing_is_contract_error(self):
        with pytest.raises(ContractError):
            check_boundary_distance(pair(spans((0, 6), (6, 10)), spans((0, 4), (4, 10))))

    def test_symmetric(self):
        a = spans((0, 5), (5, 10), t=[(0.0, 0.4), (0.5, 0.9)])
        b = spans((0, 10), t=[(0.07, 1.03)])
        assert check_boundary_distance(pair(a, b)) == check_boundary_distance(pair(b, a))


class TestFilter:
    def test_all_pass(self):
        s = spans((0, 10))
        assert filter_utterance(pair(s, s)) == FilterVerdict(True, "none", 0.0)

    def test_coverage_short_circuits(self):
        a = spans((0, 5), (5, 10), t=[(0, 0.4), (0.5, 0.9)])
        b = spans((0, 5), t=[(0.9, 1.3)])
        assert filter_utterance(pair(a, b)).failed_check == "coverage"

    def test_boundary_worst_reported(self):
        a = spans((0, 10), t=[(0.1, 0.5)])
        b = spans((0, 10), t=[(0.3, 0.7)])
        assert filter_utterance(pair(a, b)) == FilterVerdict(False, "boundary", 200.0)

    def test_verdict_invariant(self):
        with pytest.raises(ValueError):
            FilterVerdict(True, "boundary")
        with pytest.raises(ValueError):
            FilterVerdict(False, "none")

    def test_config_positive(self):
        with pytest.raises(ValueError):
            FilterConfig(0)


def random_pair(rng):
    """Two alignments of one utterance: A splits the axis at random, B merges
    some of A's cuts (or adds a crossing one) and jitters the times."""
    n = int(rng.integers(2, 12))
    inner = list(range(1, n))
    cuts = sorted(rng.choice(inner, size=int(rng.integers(0, n)), replace=False).tolist()) if inner else []
    t = np.cumsum(rng.uniform(0.05, 0.4, size=n + 1))
    a_bounds = [0, *cuts, n]
    b_cuts = [c for c in cuts if rng.random() < 0.6]
    if inner and rng.random() < 0.1:
        b_cuts = sorted(set(b_cuts) | {int(rng.choice(inner))})
    b_bounds = [0, *b_cuts, n]
    if rng.random() < 0.1 and len(b_bounds) > 2:
        b_bounds = b_bounds[:-1]  # B misses the tail
    jit = rng.normal(0, 0.1, size=n + 1)

    def seq(bounds, jitter):
        out = []
        for x, y in zip(bounds, bounds[1:]):
            s = max(0.0, float(t[x] + jitter[x]))
            out.append(AxisSpan(x, y, s, max(s, float(t[y] + jitter[y]))))
        return tuple(out)

    return UtterancePair("u", "x" * n, seq(a_bounds, np.zeros(n + 1)), seq(b_bounds, jit))


def test_identical_pair_passes_any_delta():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = random_pair(rng)
        q = UtterancePair("u", p.normalized_text, p.spans_a, p.spans_a)
        for delta in (1e-6, 1.0, 150.0):
            assert filter_utterance(q, FilterConfig(delta)).passed


def test_delta_monotone_randomized():
    rng = np.random.default_rng(1)
    deltas = [10.0, 50.0, 100.0, 150.0, 200.0, 400.0]
    for _ in range(1000):
        p = random_pair(rng)
        passed = [filter_utterance(p, FilterConfig(d)).passed for d in deltas]
        assert passed == sorted(passed)


def test_swapped_pair_same_verdict():
    rng = np.random.default_rng(2)
    for _ in range(300):
        p = random_pair(rng)
        assert filter_utterance(p) == filter_utterance(p.swapped())


class TestStats:
    def test_empty(self):
        assert corpus_stats([]) == CorpusStats(0, 0, 0)
        assert corpus_stats([]).pass_rate == 0.0

    def test_three_of_four(self):
        vs = [FilterVerdict(True)] * 3 + [FilterVerdict(False, "order")]
        assert corpus_stats(vs).pass_rate == 0.75

    def test_unavailable_not_comparable(self):
        s = corpus_stats([None, FilterVerdict(True)])
        assert (s.total, s.comparable, s.passed) == (2, 1, 1)

    def test_additive(self):
        a = corpus_stats([FilterVerdict(True), None])
        b = corpus_stats([FilterVerdict(False, "boundary", 170.0)])
        assert a + b == corpus_stats([FilterVerdict(True), None, FilterVerdict(False, "boundary", 170.0)])


def _fixture_verdicts():
    out = []
    for line in (FIXTURES / "manifest.tsv").read_text().splitlines():
        uid, fa, fb = line.split("\t")
        a = parse_word_alignment((FIXTURES / fa).read_bytes())
        b = parse_textgrid((FIXTURES / fb).read_bytes(), utterance_id=uid)
        out.append(format_verdict(uid, filter_alignments(a, b, a.text)))
    return out


def test_fixture_suite_matches_expectations():
    expected = [ln for ln in (FIXTURES / "expected.tsv").read_text().splitlines() if not ln.startswith("#")]
    assert _fixture_verdicts() == expected


def test_fixture_suite_covers_every_check():
    lines = [ln.split("\t") for ln in (FIXTURES / "expected.tsv").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 12
    prefixes = {"cov": 0, "ord": 0, "bnd": 0}
    for uid, *_ in lines:
        for p in prefixes:
            prefixes[p] += uid.startswith(p)
    assert all(v >= 3 for v in prefixes.values())
