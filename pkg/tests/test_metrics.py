import math

import numpy as np
import pytest

import reference_metrics as ref
from tokentiming.metrics import (
    EditCase,
    EmptyScoredSet,
    EvalReport,
    TimingComparison,
    baseline_bias,
    content_mae,
    inside_word,
    neighbor_drift,
    pause_f1,
    pause_mae,
    pearson,
    span_ratio,
    strict_filter,
    timing_corr,
    timing_report_row,
    word_intervals,
)
from tokentiming.track import FrameRate, TimingTrack

MS = FrameRate(1000.0)  # one frame per millisecond keeps expected values exact


def tr(d, p, tokens=None, rate=MS):
    tokens = list(range(len(d))) if tokens is None else tokens
    return TimingTrack.from_arrays(tokens, d, p, frame_rate=rate)


def cmp(td, rd, tp=None, rp=None, ok=True, uid="u"):
    tp = [0.0] * len(td) if tp is None else tp
    rp = [0.0] * len(td) if rp is None else rp
    return TimingComparison(uid, td, rd if ok else (), tp, rp if ok else (), ok)


class TestMAE:
    def test_zero(self):
        assert content_mae([cmp([10, 20], [10, 20])]) == 0.0

    def test_example(self):
        assert content_mae([cmp([10, 20, 30], [12, 18, 33])]) == pytest.approx(7 / 3, abs=1e-12)

    def test_pooled_over_tokens(self):
        cs = [cmp([10], [20]), cmp([10, 10, 10], [10, 10, 10])]
        assert content_mae(cs) == 2.5

    def test_failures_excluded(self):
        cs = [cmp([10], [12]), cmp([10], [], ok=False)]
        assert content_mae(cs) == 2.0

    def test_empty(self):
        with pytest.raises(EmptyScoredSet):
            content_mae([])
        with pytest.raises(EmptyScoredSet):
            pause_mae([cmp([1], [], ok=False)])

    def test_pause(self):
        assert pause_mae([cmp([1, 1], [1, 1], [0, 100], [10, 70])]) == 20.0

    def test_from_tracks_in_ms(self):
        c = TimingComparison.from_tracks("u", tr([10, 20], [0, 5]), tr([12, 20], [3, 5]))
        assert c.target_d == (10.0, 20.0) and c.realized_p == (3.0, 5.0)

    def test_from_tracks_scored_slice(self):
        c = TimingComparison.from_tracks("u", tr([10, 20, 30], [0, 5, 0]), tr([1, 2, 3], [0, 0, 0]), slice(1, None))
        assert c.target_d == (20.0, 30.0)

    def test_from_tracks_failure(self):
        c = TimingComparison.from_tracks("u", tr([10], [0]), None)
        assert not c.alignment_ok

    def test_from_tracks_token_mismatch(self):
        with pytest.raises(ValueError):
            TimingComparison.from_tracks("u", tr([1], [0], [3]), tr([1], [0], [4]))

    def test_length_validation(self):
        with pytest.raises(ValueError):
            TimingComparison("u", (1, 2), (1,), (0, 0), (0, 0))


class TestCorrelation:
    def test_identity(self):
        assert pearson([1, 2, 5], [1, 2, 5]).r == pytest.approx(1.0)

    def test_antisymmetric(self):
        assert pearson([1, 2, 5], [9, 8, 5]).r == pytest.approx(-1.0)

    def test_example(self):
        r = pearson([1, 2, 3], [1, 2, 4]).r
        assert r == pytest.approx(0.9820, abs=5e-5)
        assert r == pytest.approx(ref.pearson([1, 2, 3], [1, 2, 4]), abs=1e-12)

    def test_zero_variance_flagged(self):
        c = pearson([3, 3, 3], [1, 2, 3])
        assert not c.defined and math.isnan(c.r)

    def test_too_few(self):
        assert not pearson([1], [1]).defined

    def test_split_content_pause(self):
        c, p = timing_corr([cmp([1, 2, 3], [1, 2, 3], [0, 0, 0], [1, 1, 1])])
        assert c.r == pytest.approx(1.0) and not p.defined


class TestF1:
    def test_perfect(self):
        assert pause_f1([cmp([1, 1], [1, 1], [0, 200], [0, 200])], 50).f1 == 1.0

    def test_example(self):
        res = pause_f1([cmp([1, 1, 1], [1, 1, 1], [80, 0, 0], [80, 90, 0])], 50)
        assert (res.precision, res.recall) == (0.5, 1.0)
        assert res.f1 == pytest.approx(2 / 3)

    def test_degenerate(self):
        res = pause_f1([cmp([1, 1], [1, 1], [10, 0], [20, 0])], 50)
        assert res.f1 == 1.0 and res.degenerate

    def test_strict_threshold(self):
        res = pause_f1([cmp([1], [1], [50], [51])], 50)
        assert (res.tp, res.fp, res.fn) == (0, 1, 0)

    def test_order_invariant(self):
        rng = np.random.default_rng(0)
        cs = [random_cmp(rng, k) for k in range(30)]
        a = pause_f1(cs, 50)
        for _ in range(5):
            perm = [cs[i] for i in rng.permutation(len(cs))]
            assert pause_f1(perm, 50) == a
            assert content_mae(perm) == pytest.approx(content_mae(cs), abs=1e-12)


def random_cmp(rng, k):
    n = int(rng.integers(1, 8))
    td = rng.integers(40, 300, n).astype(float)
    tp = np.where(rng.random(n) < 0.4, rng.integers(0, 400, n), 0).astype(float)
    ok = rng.random() > 0.1
    rd = np.maximum(0, td + rng.normal(0, 30, n).round())
    rp = np.maximum(0, tp + rng.normal(0, 40, n).round()) * (rng.random(n) > 0.1)
    return cmp(td, rd, tp, rp, ok, uid=f"u{k}")


def test_against_reference_randomized():
    rng = np.random.default_rng(42)
    checks = 0
    for trial in range(2500):
        cs = [random_cmp(rng, k) for k in range(int(rng.integers(1, 6)))]
        if not any(c.alignment_ok for c in cs):
            continue
        assert abs(content_mae(cs) - ref.mae(cs, "d")) <= 1e-9
        assert abs(pause_mae(cs) - ref.mae(cs, "p")) <= 1e-9
        for tau in (50.0, 100.0):
            assert abs(pause_f1(cs, tau).f1 - ref.f1(cs, tau)) <= 1e-9
        for got, which in zip(timing_corr(cs), "dp"):
            want = ref.pearson(*ref._pool(cs, which)) if len(ref._pool(cs, which)[0]) > 1 else None
            assert got.defined == (want is not None)
            if want is not None:
                assert abs(got.r - want) <= 1e-9
        checks += 6
    assert checks >= 10_000


# --- edits ------------------------------------------------------------------------

def case(kind, span, value, base, edit, rbase, redit, case_id="c"):
    c = EditCase(case_id, kind, span, value, base, edit)
    return c.with_realizations(rbase, redit)


class TestBias:
    def test_example(self):
        base = tr([100, 100, 100], [0, 200, 0])
        edit = tr([100, 100, 100], [0, 260, 0])
        cs = [case("pause_set", (1, 2), 260, base, edit, base, tr([100, 100, 100], [0, v, 0]), f"c{v}")
              for v in (240, 250)]
        row = baseline_bias(cs)["pause"]
        assert (row.edit_mean, row.abs_bias, row.n) == (245.0, 15.0, 2)
        assert row.progress == pytest.approx(45 / 60)

    def test_exact(self):
        base, edit = tr([100, 100], [0, 0]), tr([150, 100], [0, 0])
        row = baseline_bias([case("content_set", (0, 1), 150, base, edit, base, edit)])["content"]
        assert row.abs_bias == 0.0 and row.progress == 1.0

    def test_groups(self):
        base = tr([100, 100], [50, 0])
        cs = [case("pause_set", (0, 1), 80, base, tr([100, 100], [80, 0]), base, base, "a"),
              case("content_scale", (0, 2), 2.0, base, tr([200, 200], [50, 0]), base, base, "b")]
        assert set(baseline_bias(cs)) == {"content", "pause"}
        assert baseline_bias(cs)["content"].n == 2

    def test_unrealized_skipped(self):
        base = tr([100], [0])
        with pytest.raises(EmptyScoredSet):
            baseline_bias([EditCase("c", "content_set", (0, 1), 100, base, base)])

    def test_case_validation(self):
        base = tr([100, 100], [0, 0])
        with pytest.raises(ValueError):
            EditCase("c", "pause_set", (0, 2), 10, base, base)
        with pytest.raises(ValueError):
            EditCase("c", "content_scale", (0, 1), 0.0, base, base)
        with pytest.raises(ValueError):
            EditCase("c", "content_set", (1, 3), 10, base, base)
        with pytest.raises(ValueError):
            EditCase("c", "stretch", (0, 1), 10, base, base)


class TestStrictFilter:
    def test_word_intervals(self):
        assert word_intervals(tr([100, 50, 80], [0, 40, 0])) == [(0.0, 150.0), (190.0, 270.0)]

    def test_edge_retained(self):
        assert not inside_word(100.0, [(100.0, 300.0)])

    def test_interior_rejected(self):
        assert inside_word(130.0, [(100.0, 300.0)])

    def test_pause_edit_in_gap_retained(self):
        r = tr([100, 100, 100], [0, 60, 0])
        c = case("pause_set", (1, 2), 60, r, r, r, r)
        assert strict_filter(c)

    def test_pause_edit_inside_word_rejected(self):
        r = tr([100, 100, 100], [0, 0, 0])
        c = case("pause_set", (0, 1), 60, r, r, r, r)
        assert not strict_filter(c)

    def test_boundary_30ms_into_word_rejected(self):
        base = tr([100, 100, 100], [0, 0, 0])
        c = case("content_set", (1, 2), 100, base, base, base, base)
        # edit boundaries realize at 100 and 200 ms
        assert strict_filter(c, [(0.0, 100.0), (100.0, 200.0), (200.0, 300.0)])
        assert not strict_filter(c, [(0.0, 100.0), (170.0, 300.0)])
        assert not strict_filter(c, [(0.0, 300.0)])

    def test_unrealized(self):
        base = tr([100], [0])
        assert not strict_filter(EditCase("c", "content_set", (0, 1), 100, base, base))

    def test_tolerance_monotone_and_reference(self):
        rng = np.random.default_rng(5)
        for k in range(1000):
            n = int(rng.integers(2, 7))
            d = rng.integers(0, 150, n)
            p = np.where(rng.random(n) < 0.4, rng.integers(1, 100, n), 0)
            r = tr(d, p)
            a = int(rng.integers(0, n))
            if rng.random() < 0.5:
                c = case("pause_set", (a, a + 1), 50, r, r, r, r)
            else:
                c = case("content_set", (a, int(rng.integers(a + 1, n + 1))), 50, r, r, r, r)
            kept = [strict_filter(c, tolerance_ms=tol) for tol in (40.0, 20.0, 5.0, 0.0)]
            assert kept == sorted(kept, reverse=True)
            assert kept[-1] == ref.strict_keep(c, 0.0)
            assert word_intervals(r) == pytest.approx(ref.words(r))


class TestSpanRatio:
    def test_example(self):
        base = tr([200, 200, 100], [0, 0, 0])
        redit = tr([360, 360, 100], [0, 0, 0])
        c = case("content_scale", (0, 2), 2.0, base, tr([400, 400, 100], [0, 0, 0]), base, redit)
        s = span_ratio(c)
        assert (s.baseline_ms, s.edited_ms) == (400.0, 720.0)
        assert s.realized_factor == pytest.approx(1.8) and s.error_ms == pytest.approx(80.0)

    def test_identity(self):
        base = tr([100, 100, 100, 100], [0, 30, 0, 0])
        c = case("content_scale", (1, 3), 1.0, base, base, base, base)
        s = span_ratio(c)
        assert (s.realized_factor, s.error_ms, s.neighbor_drift_ms) == (1.0, 0.0, 0.0)
        assert s.baseline_ms == 230.0  # internal pause counted

    def test_empty_baseline(self):
        base = tr([100, 100], [0, 0])
        zero = tr([0, 100], [0, 0])
        with pytest.raises(ValueError):
            span_ratio(case("content_scale", (0, 1), 2.0, base, base, zero, base))

    def test_drift_neighbours(self):
        base = tr([100, 100, 100, 100], [0, 0, 0, 0])
        redit = tr([110, 180, 100, 70], [0, 0, 0, 0])
        c = case("content_scale", (1, 3), 2.0, base, base, base, redit)
        assert neighbor_drift(c) == 20.0  # tokens 0 and 3

    def test_drift_pause_edit(self):
        base = tr([100, 100, 100], [0, 0, 0])
        redit = tr([100, 90, 130], [0, 50, 0])
        c = case("pause_set", (1, 2), 50, base, base, base, redit)
        assert neighbor_drift(c) == 20.0  # tokens 1 and 2

    def test_drift_at_edge(self):
        base = tr([100, 100], [0, 0])
        c = case("content_scale", (0, 1), 2.0, base, base, base, tr([200, 120], [0, 0]))
        assert neighbor_drift(c) == 20.0

    def test_against_reference(self):
        rng = np.random.default_rng(9)
        for k in range(2000):
            n = int(rng.integers(2, 8))
            d = rng.integers(1, 40, n)
            p = np.where(rng.random(n) < 0.3, rng.integers(1, 30, n), 0)
            rate = FrameRate(93.75)
            base = tr(d, p, rate=rate)
            rb = tr(np.maximum(1, d + rng.integers(-3, 4, n)), p, rate=rate)
            re = tr(np.maximum(1, d + rng.integers(-3, 8, n)), p + rng.integers(0, 5, n), rate=rate)
            a = int(rng.integers(0, n - 1))
            b = int(rng.integers(a + 1, n + 1))
            c = case("content_scale", (a, b), 2.0, base, base, rb, re)
            s = span_ratio(c)
            want_b, want_e = ref.span(rb, a, b), ref.span(re, a, b)
            assert abs(s.baseline_ms - want_b) <= 1e-9 and abs(s.edited_ms - want_e) <= 1e-9
            assert abs(s.error_ms - abs(want_e - 2.0 * want_b)) <= 1e-9
            assert abs(s.neighbor_drift_ms - ref.drift(c)) <= 1e-9 if ref.drift(c) is not None else math.isnan(
                s.neighbor_drift_ms)
            rows, nref = ref.bias([c], "content")
            row = baseline_bias([c])["content"]
            assert row.n == nref
            got = [row.base_target, row.base_mean, row.edit_target, row.edit_mean]
            assert all(abs(x - y) <= 1e-9 for x, y in zip(got, rows))


class TestReport:
    def test_records_stable(self):
        rep = EvalReport("t", ["system", "v"], header={"pooling": "tokens"})
        rep.add(system="a", v=1 / 3)
        rep.add(system="b", v=math.nan)
        assert rep.records() == "#report=t\n#pooling=tokens\nsystem=a\tv=0.333333\nsystem=b\tv=nan\n"

    def test_missing_column(self):
        with pytest.raises(ValueError):
            EvalReport("t", ["a"]).add(b=1)

    def test_table(self):
        rep = EvalReport("t", ["system", "v"])
        rep.add(system="a", v=2.0)
        assert "2.000" in rep.table()

    def test_row_with_no_alignments(self):
        row = timing_report_row("s", [cmp([1], [], ok=False)], [50])
        assert row["failed"] == 1 and math.isnan(row["c_mae"]) and math.isnan(row["f1@50"])
