"""Timing-following metrics and edit statistics.

All aggregates pool scored tokens across utterances; an utterance whose
realization could not be aligned contributes nothing but is counted.
Durations are in milliseconds throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .track import TimingTrack, frames_to_ms

EDIT_KINDS = ("pause_set", "content_scale", "content_set")


class EmptyScoredSet(ValueError):
    """No aligned token is available to score."""


@dataclass(frozen=True)
class TimingComparison:
    """Target and realized timing for the scored tokens of one utterance.

    When ``alignment_ok`` is False the realized tuples are ignored.
    """

    utterance_id: str
    target_d: tuple[float, ...]
    realized_d: tuple[float, ...]
    target_p: tuple[float, ...]
    realized_p: tuple[float, ...]
    alignment_ok: bool = True

    def __post_init__(self):
        for name in ("target_d", "realized_d", "target_p", "realized_p"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if len(self.target_d) != len(self.target_p):
            raise ValueError("target content and pause lengths differ")
        if self.alignment_ok and not (
            len(self.target_d) == len(self.realized_d) == len(self.realized_p)
        ):
            raise ValueError("realized timing does not match the scored tokens")

    @classmethod
    def from_tracks(cls, utterance_id: str, target: TimingTrack, realized: TimingTrack | None,
                    scored: slice | Sequence[int] | None = None) -> "TimingComparison":
        """Compare two tracks over ``scored`` token positions (all by default).

        ``realized=None`` records an alignment failure.
        """
        idx = np.arange(len(target))
        idx = idx if scored is None else idx[scored]
        rate = target.frame_rate
        td = frames_to_ms(target.content[idx], rate)
        tp = frames_to_ms(target.pause[idx], rate)
        if realized is None:
            return cls(utterance_id, tuple(td), (), tuple(tp), (), alignment_ok=False)
        if realized.tokens != target.tokens:
            raise ValueError("realized track is for a different token sequence")
        rd = frames_to_ms(realized.content[idx], realized.frame_rate)
        rp = frames_to_ms(realized.pause[idx], realized.frame_rate)
        return cls(utterance_id, tuple(td), tuple(rd), tuple(tp), tuple(rp))


def _pooled(cmps: Iterable[TimingComparison], which: str) -> tuple[np.ndarray, np.ndarray]:
    tgt, real = [], []
    for c in cmps:
        if c.alignment_ok:
            tgt.extend(getattr(c, f"target_{which}"))
            real.extend(getattr(c, f"realized_{which}"))
    return np.asarray(tgt, dtype=np.float64), np.asarray(real, dtype=np.float64)


def _mae(cmps, which: str) -> float:
    tgt, real = _pooled(cmps, which)
    if tgt.size == 0:
        raise EmptyScoredSet("no aligned tokens to score")
    return float(np.mean(np.abs(tgt - real)))


def content_mae(cmps: Iterable[TimingComparison]) -> float:
    return _mae(cmps, "d")


def pause_mae(cmps: Iterable[TimingComparison]) -> float:
    return _mae(cmps, "p")


@dataclass(frozen=True)
class Correlation:
    """Pearson ``r``; ``defined`` is False (and ``r`` NaN) when either side has no variance."""

    r: float
    n: int
    defined: bool


def pearson(x: Sequence[float], y: Sequence[float]) -> Correlation:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("pearson needs equal-length inputs")
    n = int(x.size)
    if n < 2:
        return Correlation(math.nan, n, False)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return Correlation(math.nan, n, False)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return Correlation(max(-1.0, min(1.0, r)), n, True)


def timing_corr(cmps: Iterable[TimingComparison]) -> tuple[Correlation, Correlation]:
    """Pooled (content, pause) correlations between target and realized."""
    cmps = list(cmps)
    return pearson(*_pooled(cmps, "d")), pearson(*_pooled(cmps, "p"))


@dataclass(frozen=True)
class F1Result:
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    degenerate: bool = False


def pause_f1(cmps: Iterable[TimingComparison], threshold_ms: float) -> F1Result:
    """Pause detection F1; a boundary is a pause when its duration exceeds ``threshold_ms``.

    With neither reference nor predicted pauses the score is 1 and
    ``degenerate`` is set.  Undefined precision or recall is NaN.
    """
    tgt, real = _pooled(cmps, "p")
    ref = tgt > threshold_ms
    pred = real > threshold_ms
    tp = int(np.sum(ref & pred))
    fp = int(np.sum(~ref & pred))
    fn = int(np.sum(ref & ~pred))
    if tp + fp + fn == 0:
        return F1Result(1.0, math.nan, math.nan, 0, 0, 0, degenerate=True)
    precision = tp / (tp + fp) if tp + fp else math.nan
    recall = tp / (tp + fn) if tp + fn else math.nan
    return F1Result(2 * tp / (2 * tp + fp + fn), precision, recall, tp, fp, fn)


# --- edits ------------------------------------------------------------------------

@dataclass(frozen=True)
class EditCase:
    """One local edit and, once synthesized, both realizations.

    ``span`` is a half-open token range.  For ``pause_set`` it holds the
    single token whose trailing pause is edited.  ``value`` is a target in
    ms for the ``*_set`` kinds and a factor for ``content_scale``.
    """

    case_id: str
    kind: str
    span: tuple[int, int]
    value: float
    baseline: TimingTrack
    edited: TimingTrack
    realized_baseline: TimingTrack | None = None
    realized_edited: TimingTrack | None = None
    excluded: bool = False
    tags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ValueError(f"unknown edit kind {self.kind!r}")
        a, b = self.span
        if not 0 <= a < b <= len(self.baseline):
            raise ValueError(f"span {self.span} out of range for {len(self.baseline)} tokens")
        if self.kind == "pause_set" and b - a != 1:
            raise ValueError("a pause edit targets exactly one boundary")
        if self.kind == "content_scale" and not self.value > 0:
            raise ValueError("scale factor must be positive")
        if self.kind != "content_scale" and not self.value >= 0:
            raise ValueError("target duration must be non-negative")
        if self.edited.tokens != self.baseline.tokens:
            raise ValueError("edited track changes the token sequence")

    @property
    def positions(self) -> range:
        return range(*self.span)

    @property
    def is_pause(self) -> bool:
        return self.kind == "pause_set"

    @property
    def realized(self) -> bool:
        return self.realized_baseline is not None and self.realized_edited is not None

    def with_realizations(self, baseline: TimingTrack | None, edited: TimingTrack | None) -> "EditCase":
        return EditCase(self.case_id, self.kind, self.span, self.value, self.baseline, self.edited,
                        baseline, edited, self.excluded, dict(self.tags))

    def values_ms(self, track: TimingTrack) -> np.ndarray:
        """Edited quantity of ``track`` at the edited positions."""
        arr = track.pause if self.is_pause else track.content
        return frames_to_ms(arr[self.span[0]:self.span[1]], track.frame_rate)


@dataclass(frozen=True)
class BiasRow:
    kind: str
    n: int
    base_target: float
    base_mean: float
    edit_target: float
    edit_mean: float

    @property
    def abs_bias(self) -> float:
        return abs(self.edit_mean - self.edit_target)

    @property
    def progress(self) -> float:
        """Fraction of the way from the realized baseline to the edit target."""
        gap = self.edit_target - self.base_mean
        return (self.edit_mean - self.base_mean) / gap if gap else math.nan


def _bias_group(kind: str) -> str:
    return "pause" if kind == "pause_set" else "content"


def baseline_bias(cases: Iterable[EditCase]) -> dict[str, BiasRow]:
    """Mean targets and realizations over edited positions, grouped into content and pause."""
    groups: dict[str, list[list[float]]] = {}
    for case in cases:
        if not case.realized:
            continue
        g = groups.setdefault(_bias_group(case.kind), [[], [], [], []])
        g[0].extend(case.values_ms(case.baseline))
        g[1].extend(case.values_ms(case.realized_baseline))
        g[2].extend(case.values_ms(case.edited))
        g[3].extend(case.values_ms(case.realized_edited))
    if not groups:
        raise EmptyScoredSet("no realized edit cases")
    return {
        kind: BiasRow(kind, len(g[0]), *(float(np.mean(v)) for v in g))
        for kind, g in sorted(groups.items())
    }


def word_intervals(track: TimingTrack) -> list[tuple[float, float]]:
    """Maximal runs of adjacent content with no pause between them, in ms.

    These play the role of word spans when judging where an edit boundary
    falls in a realized utterance.
    """
    rate = track.frame_rate
    out: list[tuple[float, float]] = []
    pos = 0
    for t in track.timings:
        start, end = pos, pos + t.content_frames
        if t.content_frames:
            if out and out[-1][1] == start:
                out[-1] = (out[-1][0], end)
            else:
                out.append((start, end))
        pos = end + t.pause_frames
    return [(frames_to_ms(a, rate), frames_to_ms(b, rate)) for a, b in out]


def token_onsets_ms(track: TimingTrack) -> tuple[np.ndarray, np.ndarray]:
    """Content onset and offset of every token, in ms."""
    d, p = track.content, track.pause
    starts = np.concatenate([[0], np.cumsum(d + p)[:-1]]) if len(track) else np.zeros(0)
    return frames_to_ms(starts, track.frame_rate), frames_to_ms(starts + d, track.frame_rate)


def edit_boundaries_ms(case: EditCase, realized: TimingTrack) -> list[float]:
    on, off = token_onsets_ms(realized)
    a, b = case.span
    if case.is_pause:
        return [float(off[a])]
    return [float(on[a]), float(off[b - 1])]


def inside_word(t_ms: float, words: Sequence[tuple[float, float]], tolerance_ms: float = 0.0) -> bool:
    """True when ``t_ms`` lies more than ``tolerance_ms`` inside some word."""
    return any(s + tolerance_ms < t_ms < e - tolerance_ms for s, e in words)


def strict_filter(case: EditCase, words: Sequence[tuple[float, float]] | None = None,
                  tolerance_ms: float = 0.0) -> bool:
    """Keep the row unless an edit boundary of the realized edit falls inside a word.

    ``words`` defaults to :func:`word_intervals` of the realized edited run.
    """
    if case.realized_edited is None:
        return False
    if words is None:
        words = word_intervals(case.realized_edited)
    return not any(inside_word(b, words, tolerance_ms) for b in edit_boundaries_ms(case, case.realized_edited))


@dataclass(frozen=True)
class SpanRatio:
    baseline_ms: float
    edited_ms: float
    realized_factor: float
    error_ms: float
    neighbor_drift_ms: float


def span_ms(track: TimingTrack, span: tuple[int, int]) -> float:
    """First edited onset to last edited content offset, internal pauses included."""
    a, b = span
    d, p = track.content[a:b], track.pause[a:b]
    return frames_to_ms(int(d.sum() + p[:-1].sum()), track.frame_rate)


def neighbor_drift(case: EditCase) -> float:
    """Mean absolute change of realized content duration next to the edit.

    Neighbours are the unedited tokens immediately left and right of the
    span.  A pause edit after token ``i`` sits between tokens ``i`` and
    ``i + 1``, which are its neighbours.  NaN when there are none.
    """
    a, b = case.span
    n = len(case.baseline)
    nbrs = [a, a + 1] if case.is_pause else [a - 1, b]
    nbrs = [i for i in nbrs if 0 <= i < n]
    if not nbrs:
        return math.nan
    base = frames_to_ms(case.realized_baseline.content[nbrs], case.realized_baseline.frame_rate)
    edit = frames_to_ms(case.realized_edited.content[nbrs], case.realized_edited.frame_rate)
    return float(np.mean(np.abs(edit - base)))


def span_ratio(case: EditCase) -> SpanRatio:
    if not case.realized:
        raise ValueError(f"case {case.case_id} has no realizations")
    base = span_ms(case.realized_baseline, case.span)
    if base == 0:
        raise ValueError(f"case {case.case_id}: baseline span is empty")
    edited = span_ms(case.realized_edited, case.span)
    factor = case.value if case.kind == "content_scale" else span_ms(case.edited, case.span) / span_ms(
        case.baseline, case.span)
    return SpanRatio(base, edited, edited / base, abs(edited - factor * base), neighbor_drift(case))


# --- reports ----------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6f}"
    return str(value)


@dataclass
class EvalReport:
    """A titled table plus the settings it was produced under.

    ``records()`` is the machine-readable form: ``#key=value`` header lines
    then one tab-separated ``column=value`` line per row, floats to six
    decimals, so equal inputs give equal bytes.
    """

    title: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def add(self, **row) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise ValueError(f"row lacks columns {missing}")
        self.rows.append(row)

    def records(self) -> str:
        lines = [f"#report={self.title}"]
        lines += [f"#{k}={_fmt(v)}" for k, v in self.header.items()]
        for row in self.rows:
            lines.append("\t".join(f"{c}={_fmt(row[c])}" for c in self.columns))
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        def cell(v):
            if isinstance(v, float):
                return "n/a" if math.isnan(v) else f"{v:.3f}"
            return str(v)

        body = [[cell(r[c]) for c in self.columns] for r in self.rows]
        widths = [max([len(c)] + [len(b[i]) for b in body]) for i, c in enumerate(self.columns)]
        sep = "  "
        out = [self.title]
        out += [f"  {k}: {_fmt(v)}" for k, v in self.header.items()]
        out.append(sep.join(c.ljust(w) for c, w in zip(self.columns, widths)))
        out.append(sep.join("-" * w for w in widths))
        out += [sep.join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
        return "\n".join(out) + "\n"


def timing_report_row(name: str, cmps: Sequence[TimingComparison], thresholds_ms: Sequence[float]) -> dict:
    """One row of the timing-following table; metrics are NaN when nothing aligned."""
    cmps = list(cmps)
    n_ok = sum(c.alignment_ok for c in cmps)
    row = {"system": name, "n": len(cmps), "aligned": n_ok, "failed": len(cmps) - n_ok}
    try:
        row["c_mae"], row["p_mae"] = content_mae(cmps), pause_mae(cmps)
    except EmptyScoredSet:
        row["c_mae"] = row["p_mae"] = math.nan
    rc, rp = timing_corr(cmps)
    row["c_corr"], row["p_corr"] = rc.r, rp.r
    for tau in thresholds_ms:
        row[f"f1@{tau:g}"] = pause_f1(cmps, tau).f1 if n_ok else math.nan
    return row


def timing_columns(thresholds_ms: Sequence[float]) -> list[str]:
    return ["system", "n", "aligned", "failed", "c_mae", "p_mae", "c_corr", "p_corr"] + [
        f"f1@{t:g}" for t in thresholds_ms
    ]
