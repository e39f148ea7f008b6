"""Agreement filter over two word alignments of the same utterance.

An utterance is kept only when its two alignments, projected onto the
normalized text axis,

1. cover the same characters,
2. never cross each other (every pair of spans is nested or disjoint), and
3. agree on every comparable span to within ``delta_ms`` in start, end and
   duration.

Checks run in that order and the first failure labels the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .align import AlignmentSeq, AxisSpan, ProjectionError, normalize_text, project_to_axis

CHECKS = ("none", "coverage", "order", "boundary")


class ContractError(ValueError):
    """Raised when an operation is called outside its precondition."""


@dataclass(frozen=True)
class UtterancePair:
    utterance_id: str
    normalized_text: str
    spans_a: tuple[AxisSpan, ...]
    spans_b: tuple[AxisSpan, ...]

    def __post_init__(self):
        object.__setattr__(self, "spans_a", tuple(self.spans_a))
        object.__setattr__(self, "spans_b", tuple(self.spans_b))
        n = len(self.normalized_text)
        for spans in (self.spans_a, self.spans_b):
            for s in spans:
                if s.char_end > n:
                    raise ValueError(f"span [{s.char_begin}, {s.char_end}) exceeds text length {n}")

    def swapped(self) -> "UtterancePair":
        return UtterancePair(self.utterance_id, self.normalized_text, self.spans_b, self.spans_a)


@dataclass(frozen=True)
class FilterConfig:
    delta_ms: float = 150.0

    def __post_init__(self):
        if not self.delta_ms > 0:
            raise ValueError("delta_ms must be positive")


@dataclass(frozen=True)
class FilterVerdict:
    passed: bool
    failed_check: str = "none"
    worst_boundary_ms: float = 0.0

    def __post_init__(self):
        if self.failed_check not in CHECKS:
            raise ValueError(f"unknown check {self.failed_check!r}")
        if self.passed != (self.failed_check == "none"):
            raise ValueError("passed must agree with failed_check")


def make_pair(seq_a: AlignmentSeq, seq_b: AlignmentSeq, raw_text: str) -> UtterancePair:
    """Project both alignments onto the normalized form of ``raw_text``."""
    norm = normalize_text(raw_text).text
    return UtterancePair(
        seq_a.utterance_id or seq_b.utterance_id,
        norm,
        tuple(project_to_axis(seq_a, norm)),
        tuple(project_to_axis(seq_b, norm)),
    )


def _merged(spans: Sequence[AxisSpan]) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for s in sorted(spans, key=lambda s: s.char_begin):
        if out and s.char_begin <= out[-1][1]:
            out[-1][1] = max(out[-1][1], s.char_end)
        else:
            out.append([s.char_begin, s.char_end])
    return [tuple(x) for x in out]


def check_coverage(pair: UtterancePair) -> bool:
    return _merged(pair.spans_a) == _merged(pair.spans_b)


def check_order_consistency(pair: UtterancePair) -> bool:
    if not pair.spans_a or not pair.spans_b:
        return True
    a = np.array([(s.char_begin, s.char_end) for s in pair.spans_a])
    b = np.array([(s.char_begin, s.char_end) for s in pair.spans_b])
    ab, ae = a[:, 0:1], a[:, 1:2]
    bb, be = b[:, 0][None, :], b[:, 1][None, :]
    crossing = ((ab < bb) & (bb < ae) & (ae < be)) | ((bb < ab) & (ab < be) & (be < ae))
    return not crossing.any()


def comparable_blocks(pair: UtterancePair) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Pair up minimal runs of consecutive spans covering identical char ranges.

    Returns ``((start_a, end_a), (start_b, end_b))`` in seconds per block.
    Requires equal coverage and order consistency.
    """
    a = sorted(pair.spans_a, key=lambda s: s.char_begin)
    b = sorted(pair.spans_b, key=lambda s: s.char_begin)
    blocks = []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i].char_begin != b[j].char_begin:
            raise ContractError("span lists are not comparable (coverage or order mismatch)")
        i0, j0 = i, j
        while a[i].char_end != b[j].char_end:
            if a[i].char_end < b[j].char_end:
                i += 1
                if i == len(a) or a[i].char_begin != a[i - 1].char_end:
                    raise ContractError("span lists are not comparable (coverage mismatch)")
            else:
                j += 1
                if j == len(b) or b[j].char_begin != b[j - 1].char_end:
                    raise ContractError("span lists are not comparable (coverage mismatch)")
        blocks.append(((a[i0].start_s, a[i].end_s), (b[j0].start_s, b[j].end_s)))
        i += 1
        j += 1
    if i != len(a) or j != len(b):
        raise ContractError("span lists are not comparable (coverage mismatch)")
    return blocks


def _ms(seconds: float) -> float:
    # micro-ms rounding keeps decimal fixtures exact at the threshold
    return round(abs(seconds) * 1000.0, 6)


def check_boundary_distance(pair: UtterancePair, cfg: FilterConfig = FilterConfig()) -> tuple[bool, float]:
    if not check_order_consistency(pair):
        raise ContractError("boundary distance is undefined for crossing alignments")
    worst = 0.0
    for (sa, ea), (sb, eb) in comparable_blocks(pair):
        worst = max(worst, _ms(sa - sb), _ms(ea - eb), _ms((ea - sa) - (eb - sb)))
    return worst <= cfg.delta_ms, worst


def filter_utterance(pair: UtterancePair, cfg: FilterConfig = FilterConfig()) -> FilterVerdict:
    if not check_coverage(pair):
        return FilterVerdict(False, "coverage")
    if not check_order_consistency(pair):
        return FilterVerdict(False, "order")
    ok, worst = check_boundary_distance(pair, cfg)
    return FilterVerdict(ok, "none" if ok else "boundary", worst)


def filter_alignments(
    seq_a: AlignmentSeq, seq_b: AlignmentSeq, raw_text: str, cfg: FilterConfig = FilterConfig()
) -> FilterVerdict:
    """Project and filter; a word that cannot be placed on the axis is a coverage failure."""
    try:
        pair = make_pair(seq_a, seq_b, raw_text)
    except ProjectionError:
        return FilterVerdict(False, "coverage")
    return filter_utterance(pair, cfg)


@dataclass(frozen=True)
class CorpusStats:
    total: int = 0
    comparable: int = 0
    passed: int = 0

    @property
    def pass_rate(self) -> float:
        return self.passed / self.comparable if self.comparable else 0.0

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(
            self.total + other.total,
            self.comparable + other.comparable,
            self.passed + other.passed,
        )


def corpus_stats(verdicts: Iterable[Optional[FilterVerdict]]) -> CorpusStats:
    """Single-pass counts.  ``None`` marks an utterance lacking one alignment."""
    total = comparable = passed = 0
    for v in verdicts:
        total += 1
        if v is None:
            continue
        comparable += 1
        passed += bool(v.passed)
    return CorpusStats(total, comparable, passed)


def format_verdict(utterance_id: str, verdict: Optional[FilterVerdict]) -> str:
    if verdict is None:
        return f"{utterance_id}\tfail\tunavailable\tnan"
    status = "pass" if verdict.passed else "fail"
    return f"{utterance_id}\t{status}\t{verdict.failed_check}\t{verdict.worst_boundary_ms:.3f}"


def format_stats(stats: CorpusStats) -> str:
    return (
        f"# total={stats.total}\n# comparable={stats.comparable}\n"
        f"# passed={stats.passed}\n# pass_rate={stats.pass_rate:.6f}\n"
    )
