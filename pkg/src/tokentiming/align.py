"""Readers for word-level forced-alignment output and text-axis projection.

Two sources are supported:

* word records, one ``surface<TAB>start_s<TAB>end_s`` line per word after a
  ``#utterance=<id>`` header (an optional ``#text=<transcript>`` header line
  carries the raw transcript);
* Praat TextGrid files in long text format, read from a single interval tier.

Both are projected onto a normalized character axis (lowercase ASCII
alphanumerics plus CJK ideographs) so that alignments produced by different
tools can be compared span by span.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .track import FrameRate

SILENCE_LABELS = frozenset({"", "sil", "sp", "spn"})
CJK_RANGES: tuple[tuple[int, int], ...] = ((0x4E00, 0x9FFF),)


class AlignmentParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ProjectionError(ValueError):
    def __init__(self, message: str, word_index: int):
        super().__init__(f"word {word_index}: {message}")
        self.word_index = word_index


class OverlapClippedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class WordSpan:
    surface: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.surface.strip():
            raise ValueError("word surface is empty")
        if self.start_s < 0 or self.end_s < 0:
            raise ValueError(f"negative time in word {self.surface!r}")
        if self.end_s < self.start_s:
            raise ValueError(
                f"word {self.surface!r} ends ({self.end_s}) before it starts ({self.start_s})"
            )


@dataclass(frozen=True)
class AlignmentSeq:
    utterance_id: str
    words: tuple[WordSpan, ...]
    source_tag: str = "A"
    text: str | None = None
    end_s: float | None = None  # utterance end incl. trailing silence, when known

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        for k in range(1, len(self.words)):
            if self.words[k].start_s < self.words[k - 1].end_s:
                raise ValueError(
                    f"words {k - 1} and {k} overlap in utterance {self.utterance_id!r}"
                )


@dataclass(frozen=True)
class AxisSpan:
    char_begin: int
    char_end: int
    start_s: float
    end_s: float

    def __post_init__(self):
        if not 0 <= self.char_begin < self.char_end:
            raise ValueError(f"bad char range [{self.char_begin}, {self.char_end})")


class NormalizedText(NamedTuple):
    text: str
    index_map: list[int]


def _keep(ch: str, cjk_ranges) -> str | None:
    if ch.isascii() and ch.isalnum():
        return ch.lower()
    cp = ord(ch)
    for lo, hi in cjk_ranges:
        if lo <= cp <= hi:
            return ch
    return None


def normalize_text(raw: str, cjk_ranges: Sequence[tuple[int, int]] = CJK_RANGES) -> NormalizedText:
    """Lowercase and keep only ASCII letters, digits and CJK ideographs.

    ``index_map[i]`` is the normalized position of raw character ``i``.
    Dropped characters map to the position the next kept character will
    occupy, which keeps the map monotone.
    """
    out: list[str] = []
    index_map: list[int] = []
    for ch in raw:
        index_map.append(len(out))
        kept = _keep(ch, cjk_ranges)
        if kept is not None:
            out.append(kept)
    return NormalizedText("".join(out), index_map)


# --- word records ------------------------------------------------------------

def _parse_seconds(text: str, line: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise AlignmentParseError(f"{what} is not a number: {text!r}", line) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise AlignmentParseError(f"{what} is not finite", line)
    if value < 0:
        raise AlignmentParseError(f"negative {what} {value}", line)
    return value


def parse_word_alignment(
    data: bytes | str,
    rate: FrameRate | None = None,
    source_tag: str = "A",
) -> AlignmentSeq:
    """Parse a word-record stream into an :class:`AlignmentSeq`.

    Overlaps of at most one frame period are repaired by moving the later
    word's start to the earlier word's end (with an
    :class:`OverlapClippedWarning`); larger overlaps are errors.
    """
    rate = rate or FrameRate()
    tol_s = 1.0 / rate.frames_per_second
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data

    utt_id, transcript, end_s = None, None, None
    words: list[WordSpan] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        if raw.startswith("#"):
            key, _, value = raw[1:].partition("=")
            key = key.strip()
            if key == "utterance":
                utt_id = value.strip()
            elif key == "text":
                transcript = value
            elif key == "end":
                end_s = _parse_seconds(value.strip(), lineno, "utterance end")
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise AlignmentParseError(
                f"expected surface, start and end separated by tabs, got {len(parts)} field(s)",
                lineno,
            )
        surface = parts[0]
        if not surface.strip():
            raise AlignmentParseError("missing word surface", lineno)
        start = _parse_seconds(parts[1], lineno, "start")
        end = _parse_seconds(parts[2], lineno, "end")
        if end < start:
            raise AlignmentParseError(f"end {end} precedes start {start}", lineno)
        if words and start < words[-1].end_s:
            overlap = words[-1].end_s - start
            if overlap > tol_s + 1e-9:
                raise AlignmentParseError(
                    f"word overlaps previous word by {overlap * 1000:.1f} ms", lineno
                )
            warnings.warn(
                f"line {lineno}: clipped {overlap * 1000:.2f} ms overlap with previous word",
                OverlapClippedWarning,
                stacklevel=2,
            )
            start = words[-1].end_s
            if end < start:
                raise AlignmentParseError("word vanishes after overlap clipping", lineno)
        words.append(WordSpan(surface, start, end))

    if utt_id is None:
        raise AlignmentParseError("missing '#utterance=<id>' header")
    return AlignmentSeq(utt_id, tuple(words), source_tag, transcript, end_s)


# --- TextGrid (long format) ----------------------------------------------------

_KV = re.compile(r'^\s*([A-Za-z_]+)\s*=\s*(.*?)\s*$')
_ITEM = re.compile(r'^\s*item\s*\[\s*(\d+)\s*\]\s*:\s*$')
_INTERVAL = re.compile(r'^\s*intervals\s*\[\s*(\d+)\s*\]\s*:?\s*$')


def _unquote(value: str, line: int) -> str:
    if len(value) < 2 or value[0] != '"' or value[-1] != '"':
        raise AlignmentParseError(f"expected a quoted string, got {value!r}", line)
    return value[1:-1].replace('""', '"')


def _number(value: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise AlignmentParseError(f"expected a number, got {value!r}", line) from None


@dataclass
class _Tier:
    cls: str = ""
    name: str = ""
    intervals: list = field(default_factory=list)
    xmax: float | None = None


def _read_tiers(text: str) -> list[_Tier]:
    lines = text.splitlines()
    header = "\n".join(lines[:3])
    if 'ooTextFile' not in header or 'TextGrid' not in header:
        raise AlignmentParseError("not a TextGrid file", 1)
    if not any(_ITEM.match(ln) for ln in lines):
        raise AlignmentParseError("only the long TextGrid format is supported")

    tiers: list[_Tier] = []
    tier: _Tier | None = None
    interval: dict | None = None

    def close_interval(lineno):
        nonlocal interval
        if interval is None:
            return
        missing = {"xmin", "xmax", "text"} - interval.keys()
        if missing:
            raise AlignmentParseError(
                f"interval header incomplete, missing {sorted(missing)}", interval["line"]
            )
        if interval["xmax"] < interval["xmin"]:
            raise AlignmentParseError(
                f"interval xmax {interval['xmax']} < xmin {interval['xmin']}", interval["line"]
            )
        tier.intervals.append((interval["text"], interval["xmin"], interval["xmax"]))
        interval = None

    for lineno, raw in enumerate(lines, start=1):
        if _ITEM.match(raw):
            close_interval(lineno)
            tier = _Tier()
            tiers.append(tier)
            continue
        if tier is None:
            continue
        m = _INTERVAL.match(raw)
        if m:
            close_interval(lineno)
            interval = {"line": lineno}
            continue
        m = _KV.match(raw)
        if not m:
            continue
        key, value = m.group(1), m.group(2)
        if interval is not None:
            if key in ("xmin", "xmax"):
                interval[key] = _number(value, lineno)
            elif key == "text":
                interval["text"] = _unquote(value, lineno)
        elif key == "class":
            tier.cls = _unquote(value, lineno)
        elif key == "name":
            tier.name = _unquote(value, lineno)
        elif key == "xmax":
            tier.xmax = _number(value, lineno)
    if tier is not None:
        close_interval(len(lines))
    return tiers


def parse_textgrid(
    data: bytes | str,
    tier_name: str = "words",
    utterance_id: str = "",
    silence_labels=SILENCE_LABELS,
    source_tag: str = "B",
) -> AlignmentSeq:
    """Read the word intervals of one interval tier.

    Intervals labelled with a silence marker are not words, but since word
    times are absolute the gaps they occupy survive as inter-word pauses.
    """
    text = data.decode("utf-8-sig") if isinstance(data, (bytes, bytearray)) else data
    tiers = _read_tiers(text)
    by_name = {t.name: t for t in tiers if t.cls == "IntervalTier"}
    if tier_name not in by_name:
        raise AlignmentParseError(
            f"no interval tier named {tier_name!r}; available: {sorted(by_name)}"
        )
    tier = by_name[tier_name]
    words = [
        WordSpan(label.strip(), xmin, xmax)
        for label, xmin, xmax in tier.intervals
        if label.strip().lower() not in silence_labels
    ]
    try:
        return AlignmentSeq(utterance_id, tuple(words), source_tag, None, tier.xmax)
    except ValueError as exc:
        raise AlignmentParseError(str(exc)) from None


def format_textgrid(seq: AlignmentSeq, tier_name: str = "words") -> str:
    """Write a long-format TextGrid with one interval tier (gaps become "")."""
    end = seq.end_s if seq.end_s is not None else (seq.words[-1].end_s if seq.words else 0.0)
    intervals = []
    cursor = 0.0
    for w in seq.words:
        if w.start_s > cursor:
            intervals.append(("", cursor, w.start_s))
        intervals.append((w.surface, w.start_s, w.end_s))
        cursor = w.end_s
    if end > cursor:
        intervals.append(("", cursor, end))
    out = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        "xmin = 0",
        f"xmax = {end!r}",
        "tiers? <exists>",
        "size = 1",
        "item []:",
        "    item [1]:",
        '        class = "IntervalTier"',
        f'        name = "{tier_name}"',
        "        xmin = 0",
        f"        xmax = {end!r}",
        f"        intervals: size = {len(intervals)}",
    ]
    for k, (label, lo, hi) in enumerate(intervals, start=1):
        label = label.replace('"', '""')
        out += [
            f"        intervals [{k}]:",
            f"            xmin = {lo!r}",
            f"            xmax = {hi!r}",
            f'            text = "{label}"',
        ]
    return "\n".join(out) + "\n"


# --- projection ----------------------------------------------------------------

def project_to_axis(seq: AlignmentSeq, normalized: str) -> list[AxisSpan]:
    """Map each word onto a contiguous range of the normalized text.

    Matching is greedy and left to right: each word takes the earliest
    occurrence of its normalized surface at or after the end of the previous
    match.  Words that normalize to nothing (pure punctuation) are dropped.
    """
    spans: list[AxisSpan] = []
    cursor = 0
    for k, word in enumerate(seq.words):
        key = normalize_text(word.surface).text
        if not key:
            continue
        pos = normalized.find(key, cursor)
        if pos < 0:
            raise ProjectionError(
                f"{word.surface!r} does not match the text at or after position {cursor}", k
            )
        spans.append(AxisSpan(pos, pos + len(key), word.start_s, word.end_s))
        cursor = pos + len(key)
    return spans
