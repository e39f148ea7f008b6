"""Local timing edits and the two edit benchmarks.

The scenario suite holds three short demo sentences mapped to toy token
ids.  The stress suite draws single-boundary pause edits and multi-token
content rescalings from held-out utterances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import EditCase
from .track import FrameRate, TimingTrack, TokenTiming, ms_to_frames
from .world import Utterance, World

DEFAULT_PUNCT_IDS = (14, 15)
PUNCTUATION = "，。、；：？！,.;:?!"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def uniform_baseline(tokens: Sequence[int], punct: Sequence[bool], content_ms: float = 170.0,
                     punct_ms: float = 50.0, rate: FrameRate | None = None) -> TimingTrack:
    """Fixed content duration per token, shorter for punctuation, no pauses."""
    rate = rate or FrameRate()
    if len(tokens) != len(punct):
        raise ValueError("need one punctuation flag per token")
    dc, dp = ms_to_frames(content_ms, rate), ms_to_frames(punct_ms, rate)
    d = [dp if f else dc for f in punct]
    return TimingTrack.from_arrays(list(tokens), d, [0] * len(tokens), frame_rate=rate)


@dataclass(frozen=True)
class EditSpec:
    """``kind`` is one of ``pause_set``, ``content_scale``, ``content_set``.

    ``start``/``stop`` is a half-open token range; a pause edit sets the
    pause after token ``start`` and must have ``stop == start + 1``.
    """

    kind: str
    start: int
    stop: int
    value: float

    def __post_init__(self):
        if self.kind not in ("pause_set", "content_scale", "content_set"):
            raise ValueError(f"unknown edit kind {self.kind!r}")
        if not 0 <= self.start < self.stop:
            raise ValueError(f"empty or negative span [{self.start}, {self.stop})")
        if self.kind == "pause_set" and self.stop != self.start + 1:
            raise ValueError("a pause edit targets exactly one boundary")
        if not math.isfinite(self.value):
            raise ValueError("edit value must be finite")
        if self.kind == "content_scale" and self.value <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind != "content_scale" and self.value < 0:
            raise ValueError("target duration must be non-negative")

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.stop


def apply_edit(track: TimingTrack, spec: EditSpec) -> TimingTrack:
    """Return a copy of ``track`` changed at the edited positions only.

    Edited values become available (mask 1); scaling rounds each token
    half up on its own.
    """
    if spec.stop > len(track):
        raise IndexError(f"span [{spec.start}, {spec.stop}) exceeds {len(track)} tokens")
    rate = track.frame_rate
    timings = list(track.timings)
    for i in range(spec.start, spec.stop):
        t = timings[i]
        if spec.kind == "pause_set":
            timings[i] = TokenTiming(t.content_frames, ms_to_frames(spec.value, rate), t.content_mask, 1)
        elif spec.kind == "content_set":
            timings[i] = TokenTiming(ms_to_frames(spec.value, rate), t.pause_frames, 1, t.pause_mask)
        else:
            timings[i] = TokenTiming(_round_half_up(spec.value * t.content_frames), t.pause_frames,
                                     t.content_mask, t.pause_mask)
    return track.replace_timings(timings)


def make_case(case_id: str, baseline: TimingTrack, spec: EditSpec, excluded: bool = False, **tags) -> EditCase:
    return EditCase(case_id, spec.kind, spec.span, spec.value, baseline, apply_edit(baseline, spec),
                    excluded=excluded, tags=tags)


# --- scenario suite ---------------------------------------------------------------

def text_to_ids(text: str, punct_ids: Sequence[int] = DEFAULT_PUNCT_IDS,
                n_content_ids: int = 14) -> tuple[list[int], list[bool]]:
    """Map characters to toy ids by order of first appearance.

    Punctuation alternates between ``punct_ids``; other characters cycle
    through ``0 .. n_content_ids - 1``.
    """
    table: dict[str, int] = {}
    ids, flags = [], []
    n_punct = 0
    for ch in text:
        if ch in PUNCTUATION:
            ids.append(punct_ids[n_punct % len(punct_ids)])
            flags.append(True)
            n_punct += 1
            continue
        if ch not in table:
            table[ch] = len(table) % n_content_ids
        ids.append(table[ch])
        flags.append(False)
    if any(a == b for a, b in zip(ids, ids[1:])):
        raise ValueError(f"{text!r} maps to repeated adjacent ids")
    return ids, flags


@dataclass(frozen=True)
class Scenario:
    name: str
    text: str
    tokens: tuple[int, ...]
    punct: tuple[bool, ...]
    baseline: TimingTrack
    content_edit: EditSpec
    pause_edit: EditSpec

    def cases(self) -> list[EditCase]:
        return [
            make_case(f"{self.name}/content", self.baseline, self.content_edit, scenario=self.name),
            make_case(f"{self.name}/pause", self.baseline, self.pause_edit, scenario=self.name),
        ]


# name, text, token receiving the pause, first content-edit token
_SCENARIOS = (
    ("navigation", "前方路口左转。", 3, 4),
    ("reading", "跟我读，苹果。", 3, 4),
    ("code_reading", "验证码是379，218。", 3, 4),
)


def scenario_suite(content_target_ms: float = 225.0, pause_target_ms: float = 260.0,
                   content_ms: float = 170.0, punct_ms: float = 50.0, span: int = 1,
                   rate: FrameRate | None = None) -> list[Scenario]:
    """The three built-in demos, each with one content edit and one pause edit."""
    out = []
    for name, text, pause_at, content_at in _SCENARIOS:
        ids, flags = text_to_ids(text)
        base = uniform_baseline(ids, flags, content_ms, punct_ms, rate)
        out.append(Scenario(
            name, text, tuple(ids), tuple(flags), base,
            EditSpec("content_set", content_at, content_at + span, content_target_ms),
            EditSpec("pause_set", pause_at, pause_at + 1, pause_target_ms),
        ))
    return out


# --- stress suite -----------------------------------------------------------------

@dataclass(frozen=True)
class StressConfig:
    seed: int = 0
    pause_targets_ms: tuple[float, ...] = (200.0, 500.0, 800.0)
    excluded_pause_ms: tuple[float, ...] = (200.0,)
    factors: tuple[float, ...] = (0.5, 1.5, 2.0)
    span_lengths: tuple[int, ...] = (2, 3)


def _pick(rng: np.random.Generator, preferred: list[int], fallback: list[int]) -> int:
    pool = preferred or fallback
    return int(pool[rng.integers(len(pool))])


def stress_suite(corpus: Sequence[Utterance], config: StressConfig = StressConfig()) -> list[EditCase]:
    """Pause and content-scale cases on each utterance's own timing.

    Edited tokens never touch the first or last token.  Content spans
    whose outer boundaries already sit next to a pause are preferred, since
    only those can survive the strict boundary rule.  Utterances too short
    for a condition are skipped; a condition no utterance can host raises
    ``ValueError``.
    """
    cases: list[EditCase] = []
    for ci, (kind, length, value) in enumerate(_conditions(config)):
        made = 0
        for ui, utt in enumerate(corpus):
            track = utt.track
            n = len(track)
            if n < length + 2:
                continue
            rng = np.random.default_rng([config.seed, ci, ui])
            p = track.pause
            starts = list(range(1, n - length))
            if kind == "pause_set":
                start = _pick(rng, [], starts)
                excluded = value in config.excluded_pause_ms
                tag = f"pause{value:g}ms"
            else:
                flanked = [s for s in starts if p[s - 1] > 0 and p[s + length - 1] > 0]
                start = _pick(rng, flanked, starts)
                excluded = False
                tag = f"span{length}x{value:g}"
            spec = EditSpec(kind, start, start + length, value)
            cases.append(make_case(f"{utt.utterance_id}/{tag}", track, spec, excluded, condition=tag))
            made += 1
        if not made:
            raise ValueError(f"no utterance is long enough for condition {kind} x{length}")
    return cases


def _conditions(config: StressConfig):
    for ms in config.pause_targets_ms:
        yield "pause_set", 1, float(ms)
    for length in config.span_lengths:
        for f in config.factors:
            yield "content_scale", length, float(f)


# --- manifests --------------------------------------------------------------------

def format_manifest(cases: Sequence[EditCase]) -> str:
    """``case_id  kind  start  stop  value  excluded`` per line."""
    lines = ["#case_id\tkind\tstart\tstop\tvalue\texcluded"]
    for c in cases:
        lines.append(f"{c.case_id}\t{c.kind}\t{c.span[0]}\t{c.span[1]}\t{c.value!r}\t{int(c.excluded)}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> list[tuple[str, EditSpec, bool]]:
    out = []
    for no, line in enumerate(text.splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise ValueError(f"line {no}: expected 6 fields, found {len(parts)}")
        cid, kind, start, stop, value, excl = parts
        try:
            spec = EditSpec(kind, int(start), int(stop), float(value))
        except ValueError as exc:
            raise ValueError(f"line {no}: {exc}") from None
        out.append((cid, spec, excl == "1"))
    return out


def world_punct_flags(tokens: Sequence[int], world: World) -> list[bool]:
    return [world.is_punct(t) for t in tokens]
