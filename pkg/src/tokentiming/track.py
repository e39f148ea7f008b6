"""Timing tracks: per-token content duration and pause, in acoustic frames.

A track pairs each token with ``(d, p)``: ``d`` frames of spoken content
followed by ``p`` frames of silence.  Each value carries an availability
mask; a masked value is always stored as 0.

Track files are line oriented UTF-8::

    #fps=93.75
    <token_id>\t<d>\t<p>\t<m_d>\t<m_p>
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_FPS = 93.75  # 24 kHz audio, hop 256


class TrackParseError(ValueError):
    """Malformed track file.  ``line`` is 1-based, ``field`` may be None."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


@dataclass(frozen=True)
class FrameRate:
    frames_per_second: float = DEFAULT_FPS

    def __post_init__(self):
        fps = self.frames_per_second
        if not (isinstance(fps, (int, float)) and math.isfinite(fps) and fps > 0):
            raise ValueError(f"frames_per_second must be a positive real, got {fps!r}")

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.frames_per_second


@dataclass(frozen=True)
class LogScale:
    """Scale ``s`` inside ``log(1 + s * v)``."""

    s: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s > 0):
            raise ValueError(f"log scale must be positive, got {self.s!r}")


def _check_frames(value, name: str) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer frame count, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return int(value)


@dataclass(frozen=True)
class TokenTiming:
    content_frames: int
    pause_frames: int
    content_mask: int = 1
    pause_mask: int = 1

    def __post_init__(self):
        d = _check_frames(self.content_frames, "content_frames")
        p = _check_frames(self.pause_frames, "pause_frames")
        md, mp = int(self.content_mask), int(self.pause_mask)
        if md not in (0, 1) or mp not in (0, 1):
            raise ValueError("masks must be 0 or 1")
        if md == 0 and d != 0:
            raise ValueError("masked content duration must be stored as 0")
        if mp == 0 and p != 0:
            raise ValueError("masked pause must be stored as 0")
        # normalise numpy scalars so equality and hashing behave
        object.__setattr__(self, "content_frames", d)
        object.__setattr__(self, "pause_frames", p)
        object.__setattr__(self, "content_mask", md)
        object.__setattr__(self, "pause_mask", mp)

    @property
    def available(self) -> bool:
        return self.content_mask == 1 and self.pause_mask == 1


MASKED = TokenTiming(0, 0, 0, 0)


@dataclass(frozen=True)
class TimingTrack:
    tokens: tuple[int, ...]
    timings: tuple[TokenTiming, ...]
    frame_rate: FrameRate = field(default_factory=FrameRate)

    def __post_init__(self):
        tokens = tuple(int(t) for t in self.tokens)
        timings = tuple(self.timings)
        if len(tokens) != len(timings):
            raise ValueError(
                f"track has {len(tokens)} tokens but {len(timings)} timings"
            )
        if any(t < 0 for t in tokens):
            raise ValueError("token ids must be non-negative")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "timings", timings)

    @classmethod
    def from_arrays(
        cls,
        tokens: Sequence[int],
        content: Sequence[int],
        pause: Sequence[int],
        content_mask: Sequence[int] | None = None,
        pause_mask: Sequence[int] | None = None,
        frame_rate: FrameRate | None = None,
    ) -> "TimingTrack":
        n = len(tokens)
        md = [1] * n if content_mask is None else list(content_mask)
        mp = [1] * n if pause_mask is None else list(pause_mask)
        if not (len(content) == len(pause) == len(md) == len(mp) == n):
            raise ValueError("all per-token arrays must have the same length")
        timings = tuple(
            TokenTiming(int(d), int(p), int(a), int(b))
            for d, p, a, b in zip(content, pause, md, mp)
        )
        return cls(tuple(tokens), timings, frame_rate or FrameRate())

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def content(self) -> np.ndarray:
        return np.array([t.content_frames for t in self.timings], dtype=np.int64)

    @property
    def pause(self) -> np.ndarray:
        return np.array([t.pause_frames for t in self.timings], dtype=np.int64)

    @property
    def content_mask(self) -> np.ndarray:
        return np.array([t.content_mask for t in self.timings], dtype=np.int64)

    @property
    def pause_mask(self) -> np.ndarray:
        return np.array([t.pause_mask for t in self.timings], dtype=np.int64)

    @property
    def total_span(self) -> int:
        return track_total_span(self)

    def replace_timings(self, timings: Iterable[TokenTiming]) -> "TimingTrack":
        return TimingTrack(self.tokens, tuple(timings), self.frame_rate)


def ms_to_frames(ms: float, rate: FrameRate | None = None) -> int:
    """Convert milliseconds to a whole number of frames, rounding half up."""
    rate = rate or FrameRate()
    if not math.isfinite(ms) or ms < 0:
        raise ValueError(f"duration must be a non-negative finite number of ms, got {ms!r}")
    return int(math.floor(ms * rate.frames_per_second / 1000.0 + 0.5))


def seconds_to_frame_index(seconds: float, rate: FrameRate | None = None) -> int:
    """Nearest frame boundary (half up) for a time stamp in seconds."""
    return ms_to_frames(seconds * 1000.0, rate)


def frames_to_ms(frames, rate: FrameRate | None = None):
    rate = rate or FrameRate()
    if np.ndim(frames) == 0:
        return float(frames) * rate.period_ms
    return np.asarray(frames, dtype=np.float64) * rate.period_ms


def log_compress(v, scale: LogScale | float = 1.0):
    """``log(1 + s * v)``; exactly 0 at ``v == 0`` and strictly increasing."""
    s = scale.s if isinstance(scale, LogScale) else float(scale)
    if s <= 0:
        raise ValueError("log scale must be positive")
    if np.any(np.asarray(v) < 0):
        raise ValueError("frame counts must be non-negative")
    out = np.log1p(s * np.asarray(v, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def track_total_span(track: TimingTrack) -> int:
    return sum(t.content_frames + t.pause_frames for t in track.timings)


def fully_masked(track: TimingTrack) -> TimingTrack:
    return track.replace_timings(MASKED for _ in track.timings)


# --- serialisation -----------------------------------------------------------

_FIELDS = ("token_id", "d", "p", "m_d", "m_p")


def serialize_track(track: TimingTrack) -> bytes:
    lines = [f"#fps={track.frame_rate.frames_per_second!r}"]
    for tok, t in zip(track.tokens, track.timings):
        lines.append(
            f"{tok}\t{t.content_frames}\t{t.pause_frames}\t{t.content_mask}\t{t.pause_mask}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_int(text: str, line: int, name: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise TrackParseError(f"expected an integer, got {text!r}", line, name) from None
    return value


def deserialize_track(data: bytes | str) -> TimingTrack:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith("#fps="):
        raise TrackParseError("missing '#fps=<real>' header", 1)
    try:
        rate = FrameRate(float(lines[0][len("#fps="):]))
    except ValueError as exc:
        raise TrackParseError(str(exc), 1, "fps") from None

    tokens, timings = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split("\t")
        if len(parts) != len(_FIELDS):
            raise TrackParseError(
                f"expected {len(_FIELDS)} tab-separated fields, got {len(parts)}", lineno
            )
        values = [_parse_int(p, lineno, name) for p, name in zip(parts, _FIELDS)]
        for v, name in zip(values, _FIELDS):
            if v < 0:
                raise TrackParseError(f"negative value {v}", lineno, name)
        tok, d, p, md, mp = values
        try:
            timings.append(TokenTiming(d, p, md, mp))
        except ValueError as exc:
            raise TrackParseError(str(exc), lineno) from None
        tokens.append(tok)
    return TimingTrack(tuple(tokens), tuple(timings), rate)
