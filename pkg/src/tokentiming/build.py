"""From retained word alignments to token-level timing tracks.

Word boundaries are snapped to the frame grid first, so every duration is a
difference of two frame indices and a track never drifts from the audio it
describes.  Within a word, frames are split across tokens in proportion to
their normalized character counts (largest-remainder rounding); the gap to
the next word becomes the pause of the word's last token.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .align import AxisSpan
from .track import MASKED, FrameRate, TimingTrack, seconds_to_frame_index


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class Tokenization:
    tokens: tuple[tuple[int, int, int], ...]  # (token_id, char_begin, char_end)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(tuple(t) for t in self.tokens))
        pos = 0
        for tok_id, b, e in self.tokens:
            if b != pos or e <= b:
                raise ValueError(f"tokens must tile the text contiguously; bad range [{b}, {e})")
            pos = e

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(t[0] for t in self.tokens)


def char_tokenize(text: str, vocab: dict[str, int] | None = None) -> Tokenization:
    """One token per character.  ``vocab`` is extended in place with unseen chars."""
    vocab = {} if vocab is None else vocab
    toks = []
    for i, ch in enumerate(text):
        if ch not in vocab:
            vocab[ch] = len(vocab)
        toks.append((vocab[ch], i, i + 1))
    return Tokenization(tuple(toks))


def split_largest_remainder(total: int, weights: Sequence[int]) -> list[int]:
    """Integer split of ``total`` proportional to ``weights``; sums exactly to ``total``.

    Leftover units go to the largest fractional parts, earlier index first on ties.
    """
    w = np.asarray(weights, dtype=np.int64)
    if total < 0 or (w < 0).any() or w.sum() == 0:
        raise ValueError("need a non-negative total and positive weight mass")
    exact = total * w
    base = exact // w.sum()
    rem = exact - base * w.sum()  # integer remainders avoid float ties
    short = int(total - base.sum())
    order = sorted(range(len(w)), key=lambda k: (-rem[k], k))
    for k in order[:short]:
        base[k] += 1
    return [int(x) for x in base]


def build_track(
    words: Sequence[AxisSpan],
    tok: Tokenization,
    rate: FrameRate | None = None,
    utterance_end_s: float | None = None,
) -> TimingTrack:
    """Token-level ``(d, p)`` from word spans that share the tokenization's axis.

    Leading silence is dropped.  When ``utterance_end_s`` is given, the
    trailing silence after the last word becomes the last token's pause.
    Tokens that fall outside every word get ``d = p = 0`` with masks set.
    """
    rate = rate or FrameRate()
    words = sorted(words, key=lambda w: w.char_begin)
    n = len(tok.tokens)
    d = [0] * n
    p = [0] * n
    owner = [-1] * n
    for k, w in enumerate(words):
        for i, (_, b, e) in enumerate(tok.tokens):
            inside = b >= w.char_begin and e <= w.char_end
            overlaps = b < w.char_end and e > w.char_begin
            if inside:
                owner[i] = k
            elif overlaps:
                raise BuildError(
                    f"token {i} [{b}, {e}) straddles word {k} [{w.char_begin}, {w.char_end})"
                )

    onsets = [seconds_to_frame_index(w.start_s, rate) for w in words]
    offsets = [seconds_to_frame_index(w.end_s, rate) for w in words]
    for k, w in enumerate(words):
        members = [i for i in range(n) if owner[i] == k]
        if not members:
            raise BuildError(f"word {k} covers no token")
        lengths = [tok.tokens[i][2] - tok.tokens[i][1] for i in members]
        for i, frames in zip(members, split_largest_remainder(offsets[k] - onsets[k], lengths)):
            d[i] = frames
        if k + 1 < len(words):
            gap = onsets[k + 1] - offsets[k]
        elif utterance_end_s is not None:
            gap = seconds_to_frame_index(utterance_end_s, rate) - offsets[k]
        else:
            gap = 0
        p[members[-1]] = max(gap, 0)
    return TimingTrack.from_arrays(tok.ids, d, p, frame_rate=rate)


@dataclass(frozen=True)
class DropoutPolicy:
    drop_prob: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")


def _utterance_key(utterance_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(str(utterance_id).encode(), digest_size=8).digest(), "little")


def dropout_draw(policy: DropoutPolicy, utterance_id: str) -> bool:
    """Order-independent Bernoulli draw keyed by ``(seed, utterance_id)``."""
    rng = np.random.default_rng([policy.seed & 0xFFFFFFFFFFFFFFFF, _utterance_key(utterance_id)])
    return bool(rng.random() < policy.drop_prob)


def apply_dropout(track: TimingTrack, policy: DropoutPolicy, utterance_id: str) -> TimingTrack:
    """Mask the whole track with probability ``drop_prob``."""
    if dropout_draw(policy, utterance_id):
        return track.replace_timings(MASKED for _ in track.timings)
    return track


def mask_prompt_region(track: TimingTrack, prompt_len: int) -> TimingTrack:
    if not 0 <= prompt_len <= len(track):
        raise ValueError(f"prompt_len {prompt_len} outside [0, {len(track)}]")
    timings = [MASKED] * prompt_len + list(track.timings[prompt_len:])
    return track.replace_timings(timings)

