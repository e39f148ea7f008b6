"""A synthetic "speechlet" world with known timing.

Each token id owns a unit-norm signature vector; rendering a timing track
writes ``d`` frames of the token's signature followed by ``p`` frames of
silence (the zero vector), optionally with Gaussian observation noise.

:func:`oracle_align` plays the role of a forced aligner: frames are labelled
by nearest signature (or silence, below an energy threshold) and a monotone
dynamic program segments the frames into ``content_i, pause_i`` runs in token
order with the fewest mislabelled frames.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .track import FrameRate, TimingTrack

SILENCE = -1


class AlignmentFailure(RuntimeError):
    """The oracle aligner could not produce a usable segmentation."""


@dataclass(frozen=True)
class WorldConfig:
    n_tokens: int = 16
    n_channels: int = 8
    min_len: int = 4
    max_len: int = 8
    d_min: int = 4
    d_max: int = 20
    pause_prob: float = 0.3
    p_min: int = 3
    p_max: int = 28
    noise_std: float = 0.0
    silence_threshold: float = 0.25  # fraction of mean signature norm
    max_similarity: float = 0.3
    max_error_rate: float = 0.5  # above this the oracle aligner reports failure
    punct_ids: tuple[int, ...] = (14, 15)
    signature_seed: int = 0
    fps: float = 93.75

    def __post_init__(self):
        object.__setattr__(self, "punct_ids", tuple(self.punct_ids))
        if not (0 < self.min_len <= self.max_len):
            raise ValueError("need 0 < min_len <= max_len")
        if not (1 <= self.d_min <= self.d_max):
            raise ValueError("need 1 <= d_min <= d_max")
        if not (0 <= self.p_min <= self.p_max):
            raise ValueError("need 0 <= p_min <= p_max")
        if not 0.0 <= self.pause_prob <= 1.0:
            raise ValueError("pause_prob must lie in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.n_tokens < 2:
            raise ValueError("need at least two token ids")


def make_signatures(n_tokens: int, n_channels: int, max_similarity: float, seed: int) -> np.ndarray:
    """Random unit vectors whose pairwise cosine similarity is at most ``max_similarity``.

    Candidates are drawn one at a time and rejected if too close to any
    vector already accepted.
    """
    rng = np.random.default_rng(seed)
    sigs: list[np.ndarray] = []
    tries = 0
    while len(sigs) < n_tokens:
        tries += 1
        if tries > 100_000:
            raise RuntimeError("could not place signatures; loosen max_similarity")
        v = rng.standard_normal(n_channels)
        v /= np.linalg.norm(v)
        if all(float(v @ s) <= max_similarity for s in sigs):
            sigs.append(v)
    return np.stack(sigs)


@dataclass(frozen=True)
class World:
    config: WorldConfig = field(default_factory=WorldConfig)

    @cached_property
    def signatures(self) -> np.ndarray:
        c = self.config
        return make_signatures(c.n_tokens, c.n_channels, c.max_similarity, c.signature_seed)

    @property
    def frame_rate(self) -> FrameRate:
        return FrameRate(self.config.fps)

    def is_punct(self, token_id: int) -> bool:
        return token_id in self.config.punct_ids

    def to_json(self) -> str:
        return json.dumps(asdict(self.config), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "World":
        return cls(WorldConfig(**json.loads(text)))


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    track: TimingTrack
    heldout: bool = False

    @property
    def tokens(self) -> tuple[int, ...]:
        return self.track.tokens


def render(track: TimingTrack, world: World, seed: int | None = None, noise_std: float | None = None) -> np.ndarray:
    """``(T, F)`` features for a track; ``T`` equals the track's total span."""
    sigs = world.signatures
    k = world.config.n_tokens
    bad = [t for t in track.tokens if t >= k]
    if bad:
        raise ValueError(f"unknown token id(s) {bad}; world has {k}")
    rows = []
    for tok, t in zip(track.tokens, track.timings):
        rows.append(np.repeat(sigs[tok][None, :], t.content_frames, axis=0))
        rows.append(np.zeros((t.pause_frames, sigs.shape[1])))
    feats = np.concatenate(rows, axis=0) if rows else np.zeros((0, sigs.shape[1]))
    std = world.config.noise_std if noise_std is None else noise_std
    if std > 0:
        feats = feats + std * np.random.default_rng(seed).standard_normal(feats.shape)
    return feats


def classify_frames(feats: np.ndarray, world: World) -> np.ndarray:
    """Per-frame label: index of the best-correlated signature, or ``SILENCE``."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    sigs = world.signatures
    thr = world.config.silence_threshold * float(np.linalg.norm(sigs, axis=1).mean())
    labels = np.argmax(feats @ sigs.T, axis=1)
    labels[np.linalg.norm(feats, axis=1) < thr] = SILENCE
    return labels


def _segment(labels: np.ndarray, tokens: Sequence[int],
             dist: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Monotone content/pause segmentation minimising mislabelled frames.

    States ``2i`` (content of token i, at least one frame) and ``2i + 1``
    (pause after token i).  Segmentations with the same number of
    mislabelled frames are ranked by ``dist`` (``(T, S)`` squared distance
    of each frame to the state's template), scaled so that it can never
    outweigh a single mislabelled frame.  Remaining ties place boundaries
    as early as possible.
    """
    n, T = len(tokens), len(labels)
    S = 2 * n
    tok = np.asarray(tokens)
    errs = np.empty((T, S))
    errs[:, 0::2] = labels[:, None] != tok[None, :]
    errs[:, 1::2] = (labels != SILENCE)[:, None]
    cost = errs
    if dist is not None:
        cost = errs + dist / (1.0 + float(dist.max(axis=1).sum()))

    inf = np.inf
    acc = np.full(S, inf)
    acc[0] = cost[0, 0]
    back = np.zeros((T, S), dtype=np.int8)  # 0 stay, 1 from pause_{i-1}, 2 from content_{i-1}/content_i
    for t in range(1, T):
        stay = acc
        new = stay.copy()
        choice = np.zeros(S, dtype=np.int8)
        # content_i <- pause_{i-1}
        from_pause = np.full(n, inf)
        from_pause[1:] = acc[1:-1:2]
        # content_i <- content_{i-1}
        from_content = np.full(n, inf)
        from_content[1:] = acc[0:-2:2]
        c_new = new[0::2]
        better = from_pause < c_new
        c_new = np.where(better, from_pause, c_new)
        c_choice = np.where(better, 1, 0)
        better = from_content < c_new
        c_new = np.where(better, from_content, c_new)
        c_choice = np.where(better, 2, c_choice)
        # pause_i <- content_i
        p_new = new[1::2]
        from_c = acc[0::2]
        better = from_c < p_new
        p_choice = np.where(better, 2, 0)
        p_new = np.where(better, from_c, p_new)
        new[0::2] = c_new
        new[1::2] = p_new
        choice[0::2] = c_choice
        choice[1::2] = p_choice
        acc = new + cost[t]
        back[t] = choice

    end = S - 1 if acc[S - 1] <= acc[S - 2] else S - 2
    if not np.isfinite(acc[end]):
        raise AlignmentFailure("fewer frames than tokens")
    counts = np.zeros(S, dtype=np.int64)
    total = 0
    s = end
    for t in range(T - 1, -1, -1):
        counts[s] += 1
        total += int(errs[t, s])
        c = back[t, s]
        if t == 0:
            break
        if c == 1:
            s = s - 1  # content_i from pause_{i-1}
        elif c == 2:
            s = s - 2 if s % 2 == 0 else s - 1
    return counts[0::2], counts[1::2], total


def oracle_align(feats: np.ndarray, tokens: Sequence[int], world: World) -> TimingTrack:
    """Recover ``(d, p)`` per token from features; raises :class:`AlignmentFailure`."""
    tokens = [int(t) for t in tokens]
    feats = np.asarray(feats)
    if not tokens:
        raise AlignmentFailure("no tokens to align")
    if not np.isfinite(feats).all():
        raise AlignmentFailure("non-finite features")
    if feats.shape[0] < len(tokens):
        raise AlignmentFailure(f"{feats.shape[0]} frames cannot hold {len(tokens)} tokens")
    labels = classify_frames(feats, world)
    if (labels == SILENCE).all():
        raise AlignmentFailure("all frames are silent")
    feats = feats.astype(np.float64)
    sigs = world.signatures[tokens]
    dist = np.empty((feats.shape[0], 2 * len(tokens)))
    dist[:, 0::2] = ((feats[:, None, :] - sigs[None]) ** 2).sum(axis=2)
    dist[:, 1::2] = (feats ** 2).sum(axis=1)[:, None]
    d, p, errors = _segment(labels, tokens, dist)
    if errors > world.config.max_error_rate * len(labels):
        raise AlignmentFailure(f"{errors} of {len(labels)} frames disagree with the segmentation")
    return TimingTrack.from_arrays(tokens, d, p, frame_rate=world.frame_rate)


def random_track(world: World, rng: np.random.Generator, n: int | None = None) -> TimingTrack:
    """Draw one utterance from the world's priors; adjacent token ids never repeat."""
    c = world.config
    if n is None:
        n = int(rng.integers(c.min_len, c.max_len + 1))
    toks = []
    for _ in range(n):
        choices = [k for k in range(c.n_tokens) if not toks or k != toks[-1]]
        toks.append(int(rng.choice(choices)))
    d = rng.integers(c.d_min, c.d_max + 1, size=n)
    has_pause = rng.random(n) < c.pause_prob
    p = np.where(has_pause, rng.integers(c.p_min, c.p_max + 1, size=n), 0)
    return TimingTrack.from_arrays(toks, d, p, frame_rate=world.frame_rate)


def gen_corpus(world: World, n_utts: int, seed: int = 0, n_heldout: int = 0) -> list[Utterance]:
    """Deterministic corpus; the last ``n_heldout`` utterances are flagged held out.

    Utterance ``k`` uses its own generator seeded by ``(seed, k)``, so any
    utterance can be regenerated independently of the others.
    """
    if n_utts < 1:
        raise ValueError("n_utts must be at least 1")
    if not 0 <= n_heldout <= n_utts:
        raise ValueError("n_heldout must lie in [0, n_utts]")
    out = []
    for k in range(n_utts):
        rng = np.random.default_rng([seed, k])
        out.append(Utterance(f"utt{k:05d}", random_track(world, rng), k >= n_utts - n_heldout))
    return out


# --- feature files -------------------------------------------------------------

def write_features(path: str | Path, feats: np.ndarray) -> None:
    """Flat binary: little-endian uint32 ``T``, ``F`` then row-major float32."""
    feats = np.ascontiguousarray(feats, dtype="<f4")
    T, F = feats.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", T, F))
        fh.write(feats.tobytes())


def read_features(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated feature header")
    T, F = struct.unpack("<II", raw[:8])
    body = raw[8:]
    if len(body) != 4 * T * F:
        raise ValueError(f"{path}: expected {4 * T * F} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(T, F).copy()
