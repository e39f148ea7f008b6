"""Conditional flow matching at toy scale.

Straight-line probability paths ``x_t = (1 - t) x0 + t x1`` with target
flow ``u = x1 - x0``; a small transformer ``v(x_t, t | c, h)`` regresses
``u`` on the masked (to-be-generated) frames.  Sampling integrates the
learned field with fixed-step Euler from Gaussian noise.

Token conditions reach the frame axis by repetition: a token with a known
timing occupies ``d + p`` frames, tokens without timing share the remaining
frames evenly.  Every frame also sees ``log(1 + k)`` for its offset ``k``
from the start and from the end of its token's run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .conditioning import TimingConditioner
from .track import TimingTrack


class EmptyMaskWarning(UserWarning):
    pass


class NonFiniteLossError(FloatingPointError):
    pass


# --- path and objective --------------------------------------------------------

def _check_t(t):
    arr = t.detach().cpu().numpy() if torch.is_tensor(t) else np.asarray(t, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"t must lie in [0, 1], got range [{arr.min()}, {arr.max()}]")


def _expand_t(t, x):
    if np.ndim(t) == 0:
        return t
    shape = (-1,) + (1,) * (x.ndim - 1)
    return t.reshape(shape)


def interpolate(x0, x1, t):
    """``(1 - t) * x0 + t * x1``; ``t`` may be a scalar or one value per batch row."""
    if x0.shape != x1.shape:
        raise ValueError(f"shape mismatch {tuple(x0.shape)} vs {tuple(x1.shape)}")
    _check_t(t)
    t = _expand_t(t, x0)
    return (1 - t) * x0 + t * x1


def target_flow(x0, x1):
    if x0.shape != x1.shape:
        raise ValueError(f"shape mismatch {tuple(x0.shape)} vs {tuple(x1.shape)}")
    return x1 - x0


def cfm_loss(pred, u, mask):
    """Mean over masked frames of the squared error summed over channels.

    ``pred`` and ``u`` are ``(..., T, F)``, ``mask`` is ``(..., T)``.  An
    all-zero mask yields 0 and an :class:`EmptyMaskWarning`.
    """
    if pred.shape != u.shape or tuple(mask.shape) != tuple(pred.shape[:-1]):
        raise ValueError(
            f"inconsistent shapes pred={tuple(pred.shape)} u={tuple(u.shape)} mask={tuple(mask.shape)}"
        )
    per_frame = ((pred - u) ** 2).sum(-1) * mask
    n = mask.sum()
    if float(n) == 0:
        warnings.warn("cfm_loss called with an empty mask", EmptyMaskWarning, stacklevel=2)
        return per_frame.sum() * 0.0
    return per_frame.sum() / n


# --- token to frame layout -------------------------------------------------------

def frame_layout(total_frames: int, d, p, md=None, mp=None) -> np.ndarray:
    """Frames per token.

    Tokens with both masks set take ``d + p`` frames; the rest split what is
    left of ``total_frames`` evenly, in token order.
    """
    d = np.asarray(d, dtype=np.int64)
    p = np.asarray(p, dtype=np.int64)
    n = len(d)
    md = np.ones(n, dtype=np.int64) if md is None else np.asarray(md, dtype=np.int64)
    mp = np.ones(n, dtype=np.int64) if mp is None else np.asarray(mp, dtype=np.int64)
    known = (md == 1) & (mp == 1)
    lengths = np.where(known, d + p, 0)
    left = total_frames - int(lengths.sum())
    unknown = np.flatnonzero(~known)
    if left < 0 or (left > 0 and len(unknown) == 0):
        raise ValueError(
            f"timing track spans {int(lengths.sum())} frames but {total_frames} were requested"
        )
    if len(unknown):
        bounds = (np.arange(len(unknown) + 1) * left) // len(unknown)
        lengths[unknown] = np.diff(bounds)
    return lengths


def expand_layout(lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame token index and ``log1p`` offsets from run start and run end."""
    lengths = np.asarray(lengths, dtype=np.int64)
    idx = np.repeat(np.arange(len(lengths)), lengths)
    starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
    pos = np.arange(len(idx)) - starts
    from_end = np.repeat(lengths, lengths) - 1 - pos
    offs = np.log1p(np.stack([pos, from_end], axis=-1).astype(np.float64))
    return idx, offs


# --- network ------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    n_tokens: int = 16
    feat_dim: int = 8
    width: int = 96
    depth: int = 4
    heads: int = 4
    ffn: int = 128
    enc_hidden: int = 64
    scale_d: float = 1.0
    scale_p: float = 1.0
    time_dim: int = 64

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal(x: torch.Tensor, dim: int, max_period: float = 10_000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=x.dtype) / half)
    ang = x[..., None] * freqs
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)


class SelfAttention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads:
            raise ValueError("width must be divisible by heads")
        self.heads = heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)

    def forward(self, x, key_valid):
        B, T, W = x.shape
        q, k, v = self.qkv(x).reshape(B, T, 3, self.heads, W // self.heads).permute(2, 0, 3, 1, 4)
        y = F.scaled_dot_product_attention(q, k, v, attn_mask=key_valid[:, None, None, :])
        return self.out(y.transpose(1, 2).reshape(B, T, W))


class Block(nn.Module):
    def __init__(self, width: int, heads: int, ffn: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(width)
        self.attn = SelfAttention(width, heads)
        self.ln2 = nn.LayerNorm(width)
        self.ff = nn.Sequential(nn.Linear(width, ffn), nn.GELU(), nn.Linear(ffn, width))

    def forward(self, x, key_valid):
        x = x + self.attn(self.ln1(x), key_valid)
        return x + self.ff(self.ln2(x))


@dataclass
class Batch:
    """Padded model inputs for ``B`` utterances (``T`` frames, ``N`` tokens)."""

    tokens: torch.Tensor       # (B, N) long
    d: torch.Tensor            # (B, N) frames, float
    p: torch.Tensor
    md: torch.Tensor
    mp: torch.Tensor
    frame_token: torch.Tensor  # (B, T) long index into N
    offsets: torch.Tensor      # (B, T, 2)
    frame_valid: torch.Tensor  # (B, T) bool
    gen_mask: torch.Tensor     # (B, T) float, 1 = frame to generate
    context: torch.Tensor      # (B, T, F), zero on generated frames
    use_track: bool = True

    def to(self, dtype) -> "Batch":
        kw = {}
        for name in ("d", "p", "md", "mp", "offsets", "gen_mask", "context"):
            kw[name] = getattr(self, name).to(dtype)
        return Batch(self.tokens, frame_token=self.frame_token, frame_valid=self.frame_valid,
                     use_track=self.use_track, **kw)


class GeneratorNet(nn.Module):
    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        c = self.config = config
        self.token_emb = nn.Embedding(c.n_tokens, c.width)
        self.conditioner = TimingConditioner(c.width, c.enc_hidden, c.scale_d, c.scale_p)
        self.in_proj = nn.Linear(2 * c.feat_dim + 1 + 2, c.width)
        self.h_proj = nn.Linear(c.width, c.width)
        self.time_mlp = nn.Sequential(nn.Linear(c.time_dim, c.width), nn.SiLU(), nn.Linear(c.width, c.width))
        self.blocks = nn.ModuleList(Block(c.width, c.heads, c.ffn) for _ in range(c.depth))
        self.ln_out = nn.LayerNorm(c.width)
        self.out = nn.Linear(c.width, c.feat_dim)

    def text_condition(self, batch: Batch) -> torch.Tensor:
        emb = self.token_emb(batch.tokens)
        if batch.use_track:
            emb = self.conditioner(emb, batch.d, batch.p, batch.md, batch.mp)
        return emb

    def forward(self, xt: torch.Tensor, t: torch.Tensor, batch: Batch) -> torch.Tensor:
        h = self.text_condition(batch)
        h = torch.gather(h, 1, batch.frame_token[..., None].expand(-1, -1, h.shape[-1]))
        frames = torch.cat([xt, batch.context, batch.gen_mask[..., None], batch.offsets], dim=-1)
        T = xt.shape[1]
        pos = sinusoidal(torch.arange(T, dtype=xt.dtype), self.config.width)
        x = self.in_proj(frames) + self.h_proj(h) + pos
        x = x + self.time_mlp(sinusoidal(t * 1000.0, self.config.time_dim))[:, None, :]
        for blk in self.blocks:
            x = blk(x, batch.frame_valid)
        return self.out(self.ln_out(x))


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


# --- batching --------------------------------------------------------------------------

@dataclass
class Item:
    """One utterance as the generator sees it."""

    tokens: Sequence[int]
    track: TimingTrack | None  # conditioning track (may be partly masked); None = spontaneous
    total_frames: int
    context: np.ndarray        # (total_frames, F), real audio where gen_mask == 0
    gen_mask: np.ndarray       # (total_frames,)


def collate(items: Sequence[Item], feat_dim: int, dtype=torch.float32) -> Batch:
    B = len(items)
    N = max(len(it.tokens) for it in items)
    T = max(it.total_frames for it in items)
    tokens = torch.zeros(B, N, dtype=torch.long)
    tim = torch.zeros(4, B, N, dtype=torch.float64)
    frame_token = torch.zeros(B, T, dtype=torch.long)
    offsets = torch.zeros(B, T, 2, dtype=torch.float64)
    valid = torch.zeros(B, T, dtype=torch.bool)
    gen = torch.zeros(B, T, dtype=torch.float64)
    ctx = torch.zeros(B, T, feat_dim, dtype=torch.float64)
    use_track = any(it.track is not None for it in items)
    for b, it in enumerate(items):
        n, L = len(it.tokens), it.total_frames
        tokens[b, :n] = torch.as_tensor(list(it.tokens))
        if it.track is not None:
            if len(it.track) != n:
                raise ValueError("track length does not match the token sequence")
            arrs = (it.track.content, it.track.pause, it.track.content_mask, it.track.pause_mask)
            for k, a in enumerate(arrs):
                tim[k, b, :n] = torch.as_tensor(a, dtype=torch.float64)
            lengths = frame_layout(L, *arrs)
        else:
            lengths = frame_layout(L, np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))
        idx, offs = expand_layout(lengths)
        frame_token[b, :L] = torch.as_tensor(idx)
        offsets[b, :L] = torch.as_tensor(offs)
        valid[b, :L] = True
        gen[b, :L] = torch.as_tensor(np.asarray(it.gen_mask, dtype=np.float64))
        ctx[b, :L] = torch.as_tensor(np.asarray(it.context, dtype=np.float64)) * (1 - gen[b, :L, None])
    return Batch(tokens, tim[0], tim[1], tim[2], tim[3], frame_token, offsets, valid, gen, ctx, use_track).to(dtype)


# --- sampling ----------------------------------------------------------------------

@torch.no_grad()
def sample_batch(net: GeneratorNet, items: Sequence[Item], n_steps: int = 16, seed: int = 0,
                 item_keys: Sequence[int] | None = None) -> list[np.ndarray]:
    """Euler integration from noise; context frames are copied into the output.

    Noise for item ``b`` comes from its own generator seeded
    ``(seed, item_keys[b])`` (``item_keys`` defaults to the batch index), so
    an output does not depend on which other items share its batch.  Noise
    is drawn row by row: a longer item with the same key shares its prefix.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    keys = range(len(items)) if item_keys is None else list(item_keys)
    if len(keys) != len(items):
        raise ValueError("need one key per item")
    dtype = next(net.parameters()).dtype
    batch = collate(items, net.config.feat_dim, dtype)
    B, T = batch.frame_valid.shape
    x = torch.zeros(B, T, net.config.feat_dim, dtype=dtype)
    for b, (it, key) in enumerate(zip(items, keys)):
        noise = np.random.default_rng([seed, int(key)]).standard_normal((it.total_frames, net.config.feat_dim))
        x[b, : it.total_frames] = torch.as_tensor(noise, dtype=dtype)
    dt = 1.0 / n_steps
    for k in range(n_steps):
        t = torch.full((B,), k * dt, dtype=dtype)
        x = x + dt * net(x, t, batch)
    gen = batch.gen_mask[..., None]
    x = gen * x + (1 - gen) * batch.context
    return [x[b, : it.total_frames].double().numpy() for b, it in enumerate(items)]


def sample(net: GeneratorNet, tokens: Sequence[int], track: TimingTrack | None = None,
           context: np.ndarray | None = None, n_steps: int = 16, seed: int = 0,
           total_frames: int | None = None) -> np.ndarray:
    """Generate one utterance.

    Controlled mode (``track`` given) produces exactly ``track.total_span``
    frames; spontaneous mode needs ``total_frames``.  ``context`` holds real
    frames for a prefix of the output and is left untouched.
    """
    if track is not None:
        if len(track) != len(tokens):
            raise ValueError("track length does not match the token sequence")
        L = track.total_span if track.content_mask.all() and track.pause_mask.all() else total_frames
        if total_frames is not None and L != total_frames:
            raise ValueError(f"track spans {track.total_span} frames, {total_frames} requested")
    else:
        L = total_frames
    if L is None:
        raise ValueError("total_frames is required without a complete timing track")
    F_ = net.config.feat_dim
    gen_mask = np.ones(L)
    ctx = np.zeros((L, F_))
    if context is not None:
        c = len(context)
        if c > L:
            raise ValueError("context is longer than the requested output")
        gen_mask[:c] = 0
        ctx[:c] = context
    return sample_batch(net, [Item(tokens, track, L, ctx, gen_mask)], n_steps, seed)[0]
