"""Zero-corrected timing residuals added to token embeddings.

For token ``i`` with content duration ``d`` and pause ``p`` (frames)::

    e~_i = e_i + a_d * m_d * (g_d(log(1 + s_d d)) - g_d(0))
               + a_p * m_p * (g_p(log(1 + s_p p)) - g_p(0))

``g_d`` and ``g_p`` are independent two-layer MLPs, ``m`` are availability
masks and the scalar gates ``a_d``, ``a_p`` start at exactly zero, so an
untrained conditioner leaves the embeddings untouched.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F


class TimingEncoder(nn.Module):
    """Scalar-to-vector MLP ``R -> R^hidden -> R^embed_dim``."""

    def __init__(self, embed_dim: int, hidden: int = 64):
        super().__init__()
        self.w1 = nn.Parameter(torch.randn(hidden) * 0.5)
        self.b1 = nn.Parameter(torch.randn(hidden) * 0.5)
        # an output bias would cancel in g(x) - g(0), so there is none
        self.w2 = nn.Parameter(torch.randn(embed_dim, hidden) / math.sqrt(hidden))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.silu(x[..., None] * self.w1 + self.b1) @ self.w2.T

    def centered(self, x: torch.Tensor) -> torch.Tensor:
        """``g(x) - g(0)``, bit-exact zero wherever ``x == 0``.

        The difference is taken in the hidden layer, where ``0 * w1 + b1``
        reproduces ``b1`` exactly.  ``g(0)`` is evaluated on a tensor of the
        same shape, since vectorized and scalar activation kernels can round
        differently for the same input.
        """
        pre = x[..., None] * self.w1 + self.b1
        h = F.silu(pre) - F.silu(self.b1.expand_as(pre).contiguous())
        return h @ self.w2.T


def timing_residual(v: torch.Tensor, m: torch.Tensor, enc: TimingEncoder, scale: float = 1.0) -> torch.Tensor:
    """``m * (enc(log(1 + scale * v)) - enc(0))`` for frame counts ``v``."""
    if scale <= 0:
        raise ValueError("log scale must be positive")
    if (v < 0).any():
        raise ValueError("timing values must be non-negative")
    out = m[..., None] * enc.centered(torch.log1p(scale * v))
    if not torch.isfinite(out).all():
        raise FloatingPointError("timing encoder produced non-finite output")
    return out


def inject(e: torch.Tensor, d_res: torch.Tensor, p_res: torch.Tensor,
           alpha_d: torch.Tensor, alpha_p: torch.Tensor) -> torch.Tensor:
    if e.shape != d_res.shape or e.shape != p_res.shape:
        raise ValueError(
            f"embedding {tuple(e.shape)} and residuals {tuple(d_res.shape)}, "
            f"{tuple(p_res.shape)} must match"
        )
    return e + alpha_d * d_res + alpha_p * p_res


class TimingConditioner(nn.Module):
    def __init__(self, embed_dim: int, hidden: int = 64, scale_d: float = 1.0, scale_p: float = 1.0):
        super().__init__()
        self.enc_d = TimingEncoder(embed_dim, hidden)
        self.enc_p = TimingEncoder(embed_dim, hidden)
        self.alpha_d = nn.Parameter(torch.zeros(()))
        self.alpha_p = nn.Parameter(torch.zeros(()))
        self.scale_d = float(scale_d)
        self.scale_p = float(scale_p)

    def residuals(self, d, p, md, mp):
        return (
            timing_residual(d, md, self.enc_d, self.scale_d),
            timing_residual(p, mp, self.enc_p, self.scale_p),
        )

    def forward(self, emb, d=None, p=None, md=None, mp=None):
        """Condition ``emb`` (``(..., N, E)``); with no track the input is returned as is."""
        if d is None:
            return emb
        d_res, p_res = self.residuals(d, p, md, mp)
        return inject(emb, d_res, p_res, self.alpha_d, self.alpha_p)


def conditioner_backward(cond: TimingConditioner, emb, d, p, md, mp, upstream) -> dict[str, torch.Tensor]:
    """Gradients of ``<upstream, cond(emb, ...)>`` w.r.t. every parameter and ``emb``."""
    emb = emb.detach().requires_grad_(True)
    out = cond(emb, d, p, md, mp)
    names, params = zip(*cond.named_parameters())
    grads = torch.autograd.grad(out, (emb, *params), grad_outputs=upstream, allow_unused=True)
    result = {"emb": grads[0]}
    for name, param, g in zip(names, params, grads[1:]):
        result[name] = torch.zeros_like(param) if g is None else g
    return result


class GateTelemetry:
    """Exponential moving average of ``|alpha_d|`` and ``|alpha_p|``.

    ``new = smoothing * previous + (1 - smoothing) * current``; the first
    observation initialises the average.
    """

    def __init__(self, smoothing: float = 0.6):
        if not 0.0 <= smoothing < 1.0:
            raise ValueError("smoothing must lie in [0, 1)")
        self.smoothing = smoothing
        self.last_step: int | None = None
        self.value: tuple[float, float] | None = None
        self.rows: list[tuple[int, float, float]] = []

    def update(self, step: int, alpha_d: float, alpha_p: float) -> tuple[float, float]:
        if self.last_step is not None and step <= self.last_step:
            raise ValueError("telemetry steps must increase")
        cur = (abs(float(alpha_d)), abs(float(alpha_p)))
        if self.value is None:
            self.value = cur
        else:
            lam = self.smoothing
            self.value = tuple(lam * a + (1 - lam) * b for a, b in zip(self.value, cur))
        self.last_step = step
        self.rows.append((step, *self.value))
        return self.value
