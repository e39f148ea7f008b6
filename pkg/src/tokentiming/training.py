"""Toy-scale training loop for the timing-conditioned generator."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from . import checkpoint
from .build import DropoutPolicy, apply_dropout
from .conditioning import GateTelemetry
from .flow import (
    GeneratorConfig,
    GeneratorNet,
    Item,
    NonFiniteLossError,
    cfm_loss,
    collate,
    interpolate,
    target_flow,
)
from .world import Utterance, World, render

LOG_HEADER = "step\tloss\tabs_alpha_d\tabs_alpha_p\tsmooth_abs_alpha_d\tsmooth_abs_alpha_p"


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2500
    batch_size: int = 16
    lr: float = 1e-3
    warmup: int = 200
    min_lr_ratio: float = 0.1
    dropout: float = 0.2
    seed: int = 0
    grad_clip: float = 1.0
    gen_frac_min: float = 0.4
    gen_frac_max: float = 1.0
    log_every: int = 50
    smoothing: float = 0.6

    def lr_at(self, step: int) -> float:
        """Linear warmup, then cosine decay to ``min_lr_ratio * lr``."""
        if step < self.warmup:
            return self.lr * (step + 1) / self.warmup
        span = max(self.steps - self.warmup, 1)
        frac = min((step - self.warmup) / span, 1.0)
        return self.lr * (self.min_lr_ratio + (1 - self.min_lr_ratio) * 0.5 * (1 + math.cos(math.pi * frac)))


def _seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def training_item(utt: Utterance, world: World, rng: np.random.Generator,
                  policy: DropoutPolicy, frac_range=(0.4, 1.0)) -> tuple[Item, np.ndarray]:
    """Render ``x1`` and hide a random suffix of 40-100% of its frames."""
    x1 = render(utt.track, world, seed=int(rng.integers(2**31)))
    T = len(x1)
    n_gen = min(T, max(1, int(round(rng.uniform(*frac_range) * T))))
    gen_mask = np.zeros(T)
    gen_mask[T - n_gen:] = 1.0
    track = apply_dropout(utt.track, policy, utt.utterance_id)
    return Item(utt.tokens, track, T, x1, gen_mask), x1


def train_step(net: GeneratorNet, optimizer: torch.optim.Optimizer, items: Sequence[Item],
               targets: Sequence[np.ndarray], generator: torch.Generator, grad_clip: float = 1.0) -> float:
    """One optimisation step on the masked flow-matching loss; returns the loss."""
    dtype = next(net.parameters()).dtype
    batch = collate(items, net.config.feat_dim, dtype)
    B, T = batch.frame_valid.shape
    x1 = torch.zeros(B, T, net.config.feat_dim, dtype=dtype)
    for b, tgt in enumerate(targets):
        x1[b, : len(tgt)] = torch.as_tensor(tgt, dtype=dtype)
    x0 = torch.randn(x1.shape, generator=generator, dtype=dtype)
    t = torch.rand(B, generator=generator, dtype=dtype)
    xt = interpolate(x0, x1, t)
    u = target_flow(x0, x1)
    loss = cfm_loss(net(xt, t, batch), u, batch.gen_mask * batch.frame_valid)
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"loss became {float(loss.detach())}")
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if grad_clip:
        torch.nn.utils.clip_grad_norm_(net.parameters(), grad_clip)
    optimizer.step()
    return float(loss.detach())


@dataclass
class Trainer:
    """Owns the network, the optimiser and the log.

    Every step draws its batch from generators keyed by ``(seed, step)``, so
    a run resumed from a checkpoint continues exactly as if uninterrupted.
    """

    world: World
    corpus: Sequence[Utterance]
    config: TrainConfig = field(default_factory=TrainConfig)
    net_config: GeneratorConfig | None = None
    net: GeneratorNet | None = None
    step: int = 0
    log: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.corpus:
            raise ValueError("training corpus is empty")
        if self.net_config is None:
            c = self.world.config
            self.net_config = GeneratorConfig(n_tokens=c.n_tokens, feat_dim=c.n_channels)
        if self.net is None:
            torch.manual_seed(_seed(self.config.seed, 0xC0FFEE))
            self.net = GeneratorNet(self.net_config)
        self.optimizer = torch.optim.Adam(self.net.parameters(), lr=self.config.lr)
        self.telemetry = GateTelemetry(self.config.smoothing)

    def train_step(self) -> float:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, self.step])
        policy = DropoutPolicy(cfg.dropout, _seed(cfg.seed, self.step, 1))
        picks = rng.integers(len(self.corpus), size=cfg.batch_size)
        pairs = [training_item(self.corpus[k], self.world, rng, policy, (cfg.gen_frac_min, cfg.gen_frac_max))
                 for k in picks]
        for group in self.optimizer.param_groups:
            group["lr"] = cfg.lr_at(self.step)
        gen = torch.Generator().manual_seed(_seed(cfg.seed, self.step, 2))
        loss = train_step(self.net, self.optimizer, [p[0] for p in pairs], [p[1] for p in pairs],
                          gen, cfg.grad_clip)
        self.step += 1
        cond = self.net.conditioner
        a_d, a_p = float(cond.alpha_d.detach()), float(cond.alpha_p.detach())
        s_d, s_p = self.telemetry.update(self.step, a_d, a_p)
        if self.step % cfg.log_every == 0 or self.step == cfg.steps:
            self.log.append(f"{self.step}\t{loss:.6f}\t{abs(a_d):.6f}\t{abs(a_p):.6f}\t{s_d:.6f}\t{s_p:.6f}")
        return loss

    def run(self, until: int | None = None, callback: Callable[[int, float], None] | None = None) -> None:
        until = self.config.steps if until is None else until
        while self.step < until:
            loss = self.train_step()
            if callback is not None:
                callback(self.step, loss)

    # --- persistence -------------------------------------------------------------------

    def state(self) -> tuple[dict[str, np.ndarray], dict]:
        tensors = {f"net.{k}": v.detach().cpu().numpy() for k, v in self.net.state_dict().items()}
        opt = self.optimizer.state_dict()
        for idx, st in opt["state"].items():
            for key, val in st.items():
                tensors[f"opt.{idx}.{key}"] = torch.as_tensor(val).detach().cpu().numpy()
        meta = {
            "step": self.step,
            "train_config": asdict(self.config),
            "net_config": self.net_config.to_dict(),
            "world": asdict(self.world.config),
            "log": self.log,
            "telemetry": {
                "last_step": self.telemetry.last_step,
                "value": list(self.telemetry.value) if self.telemetry.value else None,
            },
        }
        return tensors, meta

    def save(self, path) -> None:
        tensors, meta = self.state()
        checkpoint.save(path, tensors, meta)

    @classmethod
    def load(cls, path, corpus: Sequence[Utterance], config: TrainConfig | None = None) -> "Trainer":
        from .world import WorldConfig

        tensors, meta = checkpoint.load(path)
        world = World(WorldConfig(**meta["world"]))
        net_config = GeneratorConfig(**meta["net_config"])
        config = config or TrainConfig(**meta["train_config"])
        net = load_net_from_tensors(tensors, net_config)
        trainer = cls(world, corpus, config, net_config, net, meta["step"], list(meta["log"]))
        opt_state = trainer.optimizer.state_dict()
        for name, arr in tensors.items():
            if not name.startswith("opt."):
                continue
            _, idx, key = name.split(".", 2)
            opt_state["state"].setdefault(int(idx), {})[key] = torch.from_numpy(arr.copy())
        trainer.optimizer.load_state_dict(opt_state)
        tel = meta.get("telemetry") or {}
        trainer.telemetry.last_step = tel.get("last_step")
        trainer.telemetry.value = tuple(tel["value"]) if tel.get("value") else None
        return trainer


def load_net_from_tensors(tensors: dict[str, np.ndarray], net_config: GeneratorConfig) -> GeneratorNet:
    net = GeneratorNet(net_config)
    state = {k[len("net."):]: torch.from_numpy(v.copy()) for k, v in tensors.items() if k.startswith("net.")}
    net.load_state_dict(state)
    return net


def load_generator(path) -> tuple[GeneratorNet, World, dict]:
    """Network and world from a checkpoint, ready for inference."""
    from .world import WorldConfig

    tensors, meta = checkpoint.load(path)
    net = load_net_from_tensors(tensors, GeneratorConfig(**meta["net_config"]))
    net.eval()
    return net, World(WorldConfig(**meta["world"])), meta
