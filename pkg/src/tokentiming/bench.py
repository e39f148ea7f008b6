"""Synthesize, realign and score: the timing-following and edit benchmarks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .build import mask_prompt_region
from .editing import Scenario
from .flow import GeneratorNet, Item, sample_batch
from .metrics import (
    EditCase,
    EmptyScoredSet,
    EvalReport,
    TimingComparison,
    baseline_bias,
    neighbor_drift,
    span_ms,
    span_ratio,
    strict_filter,
    timing_columns,
    timing_report_row,
)
from .track import TimingTrack, frames_to_ms
from .world import AlignmentFailure, Utterance, World, oracle_align, render

MODES = ("controlled", "spontaneous")
COND_FORMATS = ("full", "target_only")


@dataclass(frozen=True)
class EvalConfig:
    """Settings for one timing-following evaluation.

    The first ``prompt_tokens`` tokens of every utterance are given as real
    frames and are not scored.  ``target_only`` hides their timing from the
    conditioning track.
    """

    mode: str = "controlled"
    cond_format: str = "full"
    prompt_tokens: int = 2
    n_steps: int = 16
    seed: int = 0
    thresholds_ms: tuple[float, ...] = (50.0, 100.0)
    batch_size: int = 25

    def __post_init__(self):
        object.__setattr__(self, "thresholds_ms", tuple(float(t) for t in self.thresholds_ms))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.cond_format not in COND_FORMATS:
            raise ValueError(f"cond_format must be one of {COND_FORMATS}")
        if self.prompt_tokens < 0 or self.n_steps < 1 or self.batch_size < 1:
            raise ValueError("prompt_tokens >= 0, n_steps >= 1 and batch_size >= 1 required")

    @property
    def name(self) -> str:
        return "spontaneous" if self.mode == "spontaneous" else f"controlled/{self.cond_format}"


def _align(feats: np.ndarray, tokens: Sequence[int], world: World) -> TimingTrack | None:
    try:
        return oracle_align(feats, tokens, world)
    except AlignmentFailure:
        return None


def _run(net: GeneratorNet, items: list[Item], keys: list[int], seed: int, n_steps: int,
         batch_size: int) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for i in range(0, len(items), batch_size):
        out += sample_batch(net, items[i:i + batch_size], n_steps, seed, keys[i:i + batch_size])
    return out


def evaluate_timing(net: GeneratorNet, world: World, utts: Sequence[Utterance],
                    config: EvalConfig = EvalConfig()) -> list[TimingComparison]:
    """One comparison per utterance; failed alignments are kept and flagged."""
    if not utts:
        raise ValueError("empty test set")
    items, keys = [], []
    for k, utt in enumerate(utts):
        track = utt.track
        k_prompt = min(config.prompt_tokens, len(track) - 1)
        prompt_frames = int((track.content[:k_prompt] + track.pause[:k_prompt]).sum())
        T = track.total_span
        real = render(track, world, seed=int(np.random.SeedSequence([config.seed, k, 7]).generate_state(1)[0]))
        gen_mask = np.ones(T)
        gen_mask[:prompt_frames] = 0.0
        if config.mode == "spontaneous":
            cond = None
        elif config.cond_format == "target_only":
            cond = mask_prompt_region(track, k_prompt)
        else:
            cond = track
        items.append(Item(track.tokens, cond, T, real, gen_mask))
        keys.append(k)
    outs = _run(net, items, keys, config.seed, config.n_steps, config.batch_size)
    cmps = []
    for utt, feats in zip(utts, outs):
        k_prompt = min(config.prompt_tokens, len(utt.track) - 1)
        realized = _align(feats, utt.tokens, world)
        cmps.append(TimingComparison.from_tracks(utt.utterance_id, utt.track, realized, slice(k_prompt, None)))
    return cmps


def timing_report(results: Sequence[tuple[EvalConfig, Sequence[TimingComparison]]],
                  header: dict | None = None) -> EvalReport:
    thresholds = results[0][0].thresholds_ms if results else (50.0, 100.0)
    report = EvalReport("timing following", timing_columns(thresholds), header=dict(header or {}))
    report.header.setdefault("pooling", "tokens")
    report.header.setdefault("thresholds_ms", ",".join(f"{t:g}" for t in thresholds))
    for cfg, cmps in results:
        report.add(**timing_report_row(cfg.name, cmps, cfg.thresholds_ms))
    return report


# --- edits ------------------------------------------------------------------------

def realize_cases(net: GeneratorNet, world: World, cases: Sequence[EditCase], seed: int = 0,
                  n_steps: int = 16, batch_size: int = 25) -> list[EditCase]:
    """Synthesize baseline and edited tracks of every case with shared noise.

    Both runs of case ``k`` draw noise under key ``k``, so they start from
    the same noise wherever their frames overlap.
    """
    items, keys = [], []
    for k, case in enumerate(cases):
        for track in (case.baseline, case.edited):
            T = track.total_span
            items.append(Item(track.tokens, track, T, np.zeros((T, world.config.n_channels)), np.ones(T)))
            keys.append(k)
    outs = _run(net, items, keys, seed, n_steps, batch_size)
    done = []
    for k, case in enumerate(cases):
        base = _align(outs[2 * k], case.baseline.tokens, world)
        edit = _align(outs[2 * k + 1], case.edited.tokens, world)
        done.append(case.with_realizations(base, edit))
    return done


@dataclass(frozen=True)
class ScenarioSummary:
    """Headline numbers of the scenario benchmark.

    ``baseline_error`` is the mean absolute gap between realized and target
    content duration over every non-punctuation token of the baseline runs;
    ``progress`` and ``drift`` are per edit group (``content``/``pause``).
    """

    baseline_target_ms: float
    baseline_error_ms: float
    progress: dict
    drift_ms: dict
    magnitude_ms: dict
    failures: int


def scenario_summary(scenarios: Sequence[Scenario], cases: Sequence[EditCase]) -> ScenarioSummary:
    by_name = {s.name: s for s in scenarios}
    errs, targets = [], []
    drift: dict[str, list[float]] = {}
    seen = set()
    failures = 0
    for case in cases:
        if not case.realized:
            failures += 1
            continue
        sc = by_name[case.tags["scenario"]]
        if sc.name not in seen:
            seen.add(sc.name)
            content = ~np.asarray(sc.punct)
            tgt = frames_to_ms(case.baseline.content[content], case.baseline.frame_rate)
            real = frames_to_ms(case.realized_baseline.content[content], case.baseline.frame_rate)
            errs.extend(np.abs(real - tgt))
            targets.extend(tgt)
        group = "pause" if case.is_pause else "content"
        drift.setdefault(group, []).append(neighbor_drift(case))
    if not errs:
        return ScenarioSummary(math.nan, math.nan, {}, {}, {}, failures)
    rows = baseline_bias(cases)
    return ScenarioSummary(
        float(np.mean(targets)),
        float(np.mean(errs)),
        {g: r.progress for g, r in rows.items()},
        {g: float(np.mean(v)) for g, v in drift.items()},
        {g: abs(r.edit_target - r.base_target) for g, r in rows.items()},
        failures,
    )


def scenario_report(scenarios: Sequence[Scenario], cases: Sequence[EditCase], header: dict | None = None) -> EvalReport:
    cols = ["type", "n", "base_target", "base_mean", "edit_target", "edit_mean", "abs_bias", "progress", "drift"]
    report = EvalReport("scenario edits", cols, header=dict(header or {}))
    summary = scenario_summary(scenarios, cases)
    report.header["baseline_content_error_ms"] = summary.baseline_error_ms
    report.header["alignment_failures"] = summary.failures
    try:
        rows = baseline_bias(cases)
    except EmptyScoredSet:
        rows = {}
    for group in ("content", "pause"):
        row = rows.get(group)
        if row is None:
            report.add(type=group, n=0, base_target=math.nan, base_mean=math.nan, edit_target=math.nan,
                       edit_mean=math.nan, abs_bias=math.nan, progress=math.nan, drift=math.nan)
            continue
        report.add(type=group, n=row.n, base_target=row.base_target, base_mean=row.base_mean,
                   edit_target=row.edit_target, edit_mean=row.edit_mean, abs_bias=row.abs_bias,
                   progress=row.progress, drift=summary.drift_ms.get(group, math.nan))
    return report


def stress_report(cases: Sequence[EditCase], strict: bool = True, tolerance_ms: float = 0.0,
                  header: dict | None = None) -> EvalReport:
    """Per-condition retained count, realized value, error and neighbour drift.

    Pause conditions report the realized pause in ms; content conditions
    report the realized span factor.  Excluded conditions are listed but
    marked.
    """
    cols = ["condition", "kind", "target", "n", "retained", "realized", "error_ms", "drift_ms", "excluded"]
    report = EvalReport("stress edits", cols, header=dict(header or {}))
    report.header["strict"] = int(strict)
    report.header["tolerance_ms"] = float(tolerance_ms)
    groups: dict[str, list[EditCase]] = {}
    for case in cases:
        groups.setdefault(case.tags.get("condition", case.kind), []).append(case)
    for cond, group in groups.items():
        first = group[0]
        kept = [c for c in group if c.realized and (not strict or strict_filter(c, tolerance_ms=tolerance_ms))]
        realized = error = drift = math.nan
        if kept:
            if first.is_pause:
                vals = np.array([float(c.values_ms(c.realized_edited)[0]) for c in kept])
                tgts = np.array([float(c.values_ms(c.edited)[0]) for c in kept])
                realized = float(vals.mean())
                error = float(np.mean(np.abs(vals - tgts)))
                drift = float(np.nanmean([span_ratio(c).neighbor_drift_ms for c in kept]))
            else:
                ratios = [span_ratio(c) for c in kept if span_ms(c.realized_baseline, c.span) > 0]
                if ratios:
                    realized = float(np.mean([r.realized_factor for r in ratios]))
                    error = float(np.mean([r.error_ms for r in ratios]))
                    drift = float(np.nanmean([r.neighbor_drift_ms for r in ratios]))
        report.add(condition=cond, kind=first.kind, target=float(first.value), n=len(group),
                   retained=len(kept), realized=realized, error_ms=error, drift_ms=drift,
                   excluded=int(first.excluded))
    return report


def config_header(**sections) -> dict:
    """Flatten dataclass configs into ``section.field`` header entries."""
    out = {}
    for name, obj in sections.items():
        items = asdict(obj).items() if hasattr(obj, "__dataclass_fields__") else dict(obj).items()
        for k, v in items:
            out[f"{name}.{k}"] = ",".join(f"{x:g}" for x in v) if isinstance(v, tuple) else v
    return out
