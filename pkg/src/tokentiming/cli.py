"""``tokentiming`` command line: crossval, gen-corpus, train, eval, edit-bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Relative paths are resolved against ``$TOKENTIMING_DATA`` when it is set.
A ``--config`` JSON file supplies defaults for any flag (keyed by the
flag's long name, dashes or underscores); flags given on the command line
win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import bench, checkpoint
from .align import AlignmentParseError, parse_textgrid, parse_word_alignment
from .crossval import FilterConfig, corpus_stats, filter_alignments, format_stats, format_verdict
from .editing import StressConfig, format_manifest, scenario_suite, stress_suite
from .flow import GeneratorConfig, NonFiniteLossError
from .track import FrameRate, TrackParseError, deserialize_track, serialize_track
from .training import LOG_HEADER, Trainer, TrainConfig, load_generator
from .world import Utterance, World, WorldConfig, gen_corpus, render, write_features

DATA_ENV = "TOKENTIMING_DATA"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def data_path(p: str | Path) -> Path:
    p = Path(p)
    root = os.environ.get(DATA_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("need at least one value")
    return vals


# --- corpus directories -----------------------------------------------------------

def write_corpus(root: Path, world: World, utts: Sequence[Utterance], feature_seed: int) -> None:
    """``world.json``, ``train.list``, ``test.list`` and per-utterance track/feature files."""
    root.mkdir(parents=True, exist_ok=True)
    (root / "world.json").write_text(world.to_json() + "\n")
    (root / "tracks").mkdir(exist_ok=True)
    (root / "features").mkdir(exist_ok=True)
    lists = {"train": [], "test": []}
    for k, u in enumerate(utts):
        (root / "tracks" / f"{u.utterance_id}.track").write_bytes(serialize_track(u.track))
        write_features(root / "features" / f"{u.utterance_id}.feat", render(u.track, world, seed=feature_seed + k))
        lists["test" if u.heldout else "train"].append(u.utterance_id)
    for name, ids in lists.items():
        (root / f"{name}.list").write_text("".join(f"{i}\n" for i in ids))


def read_corpus(root: Path, split: str) -> tuple[World, list[Utterance]]:
    if not (root / "world.json").is_file():
        raise DataError(f"{root}: not a corpus directory (world.json missing)")
    world = World.from_json((root / "world.json").read_text())
    list_file = root / f"{split}.list"
    if not list_file.is_file():
        raise DataError(f"{list_file}: missing")
    utts = []
    for uid in list_file.read_text().split():
        path = root / "tracks" / f"{uid}.track"
        try:
            track = deserialize_track(path.read_bytes())
        except FileNotFoundError:
            raise DataError(f"{path}: missing") from None
        except TrackParseError as exc:
            raise DataError(f"{path}: {exc}") from None
        utts.append(Utterance(uid, track, split == "test"))
    return world, utts


# --- subcommands ------------------------------------------------------------------

def _parse_file(path: Path, parse):
    try:
        return parse(path.read_bytes())
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    except AlignmentParseError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_crossval(args) -> int:
    """Manifest lines: ``utterance_id  word_records_path  textgrid_path`` (``-`` = missing)."""
    manifest = data_path(args.manifest)
    try:
        lines = manifest.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"{manifest}: {exc.strerror}") from None
    rate = FrameRate(args.fps)
    cfg = FilterConfig(args.delta_ms)
    verdicts = []
    out = []
    for no, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{manifest}:{no}: expected 3 tab-separated fields")
        uid, pa, pb = parts
        if "-" in (pa, pb):
            verdicts.append(None)
            out.append(format_verdict(uid, None))
            continue
        path_a, path_b = manifest.parent / pa, manifest.parent / pb
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            seq_a = _parse_file(path_a, lambda raw: parse_word_alignment(raw, rate))
        seq_b = _parse_file(path_b, lambda raw: parse_textgrid(raw, args.tier, uid))
        text = seq_a.text if seq_a.text is not None else " ".join(w.surface for w in seq_a.words)
        v = filter_alignments(seq_a, seq_b, text, cfg)
        verdicts.append(v)
        out.append(format_verdict(uid, v))
    stats = corpus_stats(verdicts)
    body = f"# delta_ms={args.delta_ms:g}\n" + "".join(f"{o}\n" for o in out) + format_stats(stats)
    _emit(body, args.out)
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    fields = {k: v for k, v in (args.world or {}).items()}
    fields.setdefault("fps", args.fps)
    try:
        world = World(WorldConfig(**fields))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad world config: {exc}") from None
    utts = gen_corpus(world, args.n_train + args.n_test, args.seed, args.n_test)
    write_corpus(data_path(args.out), world, utts, feature_seed=args.seed)
    print(f"wrote {args.n_train} train and {args.n_test} test utterances to {data_path(args.out)}")
    return EXIT_OK


def cmd_train(args) -> int:
    world, utts = read_corpus(data_path(args.corpus), "train")
    if not utts:
        raise DataError("training list is empty")
    ckpt = data_path(args.out)
    log_path = data_path(args.log) if args.log else ckpt.with_suffix(".log.tsv")
    cfg = TrainConfig(steps=args.steps, batch_size=args.batch_size, lr=args.lr, dropout=args.dropout,
                      seed=args.seed, log_every=args.log_every)
    if args.resume and ckpt.exists():
        trainer = Trainer.load(ckpt, utts, cfg)
    else:
        c = world.config
        net_cfg = GeneratorConfig(**{"n_tokens": c.n_tokens, "feat_dim": c.n_channels, **(args.net or {})})
        trainer = Trainer(world, utts, cfg, net_cfg)

    def flush_log():
        log_path.write_text(LOG_HEADER + "\n" + "".join(f"{row}\n" for row in trainer.log))

    try:
        while trainer.step < cfg.steps:
            trainer.run(until=min(cfg.steps, trainer.step + args.save_every))
            trainer.save(ckpt)
            flush_log()
    except NonFiniteLossError as exc:
        flush_log()
        print(f"error: {exc} at step {trainer.step}", file=sys.stderr)
        return EXIT_NUMERIC
    flush_log()
    print(f"trained to step {trainer.step}; checkpoint {ckpt}; log {log_path}")
    return EXIT_OK


def _load_ckpt(path: Path):
    if not path.is_file():
        raise DataError(f"{path}: checkpoint not found")
    try:
        return load_generator(path)
    except checkpoint.CheckpointError as exc:
        raise DataError(f"{path}: {exc}") from None


def _choices(value: str, allowed: Sequence[str]) -> list[str]:
    return list(allowed) if value == "both" else [value]


def cmd_eval(args) -> int:
    net, world, meta = _load_ckpt(data_path(args.checkpoint))
    _, utts = read_corpus(data_path(args.corpus), "test")
    if not utts:
        raise DataError("test list is empty")
    results = []
    for mode in _choices(args.mode, bench.MODES):
        formats = ["full"] if mode == "spontaneous" else _choices(args.cond_format, bench.COND_FORMATS)
        for fmt in formats:
            cfg = bench.EvalConfig(mode, fmt, args.prompt_tokens, args.nfe, args.seed, args.thresholds)
            results.append((cfg, bench.evaluate_timing(net, world, utts, cfg)))
    header = {"checkpoint_step": meta["step"], "seed": args.seed, "nfe": args.nfe,
              "prompt_tokens": args.prompt_tokens, "n_test": len(utts)}
    report = bench.timing_report(results, header)
    _emit_report(report, args)
    return EXIT_OK


def cmd_edit_bench(args) -> int:
    net, world, meta = _load_ckpt(data_path(args.checkpoint))
    header = {"checkpoint_step": meta["step"], "seed": args.seed, "nfe": args.nfe, "suite": args.suite}
    if args.suite == "scenario":
        scenarios = scenario_suite(rate=world.frame_rate)
        cases = [c for s in scenarios for c in s.cases()]
        done = bench.realize_cases(net, world, cases, args.seed, args.nfe)
        report = bench.scenario_report(scenarios, done, header)
    else:
        if not args.corpus:
            raise UsageError("the stress suite needs --corpus")
        _, utts = read_corpus(data_path(args.corpus), "test")
        cases = stress_suite(utts, StressConfig(seed=args.seed))
        if args.manifest_out:
            data_path(args.manifest_out).write_text(format_manifest(cases))
        done = bench.realize_cases(net, world, cases, args.seed, args.nfe)
        report = bench.stress_report(done, strict=args.strict, header=header)
    _emit_report(report, args)
    return EXIT_OK


def _emit(text: str, out: str | None) -> None:
    if out:
        data_path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_report(report, args) -> None:
    sys.stdout.write(report.table())
    if args.out:
        data_path(args.out).write_text(report.records())


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tokentiming", description="Token-level timing control toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file of flag defaults")
        sp.add_argument("--seed", type=int, default=0)
        return sp

    sp = common(sub.add_parser("crossval", help="cross-validate two alignment sources"))
    sp.add_argument("manifest")
    sp.add_argument("--delta-ms", type=float, default=150.0)
    sp.add_argument("--fps", type=float, default=93.75)
    sp.add_argument("--tier", default="words")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_crossval)

    sp = common(sub.add_parser("gen-corpus", help="write a synthetic corpus"))
    sp.add_argument("out")
    sp.add_argument("--n-train", type=int, default=200)
    sp.add_argument("--n-test", type=int, default=50)
    sp.add_argument("--fps", type=float, default=93.75)
    sp.set_defaults(func=cmd_gen_corpus, world=None)

    sp = common(sub.add_parser("train", help="train the generator"))
    sp.add_argument("corpus")
    sp.add_argument("--out", default="model.ckpt")
    sp.add_argument("--log")
    sp.add_argument("--steps", type=int, default=TrainConfig.steps)
    sp.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    sp.add_argument("--lr", type=float, default=TrainConfig.lr)
    sp.add_argument("--dropout", type=float, default=TrainConfig.dropout)
    sp.add_argument("--log-every", type=int, default=TrainConfig.log_every)
    sp.add_argument("--save-every", type=int, default=500)
    sp.add_argument("--resume", action="store_true")
    sp.set_defaults(func=cmd_train, net=None)

    sp = common(sub.add_parser("eval", help="timing-following evaluation"))
    sp.add_argument("checkpoint")
    sp.add_argument("corpus")
    sp.add_argument("--mode", choices=[*bench.MODES, "both"], default="both")
    sp.add_argument("--cond-format", choices=[*bench.COND_FORMATS, "both"], default="full")
    sp.add_argument("--thresholds", type=_floats, default=(50.0, 100.0))
    sp.add_argument("--prompt-tokens", type=int, default=2)
    sp.add_argument("--nfe", type=int, default=16, help="Euler steps")
    sp.add_argument("--out", help="write machine-readable records here")
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("edit-bench", help="scenario or stress edit benchmark"))
    sp.add_argument("checkpoint")
    sp.add_argument("--suite", choices=["scenario", "stress"], default="scenario")
    sp.add_argument("--corpus")
    sp.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--nfe", type=int, default=16)
    sp.add_argument("--manifest-out")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_edit_bench)
    return p


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(data_path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
    known = set(vars(args))
    unknown = sorted(set(defaults) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {unknown}")
    for k in ("thresholds",):
        if k in defaults and isinstance(defaults[k], (list, tuple)):
            defaults[k] = tuple(float(x) for x in defaults[k])
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, NonFiniteLossError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
