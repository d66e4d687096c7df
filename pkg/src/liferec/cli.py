"""``liferec`` command line: run, eval, expand, gen-strokes.

Exit codes: 0 success (a run that ends in a planned failure still exits 0),
2 config or usage error, 3 data or checkpoint error, 4 internal error.
``LIFEREC_OUT`` overrides ``run --out``.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PRESETS, CliConfig, config_to_text, load_config, parse_value
from .errors import CheckpointError, ConfigError, ContractError, DataError
from .expand import NoiseSpec, widen_lstm
from .harness import STREAM_EXPAND, STREAM_STROKES, CurriculumRunner, emit_reports, eval_batches, evaluate_all, stream_rng
from .tasks import MAX_LEVEL, synth_strokes, write_strokes

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("liferec")


def _parse_levels(text: str):
    try:
        a, b = (int(x) for x in text.split(".."))
    except ValueError:
        raise ConfigError("levels", f"expected A..B, got {text!r}") from None
    if not 1 <= a <= b <= MAX_LEVEL:
        raise ConfigError("levels", f"need 1 <= A <= B <= {MAX_LEVEL}, got {text}")
    return range(a, b + 1)


def _parse_overrides(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, val = (s.strip() for s in item.split("=", 1))
        out[key] = parse_value(key, val)
    return out


def cmd_run(args) -> int:
    overrides = _parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = load_config(args.config, overrides)
    out = Path(os.environ.get("LIFEREC_OUT") or args.out)
    cli = CliConfig(config, out, args.run_id or f"{config.distribution}-s{config.seed}", args.verbose)
    cli.out_dir.mkdir(parents=True, exist_ok=True)
    (cli.out_dir / "config.txt").write_text(config_to_text(config), encoding="utf-8")

    if args.resume:
        runner = load_checkpoint(args.resume)
        if runner.config != config:
            raise ConfigError("config", f"{args.resume} was written with a different config")
    else:
        runner = CurriculumRunner(config, cli.run_id)
    ckpt = cli.out_dir / "checkpoint.bin"
    while not runner.done:
        runner.run(max_batches=args.checkpoint_every)
        save_checkpoint(runner, ckpt)
    paths = emit_reports(runner.log, cli.out_dir)
    print(paths["summary"].read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    runner = load_checkpoint(args.checkpoint)
    levels = _parse_levels(args.levels)
    accs = evaluate_all(runner.params, runner.config, runner.corpus, levels)
    lines = ["level,accuracy"] + [f"{lv},{a:.6f}" for lv, a in zip(levels, accs)]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_expand(args) -> int:
    runner = load_checkpoint(args.checkpoint)
    cfg = runner.config
    if args.hidden <= runner.params.hidden:
        raise ContractError(f"--hidden {args.hidden} must exceed the checkpoint's hidden size {runner.params.hidden}")
    spec = NoiseSpec(mode=args.mode, eta=cfg.eta if args.eta is None else args.eta)
    probes = eval_batches(cfg, min(runner.level, cfg.max_levels), runner.corpus)[:2]
    student, report = widen_lstm(
        runner.params, args.hidden, spec, stream_rng(cfg.seed, STREAM_EXPAND, runner.expansions), probe_batches=probes,
    )
    runner.params = student
    runner.adam.reset()
    runner.log.expansions.append({"level": runner.level, "batches_seen": runner.batches_seen, **report.to_dict()})
    output = Path(args.output) if args.output else Path(args.checkpoint).with_name(
        f"{Path(args.checkpoint).stem}-h{args.hidden}.bin")
    save_checkpoint(runner, output)
    text = report.to_text() + "\n"
    output.with_suffix(".report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    print(f"wrote {output}")
    return EXIT_OK


def cmd_gen_strokes(args) -> int:
    if args.per_class < 1:
        raise ConfigError("per-class", "must be >= 1")
    corpus = synth_strokes(args.per_class, stream_rng(args.seed, STREAM_STROKES))
    header = (
        f"synthetic pen strokes: {args.per_class} per class, seed {args.seed}\n"
        "format: label|dx,dy,eos,eod;dx,dy,eos,eod;..."
    )
    write_strokes(corpus, args.out, header)
    print(f"wrote {len(corpus)} sequences to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liferec", description="Lifelong learning benchmark for recurrent networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one curriculum")
    r.add_argument("--config", required=True, help=f"config file or preset ({', '.join(PRESETS)})")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="runs/latest")
    r.add_argument("--run-id")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    r.add_argument("--resume", metavar="CHECKPOINT")
    r.add_argument("--checkpoint-every", type=int, default=1000, metavar="BATCHES")
    r.add_argument("-v", "--verbose", action="count", default=0)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a range of levels")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--levels", default=f"1..{MAX_LEVEL}")
    e.add_argument("--output")
    e.add_argument("-v", "--verbose", action="count", default=0)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("expand", help="widen the LSTM stored in a checkpoint")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--hidden", type=int, required=True)
    x.add_argument("--mode", choices=("exact", "preconditioned"), default="preconditioned")
    x.add_argument("--eta", type=float)
    x.add_argument("--output")
    x.add_argument("-v", "--verbose", action="count", default=0)
    x.set_defaults(func=cmd_expand)

    g = sub.add_parser("gen-strokes", help="write a synthetic stroke corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-v", "--verbose", action="count", default=0)
    g.set_defaults(func=cmd_gen_strokes)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"liferec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, OSError) as exc:
        print(f"liferec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"liferec: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
