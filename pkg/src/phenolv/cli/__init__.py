"""Command-line entry point.

    phenolv <command> (--config FILE | --preset NAME) [--out DIR] [--threads N]
    phenolv presets [NAME]

Exit status: 0 on success, 1 on invalid configuration, 2 when a run fails.
"""
from __future__ import annotations

import argparse
import os
import sys

# one thread per run keeps the arithmetic order fixed
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from ..model import ValidationError  # noqa: E402
from .config import Command, RunConfig, parse_config, to_ini  # noqa: E402
from .presets import PRESETS, preset_names, preset_text  # noqa: E402
from .runner import execute, sweep  # noqa: E402

__all__ = ["main", "parse_config", "execute", "sweep", "RunConfig", "Command", "to_ini"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phenolv", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=[c.value for c in Command] + ["presets"])
    ap.add_argument("name", nargs="?", help="preset to print (presets command only)")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI configuration file")
    src.add_argument("--preset", help="named scenario (see 'phenolv presets')")
    ap.add_argument("--out", help="output directory (overrides run.output_dir)")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    return ap


def _list_presets(name):
    if name:
        sys.stdout.write(preset_text(name))
        return
    for n in preset_names():
        print(f"{n:28s} {PRESETS[n][0]}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            _list_presets(args.name)
            return 0
        if args.name:
            raise ValidationError("a positional name is only accepted by the presets command")
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        elif args.preset:
            text = preset_text(args.preset)
        else:
            raise ValidationError("give --config FILE or --preset NAME")
        cfg = parse_config(text, args.command)
    except (ValidationError, OSError) as exc:
        print(f"phenolv: invalid configuration: {exc}", file=sys.stderr)
        return 1
    try:
        manifest = execute(cfg, args.out, threads=args.threads)
    except ValidationError as exc:
        print(f"phenolv: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"phenolv: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.output_dir
    print(f"{cfg.command.value}: {manifest.prediction.get('outcome', 'done')} -> {out}")
    return 0
