"""obslab command line: pomega, observability, decompose, equilibrium, gallery."""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from typing import Optional, Sequence

from obslab.errors import ConfigError, ObslabError
from obslab.cli.config import PRESETS, ExperimentConfig, load_config, preset
from obslab.cli.output import OutputDir, config_hash

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3
log = logging.getLogger("obslab")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obslab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("pomega", "empirical measures and pω estimates of single orbits"),
                        ("observability", "ensemble observability sizes and the observable set"),
                        ("decompose", "generalized attractors, chains and co-chains"),
                        ("equilibrium", "PLY residuals for expanding circle maps")]:
        sp = sub.add_parser(name, help=help_)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="experiment config (YAML)")
        src.add_argument("--preset", choices=PRESETS, help="built-in experiment")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true")
    g = sub.add_parser("gallery", help="list or run the example systems")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--list", action="store_true", help="print the systems and expected outcomes")
    src.add_argument("--preset", choices=PRESETS, help="run every command of a preset")
    src.add_argument("--config", help="run every command of a config")
    g.add_argument("--out", help="output directory (overrides the config)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def gallery_listing() -> str:
    lines = []
    for name in PRESETS:
        cfg = preset(name)
        lines.append(f"{name}: {cfg.system.family} {dict(cfg.system.params)}")
        lines.append(f"    {cfg.description}")
        lines.append(f"    expected: {cfg.expected}")
        lines.append(f"    commands: {', '.join(cfg.commands)}")
    return "\n".join(lines)


def run(cfg: ExperimentConfig, commands: Sequence[str], out_dir: Optional[str] = None,
        workers: Optional[int] = None, label: str = "") -> int:
    from obslab.cli.pipelines import PIPELINES, Context

    canonical = cfg.model_dump(mode="json")
    h = config_hash(canonical)
    out = OutputDir(out_dir or cfg.output, h, canonical, cfg.ensemble.seed, label or "+".join(commands))
    try:
        ctx = Context(cfg, out, workers)
        for c in commands:
            log.info("running %s", c)
            PIPELINES[c](ctx)
    except (ObslabError, ArithmeticError, ValueError, RuntimeError, MemoryError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        out.mark_partial(msg)
        out.finish("partial", msg)
        print(f"obslab: compute error: {msg}", file=sys.stderr)
        log.debug("%s", traceback.format_exc())
        return EXIT_COMPUTE
    out.finish()
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.command == "gallery" and args.list:
            print(gallery_listing())
            return EXIT_OK
        cfg = preset(args.preset) if args.preset else load_config(args.config)
    except ConfigError as exc:
        print(f"obslab: config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    commands = list(cfg.commands) if args.command == "gallery" else [args.command]
    if "equilibrium" in commands and not cfg.system.build().is_circle_expanding:
        print("obslab: config error:\nsystem: equilibrium needs an expanding circle map",
              file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, commands, args.out, label=args.command)


if __name__ == "__main__":
    sys.exit(main())
