"""``ferropuf`` command line.

    ferropuf register|metrics|sweep|attack|gen-crps [--config PATH] [--seed U64] [--out DIR]

Exit status: 0 on success, 2 for configuration errors, 3 for runtime or
data errors.  Every run writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, experiments, kernels
from .config import ExperimentConfig, load, resolve_out, resolve_seed
from .crp import atomic_write
from .errors import ConfigError

log = logging.getLogger("ferropuf")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

COMMANDS = {
    "register": experiments.run_register,
    "metrics": experiments.run_metrics,
    "sweep": experiments.run_sweep,
    "attack": experiments.run_attack,
    "gen-crps": experiments.run_gen_crps,
}


def _u64(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ferropuf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ferropuf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML experiment configuration (defaults if omitted)")
        p.add_argument("--seed", type=_u64, help="root seed, overrides config and FERROPUF_SEED")
        p.add_argument("--out", help="output directory (default: FERROPUF_OUT or ./ferropuf-out)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=experiments.SWEEP_AXES)
    return parser


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, seed: int,
                   files: list[Path], wall: float, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seed": seed,
        "config": {**cfg.to_dict(), "seed": seed},
        "outputs": sorted(str(Path(f).relative_to(out)) for f in files),
        "wall_clock_s": round(wall, 3),
        **(extra or {}),
    }
    return atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config) if args.config else ExperimentConfig()
        seed = resolve_seed(cfg, args.seed)
        out = resolve_out(args.out)
    except ConfigError as exc:
        print(f"ferropuf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "sweep":
            files = COMMANDS["sweep"](cfg, seed, out, args.axis)
            extra = {"axis": args.axis}
        else:
            files = COMMANDS[args.command](cfg, seed, out)
            extra = None
        wall = time.perf_counter() - start
        write_manifest(out, args.command, cfg, seed, files, wall, extra)
    except ConfigError as exc:
        print(f"ferropuf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"ferropuf: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("%s finished in %.2f s; outputs in %s", args.command, wall, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
