"""``crip-sim``: run experiment configs and bundled experiments.

    crip-sim list
    crip-sim run path/to/config.yaml [--out DIR] [--seed N] [--threads N]
    crip-sim run --experiment fig2c

Errors are reported on stderr as one JSON object and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import __version__, io, kernels
from .config import ConfigError, config_dict, config_hash, load_config, parse_config

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _experiment_dir():
    return resources.files("crip") / "experiments"


def list_experiments() -> list[tuple[str, str]]:
    """(name, description) of every bundled experiment, sorted by name."""
    out = []
    for entry in _experiment_dir().iterdir():
        if entry.name.endswith(".yaml"):
            cfg = parse_config(entry.read_text(encoding="utf-8"))
            out.append((entry.name[:-5], cfg.description.strip().splitlines()[0] if cfg.description else ""))
    return sorted(out)


def experiment_text(name: str) -> str:
    path = _experiment_dir() / f"{name}.yaml"
    if not path.is_file():
        known = ", ".join(n for n, _ in list_experiments())
        raise ConfigError([f"experiment: unknown bundled experiment {name!r} (known: {known})"])
    return path.read_text(encoding="utf-8")


def run_config(cfg, out_dir, threads: int = 1) -> dict:
    """Run a validated config, writing datasets, summary.json and manifest.json."""
    from .runner import run

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = run(cfg, out, threads=threads)
    wall = time.perf_counter() - t0
    io.write_json(out / "summary.json", summary)
    io.write_json(out / "manifest.json", {
        "experiment": cfg.name,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config_sha256": config_hash(cfg),
        "config": config_dict(cfg),
        "versions": {"crip": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "pydantic": pydantic.__version__},
        "kernel_backend": kernels.BACKEND,
        "threads": threads,
        "wall_time_s": wall,
        "outputs": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
    })
    return summary


def _error(kind: str, message: str, errors=None, code: int = EXIT_RUNTIME) -> int:
    payload = {"error": kind, "message": message}
    if errors:
        payload["errors"] = errors
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crip-sim", description="NV cross-relaxation polarisation simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list bundled experiments")
    r = sub.add_parser("run", help="run a config file or a bundled experiment")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="YAML experiment config")
    src.add_argument("--experiment", "-e", help="name of a bundled experiment")
    r.add_argument("--out", "-o", help="output directory (default: crip-out/<name>)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--threads", type=int, default=1, help="worker threads for seed sweeps")
    sub.add_parser("show", help="print a bundled experiment config").add_argument("name")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, desc in list_experiments():
            print(f"{name:<20} {desc}")
        return 0
    try:
        if args.command == "show":
            print(experiment_text(args.name), end="")
            return 0
        if args.threads < 1:
            raise ConfigError(["--threads: must be >= 1"])
        cfg = parse_config(experiment_text(args.experiment)) if args.experiment else load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        out = args.out or str(Path("crip-out") / cfg.name)
        summary = run_config(cfg, out, args.threads)
    except ConfigError as exc:
        return _error("ConfigError", "invalid experiment config", exc.errors, EXIT_CONFIG)
    except OSError as exc:
        return _error(type(exc).__name__, str(exc))
    except Exception as exc:  # surfaced as JSON for scripted callers
        return _error(type(exc).__name__, str(exc))
    print(json.dumps({"status": "ok", "out": out,
                      "warnings": summary.get("warnings", [])}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
