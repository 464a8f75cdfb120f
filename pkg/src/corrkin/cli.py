"""Command line entry point: ``corrkin <subcommand> --config <file> [--out <dir>]``.

Exit codes: 0 success, 2 invalid configuration, 3 computation failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .orchestrator import RUNNERS, ComputationError, DisjointRangeError, run

EXIT_CONFIG = 2
EXIT_COMPUTE = 3


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrkin", description="Correlation build-up and nonlocal kinetics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario file")
        p.add_argument("--out", default=None,
                       help="output directory (levinson also accepts a .csv file path)")
        if name == "levinson":
            p.add_argument("--t-end", type=float, default=None, help="final reduced time tau")
            p.add_argument("--dt", type=float, default=None, help="largest step in 1/omega_p")
            p.add_argument("--grid-n", type=int, default=None, help="outer momentum nodes")
            p.add_argument("--degenerate", type=_on_off, default=None, help="Pauli blocking on|off")
            p.add_argument("--initial-corr", default=None, help="none or debye:<kappa0>")
    return parser


def _targets(command: str, out: str | None, artifacts: dict) -> dict:
    base = Path(out) if out is not None else Path(".")
    if command == "levinson" and out is not None and out.endswith(".csv"):
        csv_path = Path(out)
        return {"levinson.csv": csv_path, "levinson.json": csv_path.with_suffix(".json")}
    return {name: base / name for name in artifacts if not name.startswith("__")}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_config(args.config)
        overrides = {}
        if args.command == "levinson":
            overrides = {"t_end": args.t_end, "dt": args.dt, "grid_n": args.grid_n,
                         "degenerate": args.degenerate, "initial_corr": args.initial_corr}
        artifacts = run(args.command, scenario, **overrides)
    except ConfigError as exc:
        key = f" (key {exc.key})" if exc.key else ""
        print(f"corrkin: config error in {args.config}: {exc}{key}", file=sys.stderr)
        return EXIT_CONFIG
    except (ComputationError, DisjointRangeError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"corrkin: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    targets = _targets(args.command, args.out, artifacts)
    for name, path in targets.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(artifacts[name], encoding="utf-8")
    if "__stdout__" in artifacts:
        sys.stdout.write(artifacts["__stdout__"])
    for path in targets.values():
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
