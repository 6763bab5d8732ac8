"""Command line: ``sqfilter simulate | verify | sweep``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import ScenarioConfig
from .errors import SqFilterError
from .output import write_json
from .runner import simulate, sweep
from .verification import SUITES, run_suite


def load_config(path) -> ScenarioConfig:
    """Read a TOML scenario file, or the ``config`` echoed in a run manifest (``.json``)."""
    path = Path(path)
    if path.suffix == ".json":
        manifest = json.loads(path.read_text())
        return ScenarioConfig(manifest["config"])
    return ScenarioConfig.from_file(path)


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sqfilter", description="Quantum filtering with squeezed inputs")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write CSV files plus a manifest")
    sim.add_argument("--config", required=True, help="TOML scenario file or a previous manifest.json")
    sim.add_argument("--seed", type=int, default=None, help="override the configured seed")
    sim.add_argument("--out", default="out", help="output directory")
    sim.add_argument("--backend", choices=["gaussian", "general", "both"], default=None)
    sim.add_argument("--workers", type=int, default=None, help="processes for ensemble runs")

    ver = sub.add_parser("verify", help="run a verification suite and write a JSON report")
    ver.add_argument("suite", choices=list(SUITES) + ["all"])
    ver.add_argument("--out", default=None, help="directory for the JSON report")
    ver.add_argument("--quick", action="store_true", help="reduced sizes for a fast smoke run")

    sw = sub.add_parser("sweep", help="scan one configuration parameter")
    sw.add_argument("--config", required=True)
    sw.add_argument("--parameter", required=True, help="dotted path, e.g. squeezing.n or physics.theta")
    sw.add_argument("--values", nargs="*", default=[], help="values to scan")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--out", default="out")
    sw.add_argument("--backend", choices=["gaussian", "general", "both"], default=None)
    return ap


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    res = simulate(cfg, args.out, seed=args.seed, backend=args.backend, workers=args.workers)
    for f in res.files:
        print(f)
    for entry in res.invariant_log:
        print(f"invariant violated: {entry}", file=sys.stderr)
    return 0 if res.ok else 1


def _cmd_verify(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in names:
        rep = run_suite(name, quick=args.quick)
        for c in rep.checks:
            status = "PASS" if c.passed else "FAIL"
            print(f"{status} {name}.{c.name}: {c.value:.6g} ({c.tolerance})")
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            write_json(Path(args.out) / f"verify_{name}.json", rep.to_dict())
        ok = ok and rep.passed
    return 0 if ok else 1


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_value("seed", args.seed)
    if args.backend is not None:
        cfg = cfg.with_value("backend", args.backend)
    res = sweep(cfg, args.parameter, [_parse_value(v) for v in args.values], args.out)
    for f in res.files:
        print(f)
    return 0 if res.ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"simulate": _cmd_simulate, "verify": _cmd_verify, "sweep": _cmd_sweep}[args.command]
    try:
        return handler(args)
    except SqFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
