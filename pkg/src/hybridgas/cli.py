"""Command line entry point: hybridgas run --scenario ... --mode ... --out ..."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .coupling import MODES
from .errors import HybridGasError
from .runner import run
from .scenarios import BUILTIN_NAMES, EpsilonSpec, builtin_scenario, parse, with_overrides


def _parse_eps(text: str):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        return float(parts[0])
    if len(parts) == 2:
        return (float(parts[0]), float(parts[1]))
    raise argparse.ArgumentTypeError("--eps expects VALUE or LEFT,RIGHT")


def _load_config(args):
    name = args.scenario
    if name in BUILTIN_NAMES:
        cfg = builtin_scenario(name, eps=args.eps, seed=args.seed if args.seed is not None else 1)
    else:
        path = Path(name)
        if not path.exists():
            raise HybridGasError(
                f"scenario {name!r} is neither builtin ({', '.join(BUILTIN_NAMES)}) nor a config file"
            )
        cfg = parse(path.read_text())
        eps = None
        if args.eps is not None:
            if isinstance(args.eps, tuple):
                split = cfg.epsilon.split_x
                if split is None:
                    split = 0.5 * (cfg.grid.x_min + cfg.grid.x_max)
                eps = EpsilonSpec(args.eps[0], args.eps[1], split)
            else:
                eps = EpsilonSpec(args.eps)
        cfg = with_overrides(cfg, eps=eps, seed=args.seed)
    return with_overrides(
        cfg,
        beta_thr=args.beta_thr,
        buffer_width=args.buffer,
        budget_value=args.particles,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hybridgas",
        description="1D hybrid DSMC / finite-volume Euler gas solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    rp = sub.add_parser("run", help="run a scenario and write CSV outputs")
    rp.add_argument("--scenario", required=True, help="builtin name or config file path")
    rp.add_argument("--mode", choices=MODES, default="coupled")
    rp.add_argument("--eps", type=_parse_eps, default=None, help="VALUE or LEFT,RIGHT")
    rp.add_argument("--seed", type=int, default=None)
    rp.add_argument("--out", required=True, help="output directory")
    rp.add_argument("--beta-thr", dest="beta_thr", type=float, default=None)
    rp.add_argument("--buffer", type=int, default=None, help="buffer width in cells")
    rp.add_argument("--particles", type=float, default=None, help="override budget value")
    rp.add_argument(
        "--plain-dsmc",
        action="store_true",
        help="disable moment matching (plain Nanbu baseline; full-dsmc mode only)",
    )
    args = parser.parse_args(argv)

    if args.command == "run":
        if args.plain_dsmc and args.mode != "full-dsmc":
            parser.error("--plain-dsmc requires --mode full-dsmc")
        try:
            cfg = _load_config(args)
            result = run(cfg, mode=args.mode, out_dir=args.out, guided=not args.plain_dsmc)
        except HybridGasError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(
            f"{cfg.name}: {result.sim.step_index} steps to t={result.sim.time:.6g}, "
            f"{len(result.snapshots)} snapshots -> {result.out_dir}"
        )
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
