"""Command-line entry point: staged pipeline subcommands over a JSON config.

Exit codes: 0 success, 2 input error, 3 stage-order error, 4 numerics error.
"""

from __future__ import annotations

import argparse
import sys

from . import stages
from .config import load_config
from .errors import NrcError, NumericsError, StageOrderError

_STAGE_RUNNERS = {
    "prepare": stages.run_prepare,
    "mix": stages.run_mix,
    "transform": stages.run_transform,
    "train": stages.run_train,
    "eval": stages.run_eval,
    "report": stages.run_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrc",
        description="Noisy heart-sound classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in stages.STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if name == "prepare":
            p.add_argument("--skip-bad", action="store_true",
                           help="log per-file failures instead of aborting")
    synth = sub.add_parser("synth", help="generate a synthetic corpus")
    synth.add_argument("--n-per-class", type=int, required=True)
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            info = stages.run_synth(args.n_per_class, args.seed, args.out)
            print(f"synth: wrote {info['heart']} heart + {info['lung']} lung "
                  f"clips under {info['dir']}")
            return 0
        cfg = load_config(args.config, seed_override=args.seed)
        runner = _STAGE_RUNNERS[args.command]
        kwargs = {"workers": args.workers}
        if args.command == "prepare":
            kwargs["skip_bad"] = args.skip_bad
        result = runner(cfg, **kwargs)
        if result.get("cached"):
            print(f"{args.command}: 0 rebuilt (cache hit)")
        else:
            print(f"{args.command}: {result['rebuilt']} rebuilt")
        if "accuracy" in result:
            for cond, acc in result["accuracy"].items():
                print(f"  {cond}: {acc:.4f}")
        if "best_val_acc" in result:
            print(f"  best val acc: {result['best_val_acc']:.4f}")
        return 0
    except StageOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (NrcError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
