"""Command line: python -m irrlab <kind> [--config FILE] [--seed N] [--out DIR] ..."""
import argparse
import sys

from .errors import IrrlabError
from .labcli import KINDS, FORMATS, ExperimentConfig, run


def build_parser():
    ap = argparse.ArgumentParser(prog="irrlab", description="Run a seeded irregularity experiment.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", help="TOML experiment file (schema = 1)")
    ap.add_argument("--seed", type=int, help="root seed (unsigned 64-bit), overrides the config")
    ap.add_argument("--out", help="output directory, overrides the config")
    ap.add_argument("--format", choices=FORMATS, help="artifact format, overrides the config")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = ExperimentConfig.load(args.config)
        else:
            cfg = ExperimentConfig({})
        data = cfg.data
        data["kind"] = args.kind
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise IrrlabError("seed must be an unsigned 64-bit integer")
            data["mc"]["seed"] = args.seed
        cfg = ExperimentConfig(data)
    except (IrrlabError, OSError) as e:
        print(f"irrlab: {e}", file=sys.stderr)
        return 2
    man = run(cfg, args.out, args.format, args.threads)
    for stage, status in man.stages.items():
        if status != "ok":
            print(f"irrlab: stage {stage} failed: {status}", file=sys.stderr)
    return 0 if man.ok else 1


if __name__ == "__main__":
    sys.exit(main())
