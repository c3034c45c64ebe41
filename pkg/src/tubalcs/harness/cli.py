"""``tubalcs`` command line: run sweeps, self-check, generate ground truths."""

import argparse
import logging
import sys
from pathlib import Path

from ..errors import InvalidSpec, ParseError, TubalCSError, ValidationError
from ..synthetic import GroundTruthSpec, generate_ground_truth
from .config import parse_config
from .experiment import run_experiment
from .selftest import run_selftest
from .tensor_io import write_tensor

_SPEC_TYPES = {"n1": int, "n2": int, "n3": int, "r": int, "kappa": float, "seed": int}


def parse_gen_spec(text):
    """``"n1=20,n2=400,n3=20,r=4,kappa=2,seed=0"`` -> :class:`GroundTruthSpec`."""
    fields = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in _SPEC_TYPES:
            raise InvalidSpec(f"bad spec item {item!r}; expected key=value with key in {', '.join(_SPEC_TYPES)}")
        try:
            fields[key] = _SPEC_TYPES[key](value.strip())
        except ValueError:
            raise InvalidSpec(f"bad value for {key}: {value!r}") from None
    missing = [k for k in ("n1", "n2", "n3", "r") if k not in fields]
    if missing:
        raise InvalidSpec(f"spec is missing {', '.join(missing)}")
    spec = GroundTruthSpec(**fields)
    spec.validate()
    return spec


def cmd_run(args):
    try:
        cfg = parse_config(Path(args.config).read_text())
    except (ParseError, ValidationError) as exc:
        for err in exc.errors:
            print(f"{args.config}: {err}", file=sys.stderr)
        return 2
    out = args.out or cfg.out
    rows = run_experiment(cfg, out, threads=args.threads)
    print(f"{len(rows)} runs written to {out}")
    return 0


def cmd_selftest(args):
    return 0 if run_selftest(seed=args.seed) else 1


def cmd_gen(args):
    spec = parse_gen_spec(args.spec)
    write_tensor(args.out, generate_ground_truth(spec))
    print(f"wrote {spec.n1}x{spec.n2}x{spec.n3} tensor to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="tubalcs", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("selftest", help="run the oracle and invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("gen", help="write a synthetic ground truth in binary form")
    p.add_argument("--spec", required=True, help="e.g. n1=20,n2=400,n3=20,r=4,kappa=2,seed=0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except TubalCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
