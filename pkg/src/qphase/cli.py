"""Command-line entry point: ``qphase <command> --config run.json --out DIR``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

import argparse
import json
import sys

import numpy as np
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence

from ._validation import NumericalError, ValidationError
from .pipeline import EXPERIMENTS, Run, RunConfig, generate_dataset, run_pipeline, verify_bounds

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def _threads(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="qphase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "generate": "prepare dataset states, profiles and RDM caches",
        "kernel": "compute kernel matrices for the generated datasets",
        "embed": "embed kernel matrices (diffusion map or kernel PCA)",
        "cluster": "k-means on the stored embeddings",
        "pipeline": "generate -> kernel -> embed -> cluster",
        "verify-bounds": "randomized checks of the circuit-complexity bounds",
        "shadows": "collect classical shadows and the shadow kernel pipeline",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run config; omitted means defaults for --experiment")
        p.add_argument("--experiment", choices=EXPERIMENTS, help="experiment kind when no config is given")
        p.add_argument("--out", help="output directory (overrides the config's output)")
        p.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
        p.add_argument("--threads", type=_threads, help="worker threads (overrides the config)")
    return parser


def _load_config(args):
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"config: cannot read {args.config} ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config: not valid JSON ({exc})") from None
    else:
        exp = args.experiment
        if exp is None:
            exp = {"verify-bounds": "verify-bounds", "shadows": "shadows"}.get(args.command)
        if exp is None:
            raise ValidationError("config: give --config or --experiment")
        data = {"experiment": exp}
    if args.experiment and args.config and data.get("experiment") != args.experiment:
        raise ValidationError(f"experiment: --experiment {args.experiment} disagrees with the config")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    if args.out is not None:
        data["output"] = args.out
    return RunConfig.from_dict(data)


def _dispatch(command, config):
    if command == "generate":
        datasets = generate_dataset(config)
        return {"datasets": {d.name: len(d.items) for d in datasets}}
    if command == "pipeline":
        return run_pipeline(config)
    if command == "verify-bounds":
        return verify_bounds(config)
    if command == "shadows":
        if config.experiment != "shadows":
            raise ValidationError(f"experiment: the shadows command needs experiment 'shadows', got {config.experiment!r}")
        return run_pipeline(config)
    if config.experiment == "verify-bounds":
        raise ValidationError(f"experiment: verify-bounds does not support the {command} stage")
    run = Run(config, config.output or _missing_out())
    if command == "kernel":
        kernels = run.kernels()
        result = {"kernels": sorted(f"{a}__{b}" for a, b in kernels)}
    elif command == "embed":
        embeddings = run.embed()
        result = {"embeddings": sorted(f"{a}__{b}" for a, b in embeddings)}
    else:
        result = {"clusters": run.cluster()}
    run.write_manifest(command)
    return result


def _missing_out():
    raise ValidationError("output: no output directory given (use --out or the config's output field)")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        result = _dispatch(args.command, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError, ArpackError, ArpackNoConvergence) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
