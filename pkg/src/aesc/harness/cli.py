"""Command line: ``aesc train | run | report``.

Exit codes: 0 success, 1 usage or configuration error, 2 data/model files
missing or unreadable, 3 training diverged.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..data import DataError
from ..training import TrainingDiverged
from .config import ConfigError, ExperimentConfig, load_config, with_overrides
from .experiment import ModelError, cmd_run, cmd_train
from .report import ReportError, cmd_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("aesc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--data-dir", help="directory holding the dataset files")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="aesc", description="Autoencoder-based semantic image transmission simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="train classifier and autoencoders")
    t.add_argument("--dataset", choices=["mnist", "cifar10"])
    t.add_argument("--z-dims", type=int, nargs="+")
    t.add_argument("--model-dir")
    t.add_argument("--retrain-classifier", action="store_true")

    r = sub.add_parser("run", parents=[common], help="SNR sweep over all schemes, writes results.csv")
    r.add_argument("--model-dir")
    r.add_argument("--frames", type=int, help="test images per grid point")
    r.add_argument("--amortize-decoder", action="store_true", default=None,
                   help="send decoder parameters once per session instead of with every frame")

    g = sub.add_parser("report", parents=[common], help="charts and image grids from results.csv")
    g.add_argument("--results", help="results.csv (default: <out>/results.csv)")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = dict(data_dir=args.data_dir, seed=args.seed, out=args.out)
    if args.command == "train":
        if args.dataset and args.dataset != cfg.dataset and not args.data_dir:
            over["data_dir"] = f"data/{args.dataset}"
        over.update(dataset=args.dataset, z_dims=args.z_dims, model_dir=args.model_dir)
    elif args.command == "run":
        over.update(model_dir=args.model_dir, frames_per_point=args.frames, amortize_decoder=args.amortize_decoder)
    return with_overrides(cfg, **over)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            results = args.results or f"{args.out or (load_config(args.config).out if args.config else 'results')}/results.csv"
            written = cmd_report(results, args.out)
            for p in written:
                print(p)
            return EXIT_OK
        cfg = _config(args)
        if args.command == "train":
            for name, digest in cmd_train(cfg, args.retrain_classifier).items():
                print(f"{digest}  {name}")
        else:
            cmd_run(cfg)
            print(f"{cfg.out}/results.csv")
        return EXIT_OK
    except (ConfigError, ReportError) as e:
        log.error("%s", e)
        return EXIT_USAGE
    except ValueError as e:  # bad z_dims and other argument-level problems
        log.error("%s", e)
        return EXIT_USAGE
    except (DataError, ModelError, FileNotFoundError) as e:
        log.error("%s", e)
        return EXIT_DATA
    except TrainingDiverged as e:
        log.error("%s", e)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
