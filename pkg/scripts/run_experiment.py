#!/usr/bin/env python3
"""Train (if needed), sweep and report in one go for a config file.

    python scripts/run_experiment.py configs/smoke.toml
"""

import argparse
import logging
import sys
from pathlib import Path

from aesc.harness.config import load_config
from aesc.harness.experiment import classifier_path, cmd_run, cmd_train
from aesc.harness.report import cmd_report


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--retrain", action="store_true", help="train even when model files exist")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_config(args.config)
    have = classifier_path(cfg.model_dir, cfg.dataset).exists() and all(
        (Path(cfg.model_dir) / f"{cfg.dataset}_z{z}_decoder.aesm").exists() for z in cfg.z_dims
    )
    if args.retrain or not have:
        cmd_train(cfg)
    cmd_run(cfg)
    for p in cmd_report(Path(cfg.out) / "results.csv"):
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
