"""Run the full synthetic pipeline end to end and print the evaluation tables.

Stages: prepare, train-decoder, train-controlnet, generate, boost, evaluate,
ablate. Each writes under the output directory and a manifest per stage.

    python scripts/run_synthetic_pipeline.py --output runs/synthetic
    python scripts/run_synthetic_pipeline.py --output runs/quick --config my.json --seed 1
"""

import argparse
import sys
from pathlib import Path

from eegrecon import cli


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--output", default="runs/synthetic")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    args = p.parse_args(argv)
    common = ["--output", args.output]
    if args.config:
        common += ["--config", args.config]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    code = cli.run_pipeline(common)
    if code:
        return code
    reports = Path(args.output) / "reports"
    for name in sorted(reports.glob("*.csv")):
        print(f"\n== {name.name}")
        print(name.read_text().rstrip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
