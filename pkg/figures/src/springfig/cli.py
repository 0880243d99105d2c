"""springfig: render figures from an exported springsim metrics file."""

from __future__ import annotations

import argparse
import os
import sys

from .metrics import MetricsError, load_metrics
from .plots import plot_generalization, plot_model_comparison

FIGURES = ("comparison", "generalization-dt", "generalization-integrator")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="springfig", description=__doc__)
    parser.add_argument("--metrics", required=True, help="metrics jsonl file")
    parser.add_argument("--out-dir", default="figures-out",
                        help="directory for the rendered images")
    parser.add_argument("--figures", nargs="*", choices=FIGURES,
                        default=list(FIGURES),
                        help="which figures to render (default: all)")
    parser.add_argument("--metric", default="rollout_rmse",
                        choices=("rollout_rmse", "energy_error"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        table = load_metrics(args.metrics)
        os.makedirs(args.out_dir, exist_ok=True)
        for name in args.figures:
            path = os.path.join(args.out_dir, f"{name}.png")
            if name == "comparison":
                plot_model_comparison(table, path, metric=args.metric)
            elif name == "generalization-dt":
                plot_generalization(table, "dt", path, metric=args.metric)
            else:
                plot_generalization(table, "test_integrator", path,
                                    metric=args.metric)
            print(f"wrote {path}")
    except MetricsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
