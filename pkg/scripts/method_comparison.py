"""Median final PSNR of every method on both 4x masks over several seeds.

Runs the ``compare`` pipeline once per mask into ``<out>/<mask>/`` and
prints a table of medians. Example::

    python scripts/method_comparison.py configs/example.toml --seeds 0 1 2
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import statistics
from pathlib import Path

from suredip.cli import cmd_compare
from suredip.config import load_config


def read_summary(path: Path) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["method"], []).append(float(row["final_psnr"]))
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--masks", nargs="+", default=["vd2d", "cartesian1d"])
    ap.add_argument("--out", type=Path, default=Path("runs/comparison"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config).with_seeds(args.seeds)
    table: dict[str, dict[str, float]] = {}
    for kind in args.masks:
        mcfg = dataclasses.replace(cfg, mask=dataclasses.replace(cfg.mask, kind=kind))
        cmd_compare(mcfg, args.out / kind)
        for method, scores in read_summary(args.out / kind / "summary.csv").items():
            table.setdefault(method, {})[kind] = statistics.median(scores)

    print(f"{'method':14s}" + "".join(f"{k:>14s}" for k in args.masks))
    for method, cols in table.items():
        print(f"{method:14s}" + "".join(f"{cols.get(k, float('nan')):14.2f}" for k in args.masks))


if __name__ == "__main__":
    main()
