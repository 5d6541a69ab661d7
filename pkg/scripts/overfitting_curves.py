"""PSNR-vs-epoch curves for DIP-MSE and SURE-DIP on both architectures.

Writes one CSV per mask with columns ``epoch`` and one PSNR column per
method, plus the overfit gap of each run. Example::

    python scripts/overfitting_curves.py configs/example.toml --epochs 2000 --out runs/curves
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
from pathlib import Path

from suredip import simdata as S
from suredip.config import NETWORK_METHODS, load_config
from suredip.experiment import build_problem, run_network, split_method
from suredip.trainer import overfit_gap

log = logging.getLogger("overfitting_curves")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--epochs", type=int, help="override [train] epochs")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--masks", nargs="+", default=["vd2d", "cartesian1d"])
    ap.add_argument("--methods", nargs="+", default=list(NETWORK_METHODS))
    ap.add_argument("--out", type=Path, default=Path("runs/curves"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config)
    if args.epochs:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, epochs=args.epochs))
    args.out.mkdir(parents=True, exist_ok=True)
    for kind in args.masks:
        mcfg = dataclasses.replace(cfg, mask=dataclasses.replace(cfg.mask, kind=kind))
        problem = build_problem(mcfg, args.seed)
        curves = {}
        for m in args.methods:
            loss, arch = split_method(m)
            record, _ = run_network(mcfg, arch, loss, args.seed, problem)
            curves[m] = [r.psnr for r in record.rows]
            log.info("%s %s: best %.2f @ %d, final %.2f, gap %.2f dB", kind, m, record.best_psnr, record.best_epoch, record.final_psnr, overfit_gap(record))
        with open(args.out / f"curves_{kind}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", *curves])
            for e, vals in enumerate(zip(*curves.values()), 1):
                w.writerow([e, *(S.format_float(v) for v in vals)])


if __name__ == "__main__":
    main()
