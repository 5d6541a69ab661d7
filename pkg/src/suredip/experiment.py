"""Run plumbing shared by the CLI, the experiment scripts and the acceptance suite."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines as B
from . import diffcore as dc
from . import operators as O
from . import simdata as S
from .config import ExperimentConfig
from .models import Network, build_network, save_checkpoint
from .trainer import RunRecord, fit

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("method", "seed", "final_psnr", "best_psnr", "best_epoch")


@dataclass(frozen=True)
class Problem:
    phantom: S.Phantom
    op: O.LinearOperator
    y: np.ndarray


@dataclass(frozen=True)
class SummaryRow:
    method: str
    seed: int
    final_psnr: float
    best_psnr: float
    best_epoch: int


def build_problem(cfg: ExperimentConfig, seed: int) -> Problem:
    """Phantom and mask are fixed by the config; the noise draw follows the run seed."""
    p = cfg.phantom
    phantom = S.make_phantom(p.name, p.height, p.width, p.phase_amplitude)
    op = O.fourier_operator(S.make_mask(cfg.mask_spec(), p.height, p.width), cfg.noise.sigma)
    y = S.measure(phantom, op, cfg.noise.sigma, cfg.noise.seed + seed)
    return Problem(phantom, op, y)


def split_method(method: str) -> tuple[str, str]:
    loss, arch = method.split("-")
    return ("gsure" if loss == "sure" else "dip"), arch


def method_name(loss: str, arch: str) -> str:
    return f"{'sure' if loss == 'gsure' else 'dip'}-{arch}"


def checkpoint_epochs(epochs: int, count: int) -> list[int]:
    if count <= 0:
        return []
    return sorted({max(1, int(round(e))) for e in np.linspace(epochs / count, epochs, count)})


def run_network(cfg: ExperimentConfig, arch: str, loss: str, seed: int, problem: Problem | None = None, callback=None) -> tuple[RunRecord, Network]:
    problem = problem or build_problem(cfg, seed)
    net = build_network(cfg.arch_config(arch), problem.op, seed=seed)
    every = cfg.train.log_every
    name = method_name(loss, arch)

    def progress(row):
        if row.epoch % every == 0 or row.epoch == 1:
            log.info("%s seed %d epoch %d loss %.6g psnr %.3f", name, seed, row.epoch, row.loss, row.psnr)
        if callback is not None:
            callback(row)

    return fit(
        net,
        problem.op,
        problem.y,
        loss,
        cfg.train.epochs,
        seed,
        cfg.gsure_config(),
        problem.phantom,
        lr=cfg.lr_for(arch),
        checkpoint_epochs=checkpoint_epochs(cfg.train.epochs, cfg.train.checkpoints) if loss == "gsure" else (),
        checkpoint_probes=cfg.train.checkpoint_probes,
        config={"method": name, "seed": seed, **cfg.as_dict()},
        callback=progress,
    )


def run_tuned_baseline(cfg: ExperimentConfig, method: str, seed: int, problem: Problem | None = None):
    """Returns ``(reg_weight, BaselineResult, [(reg_weight, psnr), ...])`` for the PSNR-best grid point."""
    problem = problem or build_problem(cfg, seed)
    grid = cfg.baselines.tv_grid if method == "tv" else cfg.baselines.wavelet_grid
    return B.tune_baseline(problem.op, problem.y, problem.phantom, cfg.baseline_config(method), grid)


# -- outputs -----------------------------------------------------------------


def summary_row(method: str, seed: int, record: RunRecord) -> SummaryRow:
    return SummaryRow(method, seed, record.final_psnr, record.best_psnr, record.best_epoch)


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in rows:
        w.writerow([r.method, r.seed, S.format_float(r.final_psnr), S.format_float(r.best_psnr), r.best_epoch])
    return buf.getvalue()


def write_network_run(directory: Path, record: RunRecord, net: Network) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    S.write_metrics_csv(directory / "metrics.csv", record.rows)
    S.write_pgm(directory / "best.pgm", record.best_image)
    S.write_pgm(directory / "final.pgm", record.final_image)
    dc.sdt1.save(directory / "final.sdt", record.final_image)
    save_checkpoint(net, directory / "checkpoint")
    if record.checkpoints:
        buf = io.StringIO()
        keys = ("epoch", "gsure_pmse_estimate", "mc_standard_error", "pmse_oracle")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for ck in record.checkpoints:
            w.writerow([ck["epoch"], *(S.format_float(ck[k]) for k in keys[1:])])
        (directory / "gsure_checkpoints.csv").write_text(buf.getvalue())


def write_baseline_run(directory: Path, reg_weight: float, result: B.BaselineResult, scores) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    S.write_pgm(directory / "final.pgm", result.image)
    dc.sdt1.save(directory / "final.sdt", result.image)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("reg_weight", "psnr"))
    for mu, score in scores:
        w.writerow([S.format_float(mu), S.format_float(score)])
    (directory / "tuning.csv").write_text(buf.getvalue())
    (directory / "tuned.json").write_text(json.dumps({"reg_weight": reg_weight}, sort_keys=True) + "\n")
