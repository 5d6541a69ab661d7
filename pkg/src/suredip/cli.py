"""Command-line driver: ``suredip {recon,compare,sure-check} <config.toml>``.

Exit status: 0 on success, 1 on a failed run or failed statistical check,
2 on an invalid command line or configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

from . import checks
from . import simdata as S
from .config import BASELINE_METHODS, ConfigError, ExperimentConfig, load_config
from .diffcore import DimensionError
from .experiment import (
    build_problem,
    method_name,
    run_network,
    run_tuned_baseline,
    split_method,
    summary_csv,
    summary_row,
    SummaryRow,
    write_baseline_run,
    write_network_run,
)
from .operators import ConvergenceError
from .trainer import TrainingDiverged

log = logging.getLogger("suredip")


def _preflight(cfg: ExperimentConfig, methods) -> None:
    """Checks that need the resolved method list; raises before any run starts."""
    H, W = cfg.phantom.height, cfg.phantom.width
    try:
        build_problem(cfg, cfg.train.seeds[0])
    except ValueError as exc:
        raise ConfigError(str(exc), where="[mask]") from None
    for m in methods:
        arch = m if m in BASELINE_METHODS else split_method(m)[1]
        if arch == "unet" and (H % 4 or W % 4):
            raise ConfigError(f"UNET needs extents divisible by 4, got {H}x{W}", where="[phantom]")
        if arch == "wavelet" and (H & (H - 1) or W & (W - 1)):
            raise ConfigError(f"wavelet baseline needs power-of-two extents, got {H}x{W}", where="[phantom]")


def _run_methods(cfg: ExperimentConfig, methods, out: Path) -> list[SummaryRow]:
    rows = []
    for seed in cfg.train.seeds:
        problem = build_problem(cfg, seed)
        for m in methods:
            run_dir = out / m / f"seed{seed}"
            if m in BASELINE_METHODS:
                mu, res, scores = run_tuned_baseline(cfg, m, seed, problem)
                write_baseline_run(run_dir, mu, res, scores)
                score = S.psnr(res.image, problem.phantom)
                rows.append(SummaryRow(m, seed, score, score, cfg.baselines.iters))
                log.info("%s seed %d: reg_weight %g psnr %.3f", m, seed, mu, score)
            else:
                loss, arch = split_method(m)
                record, net = run_network(cfg, arch, loss, seed, problem)
                write_network_run(run_dir, record, net)
                rows.append(summary_row(m, seed, record))
                log.info("%s seed %d: final %.3f best %.3f @ %d", m, seed, record.final_psnr, record.best_psnr, record.best_epoch)
    (out / "summary.csv").write_text(summary_csv(rows))
    return rows


def cmd_recon(cfg: ExperimentConfig, out: Path) -> int:
    method = method_name(cfg.loss.kind, cfg.model.arch)
    _preflight(cfg, [method])
    out.mkdir(parents=True, exist_ok=True)
    _run_methods(cfg, [method], out)
    return 0


def cmd_compare(cfg: ExperimentConfig, out: Path) -> int:
    _preflight(cfg, cfg.compare.methods)
    out.mkdir(parents=True, exist_ok=True)
    rows = _run_methods(cfg, cfg.compare.methods, out)
    for r in rows:
        print(f"{r.method:14s} seed {r.seed}: final {r.final_psnr:.3f} dB  best {r.best_psnr:.3f} dB @ {r.best_epoch}")
    return 0


def cmd_sure_check(cfg: ExperimentConfig, out: Path) -> int:
    s = cfg.sure_check
    results = checks.sure_check_suite(s.size, cfg.noise.sigma, s.probes, s.maps, s.draws, s.seed, s.divergence_weight)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("check", "passed", "observed", "expected", "tolerance"))
    for r in results:
        w.writerow([r.name, int(r.passed), S.format_float(r.observed), S.format_float(r.expected), S.format_float(r.tolerance)])
        print(r.line())
    (out / "sure_check.csv").write_text(buf.getvalue())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(r.name for r in failed)}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"recon": cmd_recon, "compare": cmd_compare, "sure-check": cmd_sure_check}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # the subcommand copy uses SUPPRESS so flags given before the subcommand are not reset
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out-dir", type=Path, help="output directory (overrides [output] dir)", **kw)
    p.add_argument("--seed-override", type=int, help="run this single seed instead of [train] seeds", **kw)
    p.add_argument("--quiet", action="store_true", help="only report warnings and errors", **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="suredip", description=__doc__.splitlines()[0], parents=[_global_flags(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "recon": "fit one network with the configured loss for every seed",
        "compare": "DIP-MSE and SURE-DIP on UNET and unrolled networks plus tuned TV and wavelet baselines",
        "sure-check": "statistical validation of the divergence estimate and GSURE unbiasedness",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, parents=[_global_flags(True)])
        p.add_argument("config", type=Path, help="TOML experiment config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg = cfg.with_seeds([args.seed_override])
        out = args.out_dir if args.out_dir is not None else Path(cfg.output.dir)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        if exc.source == "<config>":
            exc = ConfigError(exc.message, str(args.config), exc.line, exc.where)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, ConvergenceError, DimensionError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
