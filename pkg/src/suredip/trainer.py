"""Single-shot fitting of an untrained network with DIP-MSE or GSURE."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import diffcore as dc
from .losses import GsureConfig, dip_loss, gsure_loss, mc_divergence, pmse_oracle
from .models import Network
from .operators import LinearOperator
from .simdata import Phantom, psnr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    loss: float
    data_term: float
    divergence: float
    psnr: float


@dataclass
class RunRecord:
    rows: list[EpochRow] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0
    best_image: np.ndarray | None = None
    final_image: np.ndarray | None = None
    checkpoints: list[dict] = field(default_factory=list)
    aborted: str | None = None

    @property
    def psnr_trace(self) -> np.ndarray:
        return np.array([r.psnr for r in self.rows])

    @property
    def best_epoch(self) -> int:
        return self.rows[int(np.argmax(self.psnr_trace))].epoch

    @property
    def best_psnr(self) -> float:
        return float(self.psnr_trace.max())

    @property
    def final_psnr(self) -> float:
        return self.rows[-1].psnr

    def epochs_to_reach(self, level: float) -> int | None:
        """First epoch whose PSNR is at least ``level``."""
        for r in self.rows:
            if r.psnr >= level:
                return r.epoch
        return None


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


def overfit_gap(record: RunRecord) -> float:
    """Best-epoch PSNR minus final-epoch PSNR (dB)."""
    if not record.rows:
        raise ValueError("empty run record")
    return record.best_psnr - record.final_psnr


def probe_seed(gcfg: GsureConfig, seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([gcfg.probe_seed, seed, epoch]).generate_state(1)[0])


def fit(
    net: Network,
    op: LinearOperator,
    y,
    loss: str = "gsure",
    epochs: int = 5000,
    seed: int = 0,
    gcfg: GsureConfig | None = None,
    truth: Phantom | None = None,
    lr: float = 1e-3,
    checkpoint_epochs: Iterable[int] = (),
    checkpoint_probes: int = 100,
    config: dict | None = None,
    callback: Callable[[EpochRow], None] | None = None,
) -> tuple[RunRecord, Network]:
    """Optimise ``net``'s parameters in place against one noisy measurement set.

    PSNR is measured on every epoch's forward output (before that epoch's
    update) and never feeds back into the optimisation.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if loss not in ("dip", "gsure"):
        raise ValueError(f"unknown loss {loss!r}")
    gcfg = gcfg or GsureConfig()
    y = dc.Tensor(y)
    u = op.adjoint(y)
    params = [p for p in net.params if p.requires_grad]
    state = dc.AdamState(lr=lr)
    record = RunRecord(config=dict(config or {}))
    checkpoint_epochs = set(checkpoint_epochs)
    best = -np.inf
    t0 = time.perf_counter()
    for epoch in range(1, epochs + 1):
        try:
            if loss == "dip":
                ev = dip_loss(net, op, u, y)
            else:
                ev = gsure_loss(net, op, y, gcfg, seed=probe_seed(gcfg, seed, epoch))
            grads = ev.gradients(params)
        except dc.NonFiniteError as exc:
            record.aborted = f"epoch {epoch}: {exc}"
            record.wall_time = time.perf_counter() - t0
            raise TrainingDiverged(f"training diverged at epoch {epoch}: {exc}", record) from exc
        xhat = ev.output.data
        score = psnr(xhat, truth) if truth is not None else float("nan")
        row = EpochRow(epoch, ev.value, ev.data_term, ev.divergence, score)
        record.rows.append(row)
        if score > best:
            best = score
            record.best_image = xhat.copy()
        if epoch in checkpoint_epochs and truth is not None:
            record.checkpoints.append(_checkpoint(net, op, y, u, xhat, truth, gcfg, seed, epoch, checkpoint_probes))
        if callback is not None:
            callback(row)
        if epoch == epochs:
            record.final_image = xhat.copy()
            break
        dc.adam_step(state, grads, params)
    if record.best_image is None:
        record.best_image = record.final_image
    record.wall_time = time.perf_counter() - t0
    return record, net


def _checkpoint(net, op, y, u, xhat, truth, gcfg, seed, epoch, probes) -> dict:
    """High-probe GSURE vs PMSE-oracle comparison at the current parameters."""
    per_probe = []
    cfg = GsureConfig(**{**gcfg.__dict__, "probes": 1})
    base = dc.Tensor(xhat)
    for j in range(probes):
        div = mc_divergence(net, u.detach(), cfg, op=op, seed=probe_seed(gcfg, seed, 10**6 + 1000 * epoch + j), base=base)
        per_probe.append(div.item())
    d = op.normal_array(xhat) - u.data
    data = float(d.ravel() @ d.ravel())
    per_probe = np.array(per_probe)
    offset = gcfg.sigma**2 * op.measurement_shape[0] * op.measurement_shape[1]
    estimate = data + gcfg.weight * per_probe.mean() - offset
    return {
        "epoch": epoch,
        "gsure_pmse_estimate": estimate,
        "mc_standard_error": gcfg.weight * per_probe.std(ddof=1) / np.sqrt(probes),
        "pmse_oracle": pmse_oracle(xhat, truth.image, op, closed_form=True),
    }
