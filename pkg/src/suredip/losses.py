"""Measurement-domain DIP loss, projected GSURE loss and evaluation oracles.

``net`` arguments are any callable mapping an image tensor to an image
tensor, usually a :class:`suredip.models.Network`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .operators import CgConfig, LinearOperator, least_squares_image, project

NetFn = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class GsureConfig:
    """Noise level and Monte-Carlo divergence settings.

    ``eps=None`` selects ``1e-3 * max|u|`` at evaluation time.
    ``weight_mode="sigma2"`` weights the divergence by ``2 sigma^2``;
    ``"literal"`` uses a bare factor 2. ``divergence_weight`` overrides both.
    ``probe_space="range"`` draws probes as ``Aᴴ xi`` with white ``xi`` in the
    measurement domain (a perturbation of the measurements); ``"full"`` draws
    white probes in the image domain.
    """

    sigma: float = 0.01
    eps: float | None = None
    probes: int = 1
    probe_seed: int = 0
    cg: CgConfig = field(default_factory=CgConfig)
    weight_mode: str = "sigma2"
    divergence_weight: float | None = None
    scheme: str = "forward"
    probe_space: str = "range"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.eps is not None and not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.probes < 1:
            raise ValueError(f"probes must be >= 1, got {self.probes}")
        if self.weight_mode not in ("sigma2", "literal"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.scheme not in ("forward", "central"):
            raise ValueError(f"unknown divergence scheme {self.scheme!r}")
        if self.probe_space not in ("range", "full"):
            raise ValueError(f"unknown probe_space {self.probe_space!r}")

    @property
    def weight(self) -> float:
        if self.divergence_weight is not None:
            return float(self.divergence_weight)
        return 2.0 * self.sigma**2 if self.weight_mode == "sigma2" else 2.0

    def step_for(self, u: np.ndarray) -> float:
        if self.eps is not None:
            return self.eps
        scale = float(np.abs(u).max())
        return 1e-3 * scale if scale > 0 else 1e-3


@dataclass
class LossEval:
    total: Tensor
    data_term: float
    divergence: float
    output: Tensor

    @property
    def value(self) -> float:
        return self.total.item()

    def gradients(self, params, retain_graph: bool = False) -> dc.Gradients:
        return dc.backward(self.total, wrt=params, retain_graph=retain_graph)


def _probe(rng: np.random.Generator, shape, op: LinearOperator | None, space: str) -> np.ndarray:
    if op is not None and space == "range":
        return op.adjoint_array(rng.standard_normal(op.measurement_shape))
    return rng.standard_normal(shape)


def mc_divergence(
    net: NetFn,
    u,
    cfg: GsureConfig,
    op: LinearOperator | None = None,
    seed: int | None = None,
    base: Tensor | None = None,
) -> Tensor:
    """Monte-Carlo estimate of ``div_u f(u)`` as a differentiable scalar.

    Each probe contributes ``b·(f(u + eps b) - f(u)) / eps`` (or the central
    difference). ``base`` may carry an already computed ``f(u)`` to save a pass.
    """
    u = dc.as_tensor(u)
    rng = np.random.default_rng(cfg.probe_seed if seed is None else seed)
    eps = cfg.step_for(u.data)
    if cfg.scheme == "forward" and base is None:
        base = net(u)
    total = None
    for _ in range(cfg.probes):
        b = _probe(rng, u.shape, op, cfg.probe_space)
        bt = Tensor(b)
        plus = net(u + Tensor(eps * b))
        if cfg.scheme == "forward":
            est = dc.dot(bt, plus - base) / eps
        else:
            minus = net(u - Tensor(eps * b))
            est = dc.dot(bt, plus - minus) / (2.0 * eps)
        total = est if total is None else total + est
    return total / float(cfg.probes)


def dip_loss(net: NetFn, op: LinearOperator, u, y) -> LossEval:
    """``||A f(u) - y||^2``."""
    u = dc.as_tensor(u)
    xhat = net(u)
    total = dc.sumsq(op.apply(xhat) - dc.as_tensor(y))
    return LossEval(total, total.item(), 0.0, xhat)


def gsure_loss(net: NetFn, op: LinearOperator, y, cfg: GsureConfig, seed: int | None = None) -> LossEval:
    """``||P f(u) - x_LS||^2 + w * div f(u)`` with ``u = Aᴴy``.

    Constant terms of the risk identity are dropped, so the value estimates
    the projected MSE up to an ``f``-independent offset.
    """
    y = dc.as_tensor(y)
    u = op.adjoint(y)
    xhat = net(u)
    if op.is_projector:
        p_xhat = op.normal(xhat)
        x_ls = u
    else:
        p_xhat = project(op, xhat, cfg.cg)
        x_ls = least_squares_image(op, y, cfg.cg)
    data = dc.sumsq(p_xhat - x_ls)
    w = cfg.weight
    if w == 0.0:
        return LossEval(data, data.item(), 0.0, xhat)
    div = mc_divergence(net, u, cfg, op=op, seed=seed, base=xhat)
    total = data + w * div
    return LossEval(total, data.item(), div.item(), xhat)


def mse_oracle(xhat, x) -> float:
    a, b = np.asarray(_arr(xhat)), np.asarray(_arr(x))
    if a.shape != b.shape:
        raise dc.DimensionError(f"mse_oracle: shape mismatch {a.shape} vs {b.shape}")
    d = (a - b).ravel()
    return float(d @ d)


def pmse_oracle(xhat, x, op: LinearOperator, cfg: CgConfig = CgConfig(), closed_form: bool = False) -> float:
    a, b = np.asarray(_arr(xhat)), np.asarray(_arr(x))
    if a.shape != b.shape:
        raise dc.DimensionError(f"pmse_oracle: shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    pd = op.normal_array(diff) if closed_form else project(op, diff, cfg).data
    return float(pd.ravel() @ pd.ravel())


def _arr(x):
    if isinstance(x, Tensor):
        return x.data
    image = getattr(x, "image", None)
    return image if image is not None else x
