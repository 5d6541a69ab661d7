"""Classical single-shot comparators: anisotropic-TV (ADMM) and l1-Haar (ISTA).

Both minimise ``||Ax - y||^2 + mu * R(x)`` over ``[2,H,W]`` images, treating
the real and imaginary channels as independent real images in ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import DimensionError
from .operators import CgConfig, LinearOperator
from .simdata import psnr


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "tv"
    reg_weight: float = 0.01
    iters: int = 100
    rho: float = 1.0
    levels: int | None = None
    cg: CgConfig = field(default_factory=lambda: CgConfig(tol=1e-10, max_iter=500))

    def __post_init__(self):
        if self.method not in ("tv", "wavelet_l1"):
            raise ValueError(f"unknown baseline {self.method!r}")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be >= 0")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not self.rho > 0:
            raise ValueError("ADMM penalty rho must be > 0")


@dataclass
class BaselineResult:
    image: np.ndarray
    objective: list[float]
    primal_residual: list[float] = field(default_factory=list)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# -- finite differences (forward, Neumann: last difference is zero) ----------


def grad2d(x: np.ndarray) -> np.ndarray:
    """``[..., H, W] -> [2, ..., H, W]`` vertical and horizontal forward differences."""
    dv = np.zeros_like(x)
    dh = np.zeros_like(x)
    dv[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    dh[..., :, :-1] = x[..., :, 1:] - x[..., :, :-1]
    return np.stack([dv, dh])


def grad2d_adjoint(d: np.ndarray) -> np.ndarray:
    dv, dh = d[0], d[1]
    out = np.zeros_like(dv)
    out[..., :-1, :] -= dv[..., :-1, :]
    out[..., 1:, :] += dv[..., :-1, :]
    out[..., :, :-1] -= dh[..., :, :-1]
    out[..., :, 1:] += dh[..., :, :-1]
    return out


def tv_norm(x: np.ndarray) -> float:
    return float(np.abs(grad2d(x)).sum())


def tv_objective(op: LinearOperator, y: np.ndarray, x: np.ndarray, mu: float) -> float:
    r = op.apply_array(x) - y
    return float(r.ravel() @ r.ravel()) + mu * tv_norm(x)


def tv_recon(op: LinearOperator, y, cfg: BaselineConfig) -> BaselineResult:
    """ADMM on ``min ||Ax-y||^2 + mu ||Dx||_1`` with the split ``z = Dx``.

    The x-update solves ``(2AᴴA + rho DᵀD) x = 2Aᴴy + rho Dᵀ(z - w)`` by CG,
    warm-started from the previous iterate. Starts from ``x = Aᴴy``.
    """
    y = np.asarray(y, dtype=np.float64)
    mu, rho = cfg.reg_weight, cfg.rho
    aty = op.adjoint_array(y)
    x = aty.copy()
    z = grad2d(x)
    w = np.zeros_like(z)
    obj = [tv_objective(op, y, x, mu)]
    res: list[float] = []

    def system(v: np.ndarray) -> np.ndarray:
        return 2.0 * op.normal_array(v) + rho * grad2d_adjoint(grad2d(v))

    for _ in range(cfg.iters):
        rhs = 2.0 * aty + rho * grad2d_adjoint(z - w)
        x = _cg_array(system, rhs, x, cfg.cg)
        dx = grad2d(x)
        z = soft_threshold(dx + w, mu / rho)
        w = w + dx - z
        obj.append(tv_objective(op, y, x, mu))
        res.append(float(np.linalg.norm(dx - z)))
    return BaselineResult(x, obj, res)


def _cg_array(system, rhs: np.ndarray, x0: np.ndarray, cfg: CgConfig) -> np.ndarray:
    x = x0.copy()
    r = rhs - system(x)
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    p = r.copy()
    rr = float(r.ravel() @ r.ravel())
    for _ in range(cfg.max_iter):
        if np.sqrt(rr) <= cfg.tol * scale:
            break
        Ap = system(p)
        alpha = rr / float(p.ravel() @ Ap.ravel())
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r.ravel() @ r.ravel())
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


# -- orthonormal Haar --------------------------------------------------------


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _max_levels(H: int, W: int) -> int:
    return int(np.log2(min(H, W)))


def haar2(x: np.ndarray, levels: int | None = None) -> np.ndarray:
    """Multi-level orthonormal 2-D Haar transform of ``[..., H, W]`` (in-place layout)."""
    H, W = x.shape[-2:]
    if not (_is_pow2(H) and _is_pow2(W)):
        raise DimensionError(f"Haar transform needs power-of-two extents, got {H}x{W}")
    levels = _max_levels(H, W) if levels is None else levels
    c = np.array(x, dtype=np.float64, copy=True)
    h, w = H, W
    s = 1.0 / np.sqrt(2.0)
    for _ in range(levels):
        blk = c[..., :h, :w]
        a = (blk[..., 0::2, :] + blk[..., 1::2, :]) * s
        d = (blk[..., 0::2, :] - blk[..., 1::2, :]) * s
        blk = np.concatenate([a, d], axis=-2)
        a = (blk[..., :, 0::2] + blk[..., :, 1::2]) * s
        d = (blk[..., :, 0::2] - blk[..., :, 1::2]) * s
        c[..., :h, :w] = np.concatenate([a, d], axis=-1)
        h, w = h // 2, w // 2
    return c


def ihaar2(c: np.ndarray, levels: int | None = None) -> np.ndarray:
    H, W = c.shape[-2:]
    if not (_is_pow2(H) and _is_pow2(W)):
        raise DimensionError(f"Haar transform needs power-of-two extents, got {H}x{W}")
    levels = _max_levels(H, W) if levels is None else levels
    x = np.array(c, dtype=np.float64, copy=True)
    s = 1.0 / np.sqrt(2.0)
    for lev in reversed(range(levels)):
        h, w = H >> lev, W >> lev
        blk = x[..., :h, :w].copy()
        a, d = blk[..., :, : w // 2].copy(), blk[..., :, w // 2 :].copy()
        blk[..., :, 0::2] = (a + d) * s
        blk[..., :, 1::2] = (a - d) * s
        a, d = blk[..., : h // 2, :].copy(), blk[..., h // 2 :, :].copy()
        blk[..., 0::2, :] = (a + d) * s
        blk[..., 1::2, :] = (a - d) * s
        x[..., :h, :w] = blk
    return x


def wavelet_objective(op: LinearOperator, y: np.ndarray, x: np.ndarray, mu: float, levels=None) -> float:
    r = op.apply_array(x) - y
    return float(r.ravel() @ r.ravel()) + mu * float(np.abs(haar2(x, levels)).sum())


def wavelet_l1_recon(op: LinearOperator, y, cfg: BaselineConfig) -> BaselineResult:
    """ISTA on ``min ||Ax-y||^2 + mu ||Wx||_1`` with orthonormal Haar ``W``.

    The smooth part has Lipschitz constant ``2||AᴴA|| <= 2``, so a step of 1/2
    gives ``x <- Wᴴ soft(W(x - AᴴA x + Aᴴy), mu/2)``. Starts from ``x = Aᴴy``.
    """
    y = np.asarray(y, dtype=np.float64)
    H, W = op.mask.shape
    if not (_is_pow2(H) and _is_pow2(W)):
        raise DimensionError(f"wavelet baseline needs power-of-two extents, got {H}x{W}")
    mu, lv = cfg.reg_weight, cfg.levels
    aty = op.adjoint_array(y)
    x = aty.copy()
    obj = [wavelet_objective(op, y, x, mu, lv)]
    for _ in range(cfg.iters):
        v = x - op.normal_array(x) + aty
        x = ihaar2(soft_threshold(haar2(v, lv), mu / 2.0), lv)
        obj.append(wavelet_objective(op, y, x, mu, lv))
    return BaselineResult(x, obj)


def run_baseline(op: LinearOperator, y, cfg: BaselineConfig) -> BaselineResult:
    return tv_recon(op, y, cfg) if cfg.method == "tv" else wavelet_l1_recon(op, y, cfg)


def tune_baseline(op: LinearOperator, y, truth, cfg: BaselineConfig, grid) -> tuple[float, BaselineResult, list[tuple[float, float]]]:
    """Grid search over ``reg_weight`` maximising PSNR against the known truth."""
    scores = []
    best = None
    for mu in grid:
        res = run_baseline(op, y, BaselineConfig(**{**cfg.__dict__, "reg_weight": float(mu)}))
        score = psnr(res.image, truth)
        scores.append((float(mu), score))
        if best is None or score > best[0]:
            best = (score, float(mu), res)
    return best[1], best[2], scores
