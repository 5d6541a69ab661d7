"""Masked linear forward models, conjugate gradient, range-space projection.

Images are ``[2,H,W]`` real tensors (real, imaginary). Measurements are
``[2,M]`` with ``M`` the number of sampled locations, so ``A Aᴴ = I`` and
``AᴴA`` is an orthogonal projector for both operator kinds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Tensor


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class CgConfig:
    lam: float = 0.0
    tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"CG ridge weight must be >= 0, got {self.lam}")
        if not self.tol > 0:
            raise ValueError(f"CG tolerance must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"CG max_iter must be positive, got {self.max_iter}")


@dataclass(frozen=True, eq=False)
class LinearOperator:
    kind: str
    mask: np.ndarray
    sigma: float = 0.0
    _index: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("fourier_mask", "inpaint_mask"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got shape {m.shape}")
        m = m.astype(bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "_index", np.nonzero(m))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (2, *self.mask.shape)

    @property
    def measurement_shape(self) -> tuple[int, int]:
        return (2, int(self.mask.sum()))

    @property
    def fraction(self) -> float:
        return float(self.mask.mean())

    @property
    def is_projector(self) -> bool:
        """AᴴA is an orthogonal projector (true for every kind implemented here)."""
        return True

    # -- array level -------------------------------------------------------

    def _check(self, a: np.ndarray, shape, what: str):
        if a.shape != shape:
            raise DimensionError(f"{what}: expected shape {shape}, got {a.shape}")

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        self._check(x, self.image_shape, "apply")
        if self.kind == "fourier_mask":
            k = np.fft.fftshift(np.fft.fft2(x[0] + 1j * x[1], norm="ortho"))
            s = k[self._index]
            return np.stack([s.real, s.imag])
        return x[:, self._index[0], self._index[1]].copy()

    def adjoint_array(self, y: np.ndarray) -> np.ndarray:
        self._check(y, self.measurement_shape, "adjoint")
        if self.kind == "fourier_mask":
            k = np.zeros(self.mask.shape, dtype=complex)
            k[self._index] = y[0] + 1j * y[1]
            img = np.fft.ifft2(np.fft.ifftshift(k), norm="ortho")
            return np.stack([img.real, img.imag])
        out = np.zeros(self.image_shape)
        out[:, self._index[0], self._index[1]] = y
        return out

    def normal_array(self, x: np.ndarray) -> np.ndarray:
        self._check(x, self.image_shape, "normal")
        if self.kind == "fourier_mask":
            k = np.fft.fftshift(np.fft.fft2(x[0] + 1j * x[1], norm="ortho"))
            img = np.fft.ifft2(np.fft.ifftshift(k * self.mask), norm="ortho")
            return np.stack([img.real, img.imag])
        return x * self.mask

    # -- differentiable ----------------------------------------------------

    def apply(self, x: Tensor) -> Tensor:
        return dc.linear_map(x, self.apply_array, self.adjoint_array, "A")

    def adjoint(self, y: Tensor) -> Tensor:
        return dc.linear_map(y, self.adjoint_array, self.apply_array, "AH")

    def normal(self, x: Tensor) -> Tensor:
        return dc.linear_map(x, self.normal_array, self.normal_array, "AHA")


def fourier_operator(mask, sigma: float = 0.0) -> LinearOperator:
    return LinearOperator("fourier_mask", np.asarray(mask), sigma)


def inpaint_operator(mask, sigma: float = 0.0) -> LinearOperator:
    return LinearOperator("inpaint_mask", np.asarray(mask), sigma)


def apply(op: LinearOperator, x) -> Tensor:
    return op.apply(dc.as_tensor(x))


def adjoint(op: LinearOperator, y) -> Tensor:
    return op.adjoint(dc.as_tensor(y))


def cg_solve(op: LinearOperator, rhs, cfg: CgConfig = CgConfig(), lam=None, x0=None) -> Tensor:
    """Solve ``(AᴴA + λI) z = rhs`` by conjugate gradient.

    Runs on :class:`Tensor` arithmetic, so when ``rhs`` or a tensor-valued
    ``lam`` carries a graph the executed iterations are differentiable.
    ``lam`` overrides ``cfg.lam``. With ``λ = 0`` and ``rhs`` in the range of
    AᴴA the Krylov iterates never leave that range, so the result is the
    minimum-norm (pseudo-inverse) solution.
    """
    rhs = dc.as_tensor(rhs)
    if rhs.shape != op.image_shape:
        raise DimensionError(f"cg_solve: rhs shape {rhs.shape} != image shape {op.image_shape}")
    lam = cfg.lam if lam is None else lam
    lam_val = float(lam.data) if isinstance(lam, Tensor) else float(lam)
    if lam_val < 0:
        raise ValueError(f"ridge weight must be >= 0, got {lam_val}")

    def system(v: Tensor) -> Tensor:
        out = op.normal(v)
        if isinstance(lam, Tensor) or lam_val != 0.0:
            out = out + lam * v
        return out

    rhs_norm = float(np.linalg.norm(rhs.data))
    if rhs_norm == 0.0:
        return Tensor(np.zeros(op.image_shape))
    if x0 is None:
        x = Tensor(np.zeros(op.image_shape))
        r = rhs
    else:
        x = dc.as_tensor(x0)
        r = rhs - system(x)
    p = r
    rr = dc.sumsq(r)
    threshold = cfg.tol * rhs_norm
    it = 0
    while np.sqrt(rr.data) > threshold:
        if it == cfg.max_iter:
            raise ConvergenceError("conjugate gradient did not converge", float(np.sqrt(rr.data)) / rhs_norm, it)
        Ap = system(p)
        alpha = rr / dc.dot(p, Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = dc.sumsq(r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    return x


def project(op: LinearOperator, z, cfg: CgConfig = CgConfig()) -> Tensor:
    """Range-space projection ``(AᴴA)†AᴴA z`` evaluated by CG."""
    z = dc.as_tensor(z)
    return cg_solve(op, op.normal(z), cfg)


def project_closed_form(op: LinearOperator, z) -> Tensor:
    """``AᴴA z``; equals the projection exactly when ``op.is_projector``."""
    return op.normal(dc.as_tensor(z))


def least_squares_image(op: LinearOperator, y, cfg: CgConfig = CgConfig()) -> Tensor:
    """``x_LS = (AᴴA)†Aᴴy`` by CG on the normal equations."""
    return cg_solve(op, op.adjoint(dc.as_tensor(y)), cfg)
