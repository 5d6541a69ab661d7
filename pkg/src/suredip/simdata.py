"""Synthetic phantoms, k-space masks, noisy measurements, metrics and image I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffcore import DimensionError, Tensor
from .operators import LinearOperator

PSNR_CAP_DB = 200.0
METRIC_FIELDS = ("epoch", "loss", "data_term", "divergence", "psnr")

# Modified (higher-contrast) Shepp-Logan table:
# intensity, semi-axis a (x), semi-axis b (y), centre x0, centre y0, rotation (degrees)
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

# amplitude, sigma, x0, y0
_BLOBS = (
    (1.0, 0.30, -0.25, 0.20),
    (0.7, 0.18, 0.35, -0.10),
    (-0.5, 0.12, 0.05, -0.45),
    (0.6, 0.08, -0.40, -0.35),
    (0.4, 0.22, 0.30, 0.45),
)


@dataclass(frozen=True, eq=False)
class Phantom:
    image: np.ndarray
    name: str
    peak: float

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 2:
            raise DimensionError(f"phantom image must be [2,H,W], got {self.image.shape}")
        if not self.peak > 0:
            raise ValueError("phantom peak must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[1:]


def pixel_grid(H: int, W: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-centre coordinates on [-1, 1]^2, y pointing up."""
    x = -1.0 + (2.0 * np.arange(W) + 1.0) / W
    y = 1.0 - (2.0 * np.arange(H) + 1.0) / H
    return np.meshgrid(x, y)


def shepp_logan_magnitude(H: int, W: int) -> np.ndarray:
    X, Y = pixel_grid(H, W)
    img = np.zeros((H, W))
    for rho, a, b, x0, y0, deg in SHEPP_LOGAN_ELLIPSES:
        t = np.deg2rad(deg)
        xr = (X - x0) * np.cos(t) + (Y - y0) * np.sin(t)
        yr = -(X - x0) * np.sin(t) + (Y - y0) * np.cos(t)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += rho
    return img


def _blobs_magnitude(H: int, W: int) -> np.ndarray:
    X, Y = pixel_grid(H, W)
    img = np.zeros((H, W))
    for amp, s, x0, y0 in _BLOBS:
        img += amp * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2 * s * s))
    return img


def phase_field(H: int, W: int, amplitude: float) -> np.ndarray:
    X, Y = pixel_grid(H, W)
    return amplitude * np.pi * (0.5 * X + 0.5 * np.sin(np.pi * Y))


def make_phantom(name: str = "shepp_logan", H: int = 64, W: int = 64, phase_amplitude: float = 0.0) -> Phantom:
    if H < 16 or W < 16:
        raise ValueError(f"phantom extents must be >= 16, got {H}x{W}")
    if name == "shepp_logan":
        mag = shepp_logan_magnitude(H, W)
    elif name == "blobs":
        mag = _blobs_magnitude(H, W)
    else:
        raise ValueError(f"unknown phantom {name!r}")
    if phase_amplitude == 0.0:
        img = np.stack([mag, np.zeros_like(mag)])
    else:
        phi = phase_field(H, W, phase_amplitude)
        img = np.stack([mag * np.cos(phi), mag * np.sin(phi)])
    img = img / np.abs(img).max()
    return Phantom(img, name, float(np.abs(img).max()))


# -- masks -------------------------------------------------------------------


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "vd2d"
    acceleration: float = 4.0
    calib: int = 8
    seed: int = 0
    power: float = 3.0

    def __post_init__(self):
        if self.kind not in ("vd2d", "cartesian1d", "full"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if not self.acceleration >= 1:
            raise ValueError(f"acceleration must be >= 1, got {self.acceleration}")
        if self.calib < 0:
            raise ValueError("calibration extent must be >= 0")


def _centered_radius(n: int) -> np.ndarray:
    return np.abs(np.arange(n) - n // 2) / (n / 2)


def _fill_to_target(mask, candidates, weights, target, rng):
    """Random add/remove among ``candidates`` until ``mask`` holds ``target`` ones."""
    count = int(mask.sum())
    if count > target:
        on = np.flatnonzero(mask & candidates)
        mask.flat[rng.choice(on, count - target, replace=False)] = False
    elif count < target:
        off = np.flatnonzero(~mask & candidates)
        w = weights.flat[off] + 1e-12
        mask.flat[rng.choice(off, target - count, replace=False, p=w / w.sum())] = True
    return mask


def make_mask(spec: MaskSpec, H: int, W: int) -> np.ndarray:
    """Binary sampling mask on the centred k-space grid (DC at ``[H//2, W//2]``)."""
    if spec.kind == "full" or spec.acceleration == 1:
        return np.ones((H, W))
    rng = np.random.default_rng(spec.seed)
    c = spec.calib

    if spec.kind == "cartesian1d":
        target = int(round(W / spec.acceleration))
        if c > target:
            raise ValueError(f"calibration lines ({c}) exceed the line budget ({target})")
        lines = np.zeros(W, dtype=bool)
        lines[W // 2 - c // 2 : W // 2 - c // 2 + c] = True
        density = np.clip(1.0 - _centered_radius(W), 0.0, None) ** spec.power
        lines = _fill_to_target(lines, ~lines, density, target, rng)
        return np.broadcast_to(lines, (H, W)).astype(float)

    target = int(round(H * W / spec.acceleration))
    if c * c > target:
        raise ValueError(f"calibration region ({c}x{c}) exceeds the sample budget ({target})")
    ry = _centered_radius(H)[:, None]
    rx = _centered_radius(W)[None, :]
    r = np.sqrt(ry**2 + rx**2) / np.sqrt(2.0)
    density = np.clip(1.0 - r, 0.0, None) ** spec.power
    mask = np.zeros((H, W), dtype=bool)
    mask[H // 2 - c // 2 : H // 2 - c // 2 + c, W // 2 - c // 2 : W // 2 - c // 2 + c] = True
    free = ~mask
    remaining = target - int(mask.sum())
    d = np.where(free, density, 0.0)
    # scale s with sum(min(1, s*d)) == remaining, by bisection
    lo, hi = 0.0, 1.0
    while np.minimum(1.0, hi * d).sum() < remaining and hi < 1e12:
        hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.minimum(1.0, mid * d).sum() < remaining:
            lo = mid
        else:
            hi = mid
    prob = np.minimum(1.0, hi * d)
    mask |= rng.random((H, W)) < prob
    mask = _fill_to_target(mask, free, density, target, rng)
    return mask.astype(float)


# -- measurements & metrics --------------------------------------------------


def _image_of(x) -> np.ndarray:
    if isinstance(x, Phantom):
        return x.image
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def measure(x, op: LinearOperator, sigma: float, seed: int) -> np.ndarray:
    """``y = A x + n`` with i.i.d. N(0, sigma^2) noise on every real component."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    y = op.apply_array(_image_of(x))
    if sigma > 0:
        y = y + sigma * np.random.default_rng(seed).standard_normal(y.shape)
    return y


def psnr(xhat, x) -> float:
    """PSNR in dB with peak ``Phantom.peak`` (or ``max|x|`` for bare arrays); capped at 200 dB."""
    est = _image_of(xhat)
    ref = _image_of(x)
    if est.shape != ref.shape:
        raise DimensionError(f"psnr: shape mismatch {est.shape} vs {ref.shape}")
    peak = x.peak if isinstance(x, Phantom) else float(np.abs(ref).max())
    mse = float(np.mean((est - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak**2 / mse))


# -- file output -------------------------------------------------------------


def magnitude(img) -> np.ndarray:
    a = _image_of(img)
    return np.hypot(a[0], a[1])


def pgm_bytes(img) -> bytes:
    """8-bit binary PGM of the magnitude image, min-max windowed."""
    mag = magnitude(img)
    lo, hi = mag.min(), mag.max()
    scaled = np.zeros_like(mag) if hi == lo else (mag - lo) / (hi - lo)
    pix = np.round(scaled * 255.0).astype(np.uint8)
    H, W = pix.shape
    return f"P5\n{W} {H}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(path, img) -> None:
    Path(path).write_bytes(pgm_bytes(img))


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    W, H = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(H, W)


def format_float(v: float) -> str:
    return repr(float(v))


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for r in rows:
        w.writerow([int(r.epoch), *(format_float(getattr(r, f)) for f in METRIC_FIELDS[1:])])
    return buf.getvalue()


def write_metrics_csv(path, rows) -> None:
    Path(path).write_text(metrics_csv(rows))
