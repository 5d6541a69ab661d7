"""Untrained reconstruction networks: residual CNN denoiser, small UNET, unrolled model-based net."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Tensor
from .operators import CgConfig, LinearOperator, cg_solve


@dataclass(frozen=True)
class ArchConfig:
    arch: str = "unrolled"
    in_channels: int = 2
    width: int = 32
    depth: int = 5
    unet_channels: tuple[int, int, int] = (32, 64, 128)
    unrolls: int = 10
    lambda_dc: float = 1.0
    train_lambda: bool = True
    share_weights: bool = True
    dc_iters: int = 10
    dc_tol: float = 1e-10
    residual_gain: float = 1.0

    def __post_init__(self):
        if self.arch not in ("denoiser", "unet", "unrolled"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.width < 1 or self.depth < 2:
            raise ValueError("denoiser needs width >= 1 and depth >= 2")
        if len(self.unet_channels) != 3 or min(self.unet_channels) < 1:
            raise ValueError("unet_channels must hold three positive widths")
        if self.unrolls < 1:
            raise ValueError(f"unrolls must be >= 1, got {self.unrolls}")
        if not self.lambda_dc > 0:
            raise ValueError(f"lambda_dc must be > 0, got {self.lambda_dc}")
        if self.residual_gain < 0:
            raise ValueError(f"residual_gain must be >= 0, got {self.residual_gain}")
        object.__setattr__(self, "unet_channels", tuple(int(c) for c in self.unet_channels))


def _conv_params(name: str, cin: int, cout: int, rng: np.random.Generator, k: int = 3, gain: float = 1.0):
    bound = gain * np.sqrt(6.0 / (cin * k * k))
    w = Tensor(rng.uniform(-bound, bound, size=(cout, cin, k, k)), requires_grad=True, name=f"{name}.w")
    b = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.b")
    return [w, b]


class Network:
    """Parameter list plus architecture descriptor; ``net(u)`` runs the forward pass."""

    def __init__(self, cfg: ArchConfig, params: list[Tensor]):
        self.cfg = cfg
        self.params = params

    @property
    def arch(self) -> str:
        return self.cfg.arch

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params))

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(p.name, p.shape) for p in self.params]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params])

    def set_flat(self, phi: np.ndarray) -> None:
        phi = np.asarray(phi, dtype=np.float64)
        if phi.size != self.param_count:
            raise DimensionError(f"parameter vector has {phi.size} entries, network needs {self.param_count}")
        i = 0
        for p in self.params:
            p.data = phi[i : i + p.size].reshape(p.shape).copy()
            i += p.size

    def zero_(self) -> "Network":
        self.set_flat(np.zeros(self.param_count))
        return self

    def _check_input(self, u: Tensor):
        C = self.cfg.in_channels
        if u.ndim != 3 or u.shape[0] != C:
            raise DimensionError(f"{self.arch}: expected input [{C},H,W], got {u.shape}")

    def __call__(self, u) -> Tensor:
        u = dc.as_tensor(u)
        self._check_input(u)
        return self.forward(u)

    def forward(self, u: Tensor) -> Tensor:
        raise NotImplementedError


def _residual_denoise(x: Tensor, params: list[Tensor]) -> Tensor:
    h = x
    n = len(params) // 2
    for i in range(n):
        h = dc.conv2d(h, params[2 * i], params[2 * i + 1])
        if i < n - 1:
            h = dc.relu(h)
    return x + h


class Denoiser(Network):
    """Residual CNN ``x + r(x)``: ``depth`` 3x3 conv layers, ReLU between, linear last."""

    @classmethod
    def build(cls, cfg: ArchConfig, seed: int = 0) -> "Denoiser":
        return cls(cfg, denoiser_params(cfg, np.random.default_rng(seed)))

    def forward(self, u: Tensor) -> Tensor:
        return _residual_denoise(u, self.params)


def denoiser_params(cfg: ArchConfig, rng: np.random.Generator, prefix: str = "den") -> list[Tensor]:
    """He-uniform kernels; the last (residual output) layer's bound is scaled by ``residual_gain``."""
    chans = [cfg.in_channels] + [cfg.width] * (cfg.depth - 1) + [cfg.in_channels]
    params: list[Tensor] = []
    for i in range(cfg.depth):
        gain = cfg.residual_gain if i == cfg.depth - 1 else 1.0
        params += _conv_params(f"{prefix}{i}", chans[i], chans[i + 1], rng, gain=gain)
    return params


class UNet(Network):
    """Three-scale encoder/decoder with stride-2 downsampling and skip concatenation."""

    @classmethod
    def build(cls, cfg: ArchConfig, seed: int = 0) -> "UNet":
        rng = np.random.default_rng(seed)
        C = cfg.in_channels
        c1, c2, c3 = cfg.unet_channels
        specs = [
            ("enc1a", C, c1), ("enc1b", c1, c1),
            ("down1", c1, c2), ("enc2b", c2, c2),
            ("down2", c2, c3), ("mid", c3, c3),
            ("dec2a", c3 + c2, c2), ("dec2b", c2, c2),
            ("dec1a", c2 + c1, c1), ("dec1b", c1, c1),
            ("out", c1, C),
        ]  # fmt: skip
        params: list[Tensor] = []
        for name, cin, cout in specs:
            params += _conv_params(name, cin, cout, rng)
        return cls(cfg, params)

    def _check_input(self, u: Tensor):
        super()._check_input(u)
        if u.shape[1] % 4 or u.shape[2] % 4:
            raise DimensionError(f"unet: spatial extents must be divisible by 4, got {u.shape[1:]}")

    def forward(self, u: Tensor) -> Tensor:
        p = self.params

        def conv(h, i, stride=1, act=True):
            out = dc.conv2d(h, p[2 * i], p[2 * i + 1], stride=stride)
            return dc.relu(out) if act else out

        e1 = conv(conv(u, 0), 1)
        e2 = conv(conv(e1, 2, stride=2), 3)
        m = conv(conv(e2, 4, stride=2), 5)
        d2 = conv(conv(dc.concat([dc.upsample2x(m), e2]), 6), 7)
        d1 = conv(conv(dc.concat([dc.upsample2x(d2), e1]), 8), 9)
        return conv(d1, 10, act=False)


class Unrolled(Network):
    """``x0 = u``; ``x_{k+1} = (AᴴA + λI)^{-1}(u + λ D(x_k))`` for ``K`` steps.

    ``u`` plays the role of ``Aᴴy``. The denoiser ``D`` is shared across steps
    unless ``share_weights`` is off. ``λ = exp(log_lambda)`` keeps the
    data-consistency weight positive while training it.
    """

    def __init__(self, cfg: ArchConfig, params: list[Tensor], op: LinearOperator):
        super().__init__(cfg, params)
        self.op = op

    @classmethod
    def build(cls, cfg: ArchConfig, op: LinearOperator, seed: int = 0) -> "Unrolled":
        rng = np.random.default_rng(seed)
        if cfg.share_weights:
            params = denoiser_params(cfg, rng)
        else:
            params = []
            for k in range(cfg.unrolls):
                params += denoiser_params(cfg, rng, prefix=f"step{k}.den")
        log_lam = Tensor(np.log(cfg.lambda_dc), requires_grad=cfg.train_lambda, name="log_lambda_dc")
        return cls(cfg, params + [log_lam], op)

    @property
    def log_lambda(self) -> Tensor:
        return self.params[-1]

    def step_params(self, k: int) -> list[Tensor]:
        n = 2 * self.cfg.depth
        if self.cfg.share_weights:
            return self.params[:n]
        return self.params[k * n : (k + 1) * n]

    @property
    def cg_config(self) -> CgConfig:
        return CgConfig(lam=0.0, tol=self.cfg.dc_tol, max_iter=self.cfg.dc_iters)

    def unshared(self) -> "Unrolled":
        """Copy with one independent denoiser per step, initialised to the shared values."""
        cfg = ArchConfig(**{**asdict(self.cfg), "share_weights": False})
        shared = self.params[: 2 * self.cfg.depth]
        params = []
        for k in range(cfg.unrolls):
            params += [Tensor(p.data, requires_grad=True, name=f"step{k}.{p.name}") for p in shared]
        params.append(Tensor(self.log_lambda.data, requires_grad=self.log_lambda.requires_grad, name="log_lambda_dc"))
        return Unrolled(cfg, params, self.op)

    def forward(self, u: Tensor, op: LinearOperator | None = None, cg: CgConfig | None = None) -> Tensor:
        op = self.op if op is None else op
        cg = self.cg_config if cg is None else cg
        lam = dc.exp(self.log_lambda)
        x = u
        for k in range(self.cfg.unrolls):
            z = _residual_denoise(x, self.step_params(k))
            x = cg_solve(op, u + lam * z, cg, lam=lam)
        return x


def build_network(cfg: ArchConfig, op: LinearOperator | None = None, seed: int = 0) -> Network:
    if cfg.arch == "denoiser":
        return Denoiser.build(cfg, seed)
    if cfg.arch == "unet":
        return UNet.build(cfg, seed)
    if op is None:
        raise ValueError("the unrolled network needs a forward operator")
    return Unrolled.build(cfg, op, seed)


def denoiser_forward(net: Network, x) -> Tensor:
    return _residual_denoise(dc.as_tensor(x), net.params[: 2 * net.cfg.depth])


def unet_forward(net: UNet, u) -> Tensor:
    return net(u)


def unrolled_forward(net: Unrolled, op: LinearOperator, y, cfg: CgConfig | None = None) -> Tensor:
    u = op.adjoint(dc.as_tensor(y))
    return net.forward(u, op=op, cg=cfg)


def expected_param_count(cfg: ArchConfig) -> int:
    C, w, k2 = cfg.in_channels, cfg.width, 9
    if cfg.arch in ("denoiser", "unrolled"):
        chans = [C] + [w] * (cfg.depth - 1) + [C]
        den = sum(chans[i] * chans[i + 1] * k2 + chans[i + 1] for i in range(cfg.depth))
        if cfg.arch == "denoiser":
            return den
        return den * (1 if cfg.share_weights else cfg.unrolls) + 1
    c1, c2, c3 = cfg.unet_channels
    pairs = [(C, c1), (c1, c1), (c1, c2), (c2, c2), (c2, c3), (c3, c3),
             (c3 + c2, c2), (c2, c2), (c2 + c1, c1), (c1, c1), (c1, C)]  # fmt: skip
    return sum(a * b * k2 + b for a, b in pairs)


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(net: Network, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.sdt`` (flat parameters) and ``<prefix>.json`` (descriptor)."""
    prefix = Path(prefix)
    sdt = prefix.with_suffix(".sdt")
    meta = prefix.with_suffix(".json")
    dc.sdt1.save(sdt, net.flat())
    desc = {
        "format": "suredip-checkpoint-1",
        "arch": net.arch,
        "hyper": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(net.cfg).items()},
        "param_count": net.param_count,
        "layout": [{"name": n, "shape": list(s)} for n, s in net.layout()],
    }
    meta.write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")
    return sdt, meta


def load_checkpoint(prefix, op: LinearOperator | None = None) -> Network:
    prefix = Path(prefix)
    desc = json.loads(prefix.with_suffix(".json").read_text())
    hyper = dict(desc["hyper"])
    hyper["unet_channels"] = tuple(hyper["unet_channels"])
    net = build_network(ArchConfig(**hyper), op=op, seed=0)
    net.set_flat(dc.sdt1.load(prefix.with_suffix(".sdt")))
    return net
