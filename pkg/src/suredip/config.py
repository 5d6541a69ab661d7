"""Experiment configuration: TOML sections mapped onto frozen dataclasses.

Every section is validated in full, including the owning modules' own
invariants, before anything runs. Problems are reported as
:class:`ConfigError` carrying the file, line and ``[section] field``.
"""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines import BaselineConfig
from .losses import GsureConfig
from .models import ArchConfig
from .simdata import MaskSpec

REQUIRED = object()

NETWORK_METHODS = ("dip-unet", "sure-unet", "dip-unrolled", "sure-unrolled")
BASELINE_METHODS = ("tv", "wavelet")
METHODS = NETWORK_METHODS + BASELINE_METHODS


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None, where: str = ""):
        self.source, self.line, self.where, self.message = source, line, where, message
        loc = f"{source}:{line}" if line else source
        super().__init__(f"{loc}: {where + ': ' if where else ''}{message}")


@dataclass(frozen=True)
class PhantomSection:
    name: str = "shepp_logan"
    height: int = 64
    width: int = 64
    phase_amplitude: float = 0.0


@dataclass(frozen=True)
class MaskSection:
    kind: str = "vd2d"
    acceleration: float = 4.0
    calib: int = 8
    seed: int = 0


@dataclass(frozen=True)
class NoiseSection:
    sigma: float = REQUIRED  # type: ignore[assignment]
    seed: int = 100


@dataclass(frozen=True)
class ModelSection:
    arch: str = "unet"
    width: int = 32
    depth: int = 5
    unet_channels: tuple[int, ...] = (32, 64, 128)
    unrolls: int = 10
    lambda_dc: float = 1.0
    train_lambda: bool = True
    dc_iters: int = 10
    residual_gain: float = 1.0


@dataclass(frozen=True)
class LossSection:
    kind: str = "gsure"
    eps: float | None = None
    probes: int = 1
    probe_seed: int = 0
    weight_mode: str = "sigma2"
    divergence_weight: float | None = None
    scheme: str = "forward"
    probe_space: str = "range"


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 5000
    lr: float = 1e-3
    unrolled_lr: float | None = None
    seeds: tuple[int, ...] = (0,)
    checkpoints: int = 0
    checkpoint_probes: int = 100
    log_every: int = 100


@dataclass(frozen=True)
class BaselinesSection:
    iters: int = 100
    rho: float = 1.0
    levels: int | None = None
    tv_grid: tuple[float, ...] = (0.001, 0.003, 0.01, 0.02, 0.03, 0.05, 0.1)
    wavelet_grid: tuple[float, ...] = (0.001, 0.003, 0.01, 0.02, 0.03, 0.05, 0.1)


@dataclass(frozen=True)
class CompareSection:
    methods: tuple[str, ...] = METHODS


@dataclass(frozen=True)
class SureCheckSection:
    size: int = 16
    probes: int = 2000
    maps: int = 5
    draws: int = 1000
    seed: int = 0
    divergence_weight: float | None = None


@dataclass(frozen=True)
class OutputSection:
    dir: str = "runs/default"


@dataclass(frozen=True)
class ExperimentConfig:
    noise: NoiseSection
    phantom: PhantomSection = field(default_factory=PhantomSection)
    mask: MaskSection = field(default_factory=MaskSection)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    train: TrainSection = field(default_factory=TrainSection)
    baselines: BaselinesSection = field(default_factory=BaselinesSection)
    compare: CompareSection = field(default_factory=CompareSection)
    sure_check: SureCheckSection = field(default_factory=SureCheckSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- views onto the owning modules' configs ---

    def mask_spec(self) -> MaskSpec:
        m = self.mask
        return MaskSpec(m.kind, m.acceleration, m.calib, m.seed)

    def arch_config(self, arch: str | None = None) -> ArchConfig:
        m = self.model
        return ArchConfig(
            arch=arch or m.arch,
            width=m.width,
            depth=m.depth,
            unet_channels=tuple(m.unet_channels),
            unrolls=m.unrolls,
            lambda_dc=m.lambda_dc,
            train_lambda=m.train_lambda,
            dc_iters=m.dc_iters,
            residual_gain=m.residual_gain,
        )

    def gsure_config(self) -> GsureConfig:
        s = self.loss
        return GsureConfig(
            sigma=self.noise.sigma,
            eps=s.eps,
            probes=s.probes,
            probe_seed=s.probe_seed,
            weight_mode=s.weight_mode,
            divergence_weight=s.divergence_weight,
            scheme=s.scheme,
            probe_space=s.probe_space,
        )

    def baseline_config(self, method: str) -> BaselineConfig:
        b = self.baselines
        return BaselineConfig("tv" if method == "tv" else "wavelet_l1", 0.0, b.iters, b.rho, b.levels)

    def lr_for(self, arch: str) -> float:
        if arch == "unrolled" and self.train.unrolled_lr is not None:
            return self.train.unrolled_lr
        return self.train.lr

    def with_seeds(self, seeds) -> ExperimentConfig:
        return dataclasses.replace(self, train=dataclasses.replace(self.train, seeds=tuple(seeds)))

    def with_output(self, directory) -> ExperimentConfig:
        return dataclasses.replace(self, output=OutputSection(str(directory)))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_SECTION_TYPES = get_type_hints(ExperimentConfig)


def _key_line(text: str, section: str, key: str | None) -> int | None:
    """Line of ``key = ...`` inside ``[section]`` (or of the header when ``key`` is None)."""
    current = None
    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]")
    for n, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return n
    return None


def _coerce(value: Any, tp: Any, where: str):
    origin = get_origin(tp)
    args = get_args(tp)
    if origin is tuple:
        if not isinstance(value, list):
            raise TypeError(f"expected an array, got {type(value).__name__}")
        return tuple(_coerce(v, args[0], where) for v in value)
    if type(None) in args:
        inner = next(a for a in args if a is not type(None))
        return _coerce(value, inner, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise TypeError(f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported field type {tp}")


def _section(name: str, table: Any, text: str, source: str):
    cls = _SECTION_TYPES[name]
    if not isinstance(table, dict):
        raise ConfigError("must be a table", source, _key_line(text, name, None), f"[{name}]")
    hints = get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown field (expected one of {', '.join(sorted(known))})", source, _key_line(text, name, key), f"[{name}] {key}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in table:
            if f.default is REQUIRED:
                raise ConfigError("missing mandatory field", source, _key_line(text, name, None), f"[{name}] {f.name}")
            continue
        try:
            kwargs[f.name] = _coerce(table[f.name], hints[f.name], f.name)
        except TypeError as exc:
            raise ConfigError(str(exc), source, _key_line(text, name, f.name), f"[{name}] {f.name}") from None
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig, text: str, source: str) -> None:
    def fail(section: str, key: str | None, msg: str):
        raise ConfigError(msg, source, _key_line(text, section, key) or _key_line(text, section, None), f"[{section}]" + (f" {key}" if key else ""))

    if cfg.noise.sigma < 0:
        fail("noise", "sigma", "must be >= 0")
    if cfg.phantom.name not in ("shepp_logan", "blobs"):
        fail("phantom", "name", f"unknown phantom {cfg.phantom.name!r}")
    if min(cfg.phantom.height, cfg.phantom.width) < 16:
        fail("phantom", "height", "phantom extents must be >= 16")
    if cfg.model.arch not in ("unet", "unrolled", "denoiser"):
        fail("model", "arch", f"unknown architecture {cfg.model.arch!r}")
    if cfg.loss.kind not in ("dip", "gsure"):
        fail("loss", "kind", f"unknown loss {cfg.loss.kind!r} (expected dip or gsure)")
    checks = [
        ("mask", None, cfg.mask_spec),
        ("loss", None, cfg.gsure_config),
        ("model", None, cfg.arch_config),
        ("baselines", None, lambda: cfg.baseline_config("tv")),
    ]
    for section, key, build in checks:
        try:
            build()
        except ValueError as exc:
            fail(section, key, str(exc))
    t = cfg.train
    if t.epochs < 1:
        fail("train", "epochs", "must be >= 1")
    if not t.lr > 0 or (t.unrolled_lr is not None and not t.unrolled_lr > 0):
        fail("train", "lr", "learning rates must be > 0")
    if not t.seeds:
        fail("train", "seeds", "at least one seed is required")
    if t.checkpoints < 0 or t.checkpoint_probes < 2 or t.log_every < 1:
        fail("train", None, "checkpoints >= 0, checkpoint_probes >= 2 and log_every >= 1 are required")
    for m in cfg.compare.methods:
        if m not in METHODS:
            fail("compare", "methods", f"unknown method {m!r} (expected some of {', '.join(METHODS)})")
    if not cfg.compare.methods:
        fail("compare", "methods", "at least one method is required")
    for key in ("tv_grid", "wavelet_grid"):
        grid = getattr(cfg.baselines, key)
        if not grid or min(grid) < 0:
            fail("baselines", key, "grid must be non-empty with non-negative weights")
    s = cfg.sure_check
    if s.size < 16 or s.probes < 2 or s.maps < 1 or s.draws < 2:
        fail("sure_check", None, "size >= 16, probes >= 2, maps >= 1 and draws >= 2 are required")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", source, int(m.group(1)) if m else None) from None
    for name in raw:
        if name not in SECTIONS:
            raise ConfigError(f"unknown section (expected one of {', '.join(SECTIONS)})", source, _key_line(text, name, None), f"[{name}]")
    if "noise" not in raw:
        raise ConfigError("missing mandatory section [noise] with field sigma", source, None, "[noise] sigma")
    sections = {name: _section(name, raw[name], text, source) for name in raw}
    cfg = ExperimentConfig(**sections)
    _validate(cfg, text, source)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))
