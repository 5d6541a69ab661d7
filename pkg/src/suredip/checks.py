"""Statistical validation of the divergence estimator and the GSURE loss.

Each check returns a :class:`CheckResult` with the measured statistic, the
analytic target and the threshold it was judged against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from . import operators as O
from . import simdata as S
from .losses import GsureConfig, gsure_loss, mc_divergence, pmse_oracle


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    expected: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: observed={self.observed:.6g} expected={self.expected:.6g} tol={self.tolerance:.3g} {self.detail}".rstrip()


def linear_net(W: np.ndarray):
    return lambda u: dc.matvec(W, u)


def random_linear_maps(n: int, count: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.uniform(0.5, 1.5) * np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n) for _ in range(count)]


def identity_check(size: int = 16, sigma: float = 0.01, probes: int = 2000, seed: int = 0, weight: float | None = None) -> CheckResult:
    """Identity estimator on pure denoising: GSURE equals ``2 sigma^2 n`` in expectation."""
    op = O.inpaint_operator(np.ones((size, size)))
    y = np.random.default_rng(seed).standard_normal(op.measurement_shape)
    cfg = GsureConfig(sigma=sigma, eps=1e-3, probes=probes, probe_seed=seed, divergence_weight=weight)
    n = 2 * size * size
    value = gsure_loss(lambda u: u, op, y, cfg).value
    target = 2.0 * sigma**2 * n
    se = 2.0 * sigma**2 * np.sqrt(2.0 * n / probes)
    return CheckResult("identity-denoising", abs(value - target) <= 3 * se, value, target, 3 * se)


def trace_check(size: int = 16, maps: int = 5, probes: int = 2000, seed: int = 0, rel_tol: float = 0.05) -> list[CheckResult]:
    """Divergence of random dense linear maps against their exact traces."""
    n = 2 * size * size
    u = np.random.default_rng(seed).standard_normal((2, size, size))
    out = []
    for k, W in enumerate(random_linear_maps(n, maps, seed)):
        cfg = GsureConfig(eps=1e-2, probes=probes, probe_seed=seed + k, probe_space="full")
        est = mc_divergence(linear_net(W), u, cfg).item()
        tr = float(np.trace(W))
        rel = abs(est - tr) / abs(tr)
        out.append(CheckResult(f"trace-map-{k}", rel <= rel_tol, est, tr, rel_tol, f"rel_err={rel:.3g}"))
    return out


def _polynomial_map(u: dc.Tensor) -> dc.Tensor:
    u2 = u * u
    return u * 0.5 + u2 * 0.3 + u2 * u * 0.2 + u2 * u2 * u * 0.1


def _polynomial_divergence(u: np.ndarray, b: np.ndarray) -> float:
    return float(b @ ((0.5 + 0.6 * u + 0.6 * u**2 + 0.5 * u**4) * b))


def eps_halving_check(n: int = 64, probes: int = 50, eps: float = 0.1, scheme: str = "central", seed: int = 0) -> CheckResult:
    """Bias ratio of the divergence estimate at ``eps`` versus ``eps/2`` on a smooth polynomial map.

    Probes are shared between the two step sizes so only the truncation
    error differs. A second-order scheme gives a ratio of at least 4.
    """
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    r = np.random.default_rng(seed + 1)
    exact = np.mean([_polynomial_divergence(u, r.standard_normal(n)) for _ in range(probes)])
    bias = []
    for e in (eps, eps / 2):
        cfg = GsureConfig(eps=e, probes=probes, probe_seed=seed + 1, scheme=scheme, probe_space="full")
        bias.append(abs(mc_divergence(_polynomial_map, u, cfg).item() - exact))
    ratio = bias[0] / bias[1]
    return CheckResult(f"eps-halving-{scheme}", ratio >= 4.0, ratio, 4.0, 0.0, f"bias={bias[0]:.3g}->{bias[1]:.3g}")


def unbiasedness_problem(kind: str, size: int = 16, seed: int = 0) -> tuple[O.LinearOperator, np.ndarray]:
    if kind == "denoising":
        op = O.inpaint_operator(np.ones((size, size)))
    elif kind == "masked":
        op = O.fourier_operator(S.make_mask(S.MaskSpec("vd2d", 4.0, max(2, size // 8), seed), size, size))
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    return op, S.make_phantom("shepp_logan", size, size).image


def gsure_difference(
    op: O.LinearOperator,
    x: np.ndarray,
    W1: np.ndarray,
    W2: np.ndarray,
    sigma: float,
    draws: int,
    seed: int,
    weight: float | None = None,
) -> tuple[float, float]:
    """Mean and standard error of ``[gsure(f1) - gsure(f2)] - [pmse(f1) - pmse(f2)]`` over noise draws."""
    cfg = GsureConfig(sigma=sigma, eps=1e-2, probes=1, divergence_weight=weight)
    rng = np.random.default_rng(seed)
    f1, f2 = linear_net(W1), linear_net(W2)
    d = np.empty(draws)
    for k in range(draws):
        y = op.apply_array(x) + sigma * rng.standard_normal(op.measurement_shape)
        u = dc.Tensor(op.adjoint_array(y))
        g = gsure_loss(f1, op, y, cfg, seed=2 * k).value - gsure_loss(f2, op, y, cfg, seed=2 * k + 1).value
        p = pmse_oracle(f1(u), x, op, closed_form=True) - pmse_oracle(f2(u), x, op, closed_form=True)
        d[k] = g - p
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(draws))


def unbiasedness_check(
    kind: str,
    size: int = 16,
    sigma: float = 0.01,
    draws: int = 1000,
    seed: int = 0,
    weight: float | None = None,
) -> CheckResult:
    """Difference-form GSURE vs PMSE oracle for two fixed linear estimators, judged at 3 standard errors."""
    op, x = unbiasedness_problem(kind, size, seed)
    n = x.size
    rng = np.random.default_rng(seed + 7)
    W1 = 0.6 * np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
    W2 = 0.9 * np.eye(n)
    mean, se = gsure_difference(op, x, W1, W2, sigma, draws, seed, weight)
    return CheckResult(f"unbiased-{kind}", abs(mean) <= 3 * se, mean, 0.0, 3 * se, f"se={se:.3g}")


def sure_check_suite(
    size: int = 16,
    sigma: float = 0.01,
    probes: int = 2000,
    maps: int = 5,
    draws: int = 1000,
    seed: int = 0,
    weight: float | None = None,
) -> list[CheckResult]:
    results = [identity_check(size, sigma, probes, seed, weight)]
    results += trace_check(size, maps, probes, seed)
    results += [unbiasedness_check(k, size, sigma, draws, seed, weight) for k in ("denoising", "masked")]
    return results
