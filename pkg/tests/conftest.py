import numpy as np
import pytest

from suredip.diffcore import Tensor, backward


def central_fd(fn, arrays, step=1e-5):
    """Central finite differences of scalar ``fn()`` w.r.t. each array (mutated in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = a[idx]
            a[idx] = old + step
            fp = fn()
            a[idx] = old - step
            fm = fn()
            a[idx] = old
            g[idx] = (fp - fm) / (2 * step)
        out.append(g)
    return out


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def check_param_grads(build_loss, params, step=1e-5, sample=None, rng=None):
    """Compare autodiff gradients of ``build_loss()`` against central differences.

    ``sample`` limits the check to that many random coordinates per parameter.
    Returns the relative error of the concatenated sampled gradient vector,
    so parameters with an exactly vanishing gradient do not turn FD round-off
    into a relative error of 1.
    """
    loss = build_loss()
    grads = backward(loss, wrt=params)
    rng = rng or np.random.default_rng(0)
    ad_all, fd_all = [], []
    for p in params:
        g = grads.of(p).ravel()
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size) if sample is None or flat.size <= sample else rng.choice(flat.size, sample, replace=False)
        fd = np.empty(len(idx))
        for n, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + step
            fp = build_loss().item()
            flat[i] = old - step
            fm = build_loss().item()
            flat[i] = old
            fd[n] = (fp - fm) / (2 * step)
        ad_all.append(g[idx])
        fd_all.append(fd)
    return rel_err(np.concatenate(ad_all), np.concatenate(fd_all))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def leaf(a, grad=True):
    return Tensor(a, requires_grad=grad)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
