import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def numpy_mlp(layer_sizes, activation, theta, x):
    """Plain forward pass used as an oracle; weights stored row-major
    (n_out, n_in) per layer, followed by that layer's biases."""
    acts = {"tanh": np.tanh, "sigmoid": lambda z: 1 / (1 + np.exp(-z)), "sine": np.sin,
            "softplus": lambda z: np.log1p(np.exp(z))}
    h = np.atleast_2d(x)
    pos = 0
    n_layers = len(layer_sizes) - 1
    for k in range(n_layers):
        n_in, n_out = layer_sizes[k], layer_sizes[k + 1]
        W = theta[pos:pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        b = theta[pos:pos + n_out]
        pos += n_out
        h = h @ W.T + b
        if k < n_layers - 1:
            h = acts[activation](h)
    return h


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record named checks for one acceptance criterion and fail if any is off.

    Usage: ``criterion(number, [(label, value, bound, ok), ...])``.
    """
    def record(number, checks):
        ok = all(c[3] for c in checks)
        detail = "; ".join(f"{label}={_fmt(value)} (bound {bound})" + ("" if good else " MISSED")
                           for label, value, bound, good in checks)
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.setdefault(number, []).append((ok, line))
        print(line)
        assert ok, line
    return record


def _fmt(v):
    return f"{v:.3e}" if isinstance(v, float) else str(v)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok = all(o for o, _ in _CRITERIA[number])
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}")
        for _, line in _CRITERIA[number]:
            terminalreporter.write_line("    " + line)
