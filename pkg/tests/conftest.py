import numpy as np
import pytest

from wsaug.fit import IMAGE_FIT, IMAGE_KINDS, fit_inr, synth_signal
from wsaug.wscore import NetworkSpec, WeightSpaceElement

IMAGE_SPEC = NetworkSpec.mlp([2, 32, 32, 1])


def random_element(spec, rng, scale=1.0, omega0=None):
    """Gaussian weights with std ``scale / sqrt(fan_in)``; generic (no ties, no zeros)."""
    ws, bs = [], []
    for l in range(spec.num_layers):
        fan_in, fan_out = spec.dims[l], spec.dims[l + 1]
        ws.append(rng.normal(scale=scale / np.sqrt(fan_in), size=(fan_out, fan_in)))
        bs.append(rng.normal(scale=scale, size=fan_out))
    return WeightSpaceElement(spec, tuple(ws), tuple(bs), omega0)


def domain(rng, d=2, n=1024):
    return rng.uniform(-1, 1, size=(n, d))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_FITTED = {}


def fitted_inrs(n, kinds=IMAGE_KINDS, seed0=0):
    """``n`` SIREN image INRs fitted to procedural signals; cached per session."""
    out = []
    for i in range(n):
        key = (kinds[i % len(kinds)], seed0 + i)
        if key not in _FITTED:
            task = synth_signal(key[0], seed=key[1])
            _FITTED[key] = (fit_inr(IMAGE_SPEC, task, IMAGE_FIT, seed=key[1])[0], task)
        out.append(_FITTED[key])
    return out


@pytest.fixture(scope="session")
def fitted_pair():
    task = synth_signal("radial_gradient", seed=7)
    a, _ = fit_inr(IMAGE_SPEC, task, IMAGE_FIT, seed=1)
    b, _ = fit_inr(IMAGE_SPEC, task, IMAGE_FIT, seed=2)
    return a, b, task


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
