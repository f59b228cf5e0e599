"""Independent reference computations used as test oracles."""

import itertools

import numpy as np


def _forward64(params, acts, x):
    a, pattern = x, []
    for l, act in enumerate(acts):
        z = a @ params[2 * l].T + params[2 * l + 1]
        if act.value == "relu":
            pattern.append(z > 0)
            a = np.maximum(z, 0.0)
        elif act.value == "sine":
            a = np.sin(z)
        else:
            a = z
    return a, pattern


def fd_gradient(elem, x, y, h=1e-5):
    """Central differences of the MSE in float64.

    ``h = 1e-5`` balances O(h^2) truncation against float64 cancellation; with
    gradients as small as 1e-5, ``h = 1e-3`` already costs ~5e-4 relative error.

    Returns ``(fd, valid)``; ``valid`` is False for coordinates whose +-h probe
    changes a ReLU activation pattern, where a difference quotient does not
    estimate the (sub)gradient.
    """
    params = [t.astype(np.float64) for t in elem.tensors()]
    acts = elem.spec.activations
    _, base = _forward64(params, acts, x)
    fd, valid = [], []
    for p in params:
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            ap, pat_p = _forward64(params, acts, x)
            p[idx] = old - h
            am, pat_m = _forward64(params, acts, x)
            p[idx] = old
            fd.append((np.mean((ap - y) ** 2) - np.mean((am - y) ** 2)) / (2 * h))
            valid.append(all(np.array_equal(a, b) and np.array_equal(a, c)
                             for a, b, c in zip(base, pat_p, pat_m)))
    return np.array(fd), np.array(valid)


def relative_error(g, fd, floor=1e-8):
    return np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)


def brute_force_lap(score):
    """Best total score over all permutations."""
    n = score.shape[0]
    rows = np.arange(n)
    return max(score[rows, list(p)].sum() for p in itertools.permutations(range(n)))


def random_small_net(rng, hidden):
    """Random spec with widths <= 8 and 2..4 layers."""
    from wsaug.wscore import NetworkSpec

    n_layers = int(rng.integers(2, 5))
    dims = [int(rng.integers(1, 4))] + [int(rng.integers(1, 9)) for _ in range(n_layers - 1)]
    dims.append(int(rng.integers(1, 3)))
    return NetworkSpec.mlp(dims, hidden=hidden)
