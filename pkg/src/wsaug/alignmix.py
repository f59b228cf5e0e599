"""Weight matching and weight-space mixup.

Weight matching aligns the hidden neurons of ``x2`` to those of ``x1`` by
coordinate descent: each hidden layer's permutation is the exact solution of
a linear assignment problem with all other permutations held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .symmetry import PermutationSequence, apply_permutation
from .wscore import (
    DimensionError,
    SignalTask,
    ValidationError,
    WeightSpaceElement,
    check_same_spec,
    flatten,
    task_loss,
)


def solve_lap(score) -> np.ndarray:
    """Permutation ``perm`` maximizing ``sum_i score[i, perm[i]]``.

    Shortest augmenting path Hungarian method, O(n^3). Rows are inserted in
    index order and the lowest column index wins every tie, so the result is
    deterministic.
    """
    s = np.asarray(score, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionError(f"score matrix must be square, got shape {s.shape}")
    if not np.isfinite(s).all():
        raise ValidationError("score matrix has non-finite entries")
    n = s.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    cost = np.zeros((n + 1, n + 1))
    cost[1:, 1:] = s.max() - s  # minimize a non-negative cost
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: row assigned to column j, 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            cur = cost[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(free, minv, np.inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    perm[owner[1:] - 1] = np.arange(n)
    return perm


@dataclass(frozen=True)
class AlignmentResult:
    perms: PermutationSequence
    objective: float
    iterations: int
    converged: bool
    identity_objective: float

    def to_dict(self) -> dict:
        return {
            "perms": self.perms.to_lists(),
            "objective": self.objective,
            "identity_objective": self.identity_objective,
            "passes": self.iterations,
            "converged": self.converged,
        }


def alignment_objective(x1: WeightSpaceElement, x2: WeightSpaceElement, p: PermutationSequence) -> float:
    """Squared flat distance ``||x1 - p.x2||^2``."""
    d = flatten(x1).astype(np.float64) - flatten(apply_permutation(x2, p)).astype(np.float64)
    return float(d @ d)


def _layer_score(w1, b1, w2, b2, k, perms):
    """LAP score for hidden layer ``k`` (0-based) with all other permutations fixed."""
    M = len(w1)
    right = w2[k] if k == 0 else w2[k][:, perms[k - 1]]
    score = w1[k] @ right.T + np.outer(b1[k], b2[k])
    nxt = w2[k + 1] if k + 1 == M - 1 else w2[k + 1][perms[k + 1]]
    return score + w1[k + 1].T @ nxt


def weight_matching(x1: WeightSpaceElement, x2: WeightSpaceElement, max_passes: int = 100,
                    seed=0, init: Optional[PermutationSequence] = None) -> AlignmentResult:
    """Permutations ``p`` (approximately) minimizing ``||x1 - p.x2||``.

    Each pass visits the hidden layers in a seed-shuffled order and replaces a
    layer's permutation only when its assignment score strictly improves, so
    the objective never increases. Stops after a pass that changes nothing.
    """
    spec = check_same_spec(x1, x2)
    if max_passes < 1:
        raise ValidationError("max_passes must be >= 1")
    rng = np.random.default_rng(seed)
    w1 = [w.astype(np.float64) for w in x1.weights]
    w2 = [w.astype(np.float64) for w in x2.weights]
    b1 = [b.astype(np.float64) for b in x1.biases]
    b2 = [b.astype(np.float64) for b in x2.biases]
    perms = [p.copy() for p in (init or PermutationSequence.identity(spec)).perms]
    identity = PermutationSequence.identity(spec)
    n_hidden = spec.num_layers - 1
    converged, passes = False, 0
    while passes < max_passes:
        passes += 1
        changed = False
        for k in rng.permutation(n_hidden):
            score = _layer_score(w1, b1, w2, b2, k, perms)
            rows = np.arange(score.shape[0])
            new = solve_lap(score)
            old_val = score[rows, perms[k]].sum()
            new_val = score[rows, new].sum()
            if new_val > old_val + 1e-12 * max(1.0, abs(old_val)):
                perms[k] = new
                changed = True
        if not changed:
            converged = True
            break
    result = PermutationSequence(tuple(perms))
    return AlignmentResult(result, alignment_objective(x1, x2, result), passes, converged,
                           alignment_objective(x1, x2, identity))


# ---------------------------------------------------------------- mixup

@dataclass(frozen=True)
class MixupSample:
    element: WeightSpaceElement
    lam: float
    label: Optional[np.ndarray] = None


def mixup_naive(x1: WeightSpaceElement, x2: WeightSpaceElement, lam: float) -> WeightSpaceElement:
    """Entrywise ``lam * x1 + (1 - lam) * x2``."""
    check_same_spec(x1, x2)
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    tensors = [lam * a.astype(np.float64) + (1.0 - lam) * b.astype(np.float64)
               for a, b in zip(x1.tensors(), x2.tensors())]
    return WeightSpaceElement.from_tensors(x1.spec, tensors, x1.omega0)


def mixup_randperm(x1: WeightSpaceElement, x2: WeightSpaceElement, lam: float, seed) -> WeightSpaceElement:
    """Naive mixup after applying uniformly random hidden-neuron permutations to ``x2``."""
    spec = check_same_spec(x1, x2)
    p = PermutationSequence.random(spec, np.random.default_rng(seed))
    return mixup_naive(x1, apply_permutation(x2, p), lam)


def mixup_aligned(x1: WeightSpaceElement, x2: WeightSpaceElement, lam: float,
                  max_passes: int = 100, seed=0) -> WeightSpaceElement:
    """Naive mixup after aligning ``x2`` to ``x1`` with weight matching."""
    res = weight_matching(x1, x2, max_passes, seed)
    return mixup_naive(x1, apply_permutation(x2, res.perms), lam)


def mix_labels(y1, y2, lam: float) -> np.ndarray:
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    if y1.shape != y2.shape or y1.ndim != 1:
        raise DimensionError(f"label shapes differ: {y1.shape} vs {y2.shape}")
    for y in (y1, y2):
        if abs(y.sum() - 1.0) > 1e-6 or (y < 0).any():
            raise ValidationError("labels must be probability vectors")
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    y = lam * y1 + (1.0 - lam) * y2
    return y / y.sum()


def one_hot(label: int, num_classes: int) -> np.ndarray:
    y = np.zeros(num_classes)
    y[label] = 1.0
    return y


MIXUP_MODES = ("naive", "randperm", "aligned")


def weight_space_mixup(x1, x2, y1=None, y2=None, mode: str = "aligned", lam: Optional[float] = None,
                       seed=0, max_passes: int = 100) -> MixupSample:
    """One mixup sample; ``lam`` defaults to a draw from U(0, 1)."""
    rng = np.random.default_rng(seed)
    if lam is None:
        lam = float(rng.uniform(0.0, 1.0))
    if mode == "naive":
        elem = mixup_naive(x1, x2, lam)
    elif mode == "randperm":
        elem = mixup_randperm(x1, x2, lam, rng)
    elif mode == "aligned":
        elem = mixup_aligned(x1, x2, lam, max_passes, rng)
    else:
        raise ValidationError(f"unknown mixup mode {mode!r}")
    label = None if y1 is None or y2 is None else mix_labels(y1, y2, lam)
    return MixupSample(elem, lam, label)


def sample_mixup_pairs(labels, policy: str, rng: np.random.Generator) -> np.ndarray:
    """Partner index for every sample: ``within`` its class, ``across`` classes, or ``any``."""
    labels = np.asarray(labels)
    n = labels.size
    partners = np.empty(n, dtype=np.int64)
    for i in range(n):
        if policy == "any":
            pool = np.arange(n)
        elif policy == "within":
            pool = np.flatnonzero(labels == labels[i])
        elif policy == "across":
            pool = np.flatnonzero(labels != labels[i])
        else:
            raise ValidationError(f"unknown pairing policy {policy!r}")
        if pool.size == 0:
            raise ValidationError(f"no partner for sample {i} under policy {policy!r}")
        partners[i] = rng.choice(pool)
    return partners


# ---------------------------------------------------------------- barriers

@dataclass(frozen=True)
class BarrierProfile:
    lambdas: np.ndarray
    losses: np.ndarray
    barrier: float
    align: str

    def to_csv(self) -> str:
        rows = ["lambda,loss"] + [f"{l!r},{v!r}" for l, v in zip(self.lambdas.tolist(), self.losses.tolist())]
        return "\n".join(rows) + "\n"


def loss_barrier(x1: WeightSpaceElement, x2: WeightSpaceElement, task: SignalTask, grid_size: int = 11,
                 align: str = "none", seed=0, max_passes: int = 100) -> BarrierProfile:
    """Loss along ``(1 - t) x1 + t x2'`` for ``t`` on a uniform grid, and its barrier.

    ``x2'`` is ``x2`` itself (``none``), randomly permuted (``random``) or
    aligned to ``x1`` by weight matching (``matched``). The barrier is the
    largest excess of the path loss over the chord between the endpoint losses.
    """
    spec = check_same_spec(x1, x2)
    if grid_size < 3:
        raise ValidationError("grid_size must be >= 3")
    if align == "matched":
        x2 = apply_permutation(x2, weight_matching(x1, x2, max_passes, seed).perms)
    elif align == "random":
        x2 = apply_permutation(x2, PermutationSequence.random(spec, np.random.default_rng(seed)))
    elif align != "none":
        raise ValidationError(f"unknown align mode {align!r}")
    ts = np.linspace(0.0, 1.0, grid_size)
    losses = np.array([task_loss(mixup_naive(x1, x2, 1.0 - t), task) for t in ts])
    chord = losses[0] + ts * (losses[-1] - losses[0])
    return BarrierProfile(ts, losses, float(np.max(losses - chord)), align)
