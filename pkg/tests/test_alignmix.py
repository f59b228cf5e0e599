import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from conftest import domain, random_element
from oracles import brute_force_lap
from wsaug.alignmix import (
    alignment_objective,
    loss_barrier,
    mix_labels,
    mixup_aligned,
    mixup_naive,
    mixup_randperm,
    one_hot,
    sample_mixup_pairs,
    solve_lap,
    weight_matching,
    weight_space_mixup,
)
from wsaug.fit import synth_signal
from wsaug.symmetry import PermutationSequence, apply_permutation
from wsaug.wscore import (
    DimensionError,
    NetworkSpec,
    ValidationError,
    WeightSpaceElement,
    flat_distance,
    forward_eval,
    init_siren,
)

SPEC = NetworkSpec.mlp([2, 16, 12, 1])
DEEP = NetworkSpec.mlp([3, 10, 9, 8, 2], hidden="relu")


def test_lap_identity():
    n = 5
    p = solve_lap(np.eye(n))
    np.testing.assert_array_equal(p, np.arange(n))


@pytest.mark.parametrize("n", range(1, 8))
def test_lap_matches_brute_force(rng, n):
    for _ in range(20):
        s = rng.normal(size=(n, n))
        p = solve_lap(s)
        assert np.array_equal(np.sort(p), np.arange(n))
        assert s[np.arange(n), p].sum() == pytest.approx(brute_force_lap(s), abs=1e-9)


def test_lap_matches_scipy_on_larger(rng):
    for n in (16, 32, 50):
        s = rng.normal(size=(n, n))
        r, c = linear_sum_assignment(s, maximize=True)
        assert s[np.arange(n), solve_lap(s)].sum() == pytest.approx(s[r, c].sum(), abs=1e-9)


def test_lap_integer_ties_still_optimal(rng):
    s = rng.integers(0, 3, size=(7, 7)).astype(float)
    assert s[np.arange(7), solve_lap(s)].sum() == brute_force_lap(s)


def test_lap_deterministic_on_constant():
    a = solve_lap(np.ones((6, 6)))
    assert np.array_equal(a, solve_lap(np.ones((6, 6))))
    assert sorted(a.tolist()) == list(range(6))


def test_lap_errors():
    with pytest.raises(DimensionError):
        solve_lap(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        solve_lap(np.array([[0.0, np.inf], [1.0, 2.0]]))


def test_weight_matching_self(rng):
    x = random_element(SPEC, rng)
    res = weight_matching(x, x)
    assert res.perms.is_identity()
    assert res.objective == 0.0
    assert res.converged and res.iterations == 1


@pytest.mark.parametrize("spec", [SPEC, DEEP])
def test_weight_matching_recovers_permutation(rng, spec):
    for _ in range(5):
        x = random_element(spec, rng)
        p = PermutationSequence.random(spec, rng)
        y = apply_permutation(x, p)
        res = weight_matching(x, y, seed=int(rng.integers(1000)))
        aligned = apply_permutation(y, res.perms)
        assert flat_distance(x, aligned) <= 1e-5
        assert res.perms == p.inverse()


def test_weight_matching_objective_monotone(rng):
    x, y = random_element(SPEC, rng), random_element(SPEC, rng)
    res = weight_matching(x, y)
    assert res.objective <= res.identity_objective
    assert res.objective == pytest.approx(alignment_objective(x, y, res.perms))
    assert res.converged
    # every single-pass truncation is no worse than identity, and more passes never hurt
    objs = [weight_matching(x, y, max_passes=k).objective for k in range(1, res.iterations + 1)]
    assert all(b <= a + 1e-9 for a, b in zip([res.identity_objective] + objs, objs))


def test_weight_matching_spec_mismatch(rng):
    with pytest.raises(ValidationError):
        weight_matching(random_element(SPEC, rng), random_element(DEEP, rng))


def test_alignment_equivariance(rng):
    x1 = init_siren(SPEC, 30.0, 0)
    x2 = random_element(SPEC, rng, scale=3.0)
    q = PermutationSequence.random(SPEC, rng)
    a = apply_permutation(x2, weight_matching(x1, x2).perms)
    b_in = apply_permutation(x2, q)
    b = apply_permutation(b_in, weight_matching(x1, b_in).perms)
    x = domain(rng)
    assert np.abs(forward_eval(a, x) - forward_eval(b, x)).max() <= 1e-4


def test_mixup_naive(rng):
    x1, x2 = random_element(SPEC, rng), random_element(SPEC, rng)
    assert mixup_naive(x1, x2, 1.0) == x1
    assert mixup_naive(x1, x2, 0.0) == x2
    spec = NetworkSpec.mlp([1, 1, 1])
    a = WeightSpaceElement(spec, ([[2.0]], [[1.0]]), ([0.0], [0.0]))
    b = WeightSpaceElement(spec, ([[4.0]], [[1.0]]), ([0.0], [0.0]))
    np.testing.assert_array_equal(mixup_naive(a, b, 0.5).weights[0], [[3.0]])
    with pytest.raises(ValidationError):
        mixup_naive(x1, x2, 1.5)
    with pytest.raises(ValidationError):
        mixup_naive(x1, random_element(DEEP, rng), 0.5)


def test_mixup_randperm(rng):
    x1, x2 = init_siren(SPEC, 30.0, 1), init_siren(SPEC, 30.0, 2)
    end = mixup_randperm(x1, x2, 0.0, seed=3)
    x = domain(rng)
    assert np.abs(forward_eval(end, x) - forward_eval(x2, x)).max() <= 1e-4
    assert end != x2
    assert mixup_randperm(x1, x2, 0.3, seed=3) == mixup_randperm(x1, x2, 0.3, seed=3)
    assert mixup_randperm(x1, x2, 1.0, seed=3) == x1


def test_mixup_aligned(rng):
    x1 = random_element(SPEC, rng)
    x2 = apply_permutation(x1, PermutationSequence.random(SPEC, rng))
    x = domain(rng)
    for lam in (0.0, 0.3, 0.5, 1.0):
        m = mixup_aligned(x1, x2, lam)
        assert np.abs(forward_eval(m, x) - forward_eval(x1, x)).max() <= 1e-4
    assert mixup_aligned(x1, random_element(SPEC, rng), 1.0) == x1


def test_mix_labels():
    e1, e2 = one_hot(0, 4), one_hot(1, 4)
    np.testing.assert_allclose(mix_labels(e1, e2, 0.5), [0.5, 0.5, 0, 0])
    y = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(mix_labels(y, y, 0.37), y)
    np.testing.assert_array_equal(mix_labels(e1, e2, 1.0), e1)
    assert mix_labels(np.full(7, 1 / 7), one_hot(3, 7), 0.123).sum() == 1.0
    with pytest.raises(DimensionError):
        mix_labels(e1, one_hot(0, 3), 0.5)
    with pytest.raises(ValidationError):
        mix_labels(np.array([0.5, 0.6]), np.array([1.0, 0.0]), 0.5)


def test_weight_space_mixup_sampling(rng):
    x1, x2 = init_siren(SPEC, 30.0, 1), init_siren(SPEC, 30.0, 2)
    s = weight_space_mixup(x1, x2, one_hot(0, 3), one_hot(2, 3), mode="naive", seed=4)
    assert 0 <= s.lam <= 1
    np.testing.assert_allclose(s.label, [s.lam, 0, 1 - s.lam])
    lams = [weight_space_mixup(x1, x2, mode="naive", seed=i).lam for i in range(400)]
    assert 0.45 < np.mean(lams) < 0.55 and min(lams) < 0.05 and max(lams) > 0.95
    with pytest.raises(ValidationError):
        weight_space_mixup(x1, x2, mode="cutmix")


def test_randperm_uniformity():
    spec = NetworkSpec.mlp([2, 3, 1])
    n = 10_000
    counts = {}
    for seed in range(n):
        p = PermutationSequence.random(spec, np.random.default_rng(seed)).perms[0]
        counts[tuple(p.tolist())] = counts.get(tuple(p.tolist()), 0) + 1
    assert len(counts) == 6
    sigma = np.sqrt(n * (1 / 6) * (5 / 6))
    assert all(abs(c - n / 6) <= 5 * sigma for c in counts.values())


def test_pairing_policies(rng):
    labels = np.array([0, 0, 1, 1, 2, 2])
    within = sample_mixup_pairs(labels, "within", rng)
    assert all(labels[i] == labels[j] for i, j in enumerate(within))
    across = sample_mixup_pairs(labels, "across", rng)
    assert all(labels[i] != labels[j] for i, j in enumerate(across))
    with pytest.raises(ValidationError):
        sample_mixup_pairs(np.array([0, 0]), "across", rng)


def test_barrier_identical_endpoints(rng):
    x = init_siren(SPEC, 30.0, 0)
    task = synth_signal("disk", size=16, seed=0)
    prof = loss_barrier(x, x, task, 5, "none")
    assert prof.barrier == 0.0
    assert np.all(prof.losses == prof.losses[0])
    np.testing.assert_allclose(prof.lambdas, [0, 0.25, 0.5, 0.75, 1.0])


def test_barrier_permuted_copy_matched(rng):
    x = init_siren(SPEC, 30.0, 1)
    y = apply_permutation(x, PermutationSequence.random(SPEC, rng))
    task = synth_signal("stripes", size=16, seed=0)
    assert loss_barrier(x, y, task, 11, "matched").barrier <= 1e-6
    assert loss_barrier(x, y, task, 11, "none").barrier > 1e-3


def test_barrier_csv_and_errors(rng):
    x, y = init_siren(SPEC, 30.0, 1), init_siren(SPEC, 30.0, 2)
    task = synth_signal("disk", size=8, seed=0)
    prof = loss_barrier(x, y, task, 3, "random", seed=1)
    lines = prof.to_csv().splitlines()
    assert lines[0] == "lambda,loss" and len(lines) == 4
    with pytest.raises(ValidationError):
        loss_barrier(x, y, task, 2)
    with pytest.raises(ValidationError):
        loss_barrier(x, y, task, 5, "sinkhorn")


def test_aligned_mixup_beats_naive_on_fitted_pair(fitted_pair):
    a, b, task = fitted_pair
    from wsaug.wscore import task_loss
    assert task_loss(mixup_aligned(a, b, 0.5), task) <= task_loss(mixup_naive(a, b, 0.5), task)
    res = weight_matching(a, b)
    assert res.objective < res.identity_objective
