"""Function-preserving transforms of weight-space elements.

Hidden layers are numbered ``1 .. M-1``: hidden layer ``i`` is the output of
weight matrix ``W_i`` and feeds ``W_{i+1}``. Every transform here changes the
stored tensors but leaves the represented function unchanged (up to float
rounding).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .wscore import (
    ActivationKind,
    ConfigError,
    DimensionError,
    NetworkSpec,
    ValidationError,
    WeightSpaceElement,
)


@dataclass(frozen=True, eq=False)
class PermutationSequence:
    """One permutation per hidden layer.

    ``perms[i-1][j] = k`` means neuron ``j`` of the permuted network is
    neuron ``k`` of the original, i.e. ``P[j, k] = 1``.
    """

    perms: tuple[np.ndarray, ...]

    def __post_init__(self):
        ps = []
        for i, p in enumerate(self.perms):
            arr = np.array(p, dtype=np.int64)
            if arr.ndim != 1 or not np.array_equal(np.sort(arr), np.arange(arr.size)):
                raise ValidationError(f"entry {i + 1} is not a permutation: {arr.tolist()}")
            arr.setflags(write=False)
            ps.append(arr)
        object.__setattr__(self, "perms", tuple(ps))

    @classmethod
    def identity(cls, spec: NetworkSpec) -> "PermutationSequence":
        return cls(tuple(np.arange(d) for d in spec.hidden_dims))

    @classmethod
    def random(cls, spec: NetworkSpec, rng: np.random.Generator) -> "PermutationSequence":
        return cls(tuple(rng.permutation(d) for d in spec.hidden_dims))

    def __len__(self):
        return len(self.perms)

    def __eq__(self, other):
        if not isinstance(other, PermutationSequence):
            return NotImplemented
        return len(self) == len(other) and all(np.array_equal(a, b) for a, b in zip(self.perms, other.perms))

    __hash__ = None

    def check(self, spec: NetworkSpec) -> None:
        if tuple(p.size for p in self.perms) != spec.hidden_dims:
            raise DimensionError(
                f"permutation sizes {[p.size for p in self.perms]} do not match hidden dims {spec.hidden_dims}")

    def inverse(self) -> "PermutationSequence":
        return PermutationSequence(tuple(np.argsort(p) for p in self.perms))

    def compose(self, first: "PermutationSequence") -> "PermutationSequence":
        """``self ∘ first``: applying ``first`` and then ``self`` equals applying the result."""
        return PermutationSequence(tuple(f[s] for s, f in zip(self.perms, first.perms)))

    def matrices(self) -> list[np.ndarray]:
        return [np.eye(p.size)[p] for p in self.perms]

    def to_lists(self) -> list[list[int]]:
        return [p.tolist() for p in self.perms]

    def is_identity(self) -> bool:
        return all(np.array_equal(p, np.arange(p.size)) for p in self.perms)


def apply_permutation(elem: WeightSpaceElement, p: PermutationSequence) -> WeightSpaceElement:
    """``W'_l = P_l W_l P_{l-1}^T`` and ``b'_l = P_l b_l`` with ``P_0 = P_M = I``."""
    p.check(elem.spec)
    M = elem.spec.num_layers
    weights, biases = [], []
    for l in range(M):
        w, b = elem.weights[l], elem.biases[l]
        if l < M - 1:
            w, b = w[p.perms[l]], b[p.perms[l]]
        if l > 0:
            w = w[:, p.perms[l - 1]]
        weights.append(w)
        biases.append(b)
    return elem.replace(weights, biases)


def _hidden_vector(elem: WeightSpaceElement, layer: int, values, kind: ActivationKind, what: str):
    spec = elem.spec
    if not 1 <= layer <= spec.num_layers - 1:
        raise ValidationError(f"layer {layer} is not a hidden layer (1..{spec.num_layers - 1})")
    if spec.activations[layer - 1] is not kind:
        raise ValidationError(
            f"{what} needs a {kind.value} layer, layer {layer} is {spec.activations[layer - 1].value}")
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 0:
        v = np.full(spec.dims[layer], float(v))
    if v.shape != (spec.dims[layer],):
        raise DimensionError(f"{what} for layer {layer} needs {spec.dims[layer]} entries, got {v.shape}")
    return v


def _rescale(elem, layer, row_factor, col_factor):
    """Multiply rows of ``W_i``/``b_i`` and columns of ``W_{i+1}`` by per-neuron factors."""
    weights, biases = list(elem.weights), list(elem.biases)
    i = layer - 1
    weights[i] = (weights[i] * row_factor[:, None].astype(np.float32))
    biases[i] = biases[i] * row_factor.astype(np.float32)
    weights[i + 1] = weights[i + 1] * col_factor[None, :].astype(np.float32)
    return elem.replace(weights, biases)


def relu_scaling(elem: WeightSpaceElement, layer: int, c) -> WeightSpaceElement:
    """Scale neuron ``j`` of a ReLU layer by ``c_j > 0`` and its outgoing weights by ``1/c_j``.

    ``c`` may be a scalar (the layer-wise form) or one factor per neuron.
    """
    c = _hidden_vector(elem, layer, c, ActivationKind.RELU, "relu_scaling")
    if not (np.isfinite(c).all() and (c > 0).all()):
        raise ValidationError("relu_scaling factors must be positive and finite")
    return _rescale(elem, layer, c, 1.0 / c)


def siren_negation(elem: WeightSpaceElement, layer: int, signs) -> WeightSpaceElement:
    """Flip the sign of chosen sine neurons together with their outgoing weights."""
    s = _hidden_vector(elem, layer, signs, ActivationKind.SINE, "siren_negation")
    if not np.isin(s, (-1.0, 1.0)).all():
        raise ValidationError("signs must be +1 or -1")
    return _rescale(elem, layer, s, s)


def siren_bias(elem: WeightSpaceElement, layer: int, k) -> WeightSpaceElement:
    """Shift sine neuron ``j``'s bias by ``k_j * pi`` and multiply its outgoing weights by ``(-1)^k_j``."""
    kv = _hidden_vector(elem, layer, k, ActivationKind.SINE, "siren_bias")
    if not np.array_equal(kv, np.round(kv)):
        raise ValidationError("phase shifts must be integers")
    kv = kv.astype(np.int64)
    weights, biases = list(elem.weights), list(elem.biases)
    i = layer - 1
    biases[i] = (biases[i].astype(np.float64) + kv * np.pi).astype(np.float32)
    sign = np.where(kv % 2 == 0, 1.0, -1.0).astype(np.float32)
    weights[i + 1] = weights[i + 1] * sign[None, :]
    return elem.replace(weights, biases)


@dataclass(frozen=True)
class SymmetryConfig:
    """Which symmetry families ``random_symmetry`` samples, and their ranges.

    Phase shifts ``k`` are uniform on ``{-max_phase..max_phase}``; ReLU scales
    are log-uniform on ``[1/max_scale, max_scale]``; negation flips each
    neuron with probability ``flip_prob``.
    """

    permute: bool = False
    relu_scaling: bool = False
    siren_negation: bool = False
    siren_bias: bool = False
    max_phase: int = 2
    max_scale: float = 4.0
    flip_prob: float = 0.5

    def __post_init__(self):
        if self.max_phase < 0 or int(self.max_phase) != self.max_phase:
            raise ConfigError("max_phase must be a non-negative integer")
        if not self.max_scale >= 1.0:
            raise ConfigError("max_scale must be >= 1")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError("flip_prob must lie in [0, 1]")

    @classmethod
    def all_for(cls, spec: NetworkSpec, **kw) -> "SymmetryConfig":
        """Every family that applies to ``spec``."""
        hidden = set(spec.activations[:-1])
        return cls(permute=True,
                   relu_scaling=ActivationKind.RELU in hidden,
                   siren_negation=ActivationKind.SINE in hidden,
                   siren_bias=ActivationKind.SINE in hidden, **kw)


def hidden_layers_of(spec: NetworkSpec, kind: ActivationKind) -> list[int]:
    return [i for i in range(1, spec.num_layers) if spec.activations[i - 1] is kind]


def sample_scales(rng, n, max_scale):
    return np.exp(rng.uniform(-np.log(max_scale), np.log(max_scale), size=n))


def sample_signs(rng, n, flip_prob):
    return np.where(rng.random(n) < flip_prob, -1.0, 1.0)


def sample_phases(rng, n, max_phase):
    return rng.integers(-max_phase, max_phase + 1, size=n)


def validate_symmetry_config(spec: NetworkSpec, config: SymmetryConfig) -> None:
    if config.relu_scaling and not hidden_layers_of(spec, ActivationKind.RELU):
        raise ConfigError("relu_scaling enabled but the network has no hidden ReLU layer")
    if (config.siren_negation or config.siren_bias) and not hidden_layers_of(spec, ActivationKind.SINE):
        raise ConfigError("SIREN symmetries enabled but the network has no hidden sine layer")


def random_symmetry(elem: WeightSpaceElement, config: SymmetryConfig, seed) -> WeightSpaceElement:
    """Sample and apply the enabled symmetries in the order permute, scale, negate, phase."""
    spec = elem.spec
    validate_symmetry_config(spec, config)
    rng = np.random.default_rng(seed)
    out = elem
    if config.permute:
        out = apply_permutation(out, PermutationSequence.random(spec, rng))
    if config.relu_scaling:
        for i in hidden_layers_of(spec, ActivationKind.RELU):
            out = relu_scaling(out, i, sample_scales(rng, spec.dims[i], config.max_scale))
    if config.siren_negation:
        for i in hidden_layers_of(spec, ActivationKind.SINE):
            out = siren_negation(out, i, sample_signs(rng, spec.dims[i], config.flip_prob))
    if config.siren_bias:
        for i in hidden_layers_of(spec, ActivationKind.SINE):
            out = siren_bias(out, i, sample_phases(rng, spec.dims[i], config.max_phase))
    return out


def permutation_from_matrices(mats: Sequence[np.ndarray]) -> PermutationSequence:
    return PermutationSequence(tuple(np.argmax(m, axis=1) for m in mats))
