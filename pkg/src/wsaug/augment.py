"""Input-space and generic augmentations, and the stochastic augmentation pipeline."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from . import symmetry as sym
from .wscore import ActivationKind, ConfigError, DimensionError, ValidationError, WeightSpaceElement


# ---------------------------------------------------------------- input space

def rotate_input(elem: WeightSpaceElement, R) -> WeightSpaceElement:
    """``W1 <- W1 R`` so that ``f'(x) = f(R x)``."""
    R = np.asarray(R, dtype=np.float64)
    d = elem.spec.input_dim
    if R.shape != (d, d):
        raise DimensionError(f"rotation must be {d}x{d}, got {R.shape}")
    if np.abs(R.T @ R - np.eye(d)).max() > 1e-5:
        raise ValidationError("matrix is not orthogonal")
    w1 = elem.weights[0].astype(np.float64) @ R
    return elem.replace(weights=(w1,) + elem.weights[1:])


def scale_input(elem: WeightSpaceElement, s: float) -> WeightSpaceElement:
    """``W1 <- s W1`` so that ``f'(x) = f(s x)``."""
    if not (np.isfinite(s) and s > 0):
        raise ValidationError(f"scale must be positive, got {s}")
    w1 = elem.weights[0] * np.float32(s)
    return elem.replace(weights=(w1,) + elem.weights[1:])


def translate_input(elem: WeightSpaceElement, t) -> WeightSpaceElement:
    """``b1 <- W1 t + b1`` so that ``f'(x) = f(x + t)``."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (elem.spec.input_dim,):
        raise DimensionError(f"offset must have {elem.spec.input_dim} entries, got {t.shape}")
    if not np.isfinite(t).all():
        raise ValidationError("offset must be finite")
    b1 = elem.weights[0].astype(np.float64) @ t + elem.biases[0].astype(np.float64)
    return elem.replace(biases=(b1,) + elem.biases[1:])


def rotation_2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def random_rotation(d: int, rng: np.random.Generator, max_angle: float = math.pi) -> np.ndarray:
    """Uniform in-plane rotation for ``d == 2`` (angle in ``[-max_angle, max_angle]``), Haar SO(d) otherwise."""
    if d == 1:
        return np.eye(1)
    if d == 2:
        return rotation_2d(rng.uniform(-max_angle, max_angle))
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ---------------------------------------------------------------- generic

def _map_tensors(elem, fn):
    tensors = [fn(t) for t in elem.tensors()]
    return elem.replace(tensors[0::2], tensors[1::2])


def gaussian_noise(elem: WeightSpaceElement, sigma_rel: float, seed) -> WeightSpaceElement:
    """Add i.i.d. noise with std ``sigma_rel * std(T)`` to each weight matrix and bias vector ``T``."""
    if not sigma_rel >= 0:
        raise ValidationError("sigma_rel must be non-negative")
    rng = np.random.default_rng(seed)

    def noisy(t):
        t64 = t.astype(np.float64)
        noise = rng.normal(size=t.shape)  # drawn for every tensor to keep streams aligned
        scale = sigma_rel * t64.std()
        return t if scale == 0 else t64 + scale * noise

    return _map_tensors(elem, noisy)


def dropout(elem: WeightSpaceElement, p_drop: float, seed) -> WeightSpaceElement:
    """Zero each scalar parameter independently with probability ``p_drop``; survivors are not rescaled."""
    if not 0.0 <= p_drop <= 1.0:
        raise ValidationError(f"p_drop must lie in [0, 1], got {p_drop}")
    rng = np.random.default_rng(seed)
    return _map_tensors(elem, lambda t: np.where(rng.random(t.shape) < p_drop, np.float32(0), t))


def _quantile_count(q: float, n: int) -> int:
    # exact floor(q * n) for decimally written q, immune to binary rounding of q
    return math.floor(Fraction(repr(float(q))) * n)


def quantile_dropout_tensor(t: np.ndarray, q: float) -> np.ndarray:
    flat = np.asarray(t).ravel().copy()
    k = _quantile_count(q, flat.size)
    if k:
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:k]] = 0
    return flat.reshape(np.shape(t))


def quantile_dropout(elem: WeightSpaceElement, q: float) -> WeightSpaceElement:
    """Per tensor, zero the ``floor(q*n)`` entries closest to zero (ties by index)."""
    if not 0.0 <= q < 1.0:
        raise ValidationError(f"q must lie in [0, 1), got {q}")
    return _map_tensors(elem, lambda t: quantile_dropout_tensor(t, q))


# ---------------------------------------------------------------- pipeline

# kind -> default parameters; keys outside these are rejected
KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "rotate_input": {"max_angle": 180.0},
    "scale_input": {"min_scale": 0.8, "max_scale": 1.25},
    "translate_input": {"max_shift": 0.1},
    "gaussian_noise": {"sigma_rel": 0.1},
    "dropout": {"p_drop": 0.1},
    "quantile_dropout": {"q": 0.1},
    "relu_scaling": {"max_scale": 4.0},
    "siren_negation": {"flip_prob": 0.5},
    "siren_bias": {"max_phase": 2},
    "permute": {},
}

SYMMETRY_KINDS = ("permute", "relu_scaling", "siren_negation", "siren_bias")
INPUT_SPACE_KINDS = ("rotate_input", "scale_input", "translate_input")


@dataclass(frozen=True)
class AugmentationDescriptor:
    kind: str
    probability: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KIND_DEFAULTS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"probability must lie in [0, 1], got {self.probability}")
        extra = set(self.params) - set(KIND_DEFAULTS[self.kind])
        if extra:
            raise ConfigError(f"{self.kind}: unknown parameters {sorted(extra)}")
        merged = {**KIND_DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        self._check_ranges(merged)

    def _check_ranges(self, p):
        k = self.kind
        bad = (
            (k == "rotate_input" and not 0 <= p["max_angle"] <= 180)
            or (k == "scale_input" and not 0 < p["min_scale"] <= p["max_scale"])
            or (k == "translate_input" and not p["max_shift"] >= 0)
            or (k == "gaussian_noise" and not p["sigma_rel"] >= 0)
            or (k == "dropout" and not 0 <= p["p_drop"] <= 1)
            or (k == "quantile_dropout" and not 0 <= p["q"] < 1)
            or (k == "relu_scaling" and not p["max_scale"] >= 1)
            or (k == "siren_negation" and not 0 <= p["flip_prob"] <= 1)
            or (k == "siren_bias" and not (p["max_phase"] >= 0 and int(p["max_phase"]) == p["max_phase"]))
        )
        if bad:
            raise ConfigError(f"{k}: parameters out of range: {p}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.probability, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationDescriptor":
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigError(f"descriptor needs a 'kind': {d!r}")
        extra = set(d) - {"kind", "p", "params"}
        if extra:
            raise ConfigError(f"unknown descriptor keys {sorted(extra)}")
        return cls(d["kind"], float(d.get("p", 1.0)), dict(d.get("params", {})))

    @property
    def preserves_function(self) -> bool:
        return self.kind in SYMMETRY_KINDS

    def check_spec(self, spec) -> None:
        hidden = spec.activations[:-1]
        if self.kind == "relu_scaling" and ActivationKind.RELU not in hidden:
            raise ConfigError("relu_scaling step needs a hidden ReLU layer")
        if self.kind in ("siren_negation", "siren_bias") and ActivationKind.SINE not in hidden:
            raise ConfigError(f"{self.kind} step needs a hidden sine layer")

    def sample_and_apply(self, elem: WeightSpaceElement, rng: np.random.Generator) -> WeightSpaceElement:
        """Draw this step's random parameters from ``rng`` and apply it."""
        p, spec = self.params, elem.spec
        k = self.kind
        if k == "rotate_input":
            return rotate_input(elem, random_rotation(spec.input_dim, rng, math.radians(p["max_angle"])))
        if k == "scale_input":
            return scale_input(elem, rng.uniform(p["min_scale"], p["max_scale"]))
        if k == "translate_input":
            return translate_input(elem, rng.uniform(-p["max_shift"], p["max_shift"], spec.input_dim))
        if k == "gaussian_noise":
            return gaussian_noise(elem, p["sigma_rel"], rng)
        if k == "dropout":
            return dropout(elem, p["p_drop"], rng)
        if k == "quantile_dropout":
            return quantile_dropout(elem, p["q"])
        if k == "permute":
            return sym.apply_permutation(elem, sym.PermutationSequence.random(spec, rng))
        if k == "relu_scaling":
            for i in sym.hidden_layers_of(spec, ActivationKind.RELU):
                elem = sym.relu_scaling(elem, i, sym.sample_scales(rng, spec.dims[i], p["max_scale"]))
            return elem
        if k == "siren_negation":
            for i in sym.hidden_layers_of(spec, ActivationKind.SINE):
                elem = sym.siren_negation(elem, i, sym.sample_signs(rng, spec.dims[i], p["flip_prob"]))
            return elem
        for i in sym.hidden_layers_of(spec, ActivationKind.SINE):
            elem = sym.siren_bias(elem, i, sym.sample_phases(rng, spec.dims[i], int(p["max_phase"])))
        return elem


@dataclass(frozen=True)
class AugmentationPipeline:
    steps: tuple[AugmentationDescriptor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def validate(self, spec) -> None:
        for i, step in enumerate(self.steps):
            try:
                step.check_spec(spec)
            except ConfigError as exc:
                raise ConfigError(f"pipeline step {i}: {exc}") from None

    def to_json(self) -> str:
        return json.dumps([s.to_dict() for s in self.steps], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AugmentationPipeline":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"pipeline config is not valid JSON: {exc}") from None
        if not isinstance(doc, list):
            raise ConfigError("pipeline config must be a JSON list of descriptors")
        return cls(tuple(AugmentationDescriptor.from_dict(d) for d in doc))

    @classmethod
    def load(cls, path) -> "AugmentationPipeline":
        with open(path) as fh:
            return cls.from_json(fh.read())

    @classmethod
    def of(cls, *kinds: str, p: float = 1.0) -> "AugmentationPipeline":
        return cls(tuple(AugmentationDescriptor(k, p) for k in kinds))


def step_rng(base_seed: int, sample_id: int, epoch: int, step_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, sample_id, epoch, step_index]))


def apply_pipeline(elem: WeightSpaceElement, pipeline: AugmentationPipeline | Sequence[AugmentationDescriptor],
                   sample_id: int = 0, epoch: int = 0, base_seed: int = 0) -> WeightSpaceElement:
    """Apply each step with its probability; randomness depends only on the seed tuple."""
    if not isinstance(pipeline, AugmentationPipeline):
        pipeline = AugmentationPipeline(tuple(pipeline))
    pipeline.validate(elem.spec)
    for i, step in enumerate(pipeline.steps):
        rng = step_rng(base_seed, sample_id, epoch, i)
        if rng.random() < step.probability:
            elem = step.sample_and_apply(elem, rng)
    return elem
