"""Weight-space elements: data model, forward evaluation, initialization and I/O.

A weight-space element is the ordered list of ``(W_l, b_l)`` pairs of a fully
connected network. Layer ``l`` maps ``d_{l-1}`` features to ``d_l`` features
through ``z_l = W_l a_{l-1} + b_l`` followed by an element-wise activation.

Sine layers compute plain ``sin(z)``. The SIREN frequency factor is folded
into the parameters at initialization, so every activation symmetry holds on
the stored weights without any hidden multiplier.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class WeightSpaceError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(WeightSpaceError, ValueError):
    pass


class ValidationError(WeightSpaceError, ValueError):
    pass


class UnsupportedSpecError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NumericError(WeightSpaceError, ArithmeticError):
    pass


class ParseError(ValidationError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ActivationKind(str, enum.Enum):
    RELU = "relu"
    SINE = "sine"
    IDENTITY = "identity"

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self is ActivationKind.RELU:
            return np.maximum(z, 0.0)
        if self is ActivationKind.SINE:
            return np.sin(z)
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        """Derivative at ``z``; the ReLU subgradient at 0 is 0."""
        if self is ActivationKind.RELU:
            return (z > 0).astype(z.dtype)
        if self is ActivationKind.SINE:
            return np.cos(z)
        return np.ones_like(z)


@dataclass(frozen=True)
class NetworkSpec:
    dims: tuple[int, ...]
    activations: tuple[ActivationKind, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        acts = tuple(ActivationKind(a) for a in self.activations)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "activations", acts)
        if len(dims) < 3:
            raise ValidationError(f"need at least one hidden layer, got dims {dims}")
        if any(d < 1 for d in dims):
            raise ValidationError(f"all layer widths must be >= 1, got {dims}")
        if len(acts) != len(dims) - 1:
            raise ValidationError(
                f"{len(dims) - 1} layers but {len(acts)} activations")
        if ActivationKind.IDENTITY in acts[:-1]:
            raise ValidationError("identity activation is only legal on the final layer")

    @classmethod
    def mlp(cls, dims: Sequence[int], hidden: str = "sine", output: str = "identity") -> "NetworkSpec":
        """Spec with one activation for every hidden layer and another for the output."""
        n = len(dims) - 1
        return cls(tuple(dims), (ActivationKind(hidden),) * (n - 1) + (ActivationKind(output),))

    @property
    def num_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return self.dims[1:-1]

    @property
    def num_params(self) -> int:
        return sum(self.dims[l] * self.dims[l - 1] + self.dims[l] for l in range(1, len(self.dims)))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "activations": [a.value for a in self.activations]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["dims"]), tuple(d["activations"]))


def _as_f32(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float32)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightSpaceElement:
    """Weights and biases of one network, stored as read-only float32 arrays.

    ``weights[l]`` has shape ``(dims[l+1], dims[l])`` and ``biases[l]`` has
    shape ``(dims[l+1],)`` with zero-based layer index ``l``.
    """

    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    omega0: Optional[float] = field(default=None)

    def __post_init__(self):
        ws = tuple(_as_f32(w, "weight") for w in self.weights)
        bs = tuple(_as_f32(b, "bias") for b in self.biases)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        spec = self.spec
        if len(ws) != spec.num_layers or len(bs) != spec.num_layers:
            raise DimensionError(
                f"spec has {spec.num_layers} layers, got {len(ws)} weights and {len(bs)} biases")
        for l, (w, b) in enumerate(zip(ws, bs)):
            want = (spec.dims[l + 1], spec.dims[l])
            if w.shape != want:
                raise DimensionError(f"layer {l + 1} weight has shape {w.shape}, expected {want}")
            if b.shape != (spec.dims[l + 1],):
                raise DimensionError(
                    f"layer {l + 1} bias has shape {b.shape}, expected ({spec.dims[l + 1]},)")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {l + 1} contains non-finite values")

    def replace(self, weights=None, biases=None) -> "WeightSpaceElement":
        return WeightSpaceElement(
            self.spec,
            self.weights if weights is None else tuple(weights),
            self.biases if biases is None else tuple(biases),
            self.omega0,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightSpaceElement):
            return NotImplemented
        return self.spec == other.spec and all(
            np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases))

    __hash__ = None

    def __call__(self, x) -> np.ndarray:
        return forward_eval(self, x)

    def tensors(self) -> list[np.ndarray]:
        """Weights and biases interleaved in canonical order: W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_tensors(cls, spec: NetworkSpec, tensors: Sequence[np.ndarray], omega0=None) -> "WeightSpaceElement":
        return cls(spec, tuple(tensors[0::2]), tuple(tensors[1::2]), omega0)


def check_same_spec(*elems: WeightSpaceElement) -> NetworkSpec:
    spec = elems[0].spec
    for e in elems[1:]:
        if e.spec != spec:
            raise ValidationError(f"spec mismatch: {spec.dims} vs {e.spec.dims}")
    return spec


def forward_eval(elem: WeightSpaceElement, x) -> np.ndarray:
    """Evaluate the represented function on a single point or a batch of rows.

    Accumulation is done in float64 in a fixed order over input features, so
    a batch gives bit-identical rows to evaluating each row on its own. The
    result is a vector for a single point, an ``(N, d_out)`` array for a batch.
    """
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != elem.spec.input_dim:
        raise DimensionError(
            f"expected inputs with {elem.spec.input_dim} columns, got shape {np.shape(x)}")
    for w, b, act in zip(elem.weights, elem.biases, elem.spec.activations):
        a = act(_affine(a, w.astype(np.float64), b.astype(np.float64)))
    return a[0] if single else a


def _affine(a: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # explicit left-to-right sum; BLAS may reorder per batch size
    z = np.broadcast_to(b, (a.shape[0], b.shape[0])).copy()
    for k in range(w.shape[1]):
        z += a[:, k:k + 1] * w[:, k]
    return z


# ---------------------------------------------------------------- initializers

def init_siren(spec: NetworkSpec, omega0: float = 30.0, seed: int = 0) -> WeightSpaceElement:
    """SIREN initialization with ``omega0`` folded into the stored parameters.

    First layer: ``W ~ U(-omega0/d0, omega0/d0)``, ``b ~ omega0 * U(-1/sqrt(d0), 1/sqrt(d0))``.
    Hidden sine layers: ``W ~ U(-sqrt(6/n), sqrt(6/n))``, ``b ~ omega0 * U(-1/sqrt(n), 1/sqrt(n))``.
    Linear output layer: ``W ~ U(-sqrt(6/n)/omega0, sqrt(6/n)/omega0)``, ``b ~ U(-1/sqrt(n), 1/sqrt(n))``.
    """
    if not omega0 > 0:
        raise ValidationError(f"omega0 must be positive, got {omega0}")
    if any(a is not ActivationKind.SINE for a in spec.activations[:-1]):
        raise UnsupportedSpecError("init_siren needs sine activations on every hidden layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l in range(spec.num_layers):
        fan_in, fan_out = spec.dims[l], spec.dims[l + 1]
        if l == 0:
            wb = omega0 / fan_in
        elif spec.activations[l] is ActivationKind.SINE:
            wb = np.sqrt(6.0 / fan_in)
        else:
            wb = np.sqrt(6.0 / fan_in) / omega0
        bb = 1.0 / np.sqrt(fan_in)
        if spec.activations[l] is ActivationKind.SINE:
            bb *= omega0
        weights.append(rng.uniform(-wb, wb, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bb, bb, size=fan_out))
    return WeightSpaceElement(spec, tuple(weights), tuple(biases), float(omega0))


def init_relu(spec: NetworkSpec, seed: int = 0) -> WeightSpaceElement:
    """Kaiming-style uniform init, ``U(-sqrt(6/fan_in), sqrt(6/fan_in))`` for weights and biases alike."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l in range(spec.num_layers):
        fan_in, fan_out = spec.dims[l], spec.dims[l + 1]
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return WeightSpaceElement(spec, tuple(weights), tuple(biases))


def init_element(spec: NetworkSpec, seed: int = 0, omega0: float = 30.0) -> WeightSpaceElement:
    if spec.activations[0] is ActivationKind.SINE:
        return init_siren(spec, omega0, seed)
    return init_relu(spec, seed)


# ---------------------------------------------------------------- flat vectors

def flatten(elem: WeightSpaceElement) -> np.ndarray:
    """Layer-major flat vector: each layer's weights row-major, then its bias."""
    return np.concatenate([t.ravel() for t in elem.tensors()])


def unflatten(spec: NetworkSpec, flat, omega0=None) -> WeightSpaceElement:
    flat = np.asarray(flat)
    if flat.ndim != 1 or flat.size != spec.num_params:
        raise DimensionError(f"spec needs {spec.num_params} parameters, got shape {flat.shape}")
    tensors, pos = [], 0
    for l in range(spec.num_layers):
        shape = (spec.dims[l + 1], spec.dims[l])
        n = shape[0] * shape[1]
        tensors.append(flat[pos:pos + n].reshape(shape))
        pos += n
        tensors.append(flat[pos:pos + shape[0]])
        pos += shape[0]
    return WeightSpaceElement.from_tensors(spec, tensors, omega0)


def flat_distance(a: WeightSpaceElement, b: WeightSpaceElement) -> float:
    check_same_spec(a, b)
    return float(np.linalg.norm(flatten(a).astype(np.float64) - flatten(b).astype(np.float64)))


# ---------------------------------------------------------------- wse-json v1

FORMAT_NAME = "wse-json"
FORMAT_VERSION = 1


def _f32_text(v) -> str:
    # numpy's str() of a float32 is the shortest text that parses back to the same value
    return str(np.float32(v))


def _array_text(a: np.ndarray) -> str:
    if a.ndim == 1:
        return "[" + ",".join(_f32_text(v) for v in a) + "]"
    return "[" + ",".join(_array_text(row) for row in a) + "]"


def serialize(elem: WeightSpaceElement) -> bytes:
    head = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spec": elem.spec.to_dict(),
        "omega0": elem.omega0,
    }
    parts = [json.dumps(head)[:-1]]
    parts.append(', "weights": [' + ", ".join(_array_text(w) for w in elem.weights) + "]")
    parts.append(', "biases": [' + ", ".join(_array_text(b) for b in elem.biases) + "]}")
    return ("".join(parts) + "\n").encode("ascii")


def _completed_layers(text: str, key: str, stop: int) -> int:
    """Number of complete top-level entries of the list under ``key`` before ``stop``."""
    m = re.search(r'"%s"\s*:\s*\[' % key, text)
    if m is None or m.end() > stop:
        return 0
    depth, count = 0, 0
    for ch in text[m.end():stop]:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                count += 1
            elif depth < 0:
                break
    return count


def deserialize(data: bytes | str) -> WeightSpaceElement:
    text = data.decode("ascii", errors="replace") if isinstance(data, (bytes, bytearray)) else data

    def reject_constant(name):
        raise ParseError(f"non-finite number {name}", text.find(name))

    try:
        doc = json.loads(text, parse_constant=reject_constant)
    except json.JSONDecodeError as exc:
        where = "header"
        for key, label in (("biases", "bias"), ("weights", "weight")):
            pos = text.find('"%s"' % key)
            if 0 <= pos < exc.pos:
                layer = _completed_layers(text, key, exc.pos) + 1
                where = f"{label} of layer {layer}"
                break
        raise ParseError(f"malformed or truncated document, missing data in {where}: {exc.msg}",
                         exc.pos) from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ParseError("not a wse-json document", 0)
    if doc.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported version {doc.get('version')!r}", text.find('"version"'))
    for key in ("spec", "weights", "biases"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}", len(text))
    try:
        spec = NetworkSpec.from_dict(doc["spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad spec: {exc}", text.find('"spec"')) from None
    ws, bs = doc["weights"], doc["biases"]
    for key, items in (("weights", ws), ("biases", bs)):
        if not isinstance(items, list):
            raise ParseError(f"{key} must be a list", text.find('"%s"' % key))
        if len(items) < spec.num_layers:
            raise ParseError(
                f"{key} missing layer {len(items) + 1} of {spec.num_layers}", text.find('"%s"' % key))
        if len(items) > spec.num_layers:
            raise ParseError(f"{key} has {len(items)} layers, spec has {spec.num_layers}",
                             text.find('"%s"' % key))
    try:
        tensors = []
        for l in range(spec.num_layers):
            tensors.append(np.array(ws[l], dtype=np.float32))
            tensors.append(np.array(bs[l], dtype=np.float32))
        omega0 = doc.get("omega0")
        return WeightSpaceElement.from_tensors(spec, tensors, None if omega0 is None else float(omega0))
    except (WeightSpaceError, ValueError, TypeError) as exc:
        raise ParseError(f"invalid tensor data: {exc}", text.find('"weights"')) from None


def save(elem: WeightSpaceElement, path) -> None:
    from .io import atomic_write_bytes

    atomic_write_bytes(path, serialize(elem))


def load(path) -> WeightSpaceElement:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


# ---------------------------------------------------------------- signal tasks

@dataclass(frozen=True, eq=False)
class SignalTask:
    """Sample coordinates and regression targets for fitting or loss evaluation."""

    inputs: np.ndarray
    targets: np.ndarray
    kind: str = "image2d"
    grid: Optional[tuple[int, int]] = None
    loss: str = "mse"

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.asarray(self.targets, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] < 1 or x.shape[0] != y.shape[0]:
            raise DimensionError(f"{x.shape[0]} inputs vs {y.shape[0]} targets")
        if not np.isfinite(x).all():
            raise ValidationError("non-finite coordinates")
        if self.loss != "mse":
            raise ValidationError(f"unsupported loss {self.loss!r}")
        if self.kind not in ("image2d", "sdf3d"):
            raise ValidationError(f"unknown task kind {self.kind!r}")
        if self.kind == "image2d" and np.abs(x).max() > 1.0 + 1e-12:
            raise ValidationError("image coordinates must lie in [-1, 1]")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx) -> "SignalTask":
        return SignalTask(self.inputs[idx], self.targets[idx], self.kind, None, self.loss)


def task_loss(elem: WeightSpaceElement, task: SignalTask) -> float:
    """Mean squared error of ``elem`` on the task."""
    pred = forward_eval(elem, task.inputs)
    if pred.shape != task.targets.shape:
        raise DimensionError(f"prediction shape {pred.shape} vs targets {task.targets.shape}")
    return float(np.mean((pred - task.targets) ** 2))
