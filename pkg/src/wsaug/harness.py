"""Verification, rendering and dataset generation."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import augment as aug
from .fit import DATASET_FIT, FitError, FitReport, OptimizerConfig, fit_inr, image_grid, synth_signal
from .io import atomic_write_text, write_pgm
from .wscore import (
    ConfigError,
    NetworkSpec,
    ParseError,
    ValidationError,
    WeightSpaceElement,
    forward_eval,
    load,
    save,
)

log = logging.getLogger(__name__)

PRESERVING_KINDS = ("identity",) + aug.SYMMETRY_KINDS
VERIFIABLE_KINDS = PRESERVING_KINDS + aug.INPUT_SPACE_KINDS


@dataclass(frozen=True)
class VerificationReport:
    kind: str
    max_abs_error: float
    points: int
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def domain_points(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, d))


def verify_preservation(elem: WeightSpaceElement, kind: str | aug.AugmentationDescriptor, n_points: int = 1024,
                        tolerance: float = 1e-4, seed=0) -> VerificationReport:
    """Apply a random instance of ``kind`` and measure how far the function moved.

    Symmetry kinds compare ``f'(x)`` with ``f(x)``; input-space kinds compare
    ``f'(x)`` with ``f(T x)``. Points are uniform on ``[-1, 1]^d0``.
    """
    desc = kind if isinstance(kind, aug.AugmentationDescriptor) else None
    name = desc.kind if desc else kind
    if name not in VERIFIABLE_KINDS:
        if name in aug.KIND_DEFAULTS:
            raise ValidationError(f"{name} does not preserve the function and has no pullback law")
        raise ValidationError(f"unknown transform kind {name!r}")
    if n_points < 1:
        raise ValidationError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    x = domain_points(elem.spec.input_dim, n_points, rng)
    params = desc.params if desc else aug.KIND_DEFAULTS.get(name, {})
    if name == "identity":
        new, pulled = elem, x
    elif name == "rotate_input":
        R = aug.random_rotation(elem.spec.input_dim, rng, np.radians(params["max_angle"]))
        new, pulled = aug.rotate_input(elem, R), x @ R.T
    elif name == "scale_input":
        s = rng.uniform(params["min_scale"], params["max_scale"])
        new, pulled = aug.scale_input(elem, s), s * x
    elif name == "translate_input":
        t = rng.uniform(-params["max_shift"], params["max_shift"], elem.spec.input_dim)
        new, pulled = aug.translate_input(elem, t), x + t
    else:
        step = desc or aug.AugmentationDescriptor(name)
        step.check_spec(elem.spec)
        new, pulled = step.sample_and_apply(elem, rng), x
    err = float(np.max(np.abs(forward_eval(new, x) - forward_eval(elem, pulled))))
    return VerificationReport(name, err, n_points, tolerance, err <= tolerance)


def render_inr(elem: WeightSpaceElement, grid: tuple[int, int] = (32, 32)) -> np.ndarray:
    """8-bit grayscale rendering on the normalized ``H x W`` grid."""
    if elem.spec.input_dim != 2 or elem.spec.output_dim != 1:
        raise ValidationError(f"rendering needs a 2 -> 1 network, got {elem.spec.input_dim} -> "
                              f"{elem.spec.output_dim}")
    h, w = grid
    values = forward_eval(elem, image_grid(h, w)).reshape(h, w)
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_to_pgm(elem: WeightSpaceElement, path, grid=(32, 32)) -> np.ndarray:
    img = render_inr(elem, grid)
    write_pgm(path, img)
    return img


# ---------------------------------------------------------------- datasets

@dataclass
class ManifestEntry:
    wse_path: str
    label: int
    signal_id: str
    view_index: int
    fit_report: dict


@dataclass
class DatasetManifest:
    class_names: list[str]
    views: int
    entries: list[ManifestEntry] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "class_names": self.class_names,
            "views": self.views,
            "config": self.config,
            "entries": [asdict(e) for e in self.entries],
            "failures": self.failures,
        }, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        return cls(d["class_names"], d["views"], [ManifestEntry(**e) for e in d["entries"]],
                   d.get("failures", []), d.get("config", {}))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class _Job:
    kind: str
    label: int
    signal_id: str
    signal_seed: tuple[int, int]
    view_index: int
    fit_seed: int
    rel_path: str


def _run_job(job: _Job, spec: NetworkSpec, opt: OptimizerConfig, omega0: float, size: int, out_dir: str):
    task = synth_signal(job.kind, size=size, seed=list(job.signal_seed))
    try:
        elem, report = fit_inr(spec, task, opt, job.fit_seed, omega0)
    except FitError as exc:
        return job, None, str(exc)
    if opt.early_stop_psnr is not None and report.final_psnr < opt.early_stop_psnr:
        return job, report, f"PSNR {report.final_psnr:.2f} below {opt.early_stop_psnr}"
    save(elem, Path(out_dir) / job.rel_path)
    return job, report, None


def worker_count() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get("WSAUG_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"WSAUG_THREADS must be an integer, got {cap!r}") from None
    return n


def gen_dataset(classes: Sequence[str], per_class: int, views: int, out_dir, opt: OptimizerConfig = DATASET_FIT,
                base_seed: int = 0, size: int = 32, spec: Optional[NetworkSpec] = None,
                omega0: float = 30.0, workers: Optional[int] = None) -> DatasetManifest:
    """Fit ``views`` INRs per procedural signal and write them with a JSON manifest.

    Signal ``s`` of class ``c`` is drawn from seed ``(base_seed, s)``; its
    views use fit seeds ``base_seed + s*views + v``. Existing valid files are
    reused, so an interrupted run can be resumed; the manifest is rewritten
    only when its content changes.
    """
    if views < 1 or per_class < 1:
        raise ValidationError("views and per_class must be >= 1")
    for k in classes:
        if k not in ("checkerboard", "radial_gradient", "stripes", "disk"):
            raise ValidationError(f"unknown image class {k!r}")
    spec = spec or NetworkSpec.mlp([2, 32, 32, 1])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    old_text = manifest_path.read_text() if manifest_path.exists() else None
    known = {}
    if old_text:
        try:
            known = {e.wse_path: e for e in DatasetManifest.from_json(old_text).entries}
        except (ValueError, KeyError, TypeError):
            log.warning("ignoring unreadable manifest %s", manifest_path)

    jobs, entries = [], {}
    for c, kind in enumerate(classes):
        for j in range(per_class):
            s = c * per_class + j
            sid = f"{kind}_{j:03d}"
            for v in range(views):
                job = _Job(kind, c, sid, (base_seed, s), v, base_seed + s * views + v,
                           f"{kind}/{sid}_v{v}.wse")
                prev = known.get(job.rel_path)
                if prev is not None and _valid_file(out / job.rel_path, spec):
                    entries[job.rel_path] = prev
                else:
                    jobs.append(job)

    failures = []
    n_workers = min(workers or worker_count(), max(1, len(jobs)))
    args = (spec, opt, omega0, size, str(out))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_run_job, jobs, *[[a] * len(jobs) for a in args]))
    else:
        results = [_run_job(job, *args) for job in jobs]
    for job, report, error in results:
        if error is not None:
            failures.append({"wse_path": job.rel_path, "signal_id": job.signal_id,
                             "view_index": job.view_index, "error": error})
            continue
        entries[job.rel_path] = ManifestEntry(job.rel_path, job.label, job.signal_id, job.view_index,
                                              report.to_dict())

    ordered = [entries[k] for k in sorted(entries, key=_entry_order(classes))]
    manifest = DatasetManifest(list(classes), views, ordered, failures, {
        "spec": spec.to_dict(), "omega0": omega0, "size": size, "per_class": per_class,
        "base_seed": base_seed, "optimizer": asdict(opt),
    })
    text = manifest.to_json()
    if text != old_text:
        atomic_write_text(manifest_path, text)
    return manifest


def _entry_order(classes):
    rank = {k: i for i, k in enumerate(classes)}

    def key(rel):
        kind, name = rel.split("/")
        return rank.get(kind, len(rank)), name

    return key


def _valid_file(path: Path, spec: NetworkSpec) -> bool:
    if not path.exists():
        return False
    try:
        return load(path).spec == spec
    except (ParseError, ValueError, OSError):
        return False


def load_dataset(out_dir):
    """Elements, integer labels and fit reports listed in ``out_dir/manifest.json``."""
    out = Path(out_dir)
    manifest = DatasetManifest.load(out / "manifest.json")
    elems = [load(out / e.wse_path) for e in manifest.entries]
    labels = np.array([e.label for e in manifest.entries])
    reports = [FitReport.from_dict(e.fit_report) for e in manifest.entries]
    return elems, labels, reports, manifest


def verify_suite(elems: Sequence[WeightSpaceElement], kinds: Sequence[str], n_points: int = 1024,
                 tolerance: Optional[float] = None, seed: int = 0) -> list[VerificationReport]:
    """Verify every kind on every element; default tolerance 1e-4 for sine nets, 1e-5 otherwise."""
    reports = []
    for i, elem in enumerate(elems):
        tol = tolerance
        if tol is None:
            tol = 1e-4 if elem.spec.activations[0].value == "sine" else 1e-5
        for j, kind in enumerate(kinds):
            reports.append(verify_preservation(elem, kind, n_points, tol, seed=[seed, i, j]))
    return reports
