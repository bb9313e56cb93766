"""Synthetic registration pairs and point-cloud / pair-manifest file I/O.

Point clouds are ``(N, 3)`` float arrays. A pair stores the source scan in
its own frame, the complete model cloud, and the ground-truth transform
``h0`` with ``apply(h0, source) ~ model``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import lie
from .errors import InsufficientPoints, MissingFile, ParseError, UnsupportedFormat
from .lie import RigidTransform

SHAPES = ("sphere", "box", "torus", "composite")
# fraction of the visible points each occlusion patch removes
PATCH_FRACTION = 0.04
MAX_ANGLE = math.pi - 1e-2


@dataclass(frozen=True, eq=False)
class RegistrationPair:
    id: str
    source: np.ndarray
    model: np.ndarray
    h0: RigidTransform
    correspondences: Optional[np.ndarray] = None  # model index for each source point


@dataclass(frozen=True)
class GenSpec:
    shape: str = "composite"
    n_source: int = 512
    n_model: int = 1024
    max_rot: float = 1.0
    max_trans: float = 0.1
    partial_fraction: float = 0.7
    noise_sigma: float = 0.001
    occlusion_patches: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if self.n_source < 3 or self.n_model < 3:
            raise ValueError("point counts must be at least 3")
        if not 0.0 < self.partial_fraction <= 1.0:
            raise ValueError("partial_fraction must lie in (0, 1]")
        if self.max_rot < 0 or self.max_trans < 0 or self.noise_sigma < 0 or self.occlusion_patches < 0:
            raise ValueError("ranges, noise and patch count must be non-negative")


# -- surface sampling ------------------------------------------------------

def _unit_vectors(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_sphere(rng, n, radius=0.08, center=(0.0, 0.0, 0.0)):
    return radius * _unit_vectors(rng, n) + np.asarray(center)


def _sample_box(rng, n, half=(0.08, 0.05, 0.03), center=(0.0, 0.0, 0.0)):
    half = np.asarray(half, dtype=float)
    # faces come in +/- pairs normal to each axis; area of one face of the pair
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    sign = rng.choice([-1.0, 1.0], size=n)
    pts[np.arange(n), axis] = sign * half[axis]
    return pts + np.asarray(center)


def _sample_torus(rng, n, major=0.07, minor=0.025):
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        u = rng.uniform(0.0, 2 * math.pi, m)
        v = rng.uniform(0.0, 2 * math.pi, m)
        # area element is proportional to the distance from the axis
        keep = rng.uniform(0.0, major + minor, m) < major + minor * np.cos(v)
        u, v = u[keep], v[keep]
        ring = major + minor * np.cos(v)
        out = np.vstack([out, np.column_stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)])])
    return out[:n]


COMPOSITE_BALLS = (
    ((0.0, 0.0, 0.0), 0.05),
    ((0.06, 0.015, 0.0), 0.035),
    ((-0.01, 0.045, 0.035), 0.025),
)


def _sample_composite(rng, n):
    # surface of a union of three unequal, non-collinear balls: no symmetry axis
    centers = np.array([c for c, _ in COMPOSITE_BALLS])
    radii = np.array([r for _, r in COMPOSITE_BALLS])
    weights = radii ** 2 / np.sum(radii ** 2)
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        which = rng.choice(len(radii), size=m, p=weights)
        pts = centers[which] + radii[which, None] * _unit_vectors(rng, m)
        d = np.linalg.norm(pts[:, None, :] - centers[None], axis=2)
        d[np.arange(m), which] = np.inf
        out = np.vstack([out, pts[np.all(d >= radii, axis=1)]])
    return out[:n]


def sample_surface(shape: str, n: int, rng) -> np.ndarray:
    if shape == "sphere":
        return _sample_sphere(rng, n)
    if shape == "box":
        return _sample_box(rng, n)
    if shape == "torus":
        return _sample_torus(rng, n)
    if shape == "composite":
        return _sample_composite(rng, n)
    raise ValueError(f"unknown shape {shape!r}")


def random_transform(rng, max_rot: float, max_trans: float) -> RigidTransform:
    """Uniform axis, angle uniform in [0, max_rot], translation uniform in a ball."""
    while True:
        axis = _unit_vectors(rng, 1)[0]
        angle = rng.uniform(0.0, max_rot)
        if angle < MAX_ANGLE:
            break
    direction = _unit_vectors(rng, 1)[0]
    radius = max_trans * rng.uniform() ** (1.0 / 3.0)
    return RigidTransform(lie.so3_exp(angle * axis), radius * direction)


def generate_pair(spec: GenSpec, rng=None, pair_id: Optional[str] = None) -> RegistrationPair:
    """Sample a model surface and a partial, occluded, noisy source view of it.

    The source keeps the half-space of model points facing a random view
    direction (``partial_fraction`` of them), loses ``occlusion_patches``
    ball neighbourhoods, gets isotropic noise and is subsampled to
    ``n_source`` before being moved into its own frame by ``inverse(h0)``.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    model = sample_surface(spec.shape, spec.n_model, rng)

    view = _unit_vectors(rng, 1)[0]
    depth = (model - model.mean(axis=0)) @ view
    n_visible = int(math.ceil(spec.partial_fraction * spec.n_model - 1e-9))
    visible = np.argsort(-depth, kind="stable")[:n_visible]

    patch_size = int(round(PATCH_FRACTION * n_visible))
    for _ in range(spec.occlusion_patches):
        if patch_size == 0 or len(visible) == 0:
            break
        center = model[visible[rng.integers(len(visible))]]
        d = np.linalg.norm(model[visible] - center, axis=1)
        radius = np.sort(d)[min(patch_size, len(d)) - 1]
        visible = visible[d > radius]

    if len(visible) < spec.n_source:
        raise InsufficientPoints(
            f"only {len(visible)} points survive culling, need {spec.n_source}")
    chosen = np.sort(rng.choice(visible, size=spec.n_source, replace=False))
    pts = model[chosen]
    if spec.noise_sigma > 0:
        pts = pts + rng.normal(0.0, spec.noise_sigma, size=pts.shape)

    h0 = random_transform(rng, spec.max_rot, spec.max_trans)
    source = lie.apply(lie.inverse(h0), pts)
    pid = pair_id if pair_id is not None else f"{spec.shape}-{spec.seed}"
    return RegistrationPair(pid, source, model, h0, chosen)


def generate_dataset(spec: GenSpec, n_pairs: int):
    """``n_pairs`` pairs from one seeded stream, ids ``<shape>-0000`` onwards."""
    rng = np.random.default_rng(spec.seed)
    return [generate_pair(spec, rng, pair_id=f"{spec.shape}-{i:04d}") for i in range(n_pairs)]


# -- point cloud files -----------------------------------------------------

def _load_xyz(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.replace(",", " ").split()
            if len(fields) < 3:
                raise ParseError(f"expected 3 coordinates, got {len(fields)}", lineno, path)
            try:
                rows.append([float(f) for f in fields[:3]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
    if not rows:
        raise ParseError("no points found", None, path)
    return np.array(rows, dtype=float)


def _load_ply(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise UnsupportedFormat(f"{path}: only ASCII PLY is supported") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1, path)

    elements = []  # (name, count, [property names])
    lineno = 1
    for lineno in range(2, len(lines) + 1):
        words = lines[lineno - 1].split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "format":
            if len(words) < 2 or words[1] != "ascii":
                raise UnsupportedFormat(f"{path}: PLY format {' '.join(words[1:])!r} not supported")
        elif words[0] == "element":
            if len(words) != 3:
                raise ParseError("malformed element line", lineno, path)
            try:
                elements.append((words[1], int(words[2]), []))
            except ValueError:
                raise ParseError("element count is not an integer", lineno, path) from None
        elif words[0] == "property":
            if not elements:
                raise ParseError("property before any element", lineno, path)
            elements[-1][2].append(words[-1])
        elif words[0] == "end_header":
            break
        else:
            raise ParseError(f"unexpected header keyword {words[0]!r}", lineno, path)
    else:
        raise ParseError("missing end_header", len(lines), path)

    body = lineno  # index of the first data line (0-based)
    points = None
    for name, count, props in elements:
        if name == "vertex":
            try:
                cols = [props.index(c) for c in ("x", "y", "z")]
            except ValueError:
                raise ParseError("vertex element lacks x/y/z properties", None, path) from None
            points = np.empty((count, 3))
            for i in range(count):
                ln = body + i + 1
                if body + i >= len(lines):
                    raise ParseError("unexpected end of file in vertex data", ln, path)
                fields = lines[body + i].split()
                if len(fields) < len(props):
                    raise ParseError(f"expected {len(props)} values, got {len(fields)}", ln, path)
                try:
                    points[i] = [float(fields[c]) for c in cols]
                except ValueError as exc:
                    raise ParseError(str(exc), ln, path) from None
        body += count
    if points is None or len(points) == 0:
        raise ParseError("no vertex data", None, path)
    return points


def _format_of(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".xyz", ".txt", ".pts"):
        return "xyz"
    if ext == ".ply":
        return "ply"
    raise UnsupportedFormat(f"{path}: unrecognised point cloud extension {ext!r}")


def load_cloud(path) -> np.ndarray:
    fmt = _format_of(path)
    if not os.path.exists(path):
        raise MissingFile(f"{path}: no such file")
    return _load_xyz(path) if fmt == "xyz" else _load_ply(path)


def save_cloud(cloud, path):
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    fmt = _format_of(path)
    with open(path, "w") as fh:
        if fmt == "ply":
            fh.write(f"ply\nformat ascii 1.0\nelement vertex {len(pts)}\n"
                     "property double x\nproperty double y\nproperty double z\nend_header\n")
        for x, y, z in pts.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


# -- pair manifests --------------------------------------------------------

def save_pair(pair: RegistrationPair, path, cloud_ext: str = ".xyz"):
    """Write ``path`` (JSON manifest) plus the two clouds beside it."""
    path = Path(path)
    base = path.parent
    src_name = f"{pair.id}_source{cloud_ext}"
    mdl_name = f"{pair.id}_model{cloud_ext}"
    save_cloud(pair.source, base / src_name)
    save_cloud(pair.model, base / mdl_name)
    doc = {
        "id": pair.id,
        "source_path": src_name,
        "model_path": mdl_name,
        "h0": [float(v) for v in pair.h0.matrix.reshape(-1)],
        "correspondences": None if pair.correspondences is None
        else [int(i) for i in pair.correspondences],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def parse_h0(values, path=None) -> RigidTransform:
    if not isinstance(values, list) or len(values) != 16:
        n = len(values) if isinstance(values, list) else type(values).__name__
        raise ParseError(f"h0 must be 16 numbers (row-major 4x4), got {n}", None, path)
    try:
        m = np.array([float(v) for v in values]).reshape(4, 4)
    except (TypeError, ValueError):
        raise ParseError("h0 entries must be numbers", None, path) from None
    if not np.allclose(m[3], [0, 0, 0, 1], atol=1e-9):
        raise ParseError("h0 bottom row must be 0 0 0 1", None, path)
    return RigidTransform.from_matrix(m)


def load_pair(path) -> RegistrationPair:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"{path}: no such file")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, path) from None
    if not isinstance(doc, dict):
        raise ParseError("manifest must be a JSON object", None, path)
    for key in ("id", "source_path", "model_path", "h0"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", None, path)
    h0 = parse_h0(doc["h0"], path)
    src = path.parent / doc["source_path"]
    mdl = path.parent / doc["model_path"]
    for p in (src, mdl):
        if not p.exists():
            raise MissingFile(f"{p}: referenced by {path} but missing")
    corr = doc.get("correspondences")
    if corr is not None:
        corr = np.asarray(corr, dtype=int)
    pair = RegistrationPair(str(doc["id"]), load_cloud(src), load_cloud(mdl), h0, corr)
    if corr is not None and len(corr) != len(pair.source):
        raise ParseError("correspondences length differs from source size", None, path)
    return pair


INDEX_NAME = "index.txt"


def save_dataset(pairs, out_dir, cloud_ext: str = ".xyz"):
    """Write every pair manifest plus ``index.txt`` listing pair ids."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for pair in pairs:
        save_pair(pair, out / f"{pair.id}.json", cloud_ext)
    with open(out / INDEX_NAME, "w") as fh:
        for pair in pairs:
            fh.write(pair.id + "\n")


def load_index(dataset_dir):
    path = Path(dataset_dir) / INDEX_NAME
    if not path.exists():
        raise MissingFile(f"{path}: no dataset index")
    with open(path) as fh:
        return [line.strip() for line in fh if line.strip()]


def load_dataset(dataset_dir):
    d = Path(dataset_dir)
    return [load_pair(d / f"{pid}.json") for pid in load_index(d)]
