"""Registration models used as the denoiser's surrogate.

Each model estimates the transform taking the (currently posed) source
cloud onto the model cloud. Three kinds are provided: closed-form Kabsch
on known correspondences, trimmed ICP, and a noisy oracle that perturbs
the true relative transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from . import lie
from .errors import DegenerateGeometry, EmptyCloud, MissingTruth
from .lie import RigidTransform

BRUTE_FORCE_LIMIT = 1000
RANK_TOL = 1e-10


@dataclass(frozen=True)
class Kabsch:
    """Least-squares alignment on known source-to-model correspondences."""


@dataclass(frozen=True)
class TrimmedICP:
    max_iters: int = 50
    trim_fraction: float = 0.1
    tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.trim_fraction < 1.0:
            raise ValueError("trim_fraction must lie in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class NoisyOracle:
    """Ground truth composed with a random twist.

    With ``scaled`` set, the rotation sigma is multiplied by the angle of
    the true transform and the translation sigma by its offset length, so
    the estimate gets worse the further the clouds are from aligned.
    """

    rot_sigma: float = 0.0
    trans_sigma: float = 0.0
    scaled: bool = False

    def __post_init__(self):
        if self.rot_sigma < 0 or self.trans_sigma < 0:
            raise ValueError("oracle sigmas must be non-negative")


SurrogateKind = Union[Kabsch, TrimmedICP, NoisyOracle]


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    h: RigidTransform
    residual: float
    iterations: int = 1
    converged: bool = True
    # per-iteration mean matched distance (ICP only)
    history: tuple = field(default=())


def kabsch(source, target) -> RigidTransform:
    """Rigid transform minimising sum |h(source_i) - target_i|^2."""
    src = np.asarray(source, dtype=float)
    dst = np.asarray(target, dtype=float)
    if len(src) == 0:
        raise EmptyCloud("kabsch needs at least one correspondence")
    if src.shape != dst.shape:
        raise ValueError(f"shape mismatch {src.shape} vs {dst.shape}")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    sv = np.linalg.svd(a, compute_uv=False) if len(a) >= 2 else np.zeros(1)
    scale = max(float(sv[0]) if len(sv) else 0.0, 1.0)
    if len(sv) < 2 or sv[1] <= RANK_TOL * scale:
        raise DegenerateGeometry("source points are collinear or coincident")
    u, _, vt = np.linalg.svd(a.T @ b)
    d = 1.0 if np.linalg.det(vt.T @ u.T) >= 0 else -1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cd - r @ cs)


def nearest_neighbors(query, points):
    """Distance and index of the nearest ``points`` row for each query row."""
    query = np.asarray(query, dtype=float)
    points = np.asarray(points, dtype=float)
    if len(points) < BRUTE_FORCE_LIMIT:
        d2 = ((query[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        idx = np.argmin(d2, axis=1)  # first minimum wins ties
        return np.sqrt(d2[np.arange(len(query)), idx]), idx
    dist, idx = cKDTree(points).query(query)
    return dist, idx


def _mean_distance(a, b):
    return float(np.linalg.norm(a - b, axis=1).mean())


def trimmed_icp(source, model, opts: TrimmedICP, init: Optional[RigidTransform] = None):
    src = np.asarray(source, dtype=float)
    mdl = np.asarray(model, dtype=float)
    tree = cKDTree(mdl) if len(mdl) >= BRUTE_FORCE_LIMIT else None
    keep = max(3, int(np.ceil((1.0 - opts.trim_fraction) * len(src))))
    keep = min(keep, len(src))

    def match(h):
        moved = lie.apply(h, src)
        if tree is None:
            dist, idx = nearest_neighbors(moved, mdl)
        else:
            dist, idx = tree.query(moved)
        order = np.argsort(dist, kind="stable")[:keep]
        return order, idx[order], dist[order]

    h = init if init is not None else RigidTransform.identity()
    history = []
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        sel, nn, dist = match(h)
        history.append(float(dist.mean()))
        h_new = kabsch(src[sel], mdl[nn])
        step = lie.compose(h_new, lie.inverse(h))
        h = h_new
        if np.linalg.norm(lie.log(step)) < opts.tol:
            converged = True
            break
    sel, nn, dist = match(h)
    residual = float(dist.mean())
    history.append(residual)
    return RegistrationResult(h, residual, it, converged, tuple(history))


def register(kind: SurrogateKind, source, model, truth: Optional[RigidTransform] = None,
             rng=None, correspondences=None) -> RegistrationResult:
    """Estimate the transform taking ``source`` onto ``model``.

    ``correspondences`` gives, for Kabsch, the model row matched to each
    source row (identity mapping when omitted and the sizes agree).
    ``truth`` is required by the noisy oracle.
    """
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    mdl = np.asarray(model, dtype=float).reshape(-1, 3)
    if len(src) == 0:
        raise EmptyCloud("source cloud is empty")

    if isinstance(kind, Kabsch):
        if correspondences is None:
            if len(src) != len(mdl):
                raise ValueError("kabsch needs correspondences when cloud sizes differ")
            target = mdl
        else:
            target = mdl[np.asarray(correspondences, dtype=int)]
        h = kabsch(src, target)
        return RegistrationResult(h, _mean_distance(lie.apply(h, src), target))

    if isinstance(kind, TrimmedICP):
        if len(mdl) == 0:
            raise EmptyCloud("model cloud is empty")
        return trimmed_icp(src, mdl, kind)

    if isinstance(kind, NoisyOracle):
        if truth is None:
            raise MissingTruth("noisy oracle needs the true transform")
        rot_sigma, trans_sigma = kind.rot_sigma, kind.trans_sigma
        if kind.scaled:
            angle, _ = lie.geodesic_distance(truth, RigidTransform.identity())
            rot_sigma *= angle
            trans_sigma *= float(np.linalg.norm(truth.translation))
        if rot_sigma == 0.0 and trans_sigma == 0.0:
            h = truth
        else:
            if rng is None:
                raise ValueError("noisy oracle with non-zero sigma needs an rng")
            noise = rng.standard_normal(6) * np.array([rot_sigma] * 3 + [trans_sigma] * 3)
            h = lie.compose(lie.exp(noise), truth)
        # residual against the truth-aligned source, a proxy for point error
        return RegistrationResult(h, _mean_distance(lie.apply(h, src), lie.apply(truth, src)))

    raise TypeError(f"unknown surrogate kind {kind!r}")


def single_shot_baseline(kind: SurrogateKind, pair, rng=None) -> RegistrationResult:
    """One direct registration of the raw source against the model."""
    return register(kind, pair.source, pair.model, truth=pair.h0, rng=rng,
                    correspondences=pair.correspondences)
