"""Forward diffusion on SE(3): interpolate toward identity, then perturb.

A diffused transform at step t is ``P_t @ F(sqrt(alpha_bar_t); h0)``, with
``F`` the geodesic interpolation toward identity and ``P_t`` the
exponential of a Gaussian twist scaled by ``gamma * sqrt(1 - alpha_bar_t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import lie
from .data import RegistrationPair
from .errors import EmptyCloud, PerturbationResampleExceeded
from .lie import RigidTransform
from .schedule import Schedule, make_schedule

MAX_REDRAWS = 8
PERTURB_ANGLE_LIMIT = math.pi - 1e-3


@dataclass(frozen=True)
class DiffusionConfig:
    schedule: Schedule = None
    gamma: float = 0.1
    seed: int = 0
    # per-block overrides of gamma for the rotational / translational twist parts
    gamma_rot: Optional[float] = None
    gamma_trans: Optional[float] = None
    perturb_side: str = "left"
    decoupled_exp: bool = False

    def __post_init__(self):
        if self.schedule is None:
            object.__setattr__(self, "schedule", make_schedule("cosine", 200))
        for g in (self.gamma, self.gamma_rot, self.gamma_trans):
            if g is not None and g < 0:
                raise ValueError("perturbation scales must be non-negative")
        if self.perturb_side not in ("left", "right"):
            raise ValueError("perturb_side must be 'left' or 'right'")

    @property
    def twist_scale(self) -> np.ndarray:
        gr = self.gamma if self.gamma_rot is None else self.gamma_rot
        gt = self.gamma if self.gamma_trans is None else self.gamma_trans
        return np.array([gr] * 3 + [gt] * 3, dtype=float)


@dataclass(frozen=True, eq=False)
class TrainingEpisode:
    t: int
    xt_cloud: np.ndarray
    model_cloud: np.ndarray
    h_t: RigidTransform
    target: RigidTransform


def perturbation_from_noise(cfg: DiffusionConfig, t: int, eps) -> RigidTransform:
    return lie.exp(_scaled_twist(cfg, t, eps), decoupled=cfg.decoupled_exp)


def _scaled_twist(cfg, t, eps):
    scale = math.sqrt(1.0 - cfg.schedule.alpha_bar_at(t))
    return scale * cfg.twist_scale * np.asarray(eps, dtype=float)


def sample_perturbation(cfg: DiffusionConfig, t: int, rng) -> RigidTransform:
    """Draw ``Exp(gamma * sqrt(1 - alpha_bar_t) * eps)``, eps ~ N(0, I_6).

    Draws whose rotational part lands near angle pi are rejected and
    re-drawn, at most MAX_REDRAWS times.
    """
    for _ in range(MAX_REDRAWS + 1):
        xi = _scaled_twist(cfg, t, rng.standard_normal(6))
        if np.linalg.norm(xi[:3]) < PERTURB_ANGLE_LIMIT:
            return lie.exp(xi, decoupled=cfg.decoupled_exp)
    raise PerturbationResampleExceeded(
        f"perturbation at t={t} hit the cut locus {MAX_REDRAWS + 1} times; reduce gamma")


def diffuse(cfg: DiffusionConfig, h0: RigidTransform, t: int, rng) -> RigidTransform:
    """Sample H_t ~ q(H_t | H_0)."""
    s = math.sqrt(cfg.schedule.alpha_bar_at(t))
    mid = lie.interpolate(s, h0, decoupled=cfg.decoupled_exp)
    p = sample_perturbation(cfg, t, rng)
    if cfg.perturb_side == "left":
        return lie.compose(p, mid)
    return lie.compose(mid, p)


def make_episode(cfg: DiffusionConfig, pair: RegistrationPair, rng,
                 t: Optional[int] = None) -> TrainingEpisode:
    """One training sample: random step, diffused pose, moved source, target.

    ``t`` may be forced; otherwise it is drawn uniformly from 1..T.
    """
    if t is None:
        t = int(rng.integers(1, cfg.schedule.T + 1))
    h_t = diffuse(cfg, pair.h0, t, rng)
    return TrainingEpisode(
        t=t,
        xt_cloud=lie.apply(h_t, pair.source),
        model_cloud=pair.model,
        h_t=h_t,
        target=lie.compose(pair.h0, lie.inverse(h_t)),
    )


def training_loss(episode: TrainingEpisode, predicted: RigidTransform) -> float:
    """Mean over source points of the L1 gap between target and predicted images."""
    pts = episode.xt_cloud
    if len(pts) == 0:
        raise EmptyCloud("training loss needs at least one source point")
    diff = lie.apply(episode.target, pts) - lie.apply(predicted, pts)
    return float(np.abs(diff).sum(axis=1).mean())
