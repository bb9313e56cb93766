"""Reverse (denoising) process on SE(3).

Starting from the identity, each step registers the currently posed source
against the model, turns that relative estimate into an estimate of the
clean pose, and blends it with the current pose in the Lie algebra using
the posterior weights ``lambda0`` / ``lambda1`` of the schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import lie
from .errors import EmptyCloud, NearCutLocus, StepFailure
from .lie import RigidTransform
from .schedule import Schedule, make_schedule, respace
from .surrogate import NoisyOracle, SurrogateKind, register

MODES = ("deterministic", "random")


@dataclass(frozen=True)
class ReverseConfig:
    schedule: Schedule = None
    mode: str = "deterministic"
    surrogate: SurrogateKind = field(default_factory=NoisyOracle)
    record_trajectory: bool = True
    seed: int = 0
    decoupled_exp: bool = False

    def __post_init__(self):
        if self.schedule is None:
            object.__setattr__(self, "schedule", respace(make_schedule("cosine", 200), 5))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True, eq=False)
class TrajectoryStep:
    step_index: int  # position in the respaced schedule, K..1
    t: int  # original diffusion step
    h_t: RigidTransform  # pose entering the step
    h_hat: RigidTransform  # surrogate estimate of the relative transform
    h_next: RigidTransform  # pose leaving the step
    residual: float
    re: Optional[float] = None  # of h_next against the truth, radians
    te: Optional[float] = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    steps: tuple = ()

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]


def _combine(sched, t, log_h0, log_ht, rng, noisy, decoupled):
    i = t - 1
    xi = sched.lambda0[i] * log_h0 + sched.lambda1[i] * log_ht
    if noisy and t >= 2:
        xi = xi + math.sqrt(sched.beta_tilde[i]) * rng.standard_normal(6)
    return lie.exp(xi, decoupled=decoupled)


def _check_step(sched, t):
    if not 1 <= t <= sched.T:
        raise ValueError(f"step {t} outside 1..{sched.T}")


def posterior_sample(sched: Schedule, t: int, h0: RigidTransform, ht: RigidTransform,
                     rng=None, noisy: bool = False, decoupled: bool = False) -> RigidTransform:
    """Sample H_{t-1} ~ q(H_{t-1} | H_t, H_0); the mean when ``noisy`` is off."""
    _check_step(sched, t)
    return _combine(sched, t, lie.log(h0, decoupled), lie.log(ht, decoupled),
                    rng, noisy, decoupled)


def prior_mean(sched: Schedule, t: int, h_hat: RigidTransform, ht: RigidTransform,
               decoupled: bool = False) -> RigidTransform:
    """Denoiser mean built from a relative estimate ``h_hat`` of H_0 H_t^-1."""
    _check_step(sched, t)
    return _combine(sched, t, lie.log(lie.compose(h_hat, ht), decoupled),
                    lie.log(ht, decoupled), None, False, decoupled)


def reverse_step(cfg: ReverseConfig, t: int, ht: RigidTransform, source, model, rng,
                 truth: Optional[RigidTransform] = None, correspondences=None):
    """One denoising step from pose ``ht``; returns (next pose, registration result).

    ``truth`` is the ground-truth H_0, needed only by the noisy oracle,
    which is handed the true relative transform H_0 H_t^-1.
    """
    sched = cfg.schedule
    _check_step(sched, t)
    xt = lie.apply(ht, source)
    rel_truth = lie.compose(truth, lie.inverse(ht)) if truth is not None else None
    result = register(cfg.surrogate, xt, model, truth=rel_truth, rng=rng,
                      correspondences=correspondences)
    dec = cfg.decoupled_exp
    h_next = _combine(sched, t, lie.log(lie.compose(result.h, ht), dec), lie.log(ht, dec),
                      rng, cfg.mode == "random", dec)
    return h_next, result


def run_inference(cfg: ReverseConfig, source, model, truth: Optional[RigidTransform] = None,
                  rng=None, correspondences=None):
    """Denoise from the identity through all K steps of ``cfg.schedule``.

    Returns the final pose estimate and the trajectory. A step that lands
    on the logarithm's cut locus aborts with StepFailure carrying the
    partial trajectory.
    """
    source = np.asarray(source, dtype=float).reshape(-1, 3)
    model = np.asarray(model, dtype=float).reshape(-1, 3)
    if len(source) == 0 or len(model) == 0:
        raise EmptyCloud("source and model clouds must be non-empty")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    sched = cfg.schedule
    h = RigidTransform.identity()
    steps = []
    for k in range(sched.T, 0, -1):
        try:
            h_next, result = reverse_step(cfg, k, h, source, model, rng, truth, correspondences)
        except NearCutLocus as exc:
            raise StepFailure(f"reverse step {k} failed: {exc}", Trajectory(tuple(steps)), exc) from exc
        re = te = None
        if truth is not None:
            re, te = lie.geodesic_distance(h_next, truth)
        if cfg.record_trajectory:
            steps.append(TrajectoryStep(k, int(sched.timesteps[k - 1]), h, result.h, h_next,
                                        result.residual, re, te))
        h = h_next
    return h, Trajectory(tuple(steps))
