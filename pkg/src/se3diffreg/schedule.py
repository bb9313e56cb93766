"""Noise schedules and the per-step coefficients derived from them.

All arrays are indexed by ``t - 1`` for steps ``t = 1..T``. The cumulative
product before the first step is taken to be 1, which makes the t = 1
posterior put its whole weight on the clean transform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidStepCount, StepOutOfRange

COSINE_OFFSET = 0.008
MAX_BETA = 0.999
LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02

KINDS = ("cosine", "linear")
CSV_HEADER = ("t", "beta", "alpha_bar", "beta_tilde", "lambda0", "lambda1")


class Coefficients(NamedTuple):
    beta: float
    alpha_bar: float
    beta_tilde: float
    lambda0: float
    lambda1: float


@dataclass(frozen=True, eq=False)
class Schedule:
    kind: str
    T: int
    timesteps: np.ndarray  # original step index of each entry (1..T_train)
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray
    lambda0: np.ndarray
    lambda1: np.ndarray

    def coefficients(self, t: int) -> Coefficients:
        return coefficients_at(self, t)

    def alpha_bar_at(self, t: int) -> float:
        _check_step(self, t)
        return float(self.alpha_bar[t - 1])


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _build(kind, timesteps, beta, alpha, alpha_bar) -> Schedule:
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    one_minus = 1.0 - alpha_bar
    beta_tilde = (1.0 - alpha_bar_prev) / one_minus * beta
    lambda0 = np.sqrt(alpha_bar_prev) * beta / one_minus
    # beta_1 / (1 - alpha_bar_1) is exactly 1; keep rounding from breaking that
    lambda0[0] = 1.0
    lambda1 = np.sqrt(alpha) * (1.0 - alpha_bar_prev) / one_minus
    ts = np.asarray(timesteps, dtype=int)
    ts.setflags(write=False)
    return Schedule(
        kind=kind,
        T=len(beta),
        timesteps=ts,
        beta=_readonly(beta),
        alpha=_readonly(alpha),
        alpha_bar=_readonly(alpha_bar),
        beta_tilde=_readonly(beta_tilde),
        lambda0=_readonly(lambda0),
        lambda1=_readonly(lambda1),
    )


def cosine_alpha_bar(t, T, s=COSINE_OFFSET):
    """Unclipped cosine cumulative product f(t) / f(0)."""
    f = lambda x: np.cos((np.asarray(x, dtype=float) / T + s) / (1.0 + s) * math.pi / 2) ** 2  # noqa: E731
    return f(t) / f(0)


def make_schedule(kind: str = "cosine", T: int = 200, *,
                  beta_start: float = LINEAR_BETA_START,
                  beta_end: float = LINEAR_BETA_END) -> Schedule:
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise InvalidStepCount(f"step count must be a positive integer, got {T!r}")
    T = int(T)
    if kind == "cosine":
        ab = cosine_alpha_bar(np.arange(T + 1), T)
        beta = np.minimum(1.0 - ab[1:] / ab[:-1], MAX_BETA)
    elif kind == "linear":
        beta = np.linspace(beta_start, beta_end, T)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")
    alpha = 1.0 - beta
    return _build(kind, np.arange(1, T + 1), beta, alpha, np.cumprod(alpha))


def _check_step(s: Schedule, t: int):
    if not 1 <= t <= s.T:
        raise StepOutOfRange(f"step {t} outside 1..{s.T}")


def coefficients_at(s: Schedule, t: int) -> Coefficients:
    _check_step(s, t)
    i = t - 1
    return Coefficients(float(s.beta[i]), float(s.alpha_bar[i]), float(s.beta_tilde[i]),
                        float(s.lambda0[i]), float(s.lambda1[i]))


def respaced_indices(T: int, K: int) -> np.ndarray:
    """K step indices evenly spread over 1..T, always ending at T."""
    k = np.arange(1, K + 1)
    # round(k * T / K) with halves rounded up, in integer arithmetic
    return (2 * k * T + K) // (2 * K)


def respace(s: Schedule, K: int) -> Schedule:
    """Shorter schedule visiting K of the original steps.

    The cumulative products are kept at the chosen steps and the per-step
    alphas are the ratios between consecutive kept products.
    """
    if not isinstance(K, (int, np.integer)) or not 1 <= K <= s.T:
        raise InvalidStepCount(f"inference steps must lie in 1..{s.T}, got {K!r}")
    if K == s.T:
        return s
    idx = respaced_indices(s.T, int(K))
    alpha_bar = np.asarray(s.alpha_bar)[idx - 1]
    prev = np.concatenate([[1.0], alpha_bar[:-1]])
    alpha = alpha_bar / prev
    beta = 1.0 - alpha
    return _build(s.kind, np.asarray(s.timesteps)[idx - 1], beta, alpha, alpha_bar)


def write_csv(s: Schedule, path_or_file):
    """Write one row per step: t, beta, alpha_bar, beta_tilde, lambda0, lambda1."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(s.T):
            w.writerow([int(s.timesteps[i])] + [
                format(float(v[i]), ".9g")
                for v in (s.beta, s.alpha_bar, s.beta_tilde, s.lambda0, s.lambda1)
            ])
    finally:
        if own:
            fh.close()
