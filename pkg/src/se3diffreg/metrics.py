"""Pose error metrics and threshold success-rate (mAP) summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyList
from .lie import RigidTransform

DEFAULT_ROT_THRESHOLDS_DEG = (5.0, 10.0)
DEFAULT_TRANS_THRESHOLDS = (0.01, 0.02)


@dataclass(frozen=True)
class PoseError:
    re: float  # radians
    te: float

    @property
    def re_deg(self) -> float:
        return math.degrees(self.re)


@dataclass(frozen=True)
class MapReport:
    thresholds_rot: tuple  # degrees
    thresholds_trans: tuple
    map_rot: tuple
    map_trans: tuple
    n_pairs: int

    def rows(self):
        """(threshold, axis, fraction) rows, rotation first."""
        out = [(th, "rot_deg", f) for th, f in zip(self.thresholds_rot, self.map_rot)]
        out += [(th, "trans", f) for th, f in zip(self.thresholds_trans, self.map_trans)]
        return out

    def rot_at(self, deg: float) -> float:
        return self.map_rot[self.thresholds_rot.index(deg)]

    def trans_at(self, th: float) -> float:
        return self.map_trans[self.thresholds_trans.index(th)]

    def write_csv(self, fh, method: str = None):
        w = csv.writer(fh, lineterminator="\n")
        for th, axis, frac in self.rows():
            row = [format(th, ".9g"), axis, format(frac, ".9g")]
            w.writerow([method] + row if method is not None else row)

    def table(self, title: str = "") -> str:
        heads = [f"{th:g}deg" for th in self.thresholds_rot] + [f"{th:g}" for th in self.thresholds_trans]
        vals = [f"{v:.3f}" for v in self.map_rot + self.map_trans]
        width = max(len(h) for h in heads + vals) + 2
        lines = []
        if title:
            lines.append(f"{title} (n={self.n_pairs})")
        lines.append("".join(h.rjust(width) for h in heads))
        lines.append("".join(v.rjust(width) for v in vals))
        return "\n".join(lines)


def rotation_error(r_hat, r_star) -> float:
    """arccos((tr(r_hat^T r_star) - 1) / 2), argument clamped to [-1, 1]."""
    r_hat = np.asarray(r_hat, dtype=float)
    r_star = np.asarray(r_star, dtype=float)
    c = (float(np.sum(r_hat * r_star)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def translation_error(t_hat, t_star) -> float:
    """Euclidean (not squared) distance, so length thresholds apply directly."""
    return float(np.linalg.norm(np.asarray(t_hat, dtype=float) - np.asarray(t_star, dtype=float)))


def pose_error(h_hat: RigidTransform, h_star: RigidTransform) -> PoseError:
    return PoseError(rotation_error(h_hat.rotation, h_star.rotation),
                     translation_error(h_hat.translation, h_star.translation))


def map_summary(errors: Sequence[PoseError],
                thresholds_rot: Sequence[float] = DEFAULT_ROT_THRESHOLDS_DEG,
                thresholds_trans: Sequence[float] = DEFAULT_TRANS_THRESHOLDS) -> MapReport:
    """Fraction of pairs whose error falls below each threshold, per axis.

    Rotation thresholds are in degrees. Rotation and translation are
    counted independently.
    """
    if len(errors) == 0:
        raise EmptyList("map_summary needs at least one pose error")
    re_deg = np.array([math.degrees(e.re) for e in errors])
    te = np.array([e.te for e in errors])
    n = len(errors)
    return MapReport(
        thresholds_rot=tuple(float(x) for x in thresholds_rot),
        thresholds_trans=tuple(float(x) for x in thresholds_trans),
        map_rot=tuple(float(np.count_nonzero(re_deg < th)) / n for th in thresholds_rot),
        map_trans=tuple(float(np.count_nonzero(te < th)) / n for th in thresholds_trans),
        n_pairs=n,
    )
