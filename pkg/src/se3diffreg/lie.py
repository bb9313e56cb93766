"""SE(3) / SO(3) group operations on 4x4 rigid transforms and 6D twists.

Twists are plain ``(6,)`` arrays ordered ``[rho, nu]``: ``rho`` is the
rotation vector (axis times angle, radians) and ``nu`` the translational
part. The exponential is the coupled SE(3) map, so ``nu`` is not the
translation of ``exp(xi)`` unless ``rho`` is zero; pass ``decoupled=True``
to treat the group as SO(3) x R^3 instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearCutLocus

SMALL_ANGLE = 1e-8
# below this angle the coefficient ratios are evaluated by series
SERIES_ANGLE = 1e-2
CUT_LOCUS_MARGIN = 1e-6
ORTHO_TOL = 1e-7


def _frozen(a, shape):
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation matrix plus translation vector, immutable."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> RigidTransform:
        return cls(np.eye(3), t)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def inverse(self) -> RigidTransform:
        return inverse(self)

    def apply(self, points) -> np.ndarray:
        return apply(self, points)

    def allclose(self, other: RigidTransform, atol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= atol)

    def __repr__(self):
        rows = np.array2string(self.matrix[:3], precision=6, suppress_small=True)
        return f"RigidTransform({rows})"


def twist(rho, nu) -> np.ndarray:
    return np.concatenate([np.asarray(rho, dtype=float).reshape(3),
                           np.asarray(nu, dtype=float).reshape(3)])


def hat(v) -> np.ndarray:
    """3-vector to skew-symmetric matrix."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def twist_matrix(xi) -> np.ndarray:
    """4x4 Lie-algebra matrix of a twist."""
    xi = np.asarray(xi, dtype=float)
    m = np.zeros((4, 4))
    m[:3, :3] = hat(xi[:3])
    m[:3, 3] = xi[3:]
    return m


def _sin_coeff(theta):
    # sin(theta) / theta
    if theta < SMALL_ANGLE:
        return 1.0 - theta * theta / 6.0
    return math.sin(theta) / theta


def _cos_coeff(theta):
    # (1 - cos(theta)) / theta^2, written without cancellation
    if theta < SMALL_ANGLE:
        return 0.5 - theta * theta / 24.0
    h = math.sin(0.5 * theta) / theta
    return 2.0 * h * h


def _cubic_coeff(theta):
    # (theta - sin(theta)) / theta^3
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
    return (theta - math.sin(theta)) / theta ** 3


def _inv_coeff(theta):
    # (1 - (theta/2) cot(theta/2)) / theta^2, the K^2 weight of the inverse left Jacobian
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    half = 0.5 * theta
    return (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)


def so3_exp(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    theta = float(np.linalg.norm(rho))
    k = hat(rho)
    return np.eye(3) + _sin_coeff(theta) * k + _cos_coeff(theta) * (k @ k)


def rotation_angle(r) -> float:
    """Angle of a rotation matrix in [0, pi]."""
    r = np.asarray(r, dtype=float)
    s = 0.5 * float(np.linalg.norm(vee(r - r.T)))
    c = 0.5 * (float(np.trace(r)) - 1.0)
    return math.atan2(s, c)


def so3_log(r) -> np.ndarray:
    """Rotation vector of ``r``; raises NearCutLocus within 1e-6 of angle pi."""
    r = np.asarray(r, dtype=float)
    w = 0.5 * vee(r - r.T)
    s = float(np.linalg.norm(w))
    c = 0.5 * (float(np.trace(r)) - 1.0)
    theta = math.atan2(s, c)
    if theta >= math.pi - CUT_LOCUS_MARGIN:
        raise NearCutLocus(f"rotation angle {theta!r} is within {CUT_LOCUS_MARGIN} of pi")
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    if theta < 3.0:
        return w * (theta / s)
    # close to pi the skew part is tiny; read the axis off the symmetric part
    b = 0.5 * (r + r.T) - c * np.eye(3)
    j = int(np.argmax(np.diag(b)))
    axis = b[:, j] / math.sqrt(b[j, j] * (1.0 - c))
    if float(axis @ w) < 0.0:
        axis = -axis
    return theta * axis


def left_jacobian(rho) -> np.ndarray:
    """SO(3) left Jacobian, the matrix coupling rotation into translation in exp."""
    rho = np.asarray(rho, dtype=float)
    theta = float(np.linalg.norm(rho))
    k = hat(rho)
    return np.eye(3) + _cos_coeff(theta) * k + _cubic_coeff(theta) * (k @ k)


def left_jacobian_inverse(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    theta = float(np.linalg.norm(rho))
    k = hat(rho)
    return np.eye(3) - 0.5 * k + _inv_coeff(theta) * (k @ k)


def orthonormalize(r) -> np.ndarray:
    """Project onto SO(3) when the orthonormality defect exceeds ORTHO_TOL."""
    r = np.asarray(r, dtype=float)
    if np.linalg.norm(r.T @ r - np.eye(3)) <= ORTHO_TOL:
        return r
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def exp(xi, decoupled: bool = False) -> RigidTransform:
    xi = np.asarray(xi, dtype=float).reshape(6)
    rho, nu = xi[:3], xi[3:]
    r = so3_exp(rho)
    t = nu if decoupled else left_jacobian(rho) @ nu
    return RigidTransform(r, t)


def log(h: RigidTransform, decoupled: bool = False) -> np.ndarray:
    rho = so3_log(h.rotation)
    if decoupled:
        return np.concatenate([rho, h.translation])
    return np.concatenate([rho, left_jacobian_inverse(rho) @ h.translation])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    r = orthonormalize(a.rotation @ b.rotation)
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def inverse(h: RigidTransform) -> RigidTransform:
    rt = h.rotation.T
    return RigidTransform(rt, -(rt @ h.translation))


def apply(h: RigidTransform, points) -> np.ndarray:
    """Map an (N, 3) point array through ``h``; row order is preserved."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    return p @ h.rotation.T + h.translation


def interpolate(s: float, h0: RigidTransform, decoupled: bool = False) -> RigidTransform:
    """Geodesic point between identity (``s=0``) and ``h0`` (``s=1``).

    Computed as ``Exp((1 - s) * Log(h0^-1)) h0``: the offset from ``h0``
    toward identity is scaled in the tangent space and applied on the left.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation weight must lie in [0, 1], got {s}")
    offset = log(inverse(h0), decoupled=decoupled)
    return compose(exp((1.0 - s) * offset, decoupled=decoupled), h0)


def geodesic_distance(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """Relative rotation angle (radians) and translation offset length."""
    rel = a.rotation.T @ b.rotation
    return rotation_angle(rel), float(np.linalg.norm(a.translation - b.translation))
