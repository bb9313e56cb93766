"""Reference computations that share no code with the package under test."""

import math

import mpmath
import numpy as np

mpmath.mp.dps = 40


def _twist_matrix(xi):
    wx, wy, wz, vx, vy, vz = [mpmath.mpf(float(v)) for v in xi]
    return mpmath.matrix([
        [0, -wz, wy, vx],
        [wz, 0, -wx, vy],
        [-wy, wx, 0, vz],
        [0, 0, 0, 0],
    ])


def series_expm(xi, terms=80):
    """4x4 exponential of a twist by truncated power series in 40-digit arithmetic."""
    a = _twist_matrix(xi)
    total = mpmath.eye(4)
    term = mpmath.eye(4)
    for n in range(1, terms):
        term = term * a / n
        total += term
    return np.array(total.tolist(), dtype=float)


def series_left_jacobian(rho, terms=80):
    """sum_n K^n / (n+1)!, the matrix mapping nu to the translation of exp."""
    wx, wy, wz = [mpmath.mpf(float(v)) for v in rho]
    k = mpmath.matrix([[0, -wz, wy], [wz, 0, -wx], [-wy, wx, 0]])
    total = mpmath.zeros(3)
    power = mpmath.eye(3)
    fact = mpmath.mpf(1)
    for n in range(terms):
        fact *= n + 1
        total += power / fact
        power = power * k
    return np.array(total.tolist(), dtype=float)


def bisect_x_rotation_angle(r, lo=0.0, hi=math.pi, iters=64):
    """Angle of a rotation about +x, found by bisection on the series exponential."""
    target = r[1, 1]  # cos(angle), decreasing on [0, pi]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if series_expm([mid, 0, 0, 0, 0, 0])[1, 1] > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def euclidean_posterior_mc(alpha_bar_prev, alpha_t, x0, n, rng):
    """Monte-Carlo of the 1-D chain x0 -> x_{t-1} -> x_t.

    Returns (slope, intercept, residual variance, standard errors) of the
    regression of x_{t-1} on x_t, i.e. the empirical conditional law of
    x_{t-1} given (x0, x_t).
    """
    beta_t = 1.0 - alpha_t
    x_prev = math.sqrt(alpha_bar_prev) * x0 + math.sqrt(1.0 - alpha_bar_prev) * rng.standard_normal(n)
    x_t = math.sqrt(alpha_t) * x_prev + math.sqrt(beta_t) * rng.standard_normal(n)
    xm, ym = x_t.mean(), x_prev.mean()
    sxx = np.sum((x_t - xm) ** 2)
    slope = np.sum((x_t - xm) * (x_prev - ym)) / sxx
    intercept = ym - slope * xm
    resid = x_prev - (intercept + slope * x_t)
    var = np.sum(resid ** 2) / (n - 2)
    return dict(slope=slope, intercept=intercept, var=var, xm=xm, sxx=sxx, n=n)


def naive_l1_loss(target, predicted, points):
    """Double loop over points and coordinates of homogeneous images."""
    total = 0.0
    for p in points:
        hp = [p[0], p[1], p[2], 1.0]
        for row in range(3):
            a = sum(target[row][c] * hp[c] for c in range(4))
            b = sum(predicted[row][c] * hp[c] for c in range(4))
            total += abs(a - b)
    return total / len(points)


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return series_expm(list(angle * axis) + [0, 0, 0])[:3, :3]


def horn_quaternion(source, target):
    """Least-squares rigid fit via the eigenvector of Horn's 4x4 quaternion matrix."""
    a = np.asarray(source, dtype=float)
    b = np.asarray(target, dtype=float)
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    s = (a - ca).T @ (b - cb)
    sxx, sxy, sxz = s[0]
    syx, syy, syz = s[1]
    szx, szy, szz = s[2]
    n = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    w, v = np.linalg.eigh(n)
    q0, qx, qy, qz = v[:, np.argmax(w)]
    r = np.array([
        [q0 * q0 + qx * qx - qy * qy - qz * qz, 2 * (qx * qy - q0 * qz), 2 * (qx * qz + q0 * qy)],
        [2 * (qy * qx + q0 * qz), q0 * q0 - qx * qx + qy * qy - qz * qz, 2 * (qy * qz - q0 * qx)],
        [2 * (qz * qx - q0 * qy), 2 * (qz * qy + q0 * qx), q0 * q0 - qx * qx - qy * qy + qz * qz],
    ])
    return r, cb - r @ ca
