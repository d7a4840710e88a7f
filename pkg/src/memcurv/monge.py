"""Curvature of a Monge-chart surface from the jet of its height function.

The surface is z = z(x1, x2) over a planar chart whose z axis is the local
surface normal.  Principal curvatures and directions solve the 2x2
generalized eigenproblem (b - k a) v = 0 with the first and second
fundamental forms

    a = I + grad_z (x) grad_z,        b = hess_z / sqrt(1 + |grad_z|^2).

With this sign a sphere sampled along its outward normal has negative mean
curvature, and a chart-up bowl (hess_z > 0) has positive curvature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetric

UMBILIC_TOL = 1e-9
_AXES = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))


@dataclass(frozen=True)
class MongeJet2:
    """Height, slope and curvature data of the chart at one point."""

    z: float
    grad_z: np.ndarray
    hess_z: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grad_z, dtype=float)
        h = np.asarray(self.hess_z, dtype=float)
        if g.shape != (2,) or h.shape != (2, 2):
            raise ValueError("grad_z must be a 2-vector and hess_z a 2x2 matrix")
        if not (np.isfinite(self.z) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            raise ValueError("jet entries must be finite")
        scale = np.abs(h).max()
        if abs(h[0, 1] - h[1, 0]) > 1e-8 * max(scale, 1e-300):
            raise ValueError("hess_z must be symmetric")
        h = 0.5 * (h + h.T)
        g.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "grad_z", g)
        object.__setattr__(self, "hess_z", h)


@dataclass(frozen=True)
class CurvatureEstimate:
    """Principal curvatures (k1 <= k2), directions, mean and Gaussian curvature."""

    k1: float
    k2: float
    dir1: np.ndarray
    dir2: np.ndarray
    H: float
    K: float


def fundamental_forms(jet: MongeJet2):
    """First and second fundamental forms of the chart at the jet's point."""
    g = jet.grad_z
    a = np.eye(2) + np.outer(g, g)
    b = jet.hess_z / np.sqrt(1.0 + float(g @ g))
    return a, b


def _canonical_direction(v):
    v = v / np.linalg.norm(v)
    lead = v[0] if abs(v[0]) > 1e-14 else v[1]
    return -v if lead < 0.0 else v


def _null_direction(M, scale):
    r0, r1 = M[0], M[1]
    row = r0 if float(r0 @ r0) >= float(r1 @ r1) else r1
    norm = float(np.linalg.norm(row))
    if norm <= 1e-14 * max(scale, 1e-300):
        return None
    return np.array([-row[1], row[0]]) / norm


def principal_curvatures(a, b) -> CurvatureEstimate:
    """Closed-form solution of the pencil det(b - k a) = 0.

    Directions are a-orthogonal for distinct curvatures, unit Euclidean norm
    with positive leading component; umbilic points fall back to the chart
    axes for determinism.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    det_a = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    emin = 0.5 * (a[0, 0] + a[1, 1]) - np.sqrt(
        max(0.25 * (a[0, 0] - a[1, 1]) ** 2 + a[0, 1] * a[1, 0], 0.0)
    )
    if emin <= 1e-12 * max(abs(a).max(), 1e-300) or det_a <= 0.0:
        raise DegenerateMetric("first fundamental form is not positive definite")
    det_b = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
    mean = (b[0, 0] * a[1, 1] + b[1, 1] * a[0, 0] - 2.0 * a[0, 1] * b[0, 1]) / (2.0 * det_a)
    gauss = det_b / det_a
    spread = np.sqrt(max(mean * mean - gauss, 0.0))
    k1 = mean - spread
    k2 = mean + spread

    if abs(k2 - k1) <= UMBILIC_TOL * (abs(k1) + abs(k2) + 1e-30):
        dir1, dir2 = _AXES
    else:
        scale = max(np.abs(b).max(), np.abs(a).max())
        dirs = []
        for k in (k1, k2):
            v = _null_direction(b - k * a, scale)
            dirs.append(_AXES[len(dirs)] if v is None else _canonical_direction(v))
        dir1, dir2 = dirs
    return CurvatureEstimate(
        k1=float(k1), k2=float(k2), dir1=dir1, dir2=dir2,
        H=0.5 * (float(k1) + float(k2)), K=float(k1) * float(k2),
    )


def sinusoid_height(points):
    """Benchmark surface z = sin(x1^2 + x2), vectorized over (N, 2) points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.sin(pts[:, 0] ** 2 + pts[:, 1])


def sinusoid_jet(x) -> MongeJet2:
    """Analytic jet of the benchmark surface at one planar point."""
    x1, x2 = float(x[0]), float(x[1])
    s = x1 * x1 + x2
    sin_s, cos_s = np.sin(s), np.cos(s)
    grad = np.array([2.0 * x1 * cos_s, cos_s])
    hess = np.array(
        [
            [2.0 * cos_s - 4.0 * x1 * x1 * sin_s, -2.0 * x1 * sin_s],
            [-2.0 * x1 * sin_s, -sin_s],
        ]
    )
    return MongeJet2(z=float(sin_s), grad_z=grad, hess_z=hess)


def curvature_of_sinusoid(x):
    """Exact mean and Gaussian curvature of the benchmark surface at x."""
    est = principal_curvatures(*fundamental_forms(sinusoid_jet(x)))
    return est.H, est.K
