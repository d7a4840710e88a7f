"""Local maximum-entropy (LME) shape functions on planar node sets.

At a query point x the nodal weights p_a maximize the information entropy
of the weight distribution penalized by its width beta * sum_a p_a |x-x_a|^2,
subject to non-negativity, partition of unity and first-order consistency
(sum_a p_a x_a = x).  The constrained problem reduces to the smooth convex
dual

    minimize  F(lam) = log sum_a exp(-beta |x - x_a|^2 + lam . (x - x_a))

which is solved with a damped Newton iteration.  First and second spatial
derivatives of the converged shape functions follow in closed form from the
dual Hessian and its total derivative along x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial import QhullError

from .errors import MaxIterExceeded, NotInHull, SingularHessian

COND_LIMIT = 1e12
HULL_TOL = 1e-9          # boundary acceptance band, relative to the diameter
LINE_RANK_TOL = 1e-9     # affine-rank threshold, relative to the largest singular value
MAX_BACKTRACK = 30
_ANGLE_SLACK = 1e-7      # ambiguity band of the angular interior test, radians


@dataclass(frozen=True)
class LmeParams:
    """Solver parameters: locality weight and Newton termination."""

    beta: float
    tol_factor: float = 1e-6
    max_iter: int = 100

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0.0:
            raise ValueError("beta must be finite and non-negative")
        if not np.isfinite(self.tol_factor) or self.tol_factor <= 0.0:
            raise ValueError("tol_factor must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class NodeSet2D:
    """Immutable planar node set with cached diameter and affine rank."""

    nodes: np.ndarray
    _diameter: float = field(init=False, repr=False)
    _rank: int = field(init=False, repr=False)
    _mean: np.ndarray = field(init=False, repr=False)
    _axis: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        arr = np.array(self.nodes, dtype=float, copy=True, order="C")
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise ValueError("nodes must form an (N, 2) array with N >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("nodes must be finite")
        min_dist, diam = _spacing_and_diameter(arr)
        if arr.shape[0] > 1 and min_dist == 0.0:
            raise ValueError("node set contains coincident nodes")
        mean = arr.mean(axis=0)
        centered = arr - mean
        # affine rank of the stencil decides the regular 2D path versus the
        # 1D line path of solve_lme
        if arr.shape[0] == 1:
            rank, axis = 0, np.array([1.0, 0.0])
        else:
            _, sing, vt = np.linalg.svd(centered, full_matrices=False)
            if sing[0] == 0.0:
                rank, axis = 0, np.array([1.0, 0.0])
            elif len(sing) < 2 or sing[1] <= LINE_RANK_TOL * sing[0]:
                rank, axis = 1, vt[0]
            else:
                rank, axis = 2, vt[0]
        arr.setflags(write=False)
        object.__setattr__(self, "nodes", arr)
        object.__setattr__(self, "_diameter", diam)
        object.__setattr__(self, "_rank", rank)
        object.__setattr__(self, "_mean", mean)
        object.__setattr__(self, "_axis", axis)

    @property
    def count(self) -> int:
        return self.nodes.shape[0]

    @property
    def diameter(self) -> float:
        return self._diameter

    @property
    def affine_rank(self) -> int:
        return self._rank


@dataclass
class LmeSolution:
    """Converged multipliers, shape functions and solver diagnostics."""

    lambda_star: np.ndarray
    p: np.ndarray
    r: np.ndarray
    J: np.ndarray
    iterations: int
    converged: bool
    f_history: np.ndarray
    grad_p: np.ndarray | None = None
    hess_p: np.ndarray | None = None


def _spacing_and_diameter(arr):
    n = arr.shape[0]
    if n == 1:
        return np.inf, 0.0
    if n <= 64:
        diff = arr[:, None, :] - arr[None, :, :]
        d2 = np.einsum("abi,abi->ab", diff, diff)
        iu = np.triu_indices(n, k=1)
        pair = d2[iu]
        return float(np.sqrt(pair.min())), float(np.sqrt(pair.max()))
    tree = cKDTree(arr)
    dists, _ = tree.query(arr, k=2)
    min_dist = float(dists[:, 1].min())
    try:
        pts = arr[ConvexHull(arr).vertices]
    except QhullError:
        # collinear cloud: extent along the principal axis is the diameter
        centered = arr - arr.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        t = centered @ vt[0]
        return min_dist, float(t.max() - t.min())
    diff = pts[:, None, :] - pts[None, :, :]
    diam = float(np.sqrt(np.einsum("abi,abi->ab", diff, diff).max()))
    return min_dist, diam


def partition_terms(nodes: NodeSet2D, x, lam, beta: float):
    """Gaussian-tilted exponential terms Z_a and their sum Z.

    The exponents are shifted by their maximum before exponentiation and the
    shift is multiplied back afterwards; the shape functions are a ratio of
    these terms, so the shift cancels there and keeps the solve well defined
    even when beta |x - x_a|^2 exceeds the range of exp().
    """
    dx = np.asarray(x, dtype=float) - nodes.nodes
    e = dx @ np.asarray(lam, dtype=float) - beta * np.einsum("ai,ai->a", dx, dx)
    shift = float(e.max())
    w = np.exp(e - shift)
    scale = np.exp(shift)
    return w * scale, float(w.sum() * scale)


def _dual_state(dx, sq, lam, beta):
    """Shape functions, dual value, gradient and Hessian at a multiplier."""
    e = dx @ lam - beta * sq
    shift = e.max()
    w = np.exp(e - shift)
    s = w.sum()
    p = w / s
    value = float(np.log(s) + shift)
    r = p @ dx
    J = (dx.T * p) @ dx - np.outer(r, r)
    return p, value, r, J


def dual_gradient_hessian(nodes: NodeSet2D, x, lam, beta: float):
    """Gradient r and Hessian J of the dual, plus the shape functions."""
    dx = np.asarray(x, dtype=float) - nodes.nodes
    sq = np.einsum("ai,ai->a", dx, dx)
    p, _, r, J = _dual_state(dx, sq, np.asarray(lam, dtype=float), beta)
    return r, J, p


def _eig_bounds_2x2(J):
    half_tr = 0.5 * (J[0, 0] + J[1, 1])
    disc = np.sqrt(max(0.25 * (J[0, 0] - J[1, 1]) ** 2 + J[0, 1] * J[1, 0], 0.0))
    return half_tr - disc, half_tr + disc


def _regularize_2x2(J):
    """Return a solvable copy of J, Tikhonov-shifted once if ill-conditioned."""
    emin, emax = _eig_bounds_2x2(J)
    if emax <= 0.0:
        raise SingularHessian("dual Hessian has no positive spectrum")
    if emin > 0.0 and emax / emin <= COND_LIMIT:
        return J
    shifted = J + (1e-12 * 0.5 * (J[0, 0] + J[1, 1])) * np.eye(2)
    emin, emax = _eig_bounds_2x2(shifted)
    if emin <= 0.0 or emax / emin > COND_LIMIT:
        raise SingularHessian(
            f"dual Hessian condition number beyond {COND_LIMIT:g} after regularization"
        )
    return shifted


def _inverse_2x2(J):
    Jr = _regularize_2x2(J)
    det = Jr[0, 0] * Jr[1, 1] - Jr[0, 1] * Jr[1, 0]
    return np.array([[Jr[1, 1], -Jr[0, 1]], [-Jr[1, 0], Jr[0, 0]]]) / det


def _solve_2x2(J, rhs):
    return _inverse_2x2(J) @ rhs


def hull_classify(nodes: NodeSet2D, x) -> str:
    """Classify x against the hull: 'interior' or 'boundary' (or raise).

    Points farther than HULL_TOL * diameter outside the hull raise NotInHull.
    The common case (x strictly surrounded by nodes) is decided by an exact
    angular-gap test; ambiguous cases fall back to the hull inequalities.
    """
    arr = nodes.nodes
    x = np.asarray(x, dtype=float)
    diam = nodes.diameter
    tol = HULL_TOL * diam
    v = arr - x
    dist = np.sqrt(np.einsum("ai,ai->a", v, v))
    on_node = dist <= tol
    others = v[~on_node]
    if others.shape[0] >= 3:
        ang = np.sort(np.arctan2(others[:, 1], others[:, 0]))
        gaps = np.diff(ang, append=ang[0] + 2.0 * np.pi)
        widest = gaps.max()
        if widest < np.pi - _ANGLE_SLACK:
            return "interior"
        if widest > np.pi + _ANGLE_SLACK:
            if bool(on_node.any()):
                return "boundary"  # x sits on a node that is a hull vertex
            raise NotInHull("query point lies outside the convex hull")
    elif bool(on_node.any()):
        return "boundary"
    try:
        hull = ConvexHull(arr)
    except QhullError as exc:
        raise NotInHull(f"degenerate hull: {exc}") from exc
    excess = float((hull.equations[:, :2] @ x + hull.equations[:, 2]).max())
    if excess > tol:
        raise NotInHull("query point lies outside the convex hull")
    return "interior" if excess < -tol else "boundary"


def _solve_point(nodes, x, params):
    arr = nodes.nodes
    if float(np.linalg.norm(x - arr[0])) > 1e-12 * max(1.0, float(np.linalg.norm(arr[0]))):
        raise NotInHull("hull of a single node is that node")
    return LmeSolution(
        lambda_star=np.zeros(2),
        p=np.ones(1),
        r=np.zeros(2),
        J=np.zeros((2, 2)),
        iterations=0,
        converged=True,
        f_history=np.zeros(1),
    )


def _solve_on_line(nodes, x, params):
    """Solve the dual restricted to the 1D affine hull of a collinear set."""
    arr = nodes.nodes
    u = nodes._axis
    diam = nodes.diameter
    rel = x - nodes._mean
    t_query = float(rel @ u)
    perp = rel - t_query * u
    if float(np.linalg.norm(perp)) > HULL_TOL * diam:
        raise NotInHull("query point is off the line spanned by the nodes")
    t_nodes = (arr - nodes._mean) @ u
    if t_query < t_nodes.min() - HULL_TOL * diam or t_query > t_nodes.max() + HULL_TOL * diam:
        raise NotInHull("query point is outside the 1D hull segment")

    dx = x - arr
    sq = np.einsum("ai,ai->a", dx, dx)
    s = dx @ u                      # signed offsets along the line
    tol = params.tol_factor * diam

    def state(mu):
        e = mu * s - params.beta * sq
        shift = e.max()
        w = np.exp(e - shift)
        p = w / w.sum()
        value = float(np.log(w.sum()) + shift)
        r1 = float(p @ s)
        j1 = float(p @ (s * s) - r1 * r1)
        return p, value, r1, j1

    mu = 0.0
    p, value, r1, j1 = state(mu)
    history = [value]
    iterations = 0
    while abs(r1) > tol and iterations < params.max_iter:
        if j1 <= 0.0:
            raise SingularHessian("vanishing curvature of the 1D dual")
        step = -r1 / j1
        t = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACK):
            pc, vc, rc, jc = state(mu + t * step)
            if vc <= value:
                mu, p, value, r1, j1 = mu + t * step, pc, vc, rc, jc
                accepted = True
                break
            t *= 0.5
        iterations += 1
        if not accepted:
            break
        history.append(value)
    if abs(r1) > tol:
        raise MaxIterExceeded(f"1D Newton stalled at |r| = {abs(r1):.3e} (tol {tol:.3e})")
    for _ in range(3):
        if j1 <= 0.0:
            break
        pc, vc, rc, jc = state(mu - r1 / j1)
        if not abs(rc) < abs(r1):
            break
        mu, p, value, r1, j1 = mu - r1 / j1, pc, vc, rc, jc
    lam = mu * u
    r = p @ dx
    J = (dx.T * p) @ dx - np.outer(r, r)
    return LmeSolution(
        lambda_star=lam,
        p=p,
        r=r,
        J=J,
        iterations=iterations,
        converged=True,
        f_history=np.asarray(history),
    )


def solve_lme(nodes: NodeSet2D, x, params: LmeParams) -> LmeSolution:
    """Newton solution of the LME dual at a query point inside the hull.

    Starts from lam = 0, halves the Newton step while the dual value fails
    to decrease, and stops once |r| <= tol_factor * diameter.  A few plain
    Newton polish steps follow: near the optimum the iteration is
    quadratically convergent, so this drives the residual to machine
    precision and tightens the consistency sums far beyond the termination
    threshold (each step kept only if it reduces |r|).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ValueError("query point must be a 2-vector")
    if nodes.affine_rank == 0:
        return _solve_point(nodes, x, params)
    if nodes.affine_rank == 1:
        return _solve_on_line(nodes, x, params)
    hull_classify(nodes, x)

    dx = x - nodes.nodes
    sq = np.einsum("ai,ai->a", dx, dx)
    tol = params.tol_factor * nodes.diameter
    lam = np.zeros(2)
    p, value, r, J = _dual_state(dx, sq, lam, params.beta)
    history = [value]
    iterations = 0
    while float(np.linalg.norm(r)) > tol and iterations < params.max_iter:
        step = -_solve_2x2(J, r)
        t = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACK):
            cand = lam + t * step
            pc, vc, rc, Jc = _dual_state(dx, sq, cand, params.beta)
            if vc <= value:
                lam, p, value, r, J = cand, pc, vc, rc, Jc
                accepted = True
                break
            t *= 0.5
        iterations += 1
        if not accepted:
            break
        history.append(value)
    if float(np.linalg.norm(r)) > tol:
        raise MaxIterExceeded(
            f"Newton stalled at |r| = {float(np.linalg.norm(r)):.3e} "
            f"after {iterations} iterations (tol {tol:.3e})"
        )
    try:
        for _ in range(3):
            cand = lam - _solve_2x2(J, r)
            pc, vc, rc, Jc = _dual_state(dx, sq, cand, params.beta)
            if not float(np.linalg.norm(rc)) < float(np.linalg.norm(r)):
                break
            lam, p, value, r, J = cand, pc, vc, rc, Jc
    except SingularHessian:
        pass
    return LmeSolution(
        lambda_star=lam,
        p=p,
        r=r,
        J=J,
        iterations=iterations,
        converged=True,
        f_history=np.asarray(history),
    )


def shape_gradients(sol: LmeSolution, nodes: NodeSet2D, x) -> np.ndarray:
    """Spatial gradients of the shape functions, -p_a J^{-1} (x - x_a)."""
    if not sol.converged:
        raise ValueError("solution has not converged")
    dx = np.asarray(x, dtype=float) - nodes.nodes
    Jinv = _inverse_2x2(sol.J)
    grad = -sol.p[:, None] * (dx @ Jinv)
    sol.grad_p = grad
    return grad


def shape_hessians(sol: LmeSolution, nodes: NodeSet2D, x) -> np.ndarray:
    """Spatial Hessians of the shape functions.

    Differentiates the gradient formula once more.  The total derivative of
    the dual Hessian along x carries a term in the shape-function gradients
    that must not be dropped; without it the Hessians fail the partition-of-
    unity and affine-reproduction identities.
    """
    if sol.grad_p is None:
        shape_gradients(sol, nodes, x)
    x = np.asarray(x, dtype=float)
    dx = x - nodes.nodes
    p, gp, r = sol.p, sol.grad_p, sol.r
    Jinv = _inverse_2x2(sol.J)

    dJ = np.einsum("aj,am,an->mnj", gp, dx, dx)
    for j in range(2):
        dJ[j, :, j] += r
        dJ[:, j, j] += r
    dr = np.einsum("aj,am->mj", gp, dx) + np.eye(2)  # ~0 at the optimum
    dJ -= np.einsum("mj,n->mnj", dr, r) + np.einsum("m,nj->mnj", r, dr)

    dJinv = -np.einsum("im,mnj,nk->ikj", Jinv, dJ, Jinv)
    w = dx @ Jinv
    hess = (
        -np.einsum("aj,ai->aij", gp, w)
        - np.einsum("a,ij->aij", p, Jinv)
        - np.einsum("a,ikj,ak->aij", p, dJinv, dx)
    )
    hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    sol.hess_p = hess
    return hess


def solve_with_derivatives(nodes: NodeSet2D, x, params: LmeParams) -> LmeSolution:
    """Solve and fill both derivative fields in one call."""
    sol = solve_lme(nodes, x, params)
    shape_gradients(sol, nodes, x)
    shape_hessians(sol, nodes, x)
    return sol
