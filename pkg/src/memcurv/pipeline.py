"""Per-node LME curvature estimation over meshes and point surfaces.

Each node is regularized on its own stencil: the LME problem is solved at
the stencil center with the locality parameter rescaled by the squared
stencil diameter, the height function's gradient and Hessian are assembled
from the shape-function derivatives, and the Monge-chart eigenproblem
yields the principal curvatures.  Failures are per-node: a bad stencil is
reported and excluded from the statistics instead of aborting the run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MaxIterExceeded,
    MemcurvError,
    MismatchedNodes,
    NotInHull,
    SingularHessian,
)
from .lme import LmeParams, NodeSet2D, solve_lme, solve_with_derivatives
from .mesh import LocalNeighborhood, PointSurface, TriMesh, knn_neighborhood
from .monge import CurvatureEstimate, MongeJet2, fundamental_forms, principal_curvatures

_ORIGIN = np.zeros(2)
_NODE_ERRORS = (NotInHull, SingularHessian, MaxIterExceeded)


@dataclass(frozen=True)
class PipelineConfig:
    """Estimation parameters: locality, stencil size and evaluation set."""

    beta_bar: float = 100.0
    m: int = 10
    tol_factor: float = 1e-6
    max_iter: int = 100
    domain: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if not np.isfinite(self.beta_bar) or self.beta_bar < 0.0:
            raise ValueError("beta_bar must be finite and non-negative")
        if int(self.m) < 5:
            raise ValueError("m must be at least 5")
        if self.tol_factor <= 0.0 or int(self.max_iter) < 1:
            raise ValueError("invalid solver settings")


def effective_beta(neigh: LocalNeighborhood, beta_bar: float) -> float:
    """Locality parameter rescaled by the squared stencil diameter."""
    if neigh.planar.shape[0] < 2:
        raise ValueError("neighborhood needs at least two nodes")
    return beta_bar / neigh.diameter**2


def estimate_node_curvature(neigh: LocalNeighborhood, config: PipelineConfig):
    """Curvature estimate at the stencil center, plus Newton iterations used."""
    nodes = NodeSet2D(neigh.planar)
    params = LmeParams(
        beta=effective_beta(neigh, config.beta_bar),
        tol_factor=config.tol_factor,
        max_iter=config.max_iter,
    )
    sol = solve_with_derivatives(nodes, _ORIGIN, params)
    z = neigh.heights
    jet = MongeJet2(
        z=float(z @ sol.p),
        grad_z=z @ sol.grad_p,
        hess_z=np.einsum("a,aij->ij", z, sol.hess_p),
    )
    return principal_curvatures(*fundamental_forms(jet)), sol.iterations


@dataclass
class CurvatureField:
    """Per-node estimates over an evaluation set with aggregate statistics."""

    indices: np.ndarray
    positions: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    H: np.ndarray
    K: np.ndarray
    dir1: np.ndarray
    dir2: np.ndarray
    iterations: np.ndarray
    status: list[str]
    area: float | None
    closed: bool
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.summary:
            self.summary = self.recompute_summary()

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == "ok" for s in self.status])

    def recompute_summary(self) -> dict:
        ok = self.ok
        h = self.H[ok]
        k = self.K[ok]
        n = int(ok.sum())
        summary = {
            "n_evaluated": n,
            "n_failed": int(len(self.status) - n),
            "failed_indices": [int(i) for i, s in zip(self.indices, self.status) if s != "ok"],
            "H_mean": _mean(h),
            "H_sd": _sample_sd(h),
            "K_mean": _mean(k),
            "K_sd": _sample_sd(k),
            "area": self.area,
            "K_tot": None,
        }
        if self.closed and self.area is not None and n > 0:
            summary["K_tot"] = summary["K_mean"] * self.area
        return summary


def _mean(values):
    return float(np.sum(values) / values.size) if values.size else float("nan")


def _sample_sd(values):
    if values.size < 2:
        return float("nan")
    mean = np.sum(values) / values.size
    return float(np.sqrt(np.sum((values - mean) ** 2) / (values.size - 1)))


def _evaluation_indices(obj, config):
    if isinstance(obj, TriMesh):
        if obj.closed:
            return np.arange(obj.vertex_count)
        # curvature is ill-defined on the rim of an open membrane: stencils
        # there are one-sided, so the rim is excluded from the evaluation set
        return np.flatnonzero(~obj.boundary_vertex_mask)
    if isinstance(obj, PointSurface):
        if config.domain is None:
            return np.arange(obj.count)
        x1_lo, x1_hi, x2_lo, x2_hi = config.domain
        p = obj.points
        inside = (
            (p[:, 0] >= x1_lo) & (p[:, 0] <= x1_hi) & (p[:, 1] >= x2_lo) & (p[:, 1] <= x2_hi)
        )
        return np.flatnonzero(inside)
    raise TypeError(f"unsupported input type {type(obj).__name__}")


def run_field(obj, config: PipelineConfig, threads: int = 1) -> CurvatureField:
    """Estimate curvature at every node of the evaluation set.

    Nodes are independent; results are assembled in node-index order
    regardless of worker count.  Raises only when more than half of the
    nodes fail.
    """
    indices = _evaluation_indices(obj, config)
    if indices.size == 0:
        raise MemcurvError("evaluation set is empty")

    def one(v):
        try:
            neigh = knn_neighborhood(obj, int(v), config.m)
            est, iters = estimate_node_curvature(neigh, config)
            return est, iters, "ok"
        except _NODE_ERRORS as exc:
            return None, -1, type(exc).__name__

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, indices))
    else:
        results = [one(v) for v in indices]

    n = indices.size
    k1 = np.full(n, np.nan)
    k2 = np.full(n, np.nan)
    h = np.full(n, np.nan)
    k = np.full(n, np.nan)
    dir1 = np.full((n, 2), np.nan)
    dir2 = np.full((n, 2), np.nan)
    iters = np.full(n, -1, dtype=np.int64)
    status = []
    for row, (est, it, st) in enumerate(results):
        status.append(st)
        iters[row] = it
        if est is not None:
            k1[row], k2[row], h[row], k[row] = est.k1, est.k2, est.H, est.K
            dir1[row], dir2[row] = est.dir1, est.dir2

    n_failed = sum(1 for s in status if s != "ok")
    if 2 * n_failed > n:
        raise MemcurvError(f"{n_failed} of {n} nodes failed curvature estimation")

    if isinstance(obj, TriMesh):
        positions = obj.vertices[indices]
        area: float | None = obj.area
        closed = obj.closed
    else:
        positions = obj.points[indices]
        area = None
        closed = False
    return CurvatureField(
        indices=indices,
        positions=positions,
        k1=k1,
        k2=k2,
        H=h,
        K=k,
        dir1=dir1,
        dir2=dir2,
        iterations=iters,
        status=status,
        area=area,
        closed=closed,
    )


def rmsd_vs_reference(field: CurvatureField, reference_h, reference_k, reference_indices=None):
    """Root mean square deviations of H and K against per-node references.

    References must cover exactly the evaluated node set (pass
    reference_indices to assert alignment); failed nodes are excluded.
    """
    reference_h = np.asarray(reference_h, dtype=float)
    reference_k = np.asarray(reference_k, dtype=float)
    if reference_indices is not None and not np.array_equal(
        np.asarray(reference_indices), field.indices
    ):
        raise MismatchedNodes("reference indices do not match the evaluated node set")
    if reference_h.shape != field.H.shape or reference_k.shape != field.K.shape:
        raise MismatchedNodes("reference arrays do not match the evaluated node set")
    ok = field.ok
    if not ok.any():
        raise MismatchedNodes("no successfully evaluated nodes")
    if not (np.all(np.isfinite(reference_h[ok])) and np.all(np.isfinite(reference_k[ok]))):
        raise MismatchedNodes("reference values are not defined on all evaluated nodes")
    rmsd_h = float(np.sqrt(np.mean((field.H[ok] - reference_h[ok]) ** 2)))
    rmsd_k = float(np.sqrt(np.mean((field.K[ok] - reference_k[ok]) ** 2)))
    return rmsd_h, rmsd_k


def sample_surface(surface: PointSurface, beta: float, grid_points,
                   tol_factor: float = 1e-6, max_iter: int = 100):
    """LME heights z(x) = sum_a z_a p_a(x) over a planar grid.

    The solve runs over the full node set at each grid point; points outside
    the convex hull (or otherwise unsolvable) are skipped and reported via
    NaN entries in the returned array.
    """
    grid = np.atleast_2d(np.asarray(grid_points, dtype=float))
    if grid.ndim != 2 or grid.shape[1] != 2:
        raise ValueError("grid_points must form a (G, 2) array")
    nodes = NodeSet2D(surface.points[:, :2])
    heights = surface.points[:, 2]
    params = LmeParams(beta=beta, tol_factor=tol_factor, max_iter=max_iter)
    out = np.full(grid.shape[0], np.nan)
    skipped = []
    for g, x in enumerate(grid):
        try:
            sol = solve_lme(nodes, x, params)
        except _NODE_ERRORS:
            skipped.append(g)
            continue
        out[g] = float(heights @ sol.p)
    return out, skipped
