"""Triangulated membrane networks, local frames, stencils and benchmark geometry.

TriMesh is immutable after construction: adjacency, normals and dual areas
are built once and all queries are read-only, so meshes can be shared freely
across concurrent curvature solves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateFrame,
    EmptyWindow,
    InsufficientNodes,
    NonManifoldEdge,
    OrientationError,
    ParseError,
    ZeroNormal,
)
from .monge import sinusoid_height

POLE_TOL = 1e-6  # radians off the polar axis below which the parallel is undefined


class TriMesh:
    """Indexed triangle mesh with consistent orientation and cached adjacency."""

    def __init__(self, vertices, faces, repair_orientation: bool = False):
        vertices = np.array(vertices, dtype=float, copy=True, order="C")
        faces = np.array(faces, dtype=np.int64, copy=True, order="C")
        if vertices.ndim != 2 or vertices.shape[1] != 3 or vertices.shape[0] < 3:
            raise ValueError("vertices must form an (N, 3) array with N >= 3")
        if not np.all(np.isfinite(vertices)):
            raise ValueError("vertices must be finite")
        if faces.ndim != 2 or faces.shape[1] != 3 or faces.shape[0] < 1:
            raise ValueError("faces must form an (M, 3) array with M >= 1")
        n = vertices.shape[0]
        if faces.min() < 0 or faces.max() >= n:
            raise ValueError("face indices out of range")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) or np.any(
            faces[:, 0] == faces[:, 2]
        ):
            raise ValueError("faces must reference three distinct vertices")

        edge_faces = _undirected_edge_map(faces)
        for (u, v), incident in edge_faces.items():
            if len(incident) > 2:
                raise NonManifoldEdge(f"edge ({u}, {v}) is shared by {len(incident)} faces")

        if repair_orientation:
            faces = _repair_orientation(vertices, faces, edge_faces)
            edge_faces = _undirected_edge_map(faces)
        else:
            _check_orientation(faces, edge_faces)

        cross = np.cross(
            vertices[faces[:, 1]] - vertices[faces[:, 0]],
            vertices[faces[:, 2]] - vertices[faces[:, 0]],
        )
        norms = np.linalg.norm(cross, axis=1)
        edges_len = np.stack(
            [
                np.linalg.norm(vertices[faces[:, 1]] - vertices[faces[:, 0]], axis=1),
                np.linalg.norm(vertices[faces[:, 2]] - vertices[faces[:, 1]], axis=1),
                np.linalg.norm(vertices[faces[:, 0]] - vertices[faces[:, 2]], axis=1),
            ],
            axis=1,
        )
        longest = edges_len.max(axis=1)
        if np.any(norms <= 1e-14 * longest**2):
            raise ValueError("mesh contains degenerate (zero-area) faces")

        vertices.setflags(write=False)
        faces.setflags(write=False)
        self.vertices = vertices
        self.faces = faces
        self.face_normals = cross / norms[:, None]
        self.face_areas = 0.5 * norms
        self.face_normals.setflags(write=False)
        self.face_areas.setflags(write=False)

        counts = np.array([len(v) for v in edge_faces.values()], dtype=int)
        self.edge_count = len(edge_faces)
        self.closed = bool(np.all(counts == 2)) if len(counts) else False
        self.euler_characteristic = n - self.edge_count + faces.shape[0]
        interior = [pair for pair in edge_faces.values() if len(pair) == 2]
        self.interior_edge_faces = (
            np.array([[f for f, _ in pair] for pair in interior], dtype=np.int64)
            if interior
            else np.zeros((0, 2), dtype=np.int64)
        )
        self.interior_edge_faces.setflags(write=False)

        boundary = np.zeros(n, dtype=bool)
        for (u, v), incident in edge_faces.items():
            if len(incident) == 1:
                boundary[u] = True
                boundary[v] = True
        self.boundary_vertex_mask = boundary
        self.boundary_vertex_mask.setflags(write=False)

        vertex_faces = [[] for _ in range(n)]
        for fi, (i, j, k) in enumerate(faces):
            vertex_faces[i].append(fi)
            vertex_faces[j].append(fi)
            vertex_faces[k].append(fi)
        self.vertex_faces = [np.array(lst, dtype=np.int64) for lst in vertex_faces]

        neighbors = [set() for _ in range(n)]
        for u, v in edge_faces:
            neighbors[u].add(v)
            neighbors[v].add(u)
        self.vertex_neighbors = [np.array(sorted(s), dtype=np.int64) for s in neighbors]

        dual = np.zeros(n)
        np.add.at(dual, faces[:, 0], self.face_areas / 3.0)
        np.add.at(dual, faces[:, 1], self.face_areas / 3.0)
        np.add.at(dual, faces[:, 2], self.face_areas / 3.0)
        self.dual_areas = dual
        self.dual_areas.setflags(write=False)

        self.area = float(self.face_areas.sum())
        centroids = vertices[faces].mean(axis=1)
        self.area_centroid = (centroids * self.face_areas[:, None]).sum(axis=0) / self.area
        self._kdtree = None

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    def signed_volume(self) -> float:
        v = self.vertices
        f = self.faces
        return float(np.einsum("ij,ij->", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]]))) / 6.0

    def kdtree(self) -> cKDTree:
        if self._kdtree is None:
            self._kdtree = cKDTree(self.vertices)
        return self._kdtree


def _undirected_edge_map(faces):
    """Map sorted edge -> list of (face index, runs-low-to-high flag)."""
    edge_faces: dict[tuple[int, int], list[tuple[int, bool]]] = {}
    for fi, (i, j, k) in enumerate(faces):
        for u, v in ((i, j), (j, k), (k, i)):
            key = (u, v) if u < v else (v, u)
            edge_faces.setdefault(key, []).append((fi, u < v))
    return edge_faces


def _check_orientation(faces, edge_faces):
    for (u, v), incident in edge_faces.items():
        if len(incident) == 2 and incident[0][1] == incident[1][1]:
            raise OrientationError(
                f"edge ({u}, {v}) traversed in the same direction by faces "
                f"{incident[0][0]} and {incident[1][0]}"
            )


def _repair_orientation(vertices, faces, edge_faces):
    """Make orientations consistent by breadth-first flipping, outward when closed."""
    m = faces.shape[0]
    adjacency: list[list[tuple[int, bool]]] = [[] for _ in range(m)]
    for incident in edge_faces.values():
        if len(incident) == 2:
            (fa, da), (fb, db) = incident
            consistent = da != db  # opposite traversal = already consistent
            adjacency[fa].append((fb, consistent))
            adjacency[fb].append((fa, consistent))

    flip = np.zeros(m, dtype=bool)
    seen = np.zeros(m, dtype=bool)
    component = np.full(m, -1, dtype=np.int64)
    n_comp = 0
    for seed in range(m):
        if seen[seed]:
            continue
        stack = [seed]
        seen[seed] = True
        component[seed] = n_comp
        while stack:
            f = stack.pop()
            for g, consistent in adjacency[f]:
                want = flip[f] if consistent else not flip[f]
                if not seen[g]:
                    seen[g] = True
                    flip[g] = want
                    component[g] = n_comp
                    stack.append(g)
                elif flip[g] != want:
                    raise OrientationError("mesh is not orientable")
        n_comp += 1

    fixed = faces.copy()
    fixed[flip] = fixed[flip][:, [0, 2, 1]]

    # orient closed components outward (positive enclosed volume)
    comp_edge_closed = np.ones(n_comp, dtype=bool)
    for incident in edge_faces.values():
        if len(incident) == 1:
            comp_edge_closed[component[incident[0][0]]] = False
    vol = np.einsum(
        "ij,ij->i", vertices[fixed[:, 0]], np.cross(vertices[fixed[:, 1]], vertices[fixed[:, 2]])
    ) / 6.0
    for c in range(n_comp):
        mask = component == c
        if comp_edge_closed[c] and vol[mask].sum() < 0.0:
            fixed[mask] = fixed[mask][:, [0, 2, 1]]
    return fixed


@dataclass(frozen=True)
class LocalFrame:
    """Right-handed orthonormal triad anchored at a vertex."""

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        for name in ("origin", "e1", "e2", "n"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        gram = np.abs(
            np.array(
                [
                    self.e1 @ self.e1 - 1.0,
                    self.e2 @ self.e2 - 1.0,
                    self.n @ self.n - 1.0,
                    self.e1 @ self.e2,
                    self.e1 @ self.n,
                    self.e2 @ self.n,
                ]
            )
        )
        if gram.max() > 1e-12:
            raise ValueError("frame is not orthonormal to 1e-12")
        if np.linalg.norm(np.cross(self.e1, self.e2) - self.n) > 1e-12:
            raise ValueError("frame is not right-handed")

    def to_local(self, points):
        rel = np.atleast_2d(np.asarray(points, dtype=float)) - self.origin
        return rel @ np.column_stack([self.e1, self.e2, self.n])


@dataclass(frozen=True)
class LocalNeighborhood:
    """Query vertex plus its stencil, expressed in the local tangent frame.

    Row 0 is the center itself at the planar origin; remaining rows are the
    m nearest nodes ordered by (distance, index).
    """

    center_index: int
    indices: np.ndarray
    planar: np.ndarray
    heights: np.ndarray
    frame: LocalFrame
    _diameter: float = field(init=False, repr=False)

    def __post_init__(self):
        planar = np.asarray(self.planar, dtype=float)
        diff = planar[:, None, :] - planar[None, :, :]
        diam = float(np.sqrt(np.einsum("abi,abi->ab", diff, diff).max()))
        object.__setattr__(self, "_diameter", diam)

    @property
    def diameter(self) -> float:
        """Largest pairwise planar distance within the stencil."""
        return self._diameter


@dataclass(frozen=True)
class PointSurface:
    """Scattered height samples (x1, x2, z) over a single global chart."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True, order="C")
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("points must form an (N, 3) array with N >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if pts.shape[0] > 1:
            d, _ = cKDTree(pts[:, :2]).query(pts[:, :2], k=2)
            if d[:, 1].min() == 0.0:
                raise ValueError("point surface has coincident planar positions")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]


def vertex_normal(mesh: TriMesh, v: int) -> np.ndarray:
    """Area-weighted unit normal at a vertex."""
    incident = mesh.vertex_faces[v]
    if incident.size == 0:
        raise ZeroNormal(f"vertex {v} has no incident faces")
    weighted = (mesh.face_normals[incident] * mesh.face_areas[incident, None]).sum(axis=0)
    norm = float(np.linalg.norm(weighted))
    if norm <= 1e-12 * float(mesh.face_areas[incident].sum()):
        raise ZeroNormal(f"area-weighted normal vanishes at vertex {v}")
    return weighted / norm


def local_frame(mesh: TriMesh, v: int, reference_center=None) -> LocalFrame:
    """Tangent frame at a vertex, e1 along the best-aligned local parallel.

    The parallel is the east direction of the sphere centered at
    reference_center (mesh area centroid by default) through the vertex,
    with the global z axis as the polar axis; e1 is the tangent projection
    of the incident edge deviating least from it.  At the poles the parallel
    is undefined and e1 falls back to the projection of the global x axis
    (then y).
    """
    n = vertex_normal(mesh, v)
    origin = mesh.vertices[v]
    center = mesh.area_centroid if reference_center is None else np.asarray(reference_center, float)

    radial = origin - center
    radial_norm = float(np.linalg.norm(radial))
    parallel = None
    if radial_norm > 0.0:
        sin_colat = float(np.hypot(radial[0], radial[1])) / radial_norm
        if sin_colat >= POLE_TOL:
            east = np.cross(np.array([0.0, 0.0, 1.0]), radial)
            parallel = east / np.linalg.norm(east)

    if parallel is not None:
        best = None
        best_dot = -np.inf
        for u in mesh.vertex_neighbors[v]:
            d = mesh.vertices[u] - origin
            d = d / np.linalg.norm(d)
            t = d - (d @ n) * n
            if float(np.linalg.norm(t)) <= 1e-12:
                continue
            dot = float(d @ parallel)
            if dot > best_dot:
                best_dot = dot
                best = t
        if best is None:
            raise DegenerateFrame(f"all edges at vertex {v} are parallel to the normal")
        e1 = best / np.linalg.norm(best)
    else:
        e1 = None
        for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
            t = axis - (axis @ n) * n
            if float(np.linalg.norm(t)) > 1e-12:
                e1 = t / np.linalg.norm(t)
                break
        if e1 is None:
            raise DegenerateFrame(f"no axis projects onto the tangent plane at vertex {v}")

    e2 = np.cross(n, e1)
    e2 /= np.linalg.norm(e2)
    e1 = np.cross(e2, n)
    e1 /= np.linalg.norm(e1)
    return LocalFrame(origin=origin, e1=e1, e2=e2, n=np.cross(e1, e2))


def _nearest_indices(tree, coords, center_idx, m):
    """Indices of the m nearest points to coords[center_idx], ties by index."""
    n = coords.shape[0]
    center = coords[center_idx]
    k = min(n, m + 2)
    dist, idx = tree.query(center, k=k)
    dist = np.atleast_1d(dist)
    idx = np.atleast_1d(idx)
    ambiguous = k < n and k >= m + 2 and dist[m + 1] <= dist[m]
    if not ambiguous and k >= m + 1:
        cand = idx
    else:
        radius = dist[min(m, len(dist) - 1)] * (1.0 + 1e-12)
        cand = np.asarray(tree.query_ball_point(center, r=radius), dtype=np.int64)
    diff = coords[cand] - center
    d2 = np.einsum("ai,ai->a", diff, diff)
    order = np.lexsort((cand, d2))
    ranked = cand[order]
    ranked = ranked[ranked != center_idx][:m]
    return ranked


def knn_neighborhood(obj, v: int, m: int) -> LocalNeighborhood:
    """Center vertex plus its m nearest nodes, projected into the local frame.

    Membrane meshes use the 3D Euclidean metric and the vertex tangent
    frame; point surfaces live in one global chart, so their stencils are
    selected by planar distance and keep the chart axes.
    """
    if isinstance(obj, TriMesh):
        n = obj.vertex_count
        if m + 1 > n:
            raise InsufficientNodes(f"need m + 1 = {m + 1} nodes, mesh has {n}")
        neighbors = _nearest_indices(obj.kdtree(), obj.vertices, v, m)
        frame = local_frame(obj, v)
        indices = np.concatenate([[v], neighbors])
        local = frame.to_local(obj.vertices[indices])
        return LocalNeighborhood(
            center_index=v,
            indices=indices,
            planar=local[:, :2],
            heights=local[:, 2],
            frame=frame,
        )
    if isinstance(obj, PointSurface):
        n = obj.count
        if m + 1 > n:
            raise InsufficientNodes(f"need m + 1 = {m + 1} nodes, surface has {n}")
        if not hasattr(obj, "_tree"):
            object.__setattr__(obj, "_tree", cKDTree(obj.points[:, :2]))
        neighbors = _nearest_indices(obj._tree, obj.points[:, :2], v, m)
        indices = np.concatenate([[v], neighbors])
        center = obj.points[v]
        frame = LocalFrame(
            origin=center,
            e1=np.array([1.0, 0.0, 0.0]),
            e2=np.array([0.0, 1.0, 0.0]),
            n=np.array([0.0, 0.0, 1.0]),
        )
        rel = obj.points[indices] - center
        return LocalNeighborhood(
            center_index=v,
            indices=indices,
            planar=rel[:, :2],
            heights=rel[:, 2],
            frame=frame,
        )
    raise TypeError(f"unsupported input type {type(obj).__name__}")


def dual_areas(mesh: TriMesh) -> np.ndarray:
    """Barycentric dual-cell areas: one third of each incident face area."""
    return mesh.dual_areas


# ---------------------------------------------------------------------------
# synthetic benchmark geometry
# ---------------------------------------------------------------------------

_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICOSA_VERTICES = np.array(
    [
        [-1.0, _PHI, 0.0], [1.0, _PHI, 0.0], [-1.0, -_PHI, 0.0], [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI], [0.0, 1.0, _PHI], [0.0, -1.0, -_PHI], [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0], [_PHI, 0.0, 1.0], [-_PHI, 0.0, -1.0], [-_PHI, 0.0, 1.0],
    ]
)
_ICOSA_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def generate_geodesic_sphere(frequency: int, radius: float) -> TriMesh:
    """Class-I icosahedral geodesic sphere with 10 f^2 + 2 vertices.

    Each icosahedron face is split into f^2 triangles on a barycentric grid
    and the points are projected to the requested radius; the twelve original
    vertices keep fivefold coordination, all others are sixfold.
    """
    f = int(frequency)
    if f < 1:
        raise ValueError("frequency must be at least 1")
    if radius <= 0.0:
        raise ValueError("radius must be positive")

    base = _ICOSA_VERTICES / np.linalg.norm(_ICOSA_VERTICES, axis=1, keepdims=True)
    vert_ids: dict[tuple, int] = {}
    vertices: list[np.ndarray] = []

    def unit_id(point):
        p = point / np.linalg.norm(point)
        key = tuple(np.round(p, 6))
        idx = vert_ids.get(key)
        if idx is None:
            idx = len(vertices)
            vert_ids[key] = idx
            vertices.append(p)
        return idx

    faces = []
    for a, b, c in _ICOSA_FACES:
        v0, v1, v2 = base[a], base[b], base[c]
        grid = {}
        for i in range(f + 1):
            for j in range(f + 1 - i):
                pt = (v0 * (f - i - j) + v1 * i + v2 * j) / f
                grid[(i, j)] = unit_id(pt)
        for i in range(f):
            for j in range(f - i):
                faces.append([grid[(i, j)], grid[(i + 1, j)], grid[(i, j + 1)]])
                if i + j < f - 1:
                    faces.append([grid[(i + 1, j)], grid[(i + 1, j + 1)], grid[(i, j + 1)]])

    points = np.asarray(vertices) * radius
    return TriMesh(points, np.asarray(faces, dtype=np.int64), repair_orientation=True)


def generate_cylinder(radius: float, circumference_count: int, row_count: int) -> TriMesh:
    """Open cylinder triangulated as a near-equilateral wrapped lattice.

    Rows are spaced sqrt(3)/2 times the circumferential step and alternate
    rows are offset by half a step, so the triangles approach equilateral as
    the circumference count grows.
    """
    nc = int(circumference_count)
    nr = int(row_count)
    if nc < 3 or nr < 1:
        raise ValueError("need at least 3 columns and 1 row")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    step = 2.0 * np.pi * radius / nc
    dz = step * np.sqrt(3.0) / 2.0

    verts = []
    for j in range(nr + 1):
        offset = 0.5 * (j % 2)
        for i in range(nc):
            theta = 2.0 * np.pi * (i + offset) / nc
            verts.append([radius * np.cos(theta), radius * np.sin(theta), j * dz])

    def vid(i, j):
        return j * nc + (i % nc)

    faces = []
    for j in range(nr):
        for i in range(nc):
            if j % 2 == 0:
                faces.append([vid(i, j), vid(i + 1, j), vid(i, j + 1)])
                faces.append([vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
            else:
                faces.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
                faces.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
    mesh = TriMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64), repair_orientation=True)
    # outward = away from the axis
    probe = mesh.faces[0]
    center = mesh.vertices[probe].mean(axis=0)
    outward = np.array([center[0], center[1], 0.0])
    if float(mesh.face_normals[0] @ outward) < 0.0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, [0, 2, 1]])
    return mesh


def generate_sinusoid_grid(h: float, bounds=(0.0, 3.0, 0.0, 3.0)) -> PointSurface:
    """Uniform grid sampling of z = sin(x1^2 + x2) with spacing ~h per axis."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    x1_lo, x1_hi, x2_lo, x2_hi = map(float, bounds)
    n1 = int(round((x1_hi - x1_lo) / h)) + 1
    n2 = int(round((x2_hi - x2_lo) / h)) + 1
    if n1 < 2 or n2 < 2:
        raise ValueError("h too large for the requested bounds")
    xs = np.linspace(x1_lo, x1_hi, n1)
    ys = np.linspace(x2_lo, x2_hi, n2)
    g1, g2 = np.meshgrid(xs, ys, indexing="ij")
    planar = np.column_stack([g1.ravel(), g2.ravel()])
    return PointSurface(np.column_stack([planar, sinusoid_height(planar)]))


def generate_random_sinusoid(count: int, seed: int, bounds=(0.0, np.pi, 0.0, np.pi)) -> PointSurface:
    """Seeded scattered sampling of z = sin(x1^2 + x2)."""
    if count < 3:
        raise ValueError("need at least 3 points")
    rng = np.random.default_rng(seed)
    x1_lo, x1_hi, x2_lo, x2_hi = map(float, bounds)
    planar = np.column_stack(
        [rng.uniform(x1_lo, x1_hi, count), rng.uniform(x2_lo, x2_hi, count)]
    )
    return PointSurface(np.column_stack([planar, sinusoid_height(planar)]))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Fixed triangulation plus time-stamped vertex positions."""

    faces: np.ndarray
    times: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=np.int64)
        times = np.asarray(self.times, dtype=float)
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 3 or frames.shape[2] != 3 or frames.shape[0] < 1:
            raise ValueError("frames must form a (T, N, 3) array")
        if times.shape != (frames.shape[0],):
            raise ValueError("one timestamp per frame required")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        if faces.min() < 0 or faces.max() >= frames.shape[1]:
            raise ValueError("face indices out of range for the frame vertex count")
        for name, arr in (("faces", faces), ("times", times), ("frames", frames)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


def rolling_average(traj: Trajectory, t: float) -> TriMesh:
    """Cumulative mean configuration of all frames with timestamp <= t."""
    mask = traj.times <= float(t)
    if not mask.any():
        raise EmptyWindow(f"no frames at or before t = {t}")
    return TriMesh(traj.frames[mask].mean(axis=0), traj.faces)


# ---------------------------------------------------------------------------
# file I/O: OFF / OBJ meshes, xyz point files, trajectory manifests
# ---------------------------------------------------------------------------


def _tokens(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line.split()


def _parse_off(path: Path):
    rows = list(_tokens(path))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if header[0].upper() == "OFF":
        rows = rows[1:] if len(header) == 1 else [header[1:]] + rows[1:]
    if not rows or len(rows[0]) < 3:
        raise ParseError(f"{path}: missing OFF counts line")
    try:
        nv, nf = int(rows[0][0]), int(rows[0][1])
        body = rows[1:]
        verts = np.array([[float(t) for t in body[i][:3]] for i in range(nv)])
        faces = []
        for i in range(nv, nv + nf):
            row = body[i]
            if int(row[0]) != 3:
                raise ParseError(f"{path}: only triangular faces are supported")
            faces.append([int(row[1]), int(row[2]), int(row[3])])
    except ParseError:
        raise
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed OFF data ({exc})") from exc
    return verts, np.array(faces, dtype=np.int64)


def _parse_obj(path: Path):
    verts, faces = [], []
    for row in _tokens(path):
        if row[0] == "v":
            try:
                verts.append([float(row[1]), float(row[2]), float(row[3])])
            except (IndexError, ValueError) as exc:
                raise ParseError(f"{path}: malformed vertex line") from exc
        elif row[0] == "f":
            refs = row[1:]
            if len(refs) != 3:
                raise ParseError(f"{path}: only triangular faces are supported")
            try:
                idx = [int(r.split("/")[0]) for r in refs]
            except ValueError as exc:
                raise ParseError(f"{path}: malformed face line") from exc
            if min(idx) < 1:
                raise ParseError(f"{path}: face indices must be positive")
            faces.append([i - 1 for i in idx])
    if not verts or not faces:
        raise ParseError(f"{path}: no usable vertex/face data")
    return np.asarray(verts, dtype=float), np.asarray(faces, dtype=np.int64)


def load_mesh(path) -> TriMesh:
    """Read an OFF or OBJ triangle mesh, repairing orientation when fixable."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".off":
        verts, faces = _parse_off(path)
    elif suffix == ".obj":
        verts, faces = _parse_obj(path)
    else:
        raise ParseError(f"{path}: unsupported mesh format '{suffix}'")
    try:
        return TriMesh(verts, faces, repair_orientation=True)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_off(path, mesh: TriMesh) -> None:
    lines = [
        "OFF",
        f"{mesh.vertex_count} {mesh.face_count} {mesh.edge_count}",
    ]
    lines += [" ".join(format(c, ".17g") for c in v) for v in mesh.vertices]
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def load_points(path) -> np.ndarray:
    """Read whitespace-separated 'x y z' rows."""
    path = Path(path)
    rows = []
    for row in _tokens(path):
        try:
            rows.append([float(row[0]), float(row[1]), float(row[2])])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"{path}: malformed coordinate line") from exc
    if not rows:
        raise ParseError(f"{path}: no coordinate data")
    return np.asarray(rows, dtype=float)


def write_points(path, points) -> None:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lines = [" ".join(format(c, ".17g") for c in row) for row in pts]
    Path(path).write_text("\n".join(lines) + "\n")


def _frame_positions(path: Path) -> np.ndarray:
    suffix = path.suffix.lower()
    if suffix == ".off":
        return _parse_off(path)[0]
    if suffix == ".obj":
        return _parse_obj(path)[0]
    return load_points(path)


def load_trajectory(path) -> Trajectory:
    """Read a trajectory manifest: topology file plus timestamped frame files.

    The manifest is JSON of the form
    {"topology": "mesh.off", "frames": [{"file": "f0.xyz", "t": 0.0}, ...]}
    with paths resolved relative to the manifest location.  Frame files are
    OFF/OBJ meshes or plain 'x y z' rows matching the topology vertex count.
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
        topology = spec["topology"]
        frame_entries = spec["frames"]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed trajectory manifest ({exc})") from exc
    if not frame_entries:
        raise ParseError(f"{path}: manifest lists no frames")

    base = path.parent
    topo_mesh = load_mesh(base / topology)
    times, frames = [], []
    for entry in frame_entries:
        try:
            frame_path = base / entry["file"]
            times.append(float(entry["t"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: malformed frame entry ({exc})") from exc
        pos = _frame_positions(frame_path)
        if pos.shape[0] != topo_mesh.vertex_count:
            raise ParseError(
                f"{frame_path}: {pos.shape[0]} vertices, topology has {topo_mesh.vertex_count}"
            )
        frames.append(pos)
    try:
        return Trajectory(
            faces=topo_mesh.faces, times=np.asarray(times), frames=np.asarray(frames)
        )
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
