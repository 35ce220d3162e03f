"""Triangle meshes in the conformal chart and free-boundary area minimization.

All geometry lives in the chart, where g = rho(|x|)^2 delta. Curved areas and
lengths are euclidean ones weighted by rho^2 and rho; angles are conformally
invariant and therefore euclidean.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import MeshError
from .radial import ConformalChart, RadialGeometry

SHAPES = ("flat-disk", "tilted-disk", "perturbed-disk", "annulus")
_EULER = {"disk": 1, "annulus": 0}


@dataclass
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    S: float
    topology: str = "disk"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=bool)

    def copy(self, vertices=None):
        v = self.vertices.copy() if vertices is None else vertices
        return TriMesh(v, self.triangles, self.boundary, self.S, self.topology)

    def edges(self):
        """Unique undirected edges and the number of triangles sharing each."""
        T = self.triangles
        e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def euler_characteristic(self):
        edges, _ = self.edges()
        return len(self.vertices) - len(edges) + len(self.triangles)

    def boundary_halfedges(self):
        """Directed boundary edges (i, j, k): i -> j as oriented in triangle (i, j, k)."""
        T = self.triangles
        he = np.concatenate([T[:, [0, 1, 2]], T[:, [1, 2, 0]], T[:, [2, 0, 1]]])
        key = np.sort(he[:, :2], axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return he[counts[inv.ravel()] == 1]

    def boundary_loops(self):
        """Boundary vertex loops, each ordered along the boundary orientation."""
        he = self.boundary_halfedges()
        nxt = {int(i): int(j) for i, j, _ in he}
        loops, seen = [], set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop, v = [], start
            while v not in seen:
                seen.add(v)
                loop.append(v)
                v = nxt[v]
            loops.append(np.array(loop))
        return loops

    def validate(self, tol=1e-10):
        v = self.vertices
        if np.any(np.abs(np.linalg.norm(v[self.boundary], axis=1) - self.S) > tol * max(1.0, self.S)):
            raise MeshError("boundary vertex off the sphere |x| = S")
        if np.min(triangle_areas(v, self.triangles)) < 1e-14:
            raise MeshError("degenerate triangle")
        _, counts = self.edges()
        if np.any(counts > 2):
            raise MeshError("non-manifold edge")
        chi = self.euler_characteristic()
        if self.topology in _EULER and chi != _EULER[self.topology]:
            raise MeshError(f"Euler characteristic {chi} does not match {self.topology}")
        return True


def triangle_areas(V, T):
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def triangle_frames(V, T):
    """Centroids and euclidean-orthonormal in-plane frames of each triangle."""
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    e1 = b - a
    e1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
    w = c - a
    w = w - np.sum(w * e1, axis=1, keepdims=True) * e1
    e2 = w / np.linalg.norm(w, axis=1, keepdims=True)
    return (a + b + c) / 3, e1, e2


# -- construction ---------------------------------------------------------------


def _zip_rings(inner, outer, ang_in, ang_out):
    """Triangulate the band between two closed rings (counter-clockwise)."""
    tris = []
    i = j = 0
    n_in, n_out = len(inner), len(outer)
    a_in = np.append(ang_in, ang_in[0] + 2 * math.pi)
    a_out = np.append(ang_out, ang_out[0] + 2 * math.pi)
    while i < n_in or j < n_out:
        if j < n_out and (i >= n_in or a_out[j + 1] <= a_in[i + 1]):
            tris.append((inner[i % n_in], outer[j % n_out], outer[(j + 1) % n_out]))
            j += 1
        else:
            tris.append((inner[i % n_in], outer[j % n_out], inner[(i + 1) % n_in]))
            i += 1
    return tris


def _disk(S, m):
    """Planar disk of radius S in z = 0: m rings with 6k vertices each (6 m^2 triangles)."""
    verts = [np.zeros(3)]
    rings = [np.array([0])]
    angles = [np.array([0.0])]
    for k in range(1, m + 1):
        n = 6 * k
        ang = 2 * math.pi * np.arange(n) / n
        idx = np.arange(len(verts), len(verts) + n)
        rad = S * k / m
        verts.extend(np.column_stack([rad * np.cos(ang), rad * np.sin(ang), np.zeros(n)]))
        rings.append(idx)
        angles.append(ang)
    tris = [(0, int(rings[1][j]), int(rings[1][(j + 1) % 6])) for j in range(6)]
    for k in range(1, m):
        tris.extend(_zip_rings(rings[k], rings[k + 1], angles[k], angles[k + 1]))
    V = np.array(verts)
    boundary = np.zeros(len(V), dtype=bool)
    boundary[rings[-1]] = True
    V[boundary] *= S / np.linalg.norm(V[boundary], axis=1, keepdims=True)
    return V, np.array(tris, dtype=np.int64), boundary


def _annulus(S, m, z0_frac=0.4, neck=0.5):
    z0 = z0_frac * S
    a_end = math.sqrt(S * S - z0 * z0)
    c = neck * S
    rows = max(2, m // 2) + 1
    z = np.linspace(-z0, z0, rows)
    a = a_end * np.cosh(z / c) / np.cosh(z0 / c)
    n = 6 * m
    ang = 2 * math.pi * np.arange(n) / n
    V = np.concatenate([np.column_stack([ai * np.cos(ang), ai * np.sin(ang), np.full(n, zi)])
                        for ai, zi in zip(a, z)])
    tris = []
    for r in range(rows - 1):
        lo = r * n + np.arange(n)
        hi = (r + 1) * n + np.arange(n)
        for j in range(n):
            j1 = (j + 1) % n
            tris.append((lo[j], lo[j1], hi[j1]))
            tris.append((lo[j], hi[j1], hi[j]))
    boundary = np.zeros(len(V), dtype=bool)
    boundary[:n] = True
    boundary[-n:] = True
    V[boundary] *= S / np.linalg.norm(V[boundary], axis=1, keepdims=True)
    return V, np.array(tris, dtype=np.int64), boundary


def _rotation_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def lumped_masses(V, T):
    A = triangle_areas(V, T) / 3
    return np.bincount(T.ravel(), weights=np.repeat(A, 3), minlength=len(V))


def make_mesh(shape, S, resolution, seed=0, amplitude=None) -> TriMesh:
    """Initial surface in the chart ball |x| <= S.

    ``resolution`` is the number of rings of the disk (6 resolution^2
    triangles). ``amplitude`` is the tilt angle in radians for tilted-disk and
    the maximal normal displacement for perturbed-disk.
    """
    if resolution < 3:
        raise ValueError("resolution must be at least 3")
    if not S > 0:
        raise ValueError("chart radius must be positive")
    if shape == "annulus":
        V, T, B = _annulus(S, resolution)
        return TriMesh(V, T, B, S, "annulus")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    V, T, B = _disk(S, resolution)
    if shape == "tilted-disk":
        angle = 0.3 if amplitude is None else amplitude
        V = V @ _rotation_x(angle).T
    elif shape == "perturbed-disk":
        amp = 0.05 * S if amplitude is None else amplitude
        V[:, 2] = amp * _smooth_noise(V[:, :2] / S, seed, lumped_masses(V, T))
        V[B] *= S / np.linalg.norm(V[B], axis=1, keepdims=True)
    return TriMesh(V, T, B, S, "disk")


def _smooth_noise(xy, seed, weights, modes=6):
    """Sum of random low-frequency plane waves, mass-weighted mean zero, max |f| = 1.

    Zero mean keeps the perturbation orthogonal to the translation mode that the
    centroid constraint of ``minimize`` pins.
    """
    rng = np.random.default_rng(seed)
    f = np.zeros(len(xy))
    for _ in range(modes):
        k = rng.uniform(1.0, 4.0) * np.array([math.cos(t := rng.uniform(0, 2 * math.pi)), math.sin(t)])
        f += rng.standard_normal() * np.cos(xy @ k + rng.uniform(0, 2 * math.pi))
    f -= np.sum(weights * f) / np.sum(weights)
    return f / np.max(np.abs(f))


# -- curved measurements ---------------------------------------------------------


def _rho2_midedge(V, T, chart):
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    mids = np.stack([(a + b) / 2, (b + c) / 2, (c + a) / 2])
    return np.asarray(chart.rho(np.linalg.norm(mids, axis=-1))) ** 2


def triangle_areas_g(V, T, chart):
    """Per-triangle curved area: euclidean area times the mid-edge mean of rho^2."""
    return triangle_areas(V, T) * np.mean(_rho2_midedge(V, T, chart), axis=0)


def area_g(mesh: TriMesh, chart: ConformalChart) -> float:
    return float(np.sum(triangle_areas_g(mesh.vertices, mesh.triangles, chart)))


def boundary_length_g(mesh: TriMesh, chart: ConformalChart) -> float:
    he = mesh.boundary_halfedges()
    if len(he) == 0:
        raise MeshError("mesh has no boundary")
    a, b = mesh.vertices[he[:, 0]], mesh.vertices[he[:, 1]]
    rho = np.asarray(chart.rho(np.linalg.norm((a + b) / 2, axis=1)))
    return float(np.sum(np.linalg.norm(b - a, axis=1) * rho))


def _area_and_gradient(V, T, chart):
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1, keepdims=True)
    nhat = n / nn
    A = 0.5 * nn[:, 0]
    mids = [(a + b) / 2, (b + c) / 2, (c + a) / 2]
    w, dw = [], []
    for m in mids:
        s = np.linalg.norm(m, axis=1)
        rho = np.asarray(chart.rho(s))
        w.append(rho**2)
        dw.append((2 * rho * np.asarray(chart.rho_prime_over_s(s)))[:, None] * m)
    wbar = (w[0] + w[1] + w[2]) / 3
    area = float(np.sum(A * wbar))
    Aw = (A / 3)[:, None]
    ga = 0.5 * np.cross(nhat, c - b) * wbar[:, None] + Aw * 0.5 * (dw[0] + dw[2])
    gb = 0.5 * np.cross(nhat, a - c) * wbar[:, None] + Aw * 0.5 * (dw[0] + dw[1])
    gc = 0.5 * np.cross(nhat, b - a) * wbar[:, None] + Aw * 0.5 * (dw[1] + dw[2])
    grad = np.zeros_like(V)
    idx = T.T.ravel()
    for d in range(3):
        vals = np.concatenate([ga[:, d], gb[:, d], gc[:, d]])
        grad[:, d] = np.bincount(idx, weights=vals, minlength=len(V))
    return area, grad


def area_gradient(mesh: TriMesh, chart: ConformalChart):
    """Analytic gradient of ``area_g`` with respect to vertex positions."""
    return _area_and_gradient(mesh.vertices, mesh.triangles, chart)[1]


def vertex_normals(V, T):
    n = np.cross(V[T[:, 1]] - V[T[:, 0]], V[T[:, 2]] - V[T[:, 0]])
    N = np.zeros_like(V)
    for d in range(3):
        N[:, d] = np.bincount(T.ravel(), weights=np.repeat(n[:, d], 3), minlength=len(V))
    return N / np.linalg.norm(N, axis=1, keepdims=True)


def _motion_directions(mesh: TriMesh, V):
    """Unit direction per vertex along which it may move.

    Interior vertices move along the vertex normal. Boundary vertices move in
    the tangent plane of the sphere, orthogonally to the boundary curve.
    """
    D = vertex_normals(V, mesh.triangles)
    for loop in mesh.boundary_loops():
        x = V[loop]
        t = np.roll(x, -1, axis=0) - np.roll(x, 1, axis=0)
        m = np.cross(x / np.linalg.norm(x, axis=1, keepdims=True), t)
        D[loop] = m / np.linalg.norm(m, axis=1, keepdims=True)
    return D


def _cotan_laplacian(V, T, chart, S):
    """rho^2-weighted cotangent stiffness plus mass/S^2, symmetric positive definite."""
    n = len(V)
    rows, cols, vals = [], [], []
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        u = V[T[:, i]] - V[T[:, k]]
        v = V[T[:, j]] - V[T[:, k]]
        cot = np.sum(u * v, axis=1) / np.linalg.norm(np.cross(u, v), axis=1)
        mid = (V[T[:, i]] + V[T[:, j]]) / 2
        w = 0.5 * np.abs(cot) * np.asarray(chart.rho(np.linalg.norm(mid, axis=1))) ** 2
        rows += [T[:, i], T[:, j], T[:, i], T[:, j]]
        cols += [T[:, j], T[:, i], T[:, i], T[:, j]]
        vals += [-w, -w, w, w]
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsc()
    M = lumped_masses(V, T)
    return (L + sp.diags(M / S**2)).tocsc()


@dataclass
class SolveOptions:
    max_iter: int = 200
    grad_tol: float = 1e-9
    armijo: float = 1e-4
    max_halvings: int = 40
    max_step_frac: float = 0.1
    centroid_constraint: bool = True


@dataclass
class SolveReport:
    area_g: float
    boundary_length_g: float
    bound: float
    gap: float
    orthogonality_defect: float
    gradient_residual: float
    iterations: int
    converged: bool
    line_search_failed: bool = False
    topology: str = "disk"
    history: list = field(default_factory=list)


def _constrained_residual(g, B):
    if B is None:
        return float(np.linalg.norm(g))
    lam, *_ = np.linalg.lstsq(B.T, g, rcond=None)
    return float(np.linalg.norm(g - B.T @ lam))


def minimize(mesh: TriMesh, chart: ConformalChart, opts: SolveOptions | None = None):
    """Projected gradient descent on area_g with the boundary sliding on |x| = S.

    Vertices move along ``_motion_directions``; the step is preconditioned by a
    cotangent Laplacian and obeys a backtracking Armijo rule, so the area
    sequence is non-increasing. A linear centroid constraint (fixed vertex
    weights) pins the normal translation of the disk, along which a free
    boundary disk is unstable; at a flat disk through the origin the
    constraint is inactive.
    """
    opts = opts or SolveOptions()
    S = mesh.S
    if not S < chart.s_max:
        raise MeshError("chart radius beyond the chart")
    geom = RadialGeometry(chart.profile)
    R = float(chart.r_of_s(S))
    bound = float(geom.disk_area(R))
    V = mesh.vertices.copy()
    T = mesh.triangles
    weights = lumped_masses(V, T)

    area, grad = _area_and_gradient(V, T, chart)
    history = [area]
    line_fail = False
    converged = False
    residual = math.inf
    it = 0
    for it in range(opts.max_iter + 1):
        D = _motion_directions(mesh, V)
        g = np.sum(grad * D, axis=1)
        B = (weights[:, None] * D).T if opts.centroid_constraint else None
        residual = _constrained_residual(g, B)
        if residual <= opts.grad_tol:
            converged = True
            break
        if it == opts.max_iter:
            break
        P = splu(_cotan_laplacian(V, T, chart, S))
        u = -P.solve(g)
        if B is not None:
            Z = np.column_stack([P.solve(b) for b in B])
            u -= Z @ np.linalg.solve(B @ Z, B @ u)
        slope = float(g @ u)
        if slope >= 0:
            u, slope = -g, -float(g @ g)
        t = min(1.0, opts.max_step_frac * S / np.max(np.abs(u)))
        n_old = np.cross(V[T[:, 1]] - V[T[:, 0]], V[T[:, 2]] - V[T[:, 0]])
        accepted = False
        for _ in range(opts.max_halvings):
            W = V + t * u[:, None] * D
            W[mesh.boundary] *= S / np.linalg.norm(W[mesh.boundary], axis=1, keepdims=True)
            n_new = np.cross(W[T[:, 1]] - W[T[:, 0]], W[T[:, 2]] - W[T[:, 0]])
            if np.all(np.sum(n_new * n_old, axis=1) > 0):
                new_area, new_grad = _area_and_gradient(W, T, chart)
                if new_area <= area + opts.armijo * t * slope:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            line_fail = True
            break
        V, area, grad = W, new_area, new_grad
        history.append(area)
        if np.min(triangle_areas(V, T)) < 1e-14:
            raise MeshError(f"mesh degenerated at iteration {it}")

    out = mesh.copy(V)
    report = SolveReport(area, boundary_length_g(out, chart), bound, area - bound,
                         orthogonality_defect(out, chart), residual, it, converged,
                         line_fail, mesh.topology, history)
    return out, report


# -- diagnostics -----------------------------------------------------------------


def _edge_conormals(V, he):
    """Outward in-plane unit conormal of each directed boundary edge (i, j, k)."""
    a, b, k = V[he[:, 0]], V[he[:, 1]], V[he[:, 2]]
    e = b - a
    e = e / np.linalg.norm(e, axis=1, keepdims=True)
    out = a - k
    out = out - np.sum(out * e, axis=1, keepdims=True) * e
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def boundary_vertex_conormals(mesh: TriMesh):
    """Indices of boundary vertices and their averaged outward conormals."""
    V = mesh.vertices
    he = mesh.boundary_halfedges()
    nu = _edge_conormals(V, he)
    acc = np.zeros_like(V)
    for col in (0, 1):
        for d in range(3):
            acc[:, d] += np.bincount(he[:, col], weights=nu[:, d], minlength=len(V))
    idx = np.unique(he[:, :2])
    acc = acc[idx]
    return idx, acc / np.linalg.norm(acc, axis=1, keepdims=True)


def orthogonality_defect(mesh: TriMesh, chart: ConformalChart | None = None) -> float:
    """Max angle (radians) between the discrete conormal and grad r at boundary vertices."""
    idx, nu = boundary_vertex_conormals(mesh)
    x = mesh.vertices[idx]
    xhat = x / np.linalg.norm(x, axis=1, keepdims=True)
    return float(np.max(np.arccos(np.clip(np.sum(nu * xhat, axis=1), -1.0, 1.0))))


def _corner_angles(V, T):
    ang = np.empty(T.shape)
    for c in range(3):
        p = V[T[:, c]]
        u = V[T[:, (c + 1) % 3]] - p
        v = V[T[:, (c + 2) % 3]] - p
        ang[:, c] = np.arctan2(np.linalg.norm(np.cross(u, v), axis=1), np.sum(u * v, axis=1))
    return ang


def gauss_bonnet_defect(mesh: TriMesh, chart: ConformalChart | None = None) -> float:
    """|sum of angle defects + boundary turning - 2 pi chi| with conformal (euclidean) angles."""
    V, T = mesh.vertices, mesh.triangles
    angle_sum = np.bincount(T.ravel(), weights=_corner_angles(V, T).ravel(), minlength=len(V))
    bdy = np.zeros(len(V), dtype=bool)
    bdy[np.unique(mesh.boundary_halfedges()[:, :2])] = True
    interior = np.sum(2 * math.pi - angle_sum[~bdy])
    turning = np.sum(math.pi - angle_sum[bdy])
    return float(abs(interior + turning - 2 * math.pi * mesh.euler_characteristic()))


def boundary_geodesic_curvature(mesh: TriMesh, chart: ConformalChart) -> float:
    """Length-weighted mean geodesic curvature of the boundary in the metric g.

    Uses kappa_g ds_g = (kappa_delta + d_nu log rho) ds_delta, with the discrete
    euclidean turning angle at each boundary vertex standing in for kappa_delta ds.
    """
    V, T = mesh.vertices, mesh.triangles
    angle_sum = np.bincount(T.ravel(), weights=_corner_angles(V, T).ravel(), minlength=len(V))
    idx, nu = boundary_vertex_conormals(mesh)
    he = mesh.boundary_halfedges()
    elen = np.linalg.norm(V[he[:, 1]] - V[he[:, 0]], axis=1)
    dual = 0.5 * (np.bincount(he[:, 0], weights=elen, minlength=len(V))
                  + np.bincount(he[:, 1], weights=elen, minlength=len(V)))[idx]
    x = V[idx]
    s = np.linalg.norm(x, axis=1)
    rho = np.asarray(chart.rho(s))
    dlog = np.asarray(chart.rho_prime(s)) / rho * np.sum(nu * x, axis=1) / s
    total = np.sum((math.pi - angle_sum[idx]) + dlog * dual)
    return float(total / np.sum(rho * dual))


def triangle_alignment(mesh: TriMesh):
    """Per-triangle |grad^Sigma r|^2 at the centroid, from the triangle plane."""
    c, e1, e2 = triangle_frames(mesh.vertices, mesh.triangles)
    s2 = np.sum(c * c, axis=1)
    tang = np.sum(c * e1, axis=1) ** 2 + np.sum(c * e2, axis=1) ** 2
    return np.where(s2 > 0, tang / np.where(s2 > 0, s2, 1.0), 1.0)


# -- OBJ ---------------------------------------------------------------------------


def write_obj_stream(mesh: TriMesh, fh):
    """OBJ text with repr floats, so a read/write round trip is exact."""
    fh.write(f"# chart mesh, S = {mesh.S!r}, topology = {mesh.topology}\n")
    for v in mesh.vertices:
        fh.write("v " + " ".join(repr(float(c)) for c in v) + "\n")
    for t in mesh.triangles:
        fh.write("f " + " ".join(str(int(i) + 1) for i in t) + "\n")


def write_obj(mesh: TriMesh, path):
    with open(path, "w") as fh:
        write_obj_stream(mesh, fh)


def read_obj(path, S=None, topology=None) -> TriMesh:
    verts, tris = [], []
    header = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#" and "S =" in line:
                for item in line[1:].split(","):
                    k, _, v = item.partition("=")
                    header[k.strip().split()[-1]] = v.strip()
            elif parts[0] == "v":
                verts.append([float(c) for c in parts[1:4]])
            elif parts[0] == "f":
                tris.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not verts or not tris:
        raise MeshError(f"{path}: no vertices or faces")
    V = np.array(verts)
    T = np.array(tris, dtype=np.int64)
    S = float(header.get("S", S if S is not None else np.max(np.linalg.norm(V, axis=1))))
    topology = topology or header.get("topology", "disk")
    mesh = TriMesh(V, T, np.zeros(len(V), dtype=bool), S, topology)
    mesh.boundary[np.unique(mesh.boundary_halfedges()[:, :2])] = True
    return mesh
