"""Discrete check of the calibration chain on a triangle mesh.

For a disk Sigma in the ball and the field W with its singularity at a boundary
point y, the divergence theorem on Sigma minus B_eps(y) reads

    int div_Sigma W = int_{outer boundary} <W, eta> + int_{eps-arc} <W, eta>,

and div_Sigma W <= 1, <W, eta> = 0 on the outer boundary and the eps-arc flux
tends to 2 pi I(R). Each term is computed separately so every inequality of
the chain can be observed.

The eps-ball is excised by clipping every triangle against the linear
interpolant of |x - y| - eps_chart. Per flat triangle the divergence theorem
is exact, so the fluxes through interior edges are collected too: on a bent
mesh they do not cancel, and their sum (``crease_flux``) is the discrete
mean-curvature term that vanishes in the limit for minimal surfaces.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MeshError
from .fields import CalibrationField, TangentPlaneSample, conformal_W
from .mesh import TriMesh, area_g, boundary_length_g, triangle_alignment, triangle_frames
from .radial import ConformalChart, RadialGeometry, build_chart

# symmetric degree-4 rule on the reference triangle (barycentric points, weights sum to 1)
_TRI_A, _TRI_B = 0.445948490915965, 0.091576213509771
_TRI_POINTS = np.array([
    [1 - 2 * _TRI_A, _TRI_A, _TRI_A], [_TRI_A, 1 - 2 * _TRI_A, _TRI_A], [_TRI_A, _TRI_A, 1 - 2 * _TRI_A],
    [1 - 2 * _TRI_B, _TRI_B, _TRI_B], [_TRI_B, 1 - 2 * _TRI_B, _TRI_B], [_TRI_B, _TRI_B, 1 - 2 * _TRI_B],
])
_TRI_WEIGHTS = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)
_GAUSS2 = (0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3))

_BOUNDARY, _INTERIOR, _CUT = 0, 1, 2


@dataclass
class AuditRecord:
    area_g: float
    area_excised: float
    div_integral: float
    boundary_flux: float
    singular_flux: float
    singular_flux_asymptote: float
    crease_flux: float
    bound: float
    eps: float
    eps_edge_ratio: float
    # area_excised - div_integral: integrated 1 - div, nonnegative when div <= 1
    slack_div: float
    # div_integral - boundary_flux - singular_flux: divergence-theorem residual
    residual: float
    # same, with the interior-edge fluxes included; pure quadrature error
    residual_discrete: float
    # singular_flux - bound
    slack_singular: float
    # area_g - bound
    gap: float

    def chain_holds(self, rel_tol=0.01):
        tol = rel_tol * self.area_g
        return (self.area_g >= self.div_integral - tol
                and self.div_integral >= self.boundary_flux + self.singular_flux - tol)

    def as_dict(self):
        return dict(self.__dict__)


def boundary_vertex_field(mesh: TriMesh, geom: RadialGeometry, chart: ConformalChart,
                          vertex=None) -> CalibrationField:
    """Conformal W for the ball |x| <= mesh.S with y at a boundary vertex.

    By default y is the boundary vertex with the largest first coordinate.
    """
    idx = np.flatnonzero(mesh.boundary)
    if len(idx) == 0:
        raise MeshError("mesh has no boundary vertices")
    if vertex is None:
        vertex = int(idx[np.argmax(mesh.vertices[idx, 0])])
    elif not mesh.boundary[vertex]:
        raise MeshError(f"vertex {vertex} is not on the mesh boundary")
    R = float(chart.r_of_s(mesh.S))
    y = mesh.vertices[vertex]
    y = y * (chart.s_radius(R) / np.linalg.norm(y))
    return conformal_W(geom, chart, R, y)


def _snap_vertex(mesh: TriMesh, y):
    d = np.linalg.norm(mesh.vertices - y, axis=1)
    k = int(np.argmin(d))
    if d[k] > 1e-9 * max(1.0, mesh.S) or not mesh.boundary[k]:
        raise MeshError("y is not a boundary vertex of the mesh")
    return k


def _edge_flux(field, chart, a, b, nu):
    """2-point Gauss of rho^2 <W, nu> |b - a| along straight segments."""
    total = np.zeros(len(a))
    L = np.linalg.norm(b - a, axis=1)
    for t in _GAUSS2:
        q = a + t * (b - a)
        rho = np.asarray(chart.rho(np.linalg.norm(q, axis=1)))
        total += 0.5 * L * rho**2 * np.sum(field.value(q) * nu, axis=1)
    return total


def _tri_integrals(field, chart, a, b, c, e1, e2):
    """(int rho^2 div, int rho^2) over flat triangles with frames (e1, e2)."""
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    div_sum = np.zeros(len(a))
    mass_sum = np.zeros(len(a))
    for (la, lb, lc), w in zip(_TRI_POINTS, _TRI_WEIGHTS):
        q = la * a + lb * b + lc * c
        rho2 = np.asarray(chart.rho(np.linalg.norm(q, axis=1))) ** 2
        div = np.asarray(field.div_exact(TangentPlaneSample(q, e1, e2)))
        div_sum += w * area * rho2 * div
        mass_sum += w * area * rho2
    return div_sum, mass_sum


def _clip(P, phi):
    """Part of the polygon P with phi >= 0; returns vertices and, per polygon edge,
    the original edge index (or -1 for the cut)."""
    out, src = [], []
    n = len(P)
    for i in range(n):
        j = (i + 1) % n
        if phi[i] >= 0:
            out.append(P[i])
            src.append(i)
        if (phi[i] >= 0) != (phi[j] >= 0):
            t = phi[i] / (phi[i] - phi[j])
            out.append(P[i] + t * (P[j] - P[i]))
            # the edge leaving the crossing point is the cut when we are entering phi < 0
            src.append(-1 if phi[i] >= 0 else i)
    return np.array(out), src


def _local_edge(mesh: TriMesh, k_y):
    V = mesh.vertices
    he = mesh.boundary_halfedges()
    near = (he[:, 0] == k_y) | (he[:, 1] == k_y)
    return float(np.mean(np.linalg.norm(V[he[near, 1]] - V[he[near, 0]], axis=1)))


def eps_for_edges(mesh: TriMesh, field: CalibrationField, edges=5.0):
    """g-radius spanning ``edges`` boundary edge lengths at y (plus a hair, so no
    vertex sits exactly on the cut)."""
    k_y = _snap_vertex(mesh, field.y)
    return edges * _local_edge(mesh, k_y) * float(field.chart.rho(mesh.S)) * (1 + 1e-4)


def calibration_audit(mesh: TriMesh, field: CalibrationField, eps) -> AuditRecord:
    """Divergence-theorem chain on the mesh with the eps-ball about y removed.

    ``eps`` is a g-radius; the excision uses the chart radius eps / rho(S).
    It must be at least 5 local edge lengths so the eps-arc is resolved.
    """
    if field.kind != "conformal":
        raise DomainError("the audit runs in the conformal chart; build W with conformal_W")
    chart = field.chart
    V, T = mesh.vertices, mesh.triangles
    k_y = _snap_vertex(mesh, field.y)
    y = field.y
    rho_S = float(chart.rho(mesh.S))
    eps_c = float(eps) / rho_S

    he = mesh.boundary_halfedges()
    ratio = eps_c / _local_edge(mesh, k_y)
    if ratio < 5:
        raise DomainError(f"eps covers {ratio:.2f} edge lengths at y; need at least 5")

    bkey = {tuple(sorted((int(i), int(j)))) for i, j, _ in he}
    phi = np.linalg.norm(V - y, axis=1) - eps_c
    centroid, e1, e2 = triangle_frames(V, T)
    n_hat = np.cross(e1, e2)
    keep_all = np.all(phi[T] >= 0, axis=1)
    mixed = ~keep_all & np.any(phi[T] >= 0, axis=1)

    # whole triangles
    Tk = T[keep_all]
    a, b, c = V[Tk[:, 0]], V[Tk[:, 1]], V[Tk[:, 2]]
    div_w, mass_w = _tri_integrals(field, chart, a, b, c, e1[keep_all], e2[keep_all])
    div_integral = float(np.sum(div_w))
    area_kept = float(np.sum(mass_w))
    flux = [0.0, 0.0, 0.0]
    nk = n_hat[keep_all]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        p, q = V[Tk[:, i]], V[Tk[:, j]]
        nu = np.cross(q - p, nk)
        nu /= np.linalg.norm(nu, axis=1, keepdims=True)
        f = _edge_flux(field, chart, p, q, nu)
        is_b = np.array([tuple(sorted((int(u), int(v)))) in bkey for u, v in zip(Tk[:, i], Tk[:, j])])
        flux[_BOUNDARY] += float(np.sum(f[is_b]))
        flux[_INTERIOR] += float(np.sum(f[~is_b]))

    # triangles crossing the eps-circle; the cut segments form the discrete eps-arc
    arc_len = 0.0
    for t_idx in np.flatnonzero(mixed):
        tri = T[t_idx]
        P, src = _clip(V[tri], phi[tri])
        fe1, fe2, nt = e1[t_idx][None], e2[t_idx][None], n_hat[t_idx]
        for m in range(1, len(P) - 1):
            d, w = _tri_integrals(field, chart, P[:1], P[m:m + 1], P[m + 1:m + 2], fe1, fe2)
            div_integral += float(d[0])
            area_kept += float(w[0])
        for m, s in enumerate(src):
            p, q = P[m], P[(m + 1) % len(P)]
            nu = np.cross(q - p, nt)
            nu /= np.linalg.norm(nu)
            f = float(_edge_flux(field, chart, p[None], q[None], nu[None])[0])
            if s < 0:
                kind = _CUT
                arc_len += float(np.linalg.norm(q - p) * chart.rho(np.linalg.norm(0.5 * (p + q))))
            else:
                u, v = int(tri[s]), int(tri[(s + 1) % 3])
                kind = _BOUNDARY if tuple(sorted((u, v))) in bkey else _INTERIOR
            flux[kind] += f

    bound = 2 * math.pi * field.I_R
    total_area = area_g(mesh, chart)
    boundary_flux, crease_flux, singular_flux = flux[_BOUNDARY], flux[_INTERIOR], flux[_CUT]
    residual = div_integral - boundary_flux - singular_flux
    return AuditRecord(
        area_g=total_area,
        area_excised=area_kept,
        div_integral=div_integral,
        boundary_flux=boundary_flux,
        singular_flux=singular_flux,
        singular_flux_asymptote=bound * arc_len / (math.pi * float(eps)),
        crease_flux=crease_flux,
        bound=bound,
        eps=float(eps),
        eps_edge_ratio=ratio,
        slack_div=area_kept - div_integral,
        residual=residual,
        residual_discrete=residual - crease_flux,
        slack_singular=singular_flux - bound,
        gap=total_area - bound,
    )


@dataclass
class BoundReport:
    passed: bool
    area_g: float
    bound: float
    gap: float
    gap_rel: float


def area_bound_report(mesh: TriMesh, geom: RadialGeometry, R, chart: ConformalChart | None = None,
                      rel_tol=0.01) -> BoundReport:
    """Compare area_g with 2 pi I(R); pass iff the gap is at least -rel_tol of the bound."""
    chart = chart or build_chart(geom.profile)
    A = area_g(mesh, chart)
    bound = float(geom.disk_area(R))
    gap = A - bound
    return BoundReport(bool(gap >= -rel_tol * bound), A, bound, gap, gap / bound)


@dataclass
class IsoperimetricReport:
    passed: bool
    area_g: float
    boundary_length_g: float
    rhs: float
    slack: float


def isoperimetric_check(mesh: TriMesh, chart: ConformalChart, R, rel_tol=1e-3) -> IsoperimetricReport:
    """area >= tan(R/2) * boundary length, up to rel_tol * area (round sphere only)."""
    if chart.profile.name != "sphere":
        raise DomainError("the isoperimetric form tan(R/2)|dSigma| holds on the round sphere only")
    A = area_g(mesh, chart)
    L = boundary_length_g(mesh, chart)
    rhs = math.tan(R / 2) * L
    slack = A - rhs
    return IsoperimetricReport(bool(slack >= -rel_tol * A), A, L, rhs, slack)


def equality_alignment(mesh: TriMesh, threshold=0.99) -> float:
    """Fraction of triangles whose plane nearly contains the radial direction."""
    return float(np.mean(triangle_alignment(mesh) >= threshold))
