"""Lowest-order edge elements (Nedelec, first kind) on triangles.

Degrees of freedom are tangential circulations along globally oriented
edges (low vertex index -> high).  On a triangle, the basis attached to the
local edge (a, a+1) is ``sign * (lam_a grad lam_b - lam_b grad lam_a)``
whose circulation along the global edge orientation is 1 and whose scalar
curl is the constant ``sign * 2 (grad lam_a x grad lam_b)``.

All bilinear forms are assembled with unconjugated products, so matrices
are complex-symmetric (real-valued here, since the coefficients are real).
Default interior rule is exact to degree 4 (6 points); default boundary
rule is 3-point Gauss per segment.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .mesh import Mesh2D, boundary_quadrature


class AssemblyError(Exception):
    """Coefficient or load evaluation failed inside an element."""


class ZeroNormError(ZeroDivisionError):
    """Relative error against a zero-norm reference field."""


# ---------------------------------------------------------------------------
# quadrature rules on the reference triangle (barycentric points, weights
# normalized to sum 1; multiply by the element area)
# ---------------------------------------------------------------------------

def _perm3(a):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _perm6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


_TRI_RULES = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: (_perm3(1 / 6), [1 / 3] * 3),
    3: (
        [(1 / 3, 1 / 3, 1 / 3)] + _perm3(0.2),
        [-27 / 48] + [25 / 48] * 3,
    ),
    4: (
        _perm3(0.445948490915965) + _perm3(0.091576213509771),
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    5: (
        [(1 / 3, 1 / 3, 1 / 3)]
        + _perm3(0.470142064105115)
        + _perm3(0.101286507323456),
        [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3,
    ),
    6: (
        _perm3(0.249286745170910)
        + _perm3(0.063089014491502)
        + _perm6(0.310352451033785, 0.636502499121399),
        [0.116786275726379] * 3
        + [0.050844906370207] * 3
        + [0.082851075618374] * 6,
    ),
}


def triangle_rule(degree):
    """Barycentric points (Q,3) and weights (Q,) exact to `degree`."""
    if degree not in _TRI_RULES:
        raise ValueError(f"no triangle rule of degree {degree} (have 1..6)")
    pts, w = _TRI_RULES[degree]
    return np.array(pts, dtype=np.float64), np.array(w, dtype=np.float64)


_REF_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def ref_basis_eval(bary):
    """Edge basis and scalar curls on the reference triangle (0,0),(1,0),(0,1).

    Local edge a joins reference vertices (a, (a+1)%3); no orientation sign
    is applied here.  Returns (3,2) basis vectors at the barycentric point
    and the (3,) constant curls.
    """
    lam = np.asarray(bary, dtype=np.float64)
    if lam.shape != (3,) or np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-12:
        raise ValueError("barycentric point must be 3 nonnegative weights summing to 1")
    vecs = np.empty((3, 2))
    curls = np.empty(3)
    for a in range(3):
        b = (a + 1) % 3
        vecs[a] = lam[a] * _REF_GRADS[b] - lam[b] * _REF_GRADS[a]
        ga, gb = _REF_GRADS[a], _REF_GRADS[b]
        curls[a] = 2.0 * (ga[0] * gb[1] - ga[1] * gb[0])
    return vecs, curls


# ---------------------------------------------------------------------------
# per-mesh quadrature cache
# ---------------------------------------------------------------------------

@dataclass
class QuadratureCache:
    """Precomputed geometry, basis values and quadrature data for a mesh.

    Interior: triangle rule of `tri_degree`; per-triangle physical points
    (T,Q,2), signed basis values (T,Q,3,2) and constant curls (T,3).
    Boundary: `bnd_points` Gauss points per segment with basis values at
    the trace (B,n,3,2) taken from the owning triangle.
    """

    mesh: Mesh2D
    tri_degree: int = 4
    bnd_points: int = 3

    def __post_init__(self):
        mesh = self.mesh
        self.qbary, self.qweights = triangle_rule(self.tri_degree)
        p = mesh.vertices[mesh.triangles]  # (T,3,2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        twoA = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.areas = 0.5 * twoA
        # grad lam_i = ((y_{i+1}-y_{i+2}), (x_{i+2}-x_{i+1})) / 2A
        gl = np.empty((len(mesh.triangles), 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            gl[:, i, 0] = p[:, j, 1] - p[:, k, 1]
            gl[:, i, 1] = p[:, k, 0] - p[:, j, 0]
        gl /= twoA[:, None, None]
        self.grad_lambda = gl
        self.points = np.einsum("qa,tai->tqi", self.qbary, p)
        signs = mesh.triangle_edge_signs.astype(np.float64)
        basis = np.empty((len(mesh.triangles), len(self.qweights), 3, 2))
        curls = np.empty((len(mesh.triangles), 3))
        for a in range(3):
            b = (a + 1) % 3
            basis[:, :, a, :] = (
                self.qbary[None, :, a, None] * gl[:, None, b, :]
                - self.qbary[None, :, b, None] * gl[:, None, a, :]
            ) * signs[:, None, a, None]
            cross = gl[:, a, 0] * gl[:, b, 1] - gl[:, a, 1] * gl[:, b, 0]
            curls[:, a] = 2.0 * cross * signs[:, a]
        self.basis = basis
        self.curls = curls
        self.bnd = boundary_quadrature(mesh, self.bnd_points)
        bb = self.bnd.bary  # (B,n,3)
        tri_ids = mesh.boundary_tri
        glb = gl[tri_ids]  # (B,3,2)
        sgb = signs[tri_ids]  # (B,3)
        bbasis = np.empty(bb.shape[:2] + (3, 2))
        for a in range(3):
            b = (a + 1) % 3
            bbasis[:, :, a, :] = (
                bb[:, :, a, None] * glb[:, None, b, :]
                - bb[:, :, b, None] * glb[:, None, a, :]
            ) * sgb[:, None, a, None]
        self.bnd_basis = bbasis
        self.bnd_basis_tan = np.einsum("bqai,bi->bqa", bbasis, self.bnd.tangents)

    @property
    def n_edges(self):
        return len(self.mesh.edges)

    def quad_weights_flat(self):
        """Physical quadrature weights (T,Q): area-scaled reference weights."""
        return self.areas[:, None] * self.qweights[None, :]


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class FieldFE:
    """Complex coefficient vector over global edges (tangential circulations)."""

    mesh: Mesh2D
    dofs: np.ndarray
    report: object = None

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=np.complex128)
        if self.dofs.shape != (len(self.mesh.edges),):
            raise ValueError(
                f"dof vector length {self.dofs.shape} != edge count "
                f"{len(self.mesh.edges)}"
            )

    def __add__(self, other):
        return FieldFE(self.mesh, self.dofs + other.dofs)

    def __sub__(self, other):
        return FieldFE(self.mesh, self.dofs - other.dofs)

    def __mul__(self, scalar):
        return FieldFE(self.mesh, self.dofs * scalar)

    __rmul__ = __mul__


def zero_field(mesh):
    return FieldFE(mesh, np.zeros(len(mesh.edges), dtype=np.complex128))


def interpolate(mesh, func):
    """Edge interpolant of an analytic vector field.

    `func` maps points (N,2) to complex values (N,2).  Circulations are
    computed with 4-point Gauss per edge (exact to degree 7).
    """
    xg, wg = np.polynomial.legendre.leggauss(4)
    s = 0.5 * (xg + 1.0)
    w = 0.5 * wg
    lo = mesh.vertices[mesh.edges[:, 0]]
    hi = mesh.vertices[mesh.edges[:, 1]]
    seg = hi - lo  # tangent * length
    pts = lo[:, None, :] + s[None, :, None] * seg[:, None, :]
    vals = np.asarray(func(pts.reshape(-1, 2)), dtype=np.complex128)
    vals = vals.reshape(len(mesh.edges), len(s), 2)
    dofs = np.einsum("g,egi,ei->e", w, vals, seg)
    return FieldFE(mesh, dofs)


def p1_gradient_field(mesh, vertex_values):
    """The edge-space field grad(phi) for a P1 function given by vertex values.

    Circulation of a gradient along edge (lo,hi) is phi[hi]-phi[lo]; the
    resulting field lies exactly in the lowest-order edge space.
    """
    v = np.asarray(vertex_values, dtype=np.complex128)
    if v.shape != (len(mesh.vertices),):
        raise ValueError("vertex_values must have one entry per vertex")
    return FieldFE(mesh, v[mesh.edges[:, 1]] - v[mesh.edges[:, 0]])


def eval_at_quad(cache, u):
    """Field values at all interior quadrature points, (T,Q,2) complex."""
    return _kernels.eval_at_quad(u.dofs, cache.mesh.triangle_edges, cache.basis)


def curl_per_triangle(cache, u):
    """Constant scalar curl per triangle, (T,) complex."""
    return _kernels.curl_per_tri(u.dofs, cache.mesh.triangle_edges, cache.curls)


def evaluate_field(cache, u, tri_ids, bary):
    """Field values at arbitrary points given as (triangle id, barycentric)."""
    tri_ids = np.asarray(tri_ids, dtype=np.int64)
    bary = np.asarray(bary, dtype=np.float64)
    gl = cache.grad_lambda[tri_ids]  # (P,3,2)
    signs = cache.mesh.triangle_edge_signs[tri_ids].astype(np.float64)
    d = u.dofs[cache.mesh.triangle_edges[tri_ids]]  # (P,3)
    out = np.zeros((len(tri_ids), 2), dtype=np.complex128)
    for a in range(3):
        b = (a + 1) % 3
        w = (
            bary[:, a, None] * gl[:, b, :] - bary[:, b, None] * gl[:, a, :]
        ) * signs[:, a, None]
        out += d[:, a, None] * w
    return out


def evaluate_curl(cache, u, tri_ids):
    return curl_per_triangle(cache, u)[np.asarray(tri_ids, dtype=np.int64)]


def eval_at_boundary(cache, u):
    """Field values at boundary quadrature points, (B,n,2) complex."""
    d = u.dofs[cache.mesh.triangle_edges[cache.mesh.boundary_tri]]  # (B,3)
    return np.einsum("ba,bqai->bqi", d, cache.bnd_basis)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _coeff_samples(cache, coeff):
    T, Q = cache.points.shape[:2]
    if np.isscalar(coeff):
        return np.full((T, Q), float(coeff))
    coeff = np.asarray(coeff, dtype=np.float64)
    if coeff.shape == (T,):
        return np.repeat(coeff[:, None], Q, axis=1)
    if coeff.shape != (T, Q):
        raise ValueError(f"coefficient shape {coeff.shape} not (T,Q)=({T},{Q})")
    return coeff


def _check_coeff(samples, what):
    bad = ~np.isfinite(samples)
    if np.any(bad):
        t = int(np.nonzero(bad.any(axis=tuple(range(1, samples.ndim))))[0][0])
        raise AssemblyError(f"{what} evaluation failed in element {t}")


def _scatter(cache, elems):
    te = cache.mesh.triangle_edges
    rows = np.broadcast_to(te[:, :, None], elems.shape).ravel()
    cols = np.broadcast_to(te[:, None, :], elems.shape).ravel()
    n = cache.n_edges
    return sp.coo_matrix((elems.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(cache, coeff=1.0, what="mass coefficient"):
    """(M_c)_ab = integral c phi_a . phi_b with c sampled per quad point."""
    c = _coeff_samples(cache, coeff)
    _check_coeff(c, what)
    elems = _kernels.mass_elems(cache.areas, cache.qweights, cache.basis, c)
    return _scatter(cache, elems)

def stiffness_matrix(cache, inv_mu=1.0):
    """S_ab = integral (1/mu) curl phi_a curl phi_b (piecewise-constant 1/mu)."""
    T = len(cache.areas)
    c = np.full(T, float(inv_mu)) if np.isscalar(inv_mu) else np.asarray(inv_mu, float)
    _check_coeff(c, "1/mu")
    elems = _kernels.stiff_elems(cache.areas, cache.curls, c)
    return _scatter(cache, elems)


def boundary_mass_matrix(cache, lam=1.0):
    """(B_lam)_ab = boundary integral lam (phi_a.t)(phi_b.t) ds."""
    B, n = cache.bnd.weights.shape
    lam_s = np.full((B, n), float(lam)) if np.isscalar(lam) else np.asarray(lam, float)
    _check_coeff(lam_s, "impedance")
    tb = cache.bnd_basis_tan  # (B,n,3)
    vals = np.einsum("bq,bqa,bqc->bac", cache.bnd.weights * lam_s, tb, tb)
    te = cache.mesh.triangle_edges[cache.mesh.boundary_tri]  # (B,3)
    rows = np.broadcast_to(te[:, :, None], vals.shape).ravel()
    cols = np.broadcast_to(te[:, None, :], vals.shape).ravel()
    m = cache.n_edges
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(m, m)).tocsr()


def assemble_forms(cache, medium, modulation=None):
    """All forms of the weak problem for a medium (optionally modulated).

    Returns dict with S (curl-curl), M_eps, M_sig (weighted masses) and
    B_lam (boundary tangential mass).  Modulation multiplies the eps/sigma
    samples by (1 + delta gamma cos(k.x + phase)) pointwise.
    """
    pts = cache.points.reshape(-1, 2)
    eps = medium.eps_r_at(pts).reshape(cache.points.shape[:2])
    sig = medium.sigma_at(pts).reshape(cache.points.shape[:2])
    if modulation is not None:
        cosv = modulation.cos_at(pts).reshape(cache.points.shape[:2])
        g = medium.gammas
        eps = eps * (1.0 + modulation.delta * g.eps * cosv)
        sig = sig * (1.0 + modulation.delta * g.sigma * cosv)
    return {
        "S": stiffness_matrix(cache, 1.0 / medium.mu_r),
        "M_eps": mass_matrix(cache, eps, "eps_r"),
        "M_sig": mass_matrix(cache, sig, "sigma"),
        "B_lam": boundary_mass_matrix(cache, medium.impedance),
    }


def load_vector(cache, f):
    """rhs_a = integral f . phi_a for f sampled at quadrature points.

    `f` is either samples (T,Q,2) or a callable mapping (N,2) points to
    complex (N,2) values.
    """
    T, Q = cache.points.shape[:2]
    if callable(f):
        f = np.asarray(f(cache.points.reshape(-1, 2))).reshape(T, Q, 2)
    f = np.ascontiguousarray(f, dtype=np.complex128)
    if f.shape != (T, Q, 2):
        raise ValueError(f"load samples shape {f.shape} != ({T},{Q},2)")
    bad = ~np.isfinite(f)
    if np.any(bad):
        t = int(np.nonzero(bad.any(axis=(1, 2)))[0][0])
        raise AssemblyError(f"non-finite load sample in element {t}")
    elems = _kernels.load_elems(cache.areas, cache.qweights, cache.basis, f)
    rhs = np.zeros(cache.n_edges, dtype=np.complex128)
    np.add.at(rhs, cache.mesh.triangle_edges.ravel(), elems.ravel())
    return rhs


def boundary_load_vector(cache, g):
    """rhs_a = boundary integral g (phi_a.t) ds for scalar tangential data g.

    `g` is either samples (B,n) at the boundary quadrature points or a
    callable mapping (N,2) points to complex scalars; the scalar is the
    component along the counterclockwise tangent t = z x n.
    """
    B, n = cache.bnd.weights.shape
    if callable(g):
        g = np.asarray(g(cache.bnd.points.reshape(-1, 2))).reshape(B, n)
    g = np.ascontiguousarray(g, dtype=np.complex128)
    if g.shape != (B, n):
        raise ValueError(f"boundary samples shape {g.shape} != ({B},{n})")
    bad = ~np.isfinite(g)
    if np.any(bad):
        b = int(np.nonzero(bad.any(axis=1))[0][0])
        raise AssemblyError(f"non-finite boundary sample on boundary edge {b}")
    vals = np.einsum("bq,bq,bqa->ba", cache.bnd.weights, g, cache.bnd_basis_tan)
    rhs = np.zeros(cache.n_edges, dtype=np.complex128)
    te = cache.mesh.triangle_edges[cache.mesh.boundary_tri]
    np.add.at(rhs, te.ravel(), vals.ravel())
    return rhs


# ---------------------------------------------------------------------------
# tangential Dirichlet constraints
# ---------------------------------------------------------------------------

@dataclass
class ConstrainedSystem:
    """Dirichlet-eliminated system: A_ii x_i = rhs_i - A_ib g_b."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray
    n_total: int

    def expand(self, x_interior):
        full = np.zeros(self.n_total, dtype=np.complex128)
        full[self.interior] = x_interior
        full[self.boundary] = self.boundary_values
        return full


def apply_dirichlet_tangential(A, rhs, mesh, g):
    """Fix boundary-edge circulations to `g` (one value per boundary edge,
    in mesh.boundary_edges order) and eliminate them symmetrically."""
    g = np.asarray(g, dtype=np.complex128)
    if g.shape != (len(mesh.boundary_edges),):
        raise ValueError(
            f"need one boundary value per boundary edge "
            f"({len(mesh.boundary_edges)}), got shape {g.shape}"
        )
    if not np.all(np.isfinite(g)):
        raise ValueError("missing/non-finite boundary value")
    n = A.shape[0]
    bmask = np.zeros(n, dtype=bool)
    bmask[mesh.boundary_edges] = True
    interior = np.nonzero(~bmask)[0]
    boundary = mesh.boundary_edges
    A = A.tocsr()
    A_ii = A[interior][:, interior]
    A_ib = A[interior][:, boundary]
    rhs_i = rhs[interior] - A_ib @ g
    return ConstrainedSystem(
        matrix=A_ii.tocsr(),
        rhs=rhs_i,
        interior=interior,
        boundary=boundary,
        boundary_values=g,
        n_total=n,
    )


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def l2_norm(cache, u):
    vals = eval_at_quad(cache, u)
    w = cache.quad_weights_flat()
    return float(np.sqrt(np.sum(w * np.sum(np.abs(vals) ** 2, axis=2))))


def hcurl_norm(cache, u):
    vals = eval_at_quad(cache, u)
    w = cache.quad_weights_flat()
    l2sq = np.sum(w * np.sum(np.abs(vals) ** 2, axis=2))
    c = curl_per_triangle(cache, u)
    curlsq = np.sum(cache.areas * np.abs(c) ** 2)
    return float(np.sqrt(l2sq + curlsq))


def relative_l2_error(cache, u, v):
    """||u - v||_L2 / ||v||_L2 on a shared mesh."""
    if u.mesh is not v.mesh:
        raise ValueError("fields must live on the same mesh")
    denom = l2_norm(cache, v)
    if denom == 0.0:
        raise ZeroNormError("reference field has zero L2 norm")
    return l2_norm(cache, u - v) / denom


def relative_hcurl_error(cache, u, v):
    denom = hcurl_norm(cache, v)
    if denom == 0.0:
        raise ZeroNormError("reference field has zero H(curl) norm")
    return hcurl_norm(cache, u - v) / denom


def sample_l2_norm(cache, samples):
    """L2 norm of quadrature-point samples, shape (T,Q) or (T,Q,2)."""
    samples = np.asarray(samples)
    w = cache.quad_weights_flat()
    mag = np.abs(samples) ** 2
    if samples.ndim == 3:
        mag = mag.sum(axis=2)
    return float(np.sqrt(np.sum(w * mag)))


def relative_sample_error(cache, a, b):
    denom = sample_l2_norm(cache, b)
    if denom == 0.0:
        raise ZeroNormError("reference samples have zero norm")
    return sample_l2_norm(cache, np.asarray(a) - np.asarray(b)) / denom
