"""Case classification and current-density reconstruction.

Uniqueness subcases (gamma_J = 0): I.1 when the scalar coefficient
kappa = w^2 eps g_eps + i w sig g_sig is bounded away from zero on the
whole disk (source determined), I.2 otherwise.  (gamma_J != 0): II.1 all
gammas equal (non-unique), II.2/II.3 g_eps = g_J with sigma bounded away
from zero / vanishing somewhere, II.4 g_eps != g_J (unique; reduced
coefficients a = w^2 eps (1 - g_eps/g_J), b = w sig (1 - g_sig/g_J)).

Reconstructions: I.1 divides the vectorized data by kappa and projects into
the edge space; II.4 (and II.2) solve the reduced curl-curl problem with
tangential Dirichlet data.  Both recover J by testing the strong equation
against edge basis functions (mass-matrix solve).
"""

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import fem, linsolve
from .fem import FieldFE
from .forward import ValidationError, SOURCE_MARGIN


class CaseViolationError(Exception):
    """Reconstruction requested for a medium outside its case."""


class CaseLabel(Enum):
    UNIQUE_I1 = "UniqueI1"
    NONUNIQUE_I2 = "NonUniqueI2"
    NONUNIQUE_II1 = "NonUniqueII1"
    UNIQUE_II2 = "UniqueII2"
    NONUNIQUE_II3 = "NonUniqueII3"
    UNIQUE_II4 = "UniqueII4"


UNIQUE_CASES = {CaseLabel.UNIQUE_I1, CaseLabel.UNIQUE_II2, CaseLabel.UNIQUE_II4}


@dataclass
class CaseInfo:
    label: CaseLabel
    a: np.ndarray = None  # (T,Q) samples, only when gamma_J != 0
    b: np.ndarray = None

    @property
    def unique(self):
        return self.label in UNIQUE_CASES


def _gamma_eq(x, y):
    return abs(x - y) <= 1e-12 * max(1.0, abs(x), abs(y))


def _bounded_away(samples, tol_factor):
    m = np.abs(samples)
    top = m.max()
    return top > 0.0 and m.min() >= tol_factor * top


def classify_case(cache, medium, tol_factor=1e-8):
    """Decide the uniqueness subcase for this medium on this mesh."""
    g = medium.gammas
    pts = cache.points.reshape(-1, 2)
    shape = cache.points.shape[:2]
    if _gamma_eq(g.J, 0.0):
        kappa = medium.kappa_at(pts)
        if _bounded_away(kappa, tol_factor):
            return CaseInfo(CaseLabel.UNIQUE_I1)
        return CaseInfo(CaseLabel.NONUNIQUE_I2)
    w = medium.omega
    a = (w**2 * medium.eps_r_at(pts) * (1.0 - g.eps / g.J)).reshape(shape)
    b = (w * medium.sigma_at(pts) * (1.0 - g.sigma / g.J)).reshape(shape)
    if _gamma_eq(g.eps, g.J):
        if _gamma_eq(g.sigma, g.J):
            return CaseInfo(CaseLabel.NONUNIQUE_II1, a, b)
        if _bounded_away(medium.sigma_at(pts), tol_factor):
            return CaseInfo(CaseLabel.UNIQUE_II2, a, b)
        return CaseInfo(CaseLabel.NONUNIQUE_II3, a, b)
    return CaseInfo(CaseLabel.UNIQUE_II4, a, b)


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

@dataclass
class ReconstructionResult:
    E_rec: FieldFE
    J_rec: FieldFE
    errors: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def project_l2(cache, samples):
    """L2 projection of quadrature-point samples into the edge space."""
    M1 = fem.mass_matrix(cache)
    rhs = fem.load_vector(cache, np.asarray(samples, dtype=np.complex128))
    x, report = linsolve.solve(M1.astype(np.complex128), rhs)
    return FieldFE(cache.mesh, x, report=report)


def recover_J_galerkin(cache, medium, E):
    """Solve i w (J, phi) = (curl E, curl phi) - ((w^2 eps + i w sig) E, phi)
    - i w <lam E_t, phi_t> for J in the edge space."""
    forms = fem.assemble_forms(cache, medium)
    w = medium.omega
    rhs = (
        forms["S"] @ E.dofs
        - w**2 * (forms["M_eps"] @ E.dofs)
        - 1j * w * (forms["M_sig"] @ E.dofs)
        - 1j * w * (forms["B_lam"] @ E.dofs)
    ) / (1j * w)
    M1 = fem.mass_matrix(cache)
    x, report = linsolve.solve(M1.astype(np.complex128), rhs)
    return FieldFE(cache.mesh, x, report=report)


def _error_block(cache, E_rec, J_rec, truth):
    """Relative L2 errors against the truth dict (fields may be absent)."""
    errors = {}
    if truth is None:
        return errors
    if truth.get("J") is not None:
        errors["J_rel_l2"] = fem.relative_l2_error(cache, J_rec, truth["J"])
    if truth.get("E") is not None:
        errors["E_rel_l2"] = fem.relative_l2_error(cache, E_rec, truth["E"])
    return errors


# ---------------------------------------------------------------------------
# Case I.1
# ---------------------------------------------------------------------------

def reconstruct_I1(cache, medium, data, truth=None, tol_factor=1e-8):
    """E = Qvec / kappa pointwise, projected to the edge space; then J."""
    info = classify_case(cache, medium, tol_factor)
    if info.label is not CaseLabel.UNIQUE_I1:
        raise CaseViolationError(
            f"reconstruct_I1 requires UniqueI1, classified {info.label.value}"
        )
    pts = cache.points.reshape(-1, 2)
    kappa = medium.kappa_at(pts).reshape(cache.points.shape[:2])
    if not _bounded_away(kappa, tol_factor):
        raise CaseViolationError("kappa falls below tolerance at a quadrature point")
    t0 = time.perf_counter()
    E_samples = data.Qvec / kappa[:, :, None]
    E_rec = project_l2(cache, E_samples)
    J_rec = recover_J_galerkin(cache, medium, E_rec)
    diag = {
        "case": info.label.value,
        "conditioning": data.conditioning_stats(),
        "wall_time": time.perf_counter() - t0,
        "solver": [E_rec.report, J_rec.report],
    }
    return ReconstructionResult(E_rec, J_rec, _error_block(cache, E_rec, J_rec, truth), diag)


# ---------------------------------------------------------------------------
# Case II.4 (and II.2)
# ---------------------------------------------------------------------------

def reconstruct_II4(cache, medium, data, g_circulations, truth=None,
                    tol_factor=1e-8, bc="dirichlet"):
    """Solve curl curl E - (a + i b) E = Qvec / gamma_J with measured
    tangential data, then recover J.

    `g_circulations` holds the measured tangential circulations, one per
    boundary edge.  bc="dirichlet" (default) imposes them strongly;
    bc="impedance" solves the impedance variant for comparison.  The
    pointwise alternative J = (Qvec - kappa E)/(i w gamma_J) is evaluated
    as a diagnostic and its discrepancy against the Galerkin J reported.
    """
    info = classify_case(cache, medium, tol_factor)
    if info.label not in (CaseLabel.UNIQUE_II4, CaseLabel.UNIQUE_II2):
        raise CaseViolationError(
            f"reconstruct_II4 requires UniqueII4/UniqueII2, classified "
            f"{info.label.value}"
        )
    if bc not in ("dirichlet", "impedance"):
        raise ValueError(f"unknown boundary-condition mode {bc!r}")
    t0 = time.perf_counter()
    w = medium.omega
    gJ = medium.gammas.J
    S = fem.stiffness_matrix(cache, 1.0 / medium.mu_r)
    M_a = fem.mass_matrix(cache, info.a, "reduced coefficient a")
    M_b = fem.mass_matrix(cache, info.b, "reduced coefficient b")
    A = (S - M_a - 1j * M_b).astype(np.complex128)
    rhs = fem.load_vector(cache, data.Qvec / gJ)
    if bc == "dirichlet":
        sys = fem.apply_dirichlet_tangential(A.tocsr(), rhs, cache.mesh,
                                             g_circulations)
        x_i, report = linsolve.solve(sys.matrix, sys.rhs)
        E_rec = FieldFE(cache.mesh, sys.expand(x_i), report=report)
    else:
        B_lam = fem.boundary_mass_matrix(cache, medium.impedance)
        x, report = linsolve.solve((A - 1j * w * B_lam).tocsc(), rhs)
        E_rec = FieldFE(cache.mesh, x, report=report)
    J_rec = recover_J_galerkin(cache, medium, E_rec)

    pts = cache.points.reshape(-1, 2)
    kappa = medium.kappa_at(pts).reshape(cache.points.shape[:2])
    Ev = fem.eval_at_quad(cache, E_rec)
    J_pointwise = (data.Qvec - kappa[:, :, None] * Ev) / (1j * w * gJ)
    Jv = fem.eval_at_quad(cache, J_rec)
    denom = fem.sample_l2_norm(cache, Jv)
    discrepancy = (fem.sample_l2_norm(cache, J_pointwise - Jv) / denom
                   if denom > 0 else 0.0)
    diag = {
        "case": info.label.value,
        "bc": bc,
        "conditioning": data.conditioning_stats(),
        "pointwise_J_discrepancy": discrepancy,
        "wall_time": time.perf_counter() - t0,
        "solver": [E_rec.report, J_rec.report],
    }
    return ReconstructionResult(E_rec, J_rec, _error_block(cache, E_rec, J_rec, truth), diag)


# ---------------------------------------------------------------------------
# non-uniqueness demonstrations
# ---------------------------------------------------------------------------

class NonradiatingSource:
    """J_phi = (i w eps - sig) grad(phi) for a P1 bump phi.

    grad(phi) lies exactly in the edge space and has zero tangential trace,
    so adding J_phi to any source changes the field by grad(phi) and leaves
    the boundary measurement unchanged (up to solver tolerance).
    """

    def __init__(self, mesh, medium, center, radius, amplitude=1.0):
        center = np.asarray(center, dtype=np.float64)
        if float(np.linalg.norm(center)) + radius > mesh.radius - SOURCE_MARGIN:
            raise ValidationError(
                "nonradiating bump support must stay strictly interior "
                f"(margin {SOURCE_MARGIN} cm)"
            )
        d = np.linalg.norm(mesh.vertices - center[None, :], axis=1)
        u2 = (d / radius) ** 2
        phi = np.where(u2 < 1.0, amplitude * (1.0 - np.minimum(u2, 1.0)) ** 2, 0.0)
        self.mesh = mesh
        self.medium = medium
        self.phi_vertex_values = phi
        self.grad_phi = fem.p1_gradient_field(mesh, phi)

    def sample_at_cache(self, cache):
        # grad(phi) is piecewise constant; evaluate it per triangle and
        # scale by the coefficient at each quadrature point
        gl = cache.grad_lambda  # (T,3,2)
        pv = self.phi_vertex_values[cache.mesh.triangles]  # (T,3)
        grad = np.einsum("ta,tai->ti", pv, gl).astype(np.complex128)
        pts = cache.points.reshape(-1, 2)
        w = self.medium.omega
        coef = (1j * w * self.medium.eps_r_at(pts)
                - self.medium.sigma_at(pts)).reshape(cache.points.shape[:2])
        return coef[:, :, None] * grad[:, None, :]


def nonradiating_source(mesh, medium, center, radius, amplitude=1.0):
    return NonradiatingSource(mesh, medium, center, radius, amplitude)


# ---------------------------------------------------------------------------
# energy-identity diagnostics
# ---------------------------------------------------------------------------

def energy_identity_residual(cache, medium, u, dQ_samples, dg_samples,
                             caseinfo=None):
    """Normalized residuals of the two energy identities for a difference
    field u with data differences dQ (quadrature samples) and dg (boundary
    tangential samples).

    Real part:  int (1/mu)|curl u|^2 - a |u|^2  =  Re int (dQ . u*) / g_J
    Imag part:  int b |u|^2 + w lam int |dg|^2  = -Im int (dQ . u*) / g_J
    """
    if caseinfo is None:
        caseinfo = classify_case(cache, medium)
    if caseinfo.a is None:
        raise CaseViolationError("energy identities require gamma_J != 0")
    w = medium.omega
    wq = cache.quad_weights_flat()
    uv = fem.eval_at_quad(cache, u)
    usq = np.sum(np.abs(uv) ** 2, axis=2)
    cu = fem.curl_per_triangle(cache, u)
    curl_term = float(np.sum(cache.areas * np.abs(cu) ** 2) / medium.mu_r)
    a_term = float(np.sum(wq * caseinfo.a * usq))
    b_term = float(np.sum(wq * caseinfo.b * usq))
    if dg_samples is None:
        g_term = 0.0
    else:
        g_term = float(w * medium.impedance
                       * np.sum(cache.bnd.weights * np.abs(dg_samples) ** 2))
    dQ = np.asarray(dQ_samples, dtype=np.complex128)
    s = complex(np.sum(wq * np.einsum("tqi,tqi->tq", dQ, uv.conj()))
                / medium.gammas.J)
    lhs_re = curl_term - a_term
    rhs_re = s.real
    lhs_im = b_term + g_term
    rhs_im = -s.imag
    scale_re = curl_term + abs(a_term) + abs(rhs_re)
    scale_im = abs(b_term) + g_term + abs(rhs_im)
    res_re = abs(lhs_re - rhs_re) / scale_re if scale_re > 0 else 0.0
    res_im = abs(lhs_im - rhs_im) / scale_im if scale_im > 0 else 0.0
    return res_re, res_im
