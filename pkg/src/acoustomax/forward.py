"""Boundary-value problems of the modulated time-harmonic Maxwell model.

All computation uses the nondimensional variables: frequency omega [1/cm],
relative permittivity eps_r, scaled conductivity sigma [1/cm], source J
[field units], lengths in cm.  In the 2D cross-section the electric field
is in-plane and the magnetic field is the scalar H = curl E / (i omega mu).

The weak problem solved everywhere (test functions phi, unconjugated):

    (1/mu curl E, curl phi) - ((w^2 eps + i w sig) E, phi)
        - i w <lam E_t, phi_t>  =  i w (J, phi) + i w <g, phi_t>

Acoustic modulation multiplies eps, sigma and J samples pointwise by
(1 + delta * gamma * cos(k.x + phase)) with the respective gamma.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fem, linsolve
from .fem import FieldFE


class ValidationError(Exception):
    """A model assumption (bounds, support, positivity) is violated."""


SOURCE_MARGIN = 0.05  # cm; compact support must stay this far inside the rim


# ---------------------------------------------------------------------------
# medium
# ---------------------------------------------------------------------------

@dataclass
class Gammas:
    eps: float
    sigma: float
    J: float


@dataclass
class Region:
    """Piecewise-constant material patch; disk or polygon."""

    eps_r: float
    sigma: float
    shape: str = "disk"
    center: tuple = (0.0, 0.0)
    radius: float = 0.0
    vertices: np.ndarray = None

    def contains(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if self.shape == "disk":
            d = pts - np.asarray(self.center)[None, :]
            return np.einsum("ni,ni->n", d, d) <= self.radius**2
        if self.shape == "polygon":
            verts = np.asarray(self.vertices, dtype=np.float64)
            x, y = pts[:, 0], pts[:, 1]
            inside = np.zeros(len(pts), dtype=bool)
            n = len(verts)
            for i in range(n):
                x1, y1 = verts[i]
                x2, y2 = verts[(i + 1) % n]
                crosses = (y1 > y) != (y2 > y)
                with np.errstate(divide="ignore", invalid="ignore"):
                    xin = (x2 - x1) * (y - y1) / (y2 - y1) + x1
                inside ^= crosses & (x < xin)
            return inside
        raise ValidationError(f"unknown region shape {self.shape!r}")


@dataclass
class MediumModel:
    """Frequency, impedance and piecewise-constant material map."""

    omega: float
    impedance: float
    background_eps: float
    background_sigma: float
    gammas: Gammas
    regions: list = field(default_factory=list)
    mu_r: float = 1.0
    K1: float = 100.0
    K2: float = 0.01

    def _lookup(self, points, attr, background):
        pts = np.asarray(points, dtype=np.float64)
        out = np.full(len(pts), background)
        for region in self.regions:  # later regions win on overlap
            mask = region.contains(pts)
            out[mask] = getattr(region, attr)
        return out

    def eps_r_at(self, points):
        return self._lookup(points, "eps_r", self.background_eps)

    def sigma_at(self, points):
        return self._lookup(points, "sigma", self.background_sigma)

    def kappa_at(self, points):
        """w^2 eps gamma_eps + i w sigma gamma_sigma, the I.1 denominator."""
        w = self.omega
        return (
            w**2 * self.eps_r_at(points) * self.gammas.eps
            + 1j * w * self.sigma_at(points) * self.gammas.sigma
        )

    def background_wavenumber(self):
        """sqrt(w^2 eps_bg + i w sig_bg), principal branch (Re >= 0)."""
        return np.sqrt(
            complex(self.omega**2 * self.background_eps
                    + 1j * self.omega * self.background_sigma)
        )

    def validate(self, points=None):
        if self.omega <= 0:
            raise ValidationError(f"omega must be positive, got {self.omega}")
        if self.impedance <= 0:
            raise ValidationError(f"impedance must be positive, got {self.impedance}")
        if self.mu_r != 1.0:
            raise ValidationError(f"mu_r must equal 1, got {self.mu_r}")
        if not 0 < self.K2 < self.K1:
            raise ValidationError(f"need 0 < K2 < K1, got K1={self.K1} K2={self.K2}")
        vals = [(self.background_eps, self.background_sigma)] + [
            (r.eps_r, r.sigma) for r in self.regions
        ]
        for eps, sig in vals:
            if not self.K1 > eps >= self.K2:
                raise ValidationError(
                    f"eps_r={eps} violates K1 > eps_r >= K2 ({self.K1}, {self.K2})"
                )
            if not self.K1 > sig >= 0.0:
                raise ValidationError(
                    f"sigma={sig} violates K1 > sigma >= 0 ({self.K1})"
                )
        if points is not None:
            eps = self.eps_r_at(points)
            sig = self.sigma_at(points)
            if not (np.all(eps < self.K1) and np.all(eps >= self.K2)):
                raise ValidationError("pointwise eps_r bound violated")
            if not (np.all(sig < self.K1) and np.all(sig >= 0.0)):
                raise ValidationError("pointwise sigma bound violated")


# ---------------------------------------------------------------------------
# sources and modulation
# ---------------------------------------------------------------------------

@dataclass
class SourceBump:
    """Compactly supported radial bump (1 - (r/R)^2)^2 with vector amplitude."""

    center: tuple
    radius: float
    amplitude: tuple  # complex 2-vector

    def profile(self, points):
        d = np.asarray(points) - np.asarray(self.center)[None, :]
        r2 = np.einsum("ni,ni->n", d, d) / self.radius**2
        out = np.zeros(len(d))
        inside = r2 < 1.0
        out[inside] = (1.0 - r2[inside]) ** 2
        return out


@dataclass
class SourceModel:
    bumps: list

    def sample(self, points):
        pts = np.asarray(points, dtype=np.float64)
        out = np.zeros((len(pts), 2), dtype=np.complex128)
        for bump in self.bumps:
            amp = np.asarray(bump.amplitude, dtype=np.complex128)
            out += bump.profile(pts)[:, None] * amp[None, :]
        return out

    def sample_at_cache(self, cache):
        T, Q = cache.points.shape[:2]
        return self.sample(cache.points.reshape(-1, 2)).reshape(T, Q, 2)

    def support_radius(self):
        if not self.bumps:
            return 0.0
        return max(
            float(np.linalg.norm(b.center)) + b.radius for b in self.bumps
        )

    def validate(self, domain_radius, margin=SOURCE_MARGIN):
        for b in self.bumps:
            if b.radius <= 0:
                raise ValidationError(f"bump radius must be positive, got {b.radius}")
            reach = float(np.linalg.norm(b.center)) + b.radius
            if reach > domain_radius - margin:
                raise ValidationError(
                    f"source bump support reaches {reach:.3f} cm; must stay "
                    f"within {domain_radius - margin:.3f} cm (margin {margin} cm)"
                )


class SumSource:
    """Superposition of source objects exposing sample_at_cache."""

    def __init__(self, *parts):
        self.parts = parts

    def sample_at_cache(self, cache):
        T, Q = cache.points.shape[:2]
        out = np.zeros((T, Q, 2), dtype=np.complex128)
        for p in self.parts:
            out += p.sample_at_cache(cache)
        return out


@dataclass
class AcousticWave:
    """Plane modulation wave: coefficient factor cos(k.x + phase), amplitude delta."""

    k: tuple
    phase: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.1:
            raise ValidationError(f"delta must lie in (0, 0.1], got {self.delta}")

    def cos_at(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return np.cos(pts @ np.asarray(self.k, dtype=np.float64) + self.phase)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

@dataclass
class BoundaryTrace:
    """Tangential samples at boundary quadrature points.

    g: E.t (t = z x n, counterclockwise tangent), shape (B,n).
    h: scalar tangential component of n x H, equal to -H in 2D; for
    impedance solutions h = -lam*g up to discretization error.
    """

    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if self.g.shape != self.h.shape:
            raise ValueError("g and h sample arrays must share a shape")

    def circulations(self, cache):
        """Per-boundary-edge circulations along the global edge orientation."""
        signs = cache.mesh.boundary_signs
        return signs * np.einsum("bq,bq->b", cache.bnd.weights, self.g)


def extract_traces(cache, medium, u):
    """Boundary tangential-E and (n x H) samples of a solved field."""
    if u.mesh is not cache.mesh:
        raise ValueError("field was not solved on this mesh")
    d = u.dofs[cache.mesh.triangle_edges[cache.mesh.boundary_tri]]
    g = np.einsum("ba,bqa->bq", d, cache.bnd_basis_tan)
    curls = fem.curl_per_triangle(cache, u)[cache.mesh.boundary_tri]
    H = curls / (1j * medium.omega * medium.mu_r)
    h = -np.repeat(H[:, None], cache.bnd.weights.shape[1], axis=1)
    return BoundaryTrace(g=g, h=h)


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

def _source_samples(cache, source):
    if source is None:
        return None
    if hasattr(source, "sample_at_cache"):
        return np.asarray(source.sample_at_cache(cache), dtype=np.complex128)
    T, Q = cache.points.shape[:2]
    return np.asarray(source(cache.points.reshape(-1, 2)),
                      dtype=np.complex128).reshape(T, Q, 2)


def system_matrix(cache, medium, modulation=None):
    forms = fem.assemble_forms(cache, medium, modulation)
    w = medium.omega
    return (
        forms["S"]
        - w**2 * forms["M_eps"]
        - 1j * w * forms["M_sig"]
        - 1j * w * forms["B_lam"]
    ).tocsc()


def solve_impedance(cache, medium, source=None, g_data=None, modulation=None):
    """Solve the impedance problem; source and/or boundary data g.

    `g_data` is scalar tangential data (samples (B,n) or callable), entering
    the right-hand side as i*omega*<g, phi_t>.  Modulation perturbs eps,
    sigma and the source by their gammas; modulated eps must stay positive.
    """
    medium.validate()
    if modulation is not None:
        pts = cache.points.reshape(-1, 2)
        cosv = modulation.cos_at(pts)
        eps_mod = medium.eps_r_at(pts) * (
            1.0 + modulation.delta * medium.gammas.eps * cosv
        )
        if np.min(eps_mod) <= 0.0:
            raise ValidationError(
                f"modulated eps_r reaches {np.min(eps_mod):.3e} <= 0; "
                "delta too large"
            )
        sig_mod = medium.sigma_at(pts) * (
            1.0 + modulation.delta * medium.gammas.sigma * cosv
        )
        if np.min(sig_mod) < 0.0:
            raise ValidationError("modulated sigma became negative; delta too large")
    A = system_matrix(cache, medium, modulation)
    w = medium.omega
    rhs = np.zeros(cache.n_edges, dtype=np.complex128)
    samples = _source_samples(cache, source)
    if samples is not None:
        if modulation is not None:
            T, Q = cache.points.shape[:2]
            cosv = modulation.cos_at(cache.points.reshape(-1, 2)).reshape(T, Q)
            samples = samples * (
                1.0 + modulation.delta * medium.gammas.J * cosv
            )[:, :, None]
        rhs += 1j * w * fem.load_vector(cache, samples)
    if g_data is not None:
        rhs += 1j * w * fem.boundary_load_vector(cache, g_data)
    x, report = linsolve.solve(A, rhs)
    return FieldFE(cache.mesh, x, report=report)


def plane_wave(medium, j):
    """Analytic auxiliary plane wave: field, scalar curl, and wavenumber.

    j=1: (exp(-i k y), 0); j=2: (0, exp(-i k x)) with the background
    wavenumber k (principal square root).
    """
    k = medium.background_wavenumber()

    if j == 1:
        def field(points):
            pts = np.asarray(points, dtype=np.float64)
            out = np.zeros((len(pts), 2), dtype=np.complex128)
            out[:, 0] = np.exp(-1j * k * pts[:, 1])
            return out

        def curl(points):
            pts = np.asarray(points, dtype=np.float64)
            return 1j * k * np.exp(-1j * k * pts[:, 1])

    elif j == 2:
        def field(points):
            pts = np.asarray(points, dtype=np.float64)
            out = np.zeros((len(pts), 2), dtype=np.complex128)
            out[:, 1] = np.exp(-1j * k * pts[:, 0])
            return out

        def curl(points):
            pts = np.asarray(points, dtype=np.float64)
            return -1j * k * np.exp(-1j * k * pts[:, 0])

    else:
        raise ValueError(f"auxiliary index must be 1 or 2, got {j}")
    return field, curl, k


def plane_wave_boundary_data(cache, medium, j):
    """Scalar impedance data g_j = curl(E_j)/(i w) - lam E_j.t on the boundary."""
    field_fn, curl_fn, _ = plane_wave(medium, j)
    pts = cache.bnd.points
    B, n = pts.shape[:2]
    flat = pts.reshape(-1, 2)
    vals = field_fn(flat).reshape(B, n, 2)
    curls = curl_fn(flat).reshape(B, n)
    tan = np.einsum("bqi,bi->bq", vals, cache.bnd.tangents)
    return curls / (1j * medium.omega) - medium.impedance * tan


def auxiliary_plane_wave(cache, medium, j):
    """Solve the source-free impedance problem with plane-wave data g_j.

    The returned field plays the role of the conjugated auxiliary solution
    (the equation is formulated for it directly); no conjugation is applied
    anywhere downstream.
    """
    g = plane_wave_boundary_data(cache, medium, j)
    return solve_impedance(cache, medium, source=None, g_data=g)


# ---------------------------------------------------------------------------
# CSV export (schemas are part of the external interface)
# ---------------------------------------------------------------------------

FIELD_CSV_HEADER = "x,y,re_u1,im_u1,re_u2,im_u2"
TRACE_CSV_HEADER = "s,x,y,re_g,im_g,re_h,im_h"


def export_field_csv(cache, field_or_samples, path):
    """One row per interior quadrature point: x,y,re_u1,im_u1,re_u2,im_u2."""
    if isinstance(field_or_samples, FieldFE):
        vals = fem.eval_at_quad(cache, field_or_samples)
    else:
        vals = np.asarray(field_or_samples, dtype=np.complex128)
    pts = cache.points.reshape(-1, 2)
    v = vals.reshape(-1, 2)
    data = np.column_stack(
        [pts[:, 0], pts[:, 1], v[:, 0].real, v[:, 0].imag, v[:, 1].real, v[:, 1].imag]
    )
    np.savetxt(path, data, delimiter=",", header=FIELD_CSV_HEADER, comments="")


def boundary_arclength(cache):
    """Arclength parameter s for every boundary quadrature point.

    Boundary edges are ordered counterclockwise by midpoint angle starting
    at angle -pi; s accumulates polygonal segment lengths.
    """
    mids = cache.mesh.boundary_midpoints()
    order = np.argsort(np.arctan2(mids[:, 1], mids[:, 0]), kind="stable")
    lengths = cache.mesh.boundary_lengths()
    B, n = cache.bnd.weights.shape
    s = np.empty((B, n))
    xg, _ = np.polynomial.legendre.leggauss(n)
    frac = 0.5 * (xg + 1.0)
    offset = 0.0
    for b in order:
        s[b] = offset + frac * lengths[b]
        offset += lengths[b]
    return s, order


def export_trace_csv(cache, trace, path):
    """One row per boundary quadrature point: s,x,y,re_g,im_g,re_h,im_h."""
    s, order = boundary_arclength(cache)
    pts = cache.bnd.points
    rows = []
    for b in order:
        for q in range(pts.shape[1]):
            rows.append(
                [
                    s[b, q],
                    pts[b, q, 0],
                    pts[b, q, 1],
                    trace.g[b, q].real,
                    trace.g[b, q].imag,
                    trace.h[b, q].real,
                    trace.h[b, q].imag,
                ]
            )
    np.savetxt(path, np.asarray(rows), delimiter=",",
               header=TRACE_CSV_HEADER, comments="")
