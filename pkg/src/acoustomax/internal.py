"""Internal functional: direct sampling, measured extraction, vectorization.

The scalar functional for auxiliary field F is

    Q(x) = (w^2 eps g_eps + i w sig g_sig) F(x).E(x) + i w g_J J(x).F(x)

sampled at the interior quadrature points.  The measured route recovers the
same samples from boundary data alone: the O(delta) part of the boundary
functional equals the cosine/sine transform of Q, so sweeping the acoustic
wave vector over a k-grid and inverting the transform reproduces Q(x).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from . import fem, forward
from .forward import AcousticWave, ValidationError


class HypothesisViolationError(Exception):
    """Too many quadrature points with ill-conditioned vectorization."""


# ---------------------------------------------------------------------------
# direct route
# ---------------------------------------------------------------------------

def scalar_Q_direct(cache, medium, source, E, F):
    """Q samples (T,Q) from solved fields E, F and the analytic source."""
    if E.mesh is not cache.mesh or F.mesh is not cache.mesh:
        raise ValueError("fields live on a different mesh")
    pts = cache.points.reshape(-1, 2)
    kappa = medium.kappa_at(pts).reshape(cache.points.shape[:2])
    Ev = fem.eval_at_quad(cache, E)
    Fv = fem.eval_at_quad(cache, F)
    q = kappa * np.einsum("tqi,tqi->tq", Fv, Ev)
    if source is not None and medium.gammas.J != 0.0:
        Jv = forward._source_samples(cache, source)
        q = q + 1j * medium.omega * medium.gammas.J * np.einsum(
            "tqi,tqi->tq", Jv, Fv
        )
    return q


# ---------------------------------------------------------------------------
# boundary functional (left side of the modulation identity)
# ---------------------------------------------------------------------------

def boundary_functional(cache, trace_d, trace_aux, omega):
    """i w * boundary integral of [ -H_d (F.t) + G (E_d.t) ] ds.

    Traces store h = -H (the z x n scalar of n x H), so the integrand is
    h_d * g_aux - h_aux * g_d.  The sign convention is pinned by the
    volumetric identity test in the suite.
    """
    if trace_d.g.shape != trace_aux.g.shape:
        raise ValueError("traces sampled on different boundary quadratures")
    integrand = trace_d.h * trace_aux.g - trace_aux.h * trace_d.g
    return complex(1j * omega * np.sum(cache.bnd.weights * integrand))


def volumetric_functional(cache, medium, source, E_d, F, modulation=None):
    """Volume side of the identity: integral of
    [w^2 (eps_d - eps) + i w (sig_d - sig)] F.E_d + i w J_d.F dx."""
    w = medium.omega
    wq = cache.quad_weights_flat()
    pts = cache.points.reshape(-1, 2)
    Ev = fem.eval_at_quad(cache, E_d)
    Fv = fem.eval_at_quad(cache, F)
    FE = np.einsum("tqi,tqi->tq", Fv, Ev)
    out = 0.0 + 0.0j
    if modulation is not None:
        cosv = modulation.cos_at(pts).reshape(wq.shape)
        eps = medium.eps_r_at(pts).reshape(wq.shape)
        sig = medium.sigma_at(pts).reshape(wq.shape)
        d_eps = eps * modulation.delta * medium.gammas.eps * cosv
        d_sig = sig * modulation.delta * medium.gammas.sigma * cosv
        out += np.sum(wq * (w**2 * d_eps + 1j * w * d_sig) * FE)
    if source is not None:
        Jv = forward._source_samples(cache, source)
        if modulation is not None:
            Jv = Jv * (1.0 + modulation.delta * medium.gammas.J
                       * cosv)[:, :, None]
        out += np.sum(wq * 1j * w * np.einsum("tqi,tqi->tq", Jv, Fv))
    return complex(out)


# ---------------------------------------------------------------------------
# measured route
# ---------------------------------------------------------------------------

@dataclass
class ModulationSweep:
    """k-grid and phase set for the measured extraction of Q.

    The grid holds wave vectors (m dk, n dk) for |m dk| <= k_max, swept at
    phases 0 and -pi/2 (cosine and sine quadratures).  dk must satisfy the
    Nyquist bound dk <= pi / support_radius for the compactly-periodizable
    inversion to be valid.
    """

    k_max: float
    dk: float
    delta: float
    support_radius: float = 1.0
    grid_step: float = 0.02
    phases: tuple = (0.0, -np.pi / 2.0)

    def __post_init__(self):
        if self.k_max <= 0 or self.dk <= 0:
            raise ValidationError("k_max and dk must be positive")
        if self.dk > np.pi / self.support_radius + 1e-12:
            raise ValidationError(
                f"Nyquist violation: dk={self.dk:.4f} exceeds "
                f"pi/support_radius={np.pi / self.support_radius:.4f}"
            )
        if not 0.0 < self.delta <= 0.1:
            raise ValidationError(f"delta must lie in (0, 0.1], got {self.delta}")

    def k_values(self):
        m = int(np.floor(self.k_max / self.dk + 1e-9))
        return self.dk * np.arange(-m, m + 1)


@dataclass
class SweepRecord:
    kx: float
    ky: float
    phase: float
    M: list  # boundary functional per auxiliary index


def measured_Q(cache, medium, source, aux_fields, sweep, workers=1):
    """Recover Q samples for each auxiliary field from boundary data alone.

    For every (k, phase) the modulated problem is solved and the boundary
    functional recorded; (M(k,phase) - M(0))/delta estimates the cosine
    (phase 0) and sine (phase -pi/2) transforms of Q, combined into
    qhat(k) = integral Q exp(i k.x) dx and inverted on a Cartesian grid:
    Q(x) = (2 pi)^-2 sum qhat(k) exp(-i k.x) dk^2, then bilinearly
    resampled to the quadrature points.

    Returns (list of Q sample arrays per auxiliary field, list of
    SweepRecord).  Failure of any modulated solve aborts with the offending
    (k, phase) named.
    """
    w = medium.omega
    aux_traces = [forward.extract_traces(cache, medium, F) for F in aux_fields]
    E0 = forward.solve_impedance(cache, medium, source=source)
    tr0 = forward.extract_traces(cache, medium, E0)
    M0 = [boundary_functional(cache, tr0, trF, w) for trF in aux_traces]

    ks = sweep.k_values()
    nk = len(ks)
    tasks = [
        (ix, iy, ip, kx, ky, ph)
        for ix, kx in enumerate(ks)
        for iy, ky in enumerate(ks)
        for ip, ph in enumerate(sweep.phases)
    ]

    def run(task):
        ix, iy, ip, kx, ky, ph = task
        try:
            wave = AcousticWave((kx, ky), ph, sweep.delta)
            Ed = forward.solve_impedance(cache, medium, source=source,
                                         modulation=wave)
        except Exception as exc:
            raise RuntimeError(
                f"modulated solve failed at k=({kx:.4f},{ky:.4f}), "
                f"phase={ph:.4f}: {exc}"
            ) from exc
        trd = forward.extract_traces(cache, medium, Ed)
        return [boundary_functional(cache, trd, trF, w) for trF in aux_traces]

    nj = len(aux_fields)
    M = np.empty((nk, nk, len(sweep.phases), nj), dtype=np.complex128)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    records = []
    for task, vals in zip(tasks, results):
        ix, iy, ip, kx, ky, ph = task
        M[ix, iy, ip, :] = vals
        records.append(SweepRecord(kx=kx, ky=ky, phase=ph, M=list(vals)))

    # qhat(k) = cosine part + i * sine part, per auxiliary field
    qhat = (
        (M[:, :, 0, :] - np.asarray(M0)[None, None, :])
        + 1j * (M[:, :, 1, :] - np.asarray(M0)[None, None, :])
    ) / sweep.delta

    # inverse transform on a Cartesian grid covering the disk
    extent = cache.mesh.radius + 2 * sweep.grid_step
    gx = np.arange(-extent, extent + sweep.grid_step / 2, sweep.grid_step)
    Ex = np.exp(-1j * np.outer(gx, ks))  # (Nx, nk)
    scale = (sweep.dk / (2.0 * np.pi)) ** 2
    T, Qn = cache.points.shape[:2]
    pts = cache.points.reshape(-1, 2)
    out = []
    for j in range(nj):
        grid = scale * (Ex @ qhat[:, :, j] @ Ex.T)  # (Nx, Ny): x rows, y cols
        interp = RegularGridInterpolator(
            (gx, gx), grid, method="linear", bounds_error=True
        )
        out.append(interp(pts).reshape(T, Qn))
    return out, records


# ---------------------------------------------------------------------------
# vectorization and noise
# ---------------------------------------------------------------------------

def _cond_2x2(F1, F2):
    """Spectral condition numbers of per-point 2x2 matrices [F1; F2]."""
    t = (np.abs(F1) ** 2).sum(axis=-1) + (np.abs(F2) ** 2).sum(axis=-1)
    det = F1[..., 0] * F2[..., 1] - F1[..., 1] * F2[..., 0]
    d = np.abs(det) ** 2
    disc = np.sqrt(np.maximum(t**2 - 4.0 * d, 0.0))
    smax = np.sqrt((t + disc) / 2.0)
    smin = np.sqrt(np.maximum((t - disc) / 2.0, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(smin > 0.0, smax / smin, np.inf)
    return cond, det


def vectorize_Q(cache, Q1, Q2, F1, F2, cond_threshold=1e8):
    """Solve the per-point 2x2 system [F1; F2] v = [Q1; Q2] for v = Qvec.

    F1, F2 are solved auxiliary fields (FieldFE) or their quadrature-point
    samples.  Points whose matrix condition number exceeds the threshold
    are flagged and filled with the value at the nearest well-conditioned
    quadrature point; more than 5% flagged raises HypothesisViolationError.
    Returns (Qvec (T,Q,2), cond (T,Q), flagged mask).
    """
    F1v = fem.eval_at_quad(cache, F1) if isinstance(F1, fem.FieldFE) else np.asarray(F1)
    F2v = fem.eval_at_quad(cache, F2) if isinstance(F2, fem.FieldFE) else np.asarray(F2)
    Q1 = np.asarray(Q1, dtype=np.complex128)
    Q2 = np.asarray(Q2, dtype=np.complex128)
    if not (Q1.shape == Q2.shape == F1v.shape[:-1] == F2v.shape[:-1]):
        raise ValueError("Q and F samples must share quadrature points")
    cond, det = _cond_2x2(F1v, F2v)
    flagged = ~np.isfinite(cond) | (cond > cond_threshold)
    frac = float(np.mean(flagged))
    if frac > 0.05:
        raise HypothesisViolationError(
            f"{100 * frac:.1f}% of quadrature points exceed condition "
            f"threshold {cond_threshold:.1e}; auxiliary fields are not "
            "pointwise linearly independent"
        )
    safe_det = np.where(flagged, 1.0, det)
    vx = (Q1 * F2v[..., 1] - Q2 * F1v[..., 1]) / safe_det
    vy = (F1v[..., 0] * Q2 - F2v[..., 0] * Q1) / safe_det
    Qvec = np.stack([vx, vy], axis=-1)
    if np.any(flagged):
        pts = cache.points.reshape(-1, 2)
        flat = flagged.ravel()
        good = np.nonzero(~flat)[0]
        bad = np.nonzero(flat)[0]
        tree = cKDTree(pts[good])
        _, nn = tree.query(pts[bad])
        Qflat = Qvec.reshape(-1, 2)
        Qflat[bad] = Qflat[good[nn]]
        Qvec = Qflat.reshape(Qvec.shape)
    return Qvec, cond, flagged


def add_noise(samples, level, seed):
    """Multiplicative Gaussian noise: Q * (1 + level * xi), xi ~ N(0,1) iid."""
    if level < 0:
        raise ValueError(f"noise level must be nonnegative, got {level}")
    samples = np.asarray(samples)
    if level == 0.0:
        return samples.copy()
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(samples.shape)
    return samples * (1.0 + level * xi)


# ---------------------------------------------------------------------------
# dataset container and CSV schemas
# ---------------------------------------------------------------------------

INTERNAL_CSV_HEADER = (
    "x,y,re_Q1,im_Q1,re_Q2,im_Q2,re_Qx,im_Qx,re_Qy,im_Qy,cond"
)
SWEEP_CSV_HEADER = "kx,ky,phase,re_M,im_M"


@dataclass
class InternalDataSet:
    """Scalar and vectorized internal-functional samples at quadrature points."""

    Q1: np.ndarray
    Q2: np.ndarray
    Qvec: np.ndarray
    cond: np.ndarray
    flagged: np.ndarray
    mode: str = "direct"
    noise_level: float = 0.0
    seed: int = 0
    records: list = field(default_factory=list)

    def __post_init__(self):
        if not (self.Q1.shape == self.Q2.shape == self.cond.shape
                == self.flagged.shape == self.Qvec.shape[:-1]):
            raise ValueError("internal data arrays must share quadrature points")

    def conditioning_stats(self):
        finite = self.cond[np.isfinite(self.cond)]
        return {
            "cond_max": float(finite.max()) if finite.size else float("inf"),
            "cond_median": float(np.median(finite)) if finite.size else float("inf"),
            "flagged_fraction": float(np.mean(self.flagged)),
        }


def export_internal_csv(cache, data, path):
    pts = cache.points.reshape(-1, 2)
    q1 = data.Q1.ravel()
    q2 = data.Q2.ravel()
    qv = data.Qvec.reshape(-1, 2)
    cond = data.cond.ravel()
    table = np.column_stack(
        [
            pts[:, 0], pts[:, 1],
            q1.real, q1.imag, q2.real, q2.imag,
            qv[:, 0].real, qv[:, 0].imag, qv[:, 1].real, qv[:, 1].imag,
            np.where(np.isfinite(cond), cond, -1.0),
        ]
    )
    np.savetxt(path, table, delimiter=",", header=INTERNAL_CSV_HEADER, comments="")


def export_sweep_csv(records, j, path):
    """Sweep dump for auxiliary index j (0-based into record.M)."""
    rows = [[r.kx, r.ky, r.phase, r.M[j].real, r.M[j].imag] for r in records]
    np.savetxt(path, np.asarray(rows), delimiter=",",
               header=SWEEP_CSV_HEADER, comments="")
