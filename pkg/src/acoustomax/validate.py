"""Mandatory validation gates: manufactured convergence, trace equivalence,
boundary/volume identity.

All gates run on a mild homogeneous-or-single-inclusion medium where the
discretization is well resolved; each returns a dict with the measured
numbers and a boolean verdict at its contracted tolerance.
"""

import numpy as np

from . import fem, forward, internal
from .config import validation_medium, validation_source
from .fem import QuadratureCache
from .forward import AcousticWave
from .mesh import gen_disk_mesh

_AMP = 1.0 + 1.0j


def _manufactured_field(points):
    out = np.empty((len(points), 2), dtype=np.complex128)
    out[:, 0] = _AMP * np.sin(np.pi * points[:, 1])
    out[:, 1] = _AMP * np.sin(np.pi * points[:, 0])
    return out


def _manufactured_curl(points):
    return _AMP * np.pi * (np.cos(np.pi * points[:, 0])
                           - np.cos(np.pi * points[:, 1]))


def solve_manufactured(cache, medium):
    """Impedance solve whose exact solution is (sin pi y, sin pi x)*(1+i).

    curl curl E_ex = pi^2 E_ex, so the volumetric source is
    J = (pi^2 - w^2 eps - i w sig) E_ex / (i w) and the boundary data is
    g = curl E_ex/(i w) - lam E_ex.t.
    """
    w = medium.omega
    coef = (np.pi**2 - (w**2 * medium.background_eps
                        + 1j * w * medium.background_sigma)) / (1j * w)

    def source(points):
        return coef * _manufactured_field(points)

    pts = cache.bnd.points
    B, n = pts.shape[:2]
    flat = pts.reshape(-1, 2)
    tan = np.einsum("bqi,bi->bq", _manufactured_field(flat).reshape(B, n, 2),
                    cache.bnd.tangents)
    g = _manufactured_curl(flat).reshape(B, n) / (1j * w) - medium.impedance * tan
    return forward.solve_impedance(cache, medium, source=source, g_data=g)


def manufactured_error(cache, medium):
    """H(curl) relative error of the manufactured solve against the exact field."""
    u = solve_manufactured(cache, medium)
    vals = fem.eval_at_quad(cache, u)
    flat = cache.points.reshape(-1, 2)
    exv = _manufactured_field(flat).reshape(vals.shape)
    wq = cache.quad_weights_flat()
    cu = fem.curl_per_triangle(cache, u)
    cex = _manufactured_curl(flat).reshape(wq.shape)
    num = np.sqrt(
        np.sum(wq * np.sum(np.abs(vals - exv) ** 2, axis=2))
        + np.sum(wq * np.abs(cu[:, None] - cex) ** 2)
    )
    den = np.sqrt(
        np.sum(wq * np.sum(np.abs(exv) ** 2, axis=2))
        + np.sum(wq * np.abs(cex) ** 2)
    )
    return float(num / den)


def convergence_gate(levels=(3, 4, 5), err_tol=0.05, order_tol=0.9):
    medium = validation_medium()
    errors = {}
    for L in levels:
        cache = QuadratureCache(gen_disk_mesh(1.0, L))
        errors[L] = manufactured_error(cache, medium)
    orders = [
        float(np.log2(errors[a] / errors[b]))
        for a, b in zip(levels[:-1], levels[1:])
    ]
    ok = errors[4] <= err_tol and all(o >= order_tol for o in orders)
    return {"errors": errors, "orders": orders, "passed": bool(ok)}


def trace_gate(level=4, tol=0.05, check_decrease=True):
    medium = validation_medium()
    source = validation_source()
    out = {}
    levels = (level - 1, level) if check_decrease else (level,)
    for L in levels:
        cache = QuadratureCache(gen_disk_mesh(1.0, L))
        E = forward.solve_impedance(cache, medium, source=source)
        tr = forward.extract_traces(cache, medium, E)
        out[L] = float(np.abs(tr.h + medium.impedance * tr.g).max()
                       / np.abs(tr.g).max())
    ok = out[level] <= tol
    if check_decrease:
        ok = ok and out[level] < out[level - 1]
    return {"mismatch": out, "passed": bool(ok)}


def identity_gate(level=4, deltas=(1e-2, 1e-3), tol=0.02,
                  wave_k=(4.0, 2.0), wave_phase=0.7):
    """Boundary functional vs volumetric identity, per modulation amplitude."""
    medium = validation_medium()
    source = validation_source()
    cache = QuadratureCache(gen_disk_mesh(1.0, level))
    F = forward.auxiliary_plane_wave(cache, medium, 1)
    trF = forward.extract_traces(cache, medium, F)
    residuals = {}
    for delta in deltas:
        wave = AcousticWave(wave_k, wave_phase, delta)
        Ed = forward.solve_impedance(cache, medium, source=source,
                                     modulation=wave)
        trd = forward.extract_traces(cache, medium, Ed)
        M = internal.boundary_functional(cache, trd, trF, medium.omega)
        vol = internal.volumetric_functional(cache, medium, source, Ed, F, wave)
        residuals[delta] = abs(M - vol) / abs(vol)
    ok = all(r <= tol for r in residuals.values())
    return {"residuals": residuals, "passed": bool(ok)}
