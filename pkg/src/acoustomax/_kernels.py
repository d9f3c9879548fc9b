"""Element-level numeric kernels.

The hot inner loops (element matrix / load assembly and quadrature-point
field evaluation) exist in two interchangeable implementations: numba
``@njit`` kernels and pure-numpy einsum fallbacks.  The backend is selected
once at import time; set ``ACOUSTOMAX_NO_NUMBA=1`` in the environment to
force the numpy path (used by the benchmark and as a safety valve).

All kernels are serial and deterministic: summation order is fixed, so two
runs on identical inputs produce bitwise-identical output within a backend.

Array conventions
-----------------
areas   : (T,)        triangle areas
qw      : (Q,)        reference quadrature weights, sum = 1
basis   : (T, Q, 3, 2) edge basis vectors at quadrature points (signed)
curls   : (T, 3)      constant scalar curls of the edge basis (signed)
coeff   : (T, Q) or (T,)  real coefficient samples
tri_edges : (T, 3)    global edge index per local edge
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("ACOUSTOMAX_NO_NUMBA", "").strip() not in ("", "0")

try:  # pragma: no cover - exercised implicitly through the backend switch
    if _FORCE_NUMPY:
        raise ImportError("numba disabled by ACOUSTOMAX_NO_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _mass_elems_np(areas, qw, basis, coeff):
    # Me[t,a,b] = area_t * sum_q w_q c[t,q] basis[t,q,a,:].basis[t,q,b,:]
    w = qw[None, :] * coeff
    out = np.einsum("tq,tqai,tqbi->tab", w, basis, basis, optimize=True)
    return out * areas[:, None, None]


def _stiff_elems_np(areas, curls, coeff):
    out = curls[:, :, None] * curls[:, None, :]
    return out * (areas * coeff)[:, None, None]


def _load_elems_np(areas, qw, basis, f):
    out = np.einsum("q,tqi,tqai->ta", qw, f, basis, optimize=True)
    return out * areas[:, None]


def _eval_at_quad_np(dofs, tri_edges, basis):
    d = dofs[tri_edges]  # (T,3)
    return np.einsum("ta,tqai->tqi", d, basis, optimize=True)


def _curl_per_tri_np(dofs, tri_edges, curls):
    return np.sum(dofs[tri_edges] * curls, axis=1)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _mass_elems_nb(areas, qw, basis, coeff):
        T, Q = basis.shape[0], basis.shape[1]
        out = np.zeros((T, 3, 3))
        for t in range(T):
            for q in range(Q):
                w = areas[t] * qw[q] * coeff[t, q]
                for a in range(3):
                    for b in range(3):
                        out[t, a, b] += w * (
                            basis[t, q, a, 0] * basis[t, q, b, 0]
                            + basis[t, q, a, 1] * basis[t, q, b, 1]
                        )
        return out

    @njit(cache=True)
    def _stiff_elems_nb(areas, curls, coeff):
        T = curls.shape[0]
        out = np.empty((T, 3, 3))
        for t in range(T):
            w = areas[t] * coeff[t]
            for a in range(3):
                for b in range(3):
                    out[t, a, b] = w * curls[t, a] * curls[t, b]
        return out

    @njit(cache=True)
    def _load_elems_nb(areas, qw, basis, f):
        T, Q = basis.shape[0], basis.shape[1]
        out = np.zeros((T, 3), dtype=np.complex128)
        for t in range(T):
            for q in range(Q):
                w = areas[t] * qw[q]
                for a in range(3):
                    out[t, a] += w * (
                        f[t, q, 0] * basis[t, q, a, 0]
                        + f[t, q, 1] * basis[t, q, a, 1]
                    )
        return out

    @njit(cache=True)
    def _eval_at_quad_nb(dofs, tri_edges, basis):
        T, Q = basis.shape[0], basis.shape[1]
        out = np.zeros((T, Q, 2), dtype=np.complex128)
        for t in range(T):
            for q in range(Q):
                for a in range(3):
                    d = dofs[tri_edges[t, a]]
                    out[t, q, 0] += d * basis[t, q, a, 0]
                    out[t, q, 1] += d * basis[t, q, a, 1]
        return out

    @njit(cache=True)
    def _curl_per_tri_nb(dofs, tri_edges, curls):
        T = curls.shape[0]
        out = np.zeros(T, dtype=np.complex128)
        for t in range(T):
            for a in range(3):
                out[t] += dofs[tri_edges[t, a]] * curls[t, a]
        return out


BACKEND = "numba" if _HAVE_NUMBA else "numpy"

if _HAVE_NUMBA:
    mass_elems = _mass_elems_nb
    stiff_elems = _stiff_elems_nb
    load_elems = _load_elems_nb
    eval_at_quad = _eval_at_quad_nb
    curl_per_tri = _curl_per_tri_nb
else:
    mass_elems = _mass_elems_np
    stiff_elems = _stiff_elems_np
    load_elems = _load_elems_np
    eval_at_quad = _eval_at_quad_np
    curl_per_tri = _curl_per_tri_np
