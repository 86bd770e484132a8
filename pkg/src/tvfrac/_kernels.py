"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba versions are used when numba imports and the environment variable
``TVFRAC_DISABLE_NUMBA`` is unset (or ``0``). Set ``TVFRAC_DISABLE_NUMBA=1``
to force the numpy path; both paths agree to rounding.
"""
import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dep in practice
    njit = None


def _env_disabled():
    return os.environ.get("TVFRAC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = njit is not None and not _env_disabled()


# ---------------------------------------------------------------------------
# L1 history convolution: sum_{j=0}^{k-1} d_j * U[k-j]
# ---------------------------------------------------------------------------

def history_sum_numpy(d, U, k):
    if k == 0:
        return np.zeros(U.shape[1])
    # rows U[k], U[k-1], ..., U[1]
    return d[:k] @ U[k:0:-1]


def _history_sum_loop(d, U, k):
    n = U.shape[1]
    out = np.zeros(n)
    for j in range(k):
        w = d[j]
        row = k - j
        for i in range(n):
            out[i] += w * U[row, i]
    return out


# ---------------------------------------------------------------------------
# P1 element gradients and their transpose (discrete -div paired with mass)
# ---------------------------------------------------------------------------

def element_grad_numpy(f, elements, dphi):
    # dphi: (E, nloc, dim) shape-function gradients per element
    return np.einsum("ea,ead->ed", f[elements], dphi)


def _element_grad_loop(f, elements, dphi):
    ne, nloc, dim = dphi.shape
    out = np.zeros((ne, dim))
    for e in range(ne):
        for a in range(nloc):
            fa = f[elements[e, a]]
            for c in range(dim):
                out[e, c] += fa * dphi[e, a, c]
    return out


def div_scatter_numpy(q, elements, dphi, measure, n_nodes):
    contrib = np.einsum("ed,ead->ea", q, dphi) * measure[:, None]
    out = np.zeros(n_nodes)
    np.add.at(out, elements.ravel(), contrib.ravel())
    return out


def _div_scatter_loop(q, elements, dphi, measure, n_nodes):
    ne, nloc, dim = dphi.shape
    out = np.zeros(n_nodes)
    for e in range(ne):
        m = measure[e]
        for a in range(nloc):
            s = 0.0
            for c in range(dim):
                s += q[e, c] * dphi[e, a, c]
            out[elements[e, a]] += m * s
    return out


# ---------------------------------------------------------------------------
# Pointwise projections
# ---------------------------------------------------------------------------

# rows already within rounding of the unit sphere are left alone, so a
# projected field projects onto itself bit for bit
BALL_SLACK = 4.0 * np.finfo(np.float64).eps


def project_ball_numpy(p):
    norms = np.sqrt(np.sum(p * p, axis=1))
    scale = np.where(norms > 1.0 + BALL_SLACK, norms, 1.0)
    return p / scale[:, None]


def _project_ball_loop(p):
    ne, dim = p.shape
    out = np.empty_like(p)
    for e in range(ne):
        s = 0.0
        for c in range(dim):
            s += p[e, c] * p[e, c]
        scale = np.sqrt(s)
        if scale <= 1.0 + BALL_SLACK:
            scale = 1.0
        for c in range(dim):
            out[e, c] = p[e, c] / scale
    return out


def element_norm_sum_numpy(g, measure):
    return float(np.sum(measure * np.sqrt(np.sum(g * g, axis=1))))


def _element_norm_sum_loop(g, measure):
    total = 0.0
    ne, dim = g.shape
    for e in range(ne):
        s = 0.0
        for c in range(dim):
            s += g[e, c] * g[e, c]
        total += measure[e] * np.sqrt(s)
    return total


if USE_NUMBA:
    history_sum_numba = njit(cache=True)(_history_sum_loop)
    element_grad_numba = njit(cache=True)(_element_grad_loop)
    div_scatter_numba = njit(cache=True)(_div_scatter_loop)
    project_ball_numba = njit(cache=True)(_project_ball_loop)
    element_norm_sum_numba = njit(cache=True)(_element_norm_sum_loop)

    def history_sum(d, U, k):
        return history_sum_numba(d, U, k)

    def element_grad(f, elements, dphi):
        return element_grad_numba(np.ascontiguousarray(f, dtype=np.float64), elements, dphi)

    def div_scatter(q, elements, dphi, measure, n_nodes):
        return div_scatter_numba(np.ascontiguousarray(q, dtype=np.float64), elements, dphi, measure, n_nodes)

    def project_ball(p):
        return project_ball_numba(np.ascontiguousarray(p, dtype=np.float64))

    def element_norm_sum(g, measure):
        return float(element_norm_sum_numba(np.ascontiguousarray(g, dtype=np.float64), measure))
else:
    history_sum = history_sum_numpy
    element_grad = element_grad_numpy
    div_scatter = div_scatter_numpy
    project_ball = project_ball_numpy
    element_norm_sum = element_norm_sum_numpy


def backend():
    """Name of the active kernel backend (``"numba"`` or ``"numpy"``)."""
    return "numba" if USE_NUMBA else "numpy"
