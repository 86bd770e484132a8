"""Uniform simplicial meshes on [0,1]^d and the P1/P0 finite element machinery.

P1 fields are plain float64 arrays of nodal values, P0 vector fields are
``(n_elements, dim)`` arrays. Matrices are scipy CSR.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import AlignmentError, InvalidArgument

_ALIGN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    n_per_axis: int
    node_coords: np.ndarray  # (N, dim)
    elements: np.ndarray  # (E, dim + 1) int64
    element_measure: np.ndarray  # (E,)
    h: float
    # (E, dim + 1, dim): gradients of the barycentric shape functions
    dphi: np.ndarray = field(repr=False)

    @property
    def n_nodes(self):
        return self.node_coords.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @cached_property
    def centroids(self):
        return self.node_coords[self.elements].mean(axis=1)

    def interpolate(self, fn):
        """Nodal interpolant of ``fn``, called with the ``(N, dim)`` coordinate array."""
        return np.asarray(fn(self.node_coords), dtype=np.float64).reshape(self.n_nodes)


def _shape_gradients(coords, elements):
    verts = coords[elements]  # (E, d+1, d)
    jac = np.transpose(verts[:, 1:, :] - verts[:, :1, :], (0, 2, 1))  # columns x_i - x_0
    inv = np.linalg.inv(jac)  # rows are grad of barycentric 1..d
    g0 = -inv.sum(axis=1, keepdims=True)
    dphi = np.concatenate([g0, inv], axis=1)
    measure = np.abs(np.linalg.det(jac))
    if coords.shape[1] == 2:
        measure = measure / 2.0
    return np.ascontiguousarray(dphi), measure


def build_uniform_mesh(dim, n):
    """Uniform mesh of the unit interval (``dim=1``) or unit square (``dim=2``).

    In 2D each of the ``n*n`` cells is cut along its lower-left to upper-right
    diagonal. Node ``(i, j)`` has index ``i + (n + 1) * j``.
    """
    if dim not in (1, 2):
        raise InvalidArgument(f"dim must be 1 or 2, got {dim!r}")
    if int(n) != n or n < 2:
        raise InvalidArgument(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    if dim == 1:
        coords = (np.arange(n + 1, dtype=np.float64) / n)[:, None]
        elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        h = 1.0 / n
    else:
        ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
        coords = np.stack([ii.ravel() / n, jj.ravel() / n], axis=1).astype(np.float64)
        ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        ci, cj = ci.ravel(), cj.ravel()
        v00 = ci + (n + 1) * cj
        v10 = v00 + 1
        v01 = v00 + (n + 1)
        v11 = v01 + 1
        lower = np.stack([v00, v10, v11], axis=1)
        upper = np.stack([v00, v11, v01], axis=1)
        elements = np.empty((2 * n * n, 3), dtype=np.int64)
        elements[0::2] = lower
        elements[1::2] = upper
        h = np.sqrt(2.0) / n
    elements = np.ascontiguousarray(elements, dtype=np.int64)
    dphi, measure = _shape_gradients(coords, elements)
    return Mesh(dim, n, coords, elements, measure, h, dphi)


def _assemble(mesh, local):
    nloc = mesh.dim + 1
    rows = np.repeat(mesh.elements, nloc, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nloc)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    mat.sum_duplicates()
    return mat


def _local_mass(mesh, weights=None):
    nloc = mesh.dim + 1
    ref = (np.ones((nloc, nloc)) + np.eye(nloc)) / ((nloc) * (nloc + 1))
    meas = mesh.element_measure if weights is None else mesh.element_measure * weights
    return meas[:, None, None] * ref[None]


def assemble_mass(mesh):
    """Consistent P1 mass matrix: ``g @ M @ g`` is the squared L2 norm of ``g``."""
    return _assemble(mesh, _local_mass(mesh))


def assemble_stiffness(mesh):
    """P1 stiffness matrix with natural (Neumann) boundary, no rows eliminated."""
    local = np.einsum("ead,ebd->eab", mesh.dphi, mesh.dphi) * mesh.element_measure[:, None, None]
    return _assemble(mesh, local)


# ---------------------------------------------------------------------------
# Observation domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservationDomain:
    """Union of axis-aligned boxes; each box is a tuple of ``(lo, hi)`` per axis."""

    boxes: tuple = ()

    @classmethod
    def whole(cls, dim):
        return cls((((0.0, 1.0),) * dim,))

    def check_aligned(self, mesh):
        for box in self.boxes:
            if len(box) != mesh.dim:
                raise InvalidArgument(f"box {box!r} has wrong dimension for a {mesh.dim}D mesh")
            for lo, hi in box:
                if not (0.0 <= lo < hi <= 1.0):
                    raise InvalidArgument(f"box side ({lo}, {hi}) is not an interval inside [0, 1]")
                for x in (lo, hi):
                    k = x * mesh.n_per_axis
                    if abs(k - round(k)) > _ALIGN_TOL:
                        raise AlignmentError(
                            f"coordinate {x!r} is not a multiple of 1/{mesh.n_per_axis}"
                        )

    def element_mask(self, mesh):
        """Elements whose centroid lies inside some box."""
        self.check_aligned(mesh)
        mask = np.zeros(mesh.n_elements, dtype=bool)
        c = mesh.centroids
        for box in self.boxes:
            inside = np.ones(mesh.n_elements, dtype=bool)
            for axis, (lo, hi) in enumerate(box):
                inside &= (c[:, axis] > lo) & (c[:, axis] < hi)
            mask |= inside
        return mask

    def node_mask(self, mesh):
        mask = np.zeros(mesh.n_nodes, dtype=bool)
        mask[mesh.elements[self.element_mask(mesh)].ravel()] = True
        return mask


def assemble_mass_omega(mesh, omega):
    """Mass matrix restricted to the elements of ``omega``."""
    weights = omega.element_mask(mesh).astype(np.float64)
    return _assemble(mesh, _local_mass(mesh, weights))


# ---------------------------------------------------------------------------
# Solves, projection, gradient and divergence
# ---------------------------------------------------------------------------

class SpdSolver:
    """Factor a sparse SPD matrix once and reuse the factorization.

    Falls back to conjugate gradients (relative residual 1e-12) if the direct
    factorization fails.
    """

    def __init__(self, matrix):
        self.matrix = sp.csc_matrix(matrix)
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError:
            self._lu = None

    def solve(self, rhs):
        if self._lu is not None:
            return self._lu.solve(rhs)
        x, info = spla.cg(self.matrix, rhs, rtol=1e-12, atol=0.0, maxiter=10 * self.matrix.shape[0])
        if info != 0:
            raise RuntimeError(f"CG fallback did not converge (info={info})")
        return x


def _gauss_rule(dim, npts=5):
    """Quadrature on the reference simplex: points in barycentric-free coords and weights."""
    x, w = np.polynomial.legendre.leggauss(npts)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if dim == 1:
        return x[:, None], w
    # collapsed (Duffy) tensor rule on the unit triangle
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    xi = u.ravel()
    eta = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    return np.stack([xi, eta], axis=1), weights


def quadrature_points(mesh, npts=5):
    """Physical quadrature points ``(E, Q, dim)``, weights ``(E, Q)`` and shape values ``(Q, dim+1)``."""
    ref, w = _gauss_rule(mesh.dim, npts)
    verts = mesh.node_coords[mesh.elements]
    edges = verts[:, 1:, :] - verts[:, :1, :]  # (E, d, d)
    pts = verts[:, :1, :] + np.einsum("qk,ekd->eqd", ref, edges)
    ref_measure = 1.0 if mesh.dim == 1 else 0.5
    weights = (mesh.element_measure / ref_measure)[:, None] * w[None, :]
    phi = np.concatenate([1.0 - ref.sum(axis=1, keepdims=True), ref], axis=1)
    return pts, weights, phi


def load_vector(mesh, sampler, npts=5):
    """Vector ``b_i = (s, phi_i)`` by composite Gauss quadrature (``npts`` per axis)."""
    pts, weights, phi = quadrature_points(mesh, npts)
    vals = np.asarray(sampler(pts.reshape(-1, mesh.dim)), dtype=np.float64).reshape(weights.shape)
    local = np.einsum("eq,qa->ea", weights * vals, phi)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.elements.ravel(), local.ravel())
    return out


def l2_project(mesh, sampler, mass=None, solver=None):
    """L2 projection onto P1. ``sampler`` maps a ``(Q, dim)`` point array to values."""
    if solver is None:
        solver = SpdSolver(assemble_mass(mesh) if mass is None else mass)
    return solver.solve(load_vector(mesh, sampler))


def grad(mesh, f):
    """Per-element gradient of a P1 field, shape ``(E, dim)``."""
    return _kernels.element_grad(np.asarray(f, dtype=np.float64), mesh.elements, mesh.dphi)


def div_adjoint(mesh, q):
    """Nodal vector ``r`` with ``r @ g == (q, grad g)`` for every P1 field ``g``.

    The P1 field ``-div q`` is ``M^{-1} r``.
    """
    q = np.asarray(q, dtype=np.float64).reshape(mesh.n_elements, mesh.dim)
    return _kernels.div_scatter(q, mesh.elements, mesh.dphi, mesh.element_measure, mesh.n_nodes)


def estimate_grad_norm(mesh, mass, iters, stiffness=None, start=None):
    """Power-iteration estimate of sup ||grad g|| / ||g|| over P1 fields.

    Iterates on ``M^{-1} S`` with the constant (null) mode deflated in the
    mass inner product and returns sqrt of the Rayleigh quotient.
    """
    if iters < 1:
        raise InvalidArgument("iters must be >= 1")
    S = assemble_stiffness(mesh) if stiffness is None else stiffness
    solver = SpdSolver(mass)
    ones = np.ones(mesh.n_nodes)
    m1 = mass @ ones
    one_norm2 = ones @ m1

    def deflate(x):
        return x - (x @ m1) / one_norm2 * ones

    if start is None:
        x = np.random.default_rng(0).standard_normal(mesh.n_nodes)
    else:
        x = np.array(start, dtype=np.float64)
    x = deflate(x)
    if np.sqrt(abs(x @ (mass @ x))) < 1e-12 * max(1.0, np.abs(start if start is not None else x).max()):
        # constant start: fall back to an alternating-sign vector
        x = deflate(np.where(np.arange(mesh.n_nodes) % 2 == 0, 1.0, -1.0))
    lam = 0.0
    for _ in range(iters):
        x = x / np.sqrt(x @ (mass @ x))
        y = deflate(solver.solve(S @ x))
        lam = max(lam, float(x @ (S @ x)))
        x = y
    return float(np.sqrt(lam))
