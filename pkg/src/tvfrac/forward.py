"""Fully discrete forward solver: P1 in space, L1 scheme in time.

Homogeneous Neumann boundaries are the default. ``boundary="dirichlet"``
pins boundary nodes of every state to zero instead.

Each step solves

    [(1 + eta) M + eta S] u^{k+1}
        = M (sum_{j=0}^{k-1} (b_j - b_{j+1}) u^{k-j} + b_k u^0) + eta * rhs^{k+1}

with the system matrix factored once per discretization.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import InvalidArgument, UndefinedRatio
from .fracstep import L1Scheme, TimeGrid
from .mesh_fem import SpdSolver, assemble_mass, assemble_stiffness, grad

BOUNDARIES = ("neumann", "dirichlet")


@dataclass(eq=False)
class Discretization:
    """Mesh + time grid + L1 scheme, with the assembled matrices cached."""

    mesh: object
    grid: TimeGrid
    scheme: L1Scheme = None
    alpha: float = None
    boundary: str = "neumann"

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise InvalidArgument(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.scheme is None:
            if self.alpha is None:
                raise InvalidArgument("give either scheme or alpha")
            self.scheme = L1Scheme.for_grid(self.alpha, self.grid)
        self.alpha = self.scheme.alpha
        if self.scheme.K_tau != self.grid.K_tau or abs(self.scheme.tau - self.grid.tau) > 1e-14 * self.grid.tau:
            raise InvalidArgument("scheme and time grid disagree on tau / K_tau")

    @cached_property
    def mass(self):
        return assemble_mass(self.mesh)

    @cached_property
    def stiffness(self):
        return assemble_stiffness(self.mesh)

    @cached_property
    def boundary_nodes(self):
        """Indices of nodes pinned to zero (empty for Neumann)."""
        if self.boundary == "neumann":
            return np.zeros(0, dtype=np.int64)
        x = self.mesh.node_coords
        on_bnd = np.any((x < 1e-12) | (x > 1.0 - 1e-12), axis=1)
        return np.flatnonzero(on_bnd)

    @cached_property
    def system(self):
        eta = self.scheme.eta
        A = ((1.0 + eta) * self.mass + eta * self.stiffness).tocsr()
        bnd = self.boundary_nodes
        if bnd.size:
            keep = np.ones(self.mesh.n_nodes)
            keep[bnd] = 0.0
            P = sp.diags(keep)
            A = (P @ A @ P + sp.diags(1.0 - keep)).tocsr()
        return A

    @cached_property
    def solver(self):
        return SpdSolver(self.system)

    @cached_property
    def mass_solver(self):
        return SpdSolver(self.mass)

    @property
    def K(self):
        return self.grid.K_tau

    @property
    def n_nodes(self):
        return self.mesh.n_nodes


@dataclass(eq=False)
class SourceSeparable:
    """Source mu(t_k) * f(x) with ``mu_samples`` at t_0..t_K."""

    mu_samples: np.ndarray
    f: np.ndarray


@dataclass(eq=False)
class SourceGeneral:
    """Arbitrary right-hand side given as one P1 field per time level."""

    g_samples: np.ndarray  # (K+1, N)


@dataclass(eq=False)
class Trajectory:
    states: np.ndarray  # (K+1, N), states[0] = u^0
    grid: TimeGrid = field(repr=False)

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, k):
        return self.states[k]


def l1_march(disc, loads, u0=None):
    """Run the L1 recurrence with M-applied source vectors ``loads[k]`` (row 0 unused)."""
    K, N = disc.K, disc.n_nodes
    if loads.shape != (K + 1, N):
        raise InvalidArgument(f"loads must have shape {(K + 1, N)}, got {loads.shape}")
    b, d = disc.scheme.b, disc.scheme.d
    M = disc.mass
    solve = disc.solver.solve
    bnd = disc.boundary_nodes
    U = np.zeros((K + 1, N))
    if u0 is not None:
        U[0] = u0
    has_init = u0 is not None and np.any(U[0] != 0.0)
    for k in range(K):
        hist = _kernels.history_sum(d, U, k)
        if has_init:
            hist = hist + b[k] * U[0]
        rhs = M @ hist + loads[k + 1]
        if bnd.size:
            rhs[bnd] = 0.0
        U[k + 1] = solve(rhs)
    return U


def source_loads(disc, source):
    """M-applied, eta-scaled right-hand side per level for either source type."""
    K, N = disc.K, disc.n_nodes
    eta = disc.scheme.eta
    if isinstance(source, SourceSeparable):
        mu = np.asarray(source.mu_samples, dtype=np.float64)
        f = np.asarray(source.f, dtype=np.float64)
        if mu.shape != (K + 1,):
            raise InvalidArgument(f"mu_samples must have length {K + 1}, got {mu.shape}")
        if f.shape != (N,):
            raise InvalidArgument(f"f must have {N} nodal values, got {f.shape}")
        return np.outer(eta * mu, disc.mass @ f)
    if isinstance(source, SourceGeneral):
        g = np.asarray(source.g_samples, dtype=np.float64)
        if g.shape != (K + 1, N):
            raise InvalidArgument(f"g_samples must have shape {(K + 1, N)}, got {g.shape}")
        return eta * (disc.mass @ g.T).T
    raise InvalidArgument(f"unsupported source type {type(source).__name__}")


def forward_solve(disc, source):
    """Solve the direct problem with zero initial data; returns the full trajectory."""
    return Trajectory(l1_march(disc, source_loads(disc, source)), disc.grid)


def l2_norm(disc, g):
    return float(np.sqrt(max(g @ (disc.mass @ g), 0.0)))


def stability_check(disc, trajectory, f):
    """max_k (||u^k|| + ||grad u^k||) / ||f|| in L2(Omega)."""
    fn = l2_norm(disc, np.asarray(f, dtype=np.float64))
    if fn == 0.0:
        raise UndefinedRatio("||f|| = 0: stability ratio undefined")
    S = disc.stiffness
    best = 0.0
    for u in trajectory.states:
        val = l2_norm(disc, u) + np.sqrt(max(u @ (S @ u), 0.0))
        best = max(best, val)
    return best / fn


def grad_l2_norm(disc, u):
    """||grad u|| computed element-wise (used to cross-check the stiffness form)."""
    g = grad(disc.mesh, u)
    return float(np.sqrt(np.sum(disc.mesh.element_measure * np.sum(g * g, axis=1))))
