"""Data misfit, the two adjoint solvers and the misfit gradient.

Two adjoints are provided:

``transpose``
    the exact transpose of the discrete forward recurrence, so the returned
    gradient is the true derivative of the discrete objective;
``paper``
    the time-reversed fractional problem stepped forward with the same L1
    scheme (``w~(t) = w(T - t)``, zero start), consistent but not identical.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .forward import SourceSeparable, forward_solve, l1_march

GRADIENT_MODES = ("transpose", "paper")


@dataclass(eq=False)
class ObservedData:
    """Noisy observations per time level (rows), and the noise level delta."""

    u_delta: np.ndarray  # (K+1, N); values off omega are never read
    delta: float = 0.0


def weighted_sq_norms(grid, mass_omega, R):
    """tau c_k ||R[k]||^2_{L2(omega)} per level."""
    return grid.quad_weights * np.einsum("kn,kn->k", R, (mass_omega @ R.T).T)


def misfit(grid, mass_omega, states, u_delta):
    """res = tau sum_k c_k ||u^k - u^delta_k||^2_{L2(omega)} (squared, not halved)."""
    R = np.asarray(states) - np.asarray(u_delta)
    return float(np.sum(weighted_sq_norms(grid, mass_omega, R)))


def adjoint_solve_transpose(disc, mass_omega, residuals):
    """Adjoint fields w^k (rows) from the transposed forward recurrence.

    Scaled so that ``tau sum_k c_k mu^k (w^k, z)`` equals the derivative of
    ``(1/2) tau sum_k c_k ||u^k - u^delta_k||^2_omega`` in direction ``z``.
    Level 0 carries no sensitivity and is returned as zero.
    """
    grid = disc.grid
    K, N = disc.K, disc.n_nodes
    R = np.asarray(residuals, dtype=np.float64)
    if R.shape != (K + 1, N):
        raise InvalidArgument(f"residuals must have shape {(K + 1, N)}, got {R.shape}")
    e = grid.quad_weights[:, None] * (mass_omega @ R.T).T
    # The transposed block system is the forward recurrence run backwards in
    # time: lambda^l = Lrev[K + 1 - l] where Lrev is driven by e_{K+1-i}.
    loads = np.zeros((K + 1, N))
    loads[1:] = e[K:0:-1]
    lam_rev = l1_march(disc, loads)
    W = np.zeros((K + 1, N))
    scale = disc.scheme.eta / grid.quad_weights[1:]
    W[1:] = lam_rev[K:0:-1] * scale[:, None]
    return W


def adjoint_solve_paper(disc, mass_omega, residuals):
    """Adjoint fields from the time-reversed problem with w~^0 = 0; w^k = w~^{K-k}."""
    K, N = disc.K, disc.n_nodes
    R = np.asarray(residuals, dtype=np.float64)
    if R.shape != (K + 1, N):
        raise InvalidArgument(f"residuals must have shape {(K + 1, N)}, got {R.shape}")
    reversed_loads = disc.scheme.eta * (mass_omega @ R[::-1].T).T
    W_tilde = l1_march(disc, np.ascontiguousarray(reversed_loads))
    return W_tilde[::-1].copy()


def gradient_from_adjoint(grid, mu, W):
    """Nodal field tau sum_k c_k mu^k w^k."""
    return (grid.quad_weights * np.asarray(mu)) @ W


def adjoint_solve(disc, mass_omega, residuals, mode="transpose"):
    if mode == "transpose":
        return adjoint_solve_transpose(disc, mass_omega, residuals)
    if mode == "paper":
        return adjoint_solve_paper(disc, mass_omega, residuals)
    raise InvalidArgument(f"unknown gradient mode {mode!r}; expected one of {GRADIENT_MODES}")


def misfit_gradient(disc, mass_omega, f, data, mu, mode="transpose", states=None):
    """Riesz representative (nodal P1 field) of the misfit derivative at ``f``.

    Returns ``(g, states)``; pass precomputed forward ``states`` to skip the
    forward solve.
    """
    if states is None:
        states = forward_solve(disc, SourceSeparable(mu, f)).states
    u_delta = data.u_delta if isinstance(data, ObservedData) else data
    W = adjoint_solve(disc, mass_omega, states - u_delta, mode)
    return gradient_from_adjoint(disc.grid, mu, W), states
