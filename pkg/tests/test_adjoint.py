import numpy as np
import pytest

from tvfrac.adjoint import (
    ObservedData, adjoint_solve, misfit, misfit_gradient, weighted_sq_norms,
)
from tvfrac.errors import InvalidArgument
from tvfrac.forward import Discretization, SourceSeparable, forward_solve
from tvfrac.fracstep import TimeGrid
from tvfrac.mesh_fem import ObservationDomain, assemble_mass_omega, build_uniform_mesh
from tvfrac.verify import adjoint_identity_check, gradient_fd_check


def _setup(n, K, alpha=0.5, boundary="neumann", box=(0.2, 0.7)):
    mesh = build_uniform_mesh(1, n)
    disc = Discretization(mesh, TimeGrid(1.0, K), alpha=alpha, boundary=boundary)
    mw = assemble_mass_omega(mesh, ObservationDomain(((box,),)))
    mu = np.cos(2 * np.pi * disc.grid.t)
    return disc, mw, mu


def test_misfit_is_the_trapezoid_sum_of_squared_omega_norms():
    disc, mw, mu = _setup(10, 10)
    R = np.random.default_rng(0).standard_normal((11, disc.n_nodes))
    by_hand = sum(disc.grid.tau * disc.grid.c[k] * R[k] @ (mw @ R[k]) for k in range(11))
    assert misfit(disc.grid, mw, R, np.zeros_like(R)) == pytest.approx(by_hand, rel=1e-13)
    assert weighted_sq_norms(disc.grid, mw, R).shape == (11,)


def test_exact_data_gives_zero_misfit_and_zero_gradient():
    disc, mw, mu = _setup(10, 10)
    f = np.linspace(0, 1, disc.n_nodes)
    u = forward_solve(disc, SourceSeparable(mu, f)).states
    assert misfit(disc.grid, mw, u, u) == 0.0
    g, _ = misfit_gradient(disc, mw, f, ObservedData(u), mu)
    assert np.abs(g).max() == 0.0


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("boundary", ["neumann", "dirichlet"])
def test_transpose_adjoint_satisfies_discrete_identity(alpha, boundary):
    rep = adjoint_identity_check(alpha, pairs=10, boundary=boundary)
    assert rep["max_defect"] < 1e-10


def test_transpose_gradient_passes_central_differences():
    rep = gradient_fd_check(n=10, K=12)
    assert rep["max_rel_error"] < 1e-6


def test_paper_adjoint_is_consistent_but_not_exact():
    diffs = []
    for n in (10, 20, 40, 80):
        disc, mw, mu = _setup(n, n, alpha=0.5, box=(0.2, 0.7))
        f_true = np.where(np.abs(disc.mesh.node_coords[:, 0] - 0.5) <= 0.25, 0.5, 0.0)
        data = ObservedData(forward_solve(disc, SourceSeparable(mu, f_true)).states)
        f = np.full(disc.n_nodes, 0.25)
        gt, states = misfit_gradient(disc, mw, f, data, mu, "transpose")
        gp, _ = misfit_gradient(disc, mw, f, data, mu, "paper", states=states)
        diffs.append(np.sqrt((gt - gp) @ (disc.mass @ (gt - gp)) / (gt @ (disc.mass @ gt))))
    assert diffs[0] > 1e-6  # a genuinely different discretization
    assert all(b < a for a, b in zip(diffs, diffs[1:]))


def test_adjoint_rejects_bad_shapes_and_modes():
    disc, mw, _ = _setup(10, 5)
    with pytest.raises(InvalidArgument):
        adjoint_solve(disc, mw, np.zeros((3, disc.n_nodes)))
    with pytest.raises(InvalidArgument):
        adjoint_solve(disc, mw, np.zeros((6, disc.n_nodes)), mode="exact")
