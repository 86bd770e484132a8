import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from tvfrac.errors import AlignmentError, InvalidArgument
from tvfrac.mesh_fem import (
    ObservationDomain, SpdSolver, assemble_mass, assemble_mass_omega, assemble_stiffness, build_uniform_mesh,
    div_adjoint, estimate_grad_norm, grad, l2_project, load_vector,
)


def test_uniform_mesh_counts_1d_and_2d():
    m1 = build_uniform_mesh(1, 7)
    assert (m1.n_nodes, m1.n_elements) == (8, 7)
    assert np.allclose(m1.element_measure, 1 / 7)
    m2 = build_uniform_mesh(2, 4)
    assert (m2.n_nodes, m2.n_elements) == (25, 32)
    assert np.allclose(m2.element_measure, 1 / 32)
    # node (i, j) sits at (i/n, j/n)
    assert np.allclose(m2.node_coords[3 + 5 * 2], [3 / 4, 2 / 4])


def test_mesh_rejects_bad_arguments():
    with pytest.raises(InvalidArgument):
        build_uniform_mesh(3, 4)
    with pytest.raises(InvalidArgument):
        build_uniform_mesh(1, 1)


def test_mass_matrix_1d_matches_textbook_tridiagonal():
    n = 4
    h = 1 / n
    M = assemble_mass(build_uniform_mesh(1, n)).toarray()
    expected = np.diag([h / 3] + [2 * h / 3] * (n - 1) + [h / 3]) + np.diag([h / 6] * n, 1) + np.diag([h / 6] * n, -1)
    np.testing.assert_allclose(M, expected, atol=1e-15)


def test_stiffness_matrix_1d_matches_textbook_tridiagonal():
    n = 5
    h = 1 / n
    S = assemble_stiffness(build_uniform_mesh(1, n)).toarray()
    expected = (np.diag([1] + [2] * (n - 1) + [1]) - np.diag([1] * n, 1) - np.diag([1] * n, -1)) / h
    np.testing.assert_allclose(S, expected, atol=1e-12)


@pytest.mark.parametrize("dim", [1, 2])
def test_mass_integrates_polynomials_exactly(dim):
    mesh = build_uniform_mesh(dim, 6)
    M = assemble_mass(mesh)
    ones = np.ones(mesh.n_nodes)
    assert ones @ M @ ones == pytest.approx(1.0, abs=1e-14)
    x = mesh.node_coords[:, 0]
    # int_0^1 x^2 over the unit cube/square: P1 interpolant of x is exact
    assert x @ M @ x == pytest.approx(1 / 3, abs=1e-14)


@pytest.mark.parametrize("dim", [1, 2])
def test_stiffness_kills_constants_and_measures_linear_gradients(dim):
    mesh = build_uniform_mesh(dim, 5)
    S = assemble_stiffness(mesh)
    assert np.abs(S @ np.ones(mesh.n_nodes)).max() < 1e-12
    g = 2.0 * mesh.node_coords[:, 0] - 3.0 * mesh.node_coords[:, -1]
    expected = 4.0 + 9.0 if dim == 2 else 1.0
    assert g @ S @ g == pytest.approx(expected, rel=1e-12)
    assert abs(S - S.T).max() < 1e-14


def test_grad_of_linear_field_is_exact_on_every_element():
    mesh = build_uniform_mesh(2, 5)
    f = 1.5 * mesh.node_coords[:, 0] - 0.25 * mesh.node_coords[:, 1] + 2.0
    G = grad(mesh, f)
    np.testing.assert_allclose(G, np.tile([1.5, -0.25], (mesh.n_elements, 1)), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.sampled_from([1, 2]))
def test_div_adjoint_is_the_transpose_of_grad(seed, dim):
    mesh = build_uniform_mesh(dim, 4)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((mesh.n_elements, dim))
    g = rng.standard_normal(mesh.n_nodes)
    lhs = div_adjoint(mesh, q) @ g
    rhs = np.sum(mesh.element_measure * np.sum(q * grad(mesh, g), axis=1))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-13)


def _independent_gauss_load_1d(n, fn):
    """Composite 5-point Gauss-Legendre of fn * phi_i, written out per interval."""
    x, w = np.polynomial.legendre.leggauss(5)
    h = 1 / n
    b = np.zeros(n + 1)
    for e in range(n):
        xs = e * h + 0.5 * h * (x + 1)
        ws = 0.5 * h * w
        vals = fn(xs)
        b[e] += np.sum(ws * vals * (1 - (xs - e * h) / h))
        b[e + 1] += np.sum(ws * vals * ((xs - e * h) / h))
    return b


def test_l2_project_matches_independent_quadrature_for_a_jump_sampler():
    n = 10
    mesh = build_uniform_mesh(1, n)
    jump = lambda x: np.where(x < 0.37, 1.0, -0.5)  # jump inside an element
    got = l2_project(mesh, lambda p: jump(p[:, 0]))
    M = assemble_mass(mesh).toarray()
    ref = np.linalg.solve(M, _independent_gauss_load_1d(n, jump))
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_l2_project_reproduces_p1_fields_and_converges_for_a_jump():
    mesh = build_uniform_mesh(2, 6)
    lin = lambda p: 0.3 + p[:, 0] - 2 * p[:, 1]
    np.testing.assert_allclose(l2_project(mesh, lin), lin(mesh.node_coords), atol=1e-12)
    # exact load of a jump at x = 0.37: int phi_i chi over the split element
    errs = []
    for n in (10, 20, 40):
        m = build_uniform_mesh(1, n)
        b_num = load_vector(m, lambda p: (p[:, 0] >= 0.37).astype(float))
        h = 1 / n
        exact = np.zeros(n + 1)
        for e in range(n):
            a, c = max(e * h, 0.37), (e + 1) * h
            if a >= c:
                continue
            # int_a^c of the two hat functions restricted to element e
            exact[e + 1] += ((c - e * h) ** 2 - (a - e * h) ** 2) / (2 * h)
            exact[e] += (c - a) - ((c - e * h) ** 2 - (a - e * h) ** 2) / (2 * h)
        errs.append(np.abs(b_num - exact).max())
    assert errs[0] < 5e-3 and errs[-1] < errs[0]


def test_observation_domain_alignment_and_masks():
    mesh = build_uniform_mesh(1, 50)
    dom = ObservationDomain((((2 / 50, 25 / 50),),))
    mask = dom.element_mask(mesh)
    assert mask.sum() == 23
    assert dom.node_mask(mesh).sum() == 24
    with pytest.raises(AlignmentError, match="0.03"):
        ObservationDomain((((0.03, 0.5),),)).check_aligned(mesh)
    with pytest.raises(InvalidArgument):
        ObservationDomain((((0.5, 0.2),),)).check_aligned(mesh)


def test_mass_omega_is_mass_on_the_whole_domain_and_additive_on_unions():
    mesh = build_uniform_mesh(2, 8)
    full = assemble_mass_omega(mesh, ObservationDomain.whole(2))
    assert abs(full - assemble_mass(mesh)).max() < 1e-15
    left = ObservationDomain((((0.0, 0.5), (0.0, 1.0)),))
    right = ObservationDomain((((0.5, 1.0), (0.0, 1.0)),))
    both = ObservationDomain(left.boxes + right.boxes)
    total = assemble_mass_omega(mesh, left) + assemble_mass_omega(mesh, right)
    assert abs(assemble_mass_omega(mesh, both) - total).max() < 1e-15


def test_spd_solver_direct_and_cg_fallback_agree():
    mesh = build_uniform_mesh(2, 6)
    A = (assemble_mass(mesh) + assemble_stiffness(mesh)).tocsc()
    rhs = np.random.default_rng(3).standard_normal(mesh.n_nodes)
    direct = SpdSolver(A).solve(rhs)
    fallback = SpdSolver(A)
    fallback._lu = None
    np.testing.assert_allclose(fallback.solve(rhs), direct, rtol=1e-9, atol=1e-11)
    assert np.linalg.norm(A @ direct - rhs) <= 1e-12 * np.linalg.norm(rhs)


@pytest.mark.parametrize("dim,n", [(1, 20), (2, 6)])
def test_grad_norm_estimate_matches_generalized_eigenvalue(dim, n):
    mesh = build_uniform_mesh(dim, n)
    M = assemble_mass(mesh).toarray()
    S = assemble_stiffness(mesh).toarray()
    lam_max = np.max(np.real(np.linalg.eigvals(np.linalg.solve(M, S))))
    est = estimate_grad_norm(mesh, sp.csr_matrix(M), 200)
    assert est <= np.sqrt(lam_max) * (1 + 1e-10)
    assert est >= 0.99 * np.sqrt(lam_max)
    # constant start falls back to a usable vector
    assert estimate_grad_norm(mesh, sp.csr_matrix(M), 50, start=np.ones(mesh.n_nodes)) > 0
