"""Self-checks shared by the CLI ``*-check`` commands and the test suite.

Each check returns a plain dict report with a boolean ``passed`` entry and
the measured numbers, so callers can print or serialize it directly.
"""
import math

import numpy as np

from .adjoint import ObservedData, adjoint_solve, gradient_from_adjoint, misfit, misfit_gradient, weighted_sq_norms
from .forward import Discretization, SourceGeneral, SourceSeparable, forward_solve
from .fracstep import TimeGrid, gamma
from .mesh_fem import ObservationDomain, assemble_mass_omega, build_uniform_mesh, l2_project, quadrature_points
from .pdsolver import estimate_forward_norm


def _small_problem(n, K, alpha, omega_boxes, seed, boundary="neumann"):
    mesh = build_uniform_mesh(1, n)
    disc = Discretization(mesh, TimeGrid(1.0, K), alpha=alpha, boundary=boundary)
    mass_omega = assemble_mass_omega(mesh, ObservationDomain(omega_boxes))
    mu = np.cos(2.0 * np.pi * disc.grid.t)
    rng = np.random.default_rng(seed)
    return disc, mass_omega, mu, rng


def adjoint_identity_check(alpha, n=10, K=10, pairs=20, seed=0, mode="transpose", tol=1e-10, boundary="neumann"):
    """Compare tau sum c_k (u(f) - u_delta, u(z))_omega with tau sum c_k mu^k (w^k, z).

    The defect of each pair is relative to the larger of the two sides.
    """
    disc, mass_omega, mu, rng = _small_problem(n, K, alpha, (((0.2, 0.7),),), seed, boundary)
    u_delta = rng.standard_normal((K + 1, disc.n_nodes)) * 0.01
    defects = []
    for _ in range(pairs):
        f = rng.uniform(-1.0, 1.0, disc.n_nodes)
        z = rng.uniform(-1.0, 1.0, disc.n_nodes)
        R = forward_solve(disc, SourceSeparable(mu, f)).states - u_delta
        Uz = forward_solve(disc, SourceSeparable(mu, z)).states
        lhs = float(np.sum(disc.grid.quad_weights * np.einsum("kn,kn->k", R, (mass_omega @ Uz.T).T)))
        W = adjoint_solve(disc, mass_omega, R, mode)
        rhs = float(gradient_from_adjoint(disc.grid, mu, W) @ (disc.mass @ z))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        defects.append(abs(lhs - rhs) / scale)
    worst = max(defects)
    return {"check": "adjoint", "alpha": alpha, "n": n, "K_tau": K, "pairs": pairs, "mode": mode,
            "max_defect": worst, "tol": tol, "passed": bool(worst < tol)}


def gradient_fd_check(alpha=0.5, n=20, K=20, directions=5, eps=1e-5, seed=0, mode="transpose", tol=1e-6):
    """Central differences of J = res/2 against (M g) . z along random directions."""
    disc, mass_omega, mu, rng = _small_problem(n, K, alpha, (((0.1, 0.6),),), seed)
    u_delta = forward_solve(disc, SourceSeparable(mu, rng.uniform(0, 1, disc.n_nodes))).states
    data = ObservedData(u_delta + 1e-3 * rng.standard_normal(u_delta.shape))
    f = rng.uniform(0.0, 1.0, disc.n_nodes)

    def J(x):
        states = forward_solve(disc, SourceSeparable(mu, x)).states
        return 0.5 * misfit(disc.grid, mass_omega, states, data.u_delta)

    g, _ = misfit_gradient(disc, mass_omega, f, data, mu, mode)
    Mg = disc.mass @ g
    errors = []
    for _ in range(directions):
        z = rng.standard_normal(disc.n_nodes)
        fd = (J(f + eps * z) - J(f - eps * z)) / (2.0 * eps)
        an = float(Mg @ z)
        errors.append(abs(fd - an) / max(abs(fd), abs(an), 1e-300))
    worst = max(errors)
    return {"check": "gradient", "alpha": alpha, "n": n, "K_tau": K, "directions": directions, "eps": eps,
            "mode": mode, "max_rel_error": worst, "tol": tol, "passed": bool(worst < tol)}


# ---------------------------------------------------------------------------
# manufactured solution u = t^2 cos(pi x)
# ---------------------------------------------------------------------------

def mms_exact(x, t):
    return t**2 * np.cos(np.pi * x)


def mms_source(x, t, alpha):
    """Caputo derivative of t^2 is 2 t^(2-alpha) / Gamma(3-alpha)."""
    return (2.0 * t ** (2.0 - alpha) / gamma(3.0 - alpha) + (np.pi**2 + 1.0) * t**2) * np.cos(np.pi * x)


def mms_error(alpha, n, K, T=1.0):
    """L2(Omega) error at t = T of the solver against the manufactured solution."""
    mesh = build_uniform_mesh(1, n)
    disc = Discretization(mesh, TimeGrid(T, K), alpha=alpha)
    # the general source is handed over already L2-projected onto P1
    g = np.stack([
        l2_project(mesh, lambda p, t=t: mms_source(p[:, 0], t, alpha), solver=disc.mass_solver)
        for t in disc.grid.t
    ])
    U = forward_solve(disc, SourceGeneral(g)).states
    pts, weights, phi = quadrature_points(mesh)
    uh = np.einsum("qa,ea->eq", phi, U[-1][mesh.elements])
    diff = uh - mms_exact(pts[..., 0], T)
    return math.sqrt(float(np.sum(weights * diff * diff)))


def observed_orders(sizes, errors):
    """Pairwise log2-ratios ``log(e_i / e_{i+1}) / log(s_{i+1} / s_i)``."""
    out = []
    for (s0, e0), (s1, e1) in zip(zip(sizes, errors), zip(sizes[1:], errors[1:])):
        out.append(math.log(e0 / e1) / math.log(s1 / s0))
    return out


def mms_convergence(alphas=(0.3, 0.8), temporal_K=(25, 50, 100, 200), temporal_n=400,
                    spatial_n=(10, 20, 40, 80), spatial_K=2000, spatial_alpha=0.3,
                    temporal_min=0.9, spatial_min=1.8):
    report = {"check": "mms", "temporal": {}, "spatial": {}}
    ok = True
    for a in alphas:
        errs = [mms_error(a, temporal_n, K) for K in temporal_K]
        orders = observed_orders(temporal_K, errs)
        passed = min(orders) >= temporal_min
        ok &= passed
        report["temporal"][str(a)] = {"K_tau": list(temporal_K), "errors": errs, "orders": orders, "passed": passed}
    errs = [mms_error(spatial_alpha, n, spatial_K) for n in spatial_n]
    orders = observed_orders(spatial_n, errs)
    passed = min(orders) >= spatial_min
    ok &= passed
    report["spatial"] = {"alpha": spatial_alpha, "n": list(spatial_n), "errors": errs, "orders": orders,
                         "passed": passed}
    report["passed"] = bool(ok)
    return report


def norm_estimate_check(cfg, iters=None, reference=None, factor=0.95):
    """Power-iteration norm on the whole domain for ``cfg``'s forward map.

    ``reference`` is the lower bound to clear (after scaling by ``factor``).
    """
    from .harness import build_true_source, mu_samples

    mesh = build_uniform_mesh(cfg.dim, cfg.n_per_axis)
    grid = TimeGrid(cfg.T, cfg.K_tau)
    disc = Discretization(mesh, grid, alpha=cfg.alpha, boundary=cfg.boundary)
    mass_full = disc.mass
    mu = mu_samples(cfg.mu_spec, grid)
    c = estimate_forward_norm(disc, mass_full, mu, iters or cfg.norm_iters)
    f_star = build_true_source(mesh, cfg.f_star_box, cfg.f_star_amplitude)
    u = forward_solve(disc, SourceSeparable(mu, f_star)).states
    fn = math.sqrt(float(f_star @ (mass_full @ f_star)))
    ratio = math.sqrt(float(np.sum(weighted_sq_norms(grid, mass_full, u)))) / fn if fn > 0 else float("nan")
    report = {"check": "norm", "alpha": cfg.alpha, "boundary": cfg.boundary, "c_estimate": c,
              "ratio_at_f_star": ratio}
    if reference is not None:
        report.update(reference=reference, factor=factor, passed=bool(c >= factor * reference))
    else:
        report["passed"] = bool(c >= ratio * (1 - 1e-12))
    return report
