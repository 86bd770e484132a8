"""Linearized primal-dual iteration for the TV-regularized source problem.

One step, from the primal anchor ``f^n`` and dual ``p^n``::

    f~^{n+1} = P_box(f^n + s (gamma div p^n - g(f^n)))
    f^{n+1}  = 2 f~^{n+1} - f^n
    p^{n+1}  = P_ball(p^n + (gamma s / theta) grad f_dual)

where ``g`` is the misfit gradient, ``div p = -M^{-1} div_adjoint(p)`` and
``f_dual`` is ``f~^{n+1}`` or ``f^{n+1}``. The reconstruction handed back is
always the feasible ``f~``.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .adjoint import GRADIENT_MODES, ObservedData, adjoint_solve, gradient_from_adjoint, misfit, weighted_sq_norms
from .errors import DivergenceError, InvalidArgument
from .forward import SourceSeparable, forward_solve, l2_norm
from .mesh_fem import div_adjoint, grad
from .tvreg import BoxBounds, project_ball, project_box, tv_value

log = logging.getLogger(__name__)

DUAL_POINTS = ("tilde", "extrapolated")
PRIMAL_ANCHORS = ("extrapolated", "tilde")
DISCREPANCY_MEASURES = ("norm", "squared")
STOP_REASONS = ("max-iters", "rel-change", "morozov")


@dataclass(frozen=True)
class PDConfig:
    gamma: float
    sigma: float
    theta: float
    N_max: int = 3000
    rel_change_tol: float = 1e-4
    morozov_factor: float = 1.1
    gradient_mode: str = "transpose"
    dual_update_point: str = "tilde"
    # which iterate the next primal step linearizes around
    primal_anchor: str = "extrapolated"
    # "norm": sqrt(res) <= factor * delta; "squared": res <= factor * delta
    discrepancy: str = "norm"
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not (self.gamma >= 0 and self.sigma > 0 and self.theta > 0):
            raise InvalidArgument("need gamma >= 0, sigma > 0, theta > 0")
        if self.N_max < 0 or self.rel_change_tol < 0:
            raise InvalidArgument("N_max and rel_change_tol must be non-negative")
        if self.morozov_factor < 1:
            raise InvalidArgument("morozov_factor must be >= 1")
        for name, value, allowed in (
            ("gradient_mode", self.gradient_mode, GRADIENT_MODES),
            ("dual_update_point", self.dual_update_point, DUAL_POINTS),
            ("primal_anchor", self.primal_anchor, PRIMAL_ANCHORS),
            ("discrepancy", self.discrepancy, DISCREPANCY_MEASURES),
        ):
            if value not in allowed:
                raise InvalidArgument(f"{name} must be one of {allowed}, got {value!r}")


@dataclass(eq=False)
class InverseProblem:
    """Everything a step needs that does not change between iterations."""

    disc: object
    mass_omega: object
    mu: np.ndarray
    data: ObservedData
    box: BoxBounds = field(default_factory=BoxBounds)
    f_star: np.ndarray = None

    def forward(self, f):
        return forward_solve(self.disc, SourceSeparable(self.mu, f)).states

    def res(self, states):
        return misfit(self.disc.grid, self.mass_omega, states, self.data.u_delta)


@dataclass(eq=False)
class PDState:
    f_n: np.ndarray  # primal anchor (may leave the box)
    f_tilde: np.ndarray  # projected iterate, the reconstruction
    p_n: np.ndarray
    n: int = 0
    res_history: list = field(default_factory=list)
    er_history: list = field(default_factory=list)
    stop_reason: str = None
    # forward states of f_n and f_tilde, reused to keep one solve per step
    u_anchor: np.ndarray = field(default=None, repr=False)
    u_tilde: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class StepCertificate:
    c_estimate: float
    grad_norm_estimate: float
    lhs: float
    rhs: float
    satisfied: bool


def check_step_condition(config, c_estimate, grad_norm):
    """(1/s - c^2)(theta/s) > gamma^2 ||grad||^2."""
    lhs = (1.0 / config.sigma - c_estimate**2) * (config.theta / config.sigma)
    rhs = config.gamma**2 * grad_norm**2
    return StepCertificate(float(c_estimate), float(grad_norm), float(lhs), float(rhs), bool(lhs > rhs))


def estimate_forward_norm(disc, mass_omega, mu, iters, start=None):
    """Power iteration for the norm of f -> (u^k(f))|_omega.

    The domain carries the L2(Omega) inner product, the range the
    trapezoid-weighted L2(omega) one. Returns sqrt of the largest Rayleigh
    quotient seen, which is nondecreasing in ``iters``.
    """
    if iters < 1:
        raise InvalidArgument("iters must be >= 1")
    x = np.ones(disc.n_nodes) if start is None else np.array(start, dtype=np.float64)
    if not np.any(x):
        raise InvalidArgument("start vector must be nonzero")
    mu = np.asarray(mu, dtype=np.float64)
    best = 0.0
    for _ in range(iters):
        x = x / l2_norm(disc, x)
        states = forward_solve(disc, SourceSeparable(mu, x)).states
        W = adjoint_solve(disc, mass_omega, states, "transpose")
        y = gradient_from_adjoint(disc.grid, mu, W)
        best = max(best, float(np.sum(weighted_sq_norms(disc.grid, mass_omega, states))))
        x = y
        if not np.any(x):
            break
    return math.sqrt(best)


def discrepancy_value(config, res):
    return math.sqrt(res) if config.discrepancy == "norm" else res


def error_ratio(disc, f, f_star):
    return l2_norm(disc, f - f_star) / l2_norm(disc, f_star)


def initial_state(problem, f0, p0):
    f0 = np.array(f0, dtype=np.float64)
    p0 = np.array(p0, dtype=np.float64).reshape(problem.disc.mesh.n_elements, problem.disc.mesh.dim)
    u0 = problem.forward(f0)
    return PDState(f_n=f0, f_tilde=f0.copy(), p_n=p0, u_anchor=u0, u_tilde=u0)


def pd_step(state, config, problem):
    """One linearized primal-dual step; one forward and one adjoint solve."""
    disc = problem.disc
    mesh = disc.mesh
    u_anchor = state.u_anchor if state.u_anchor is not None else problem.forward(state.f_n)
    W = adjoint_solve(disc, problem.mass_omega, u_anchor - problem.data.u_delta, config.gradient_mode)
    g = gradient_from_adjoint(disc.grid, problem.mu, W)
    # div p as a P1 field: -M^{-1} (q, grad .)
    div_p = -disc.mass_solver.solve(div_adjoint(mesh, state.p_n))
    f_tilde = project_box(state.f_n + config.sigma * (config.gamma * div_p - g), problem.box)
    f_extra = 2.0 * f_tilde - state.f_n
    f_dual = f_tilde if config.dual_update_point == "tilde" else f_extra
    p_new = project_ball(state.p_n + (config.gamma * config.sigma / config.theta) * grad(mesh, f_dual))

    if config.primal_anchor == "extrapolated":
        anchor = f_extra
        u_new_anchor = problem.forward(anchor)
        # linearity: u(f~) is the midpoint of u(f^n) and u(2 f~ - f^n)
        u_tilde = 0.5 * (u_new_anchor + u_anchor)
    else:
        anchor = f_tilde
        u_new_anchor = problem.forward(anchor)
        u_tilde = u_new_anchor

    if not (np.all(np.isfinite(f_tilde)) and np.all(np.isfinite(p_new)) and np.all(np.isfinite(u_tilde))):
        raise DivergenceError(f"non-finite iterate at step {state.n + 1}", state)
    return PDState(
        f_n=anchor,
        f_tilde=f_tilde,
        p_n=p_new,
        n=state.n + 1,
        res_history=state.res_history,
        er_history=state.er_history,
        u_anchor=u_new_anchor,
        u_tilde=u_tilde,
    )


def pd_run(problem, config, f0, p0, grad_norm=None, c_estimate=None, callback=None):
    """Iterate :func:`pd_step` until a stopping rule fires.

    Returns ``(state, log_records)``. Each record has keys ``n, res, res_norm,
    e_r, tv, df, dp``; ``e_r`` is NaN without ``problem.f_star``.
    """
    if c_estimate is not None and grad_norm is not None:
        cert = check_step_condition(config, c_estimate, grad_norm)
        if not cert.satisfied:
            warnings.warn(
                f"step condition violated: lhs={cert.lhs:.3e} <= rhs={cert.rhs:.3e}", RuntimeWarning, stacklevel=2
            )
    disc = problem.disc
    delta = problem.data.delta
    state = initial_state(problem, f0, p0)
    records = []

    def record(st, df, dp):
        res = problem.res(st.u_tilde)
        er = error_ratio(disc, st.f_tilde, problem.f_star) if problem.f_star is not None else float("nan")
        st.res_history.append(res)
        if problem.f_star is not None:
            st.er_history.append(er)
        rec = dict(n=st.n, res=res, res_norm=math.sqrt(res), e_r=er, tv=tv_value(disc.mesh, st.f_tilde), df=df, dp=dp)
        records.append(rec)
        if callback is not None:
            callback(rec)
        return res

    res0 = record(state, 0.0, 0.0)
    if discrepancy_value(config, res0) <= config.morozov_factor * delta:
        state.stop_reason = "morozov"
        return state, records
    if config.N_max == 0:
        state.stop_reason = "max-iters"
        return state, records

    while True:
        prev = state
        state = pd_step(prev, config, problem)
        step = l2_norm(disc, state.f_tilde - prev.f_tilde)
        dp = float(np.sqrt(np.sum(disc.mesh.element_measure * np.sum((state.p_n - prev.p_n) ** 2, axis=1))))
        res = record(state, step, dp)
        if not math.isfinite(res) or res > config.divergence_factor * max(res0, 1e-300):
            raise DivergenceError(f"residual blew up at step {state.n}: {res:.3e} vs initial {res0:.3e}", state)
        fnorm = l2_norm(disc, state.f_tilde)
        if discrepancy_value(config, res) <= config.morozov_factor * delta:
            state.stop_reason = "morozov"
        elif fnorm > 0 and step / fnorm <= config.rel_change_tol:
            state.stop_reason = "rel-change"
        elif state.n >= config.N_max:
            state.stop_reason = "max-iters"
        if state.stop_reason is not None:
            log.debug("pd_run stopped at n=%d (%s), res=%.4e", state.n, state.stop_reason, res)
            return state, records
