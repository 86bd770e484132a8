"""Dense, loop-level reimplementations used as independent oracles.

Nothing here imports the package's assembly, solver or adjoint code; only
plain numpy and the math module are used.
"""
import math

import numpy as np


def dense_1d_matrices(n, omega=None):
    """Mass, stiffness and omega-mass of P1 on a uniform 1D mesh, written out by hand."""
    h = 1.0 / n
    N = n + 1
    M = np.zeros((N, N))
    S = np.zeros((N, N))
    Mw = np.zeros((N, N))
    for e in range(n):
        i, j = e, e + 1
        loc_m = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        loc_s = 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
        for a, p in enumerate((i, j)):
            for b, q in enumerate((i, j)):
                M[p, q] += loc_m[a, b]
                S[p, q] += loc_s[a, b]
        mid = (e + 0.5) * h
        if omega is None or any(lo < mid < hi for lo, hi in omega):
            for a, p in enumerate((i, j)):
                for b, q in enumerate((i, j)):
                    Mw[p, q] += loc_m[a, b]
    return M, S, Mw


def space_time_operator(n, K, alpha, T, mu):
    """Dense maps f -> (u^1, ..., u^K) stacked, for the L1 recurrence with Neumann boundary."""
    M, S, _ = dense_1d_matrices(n)
    N = n + 1
    tau = T / K
    eta = math.gamma(2.0 - alpha) * tau**alpha
    b = np.array([(j + 1) ** (1 - alpha) - j ** (1 - alpha) for j in range(K + 1)])
    A = (1.0 + eta) * M + eta * S
    # block lower-triangular system L U = B f
    L = np.zeros((K * N, K * N))
    B = np.zeros((K * N, N))
    for k in range(K):  # row block k produces u^{k+1}
        L[k * N:(k + 1) * N, k * N:(k + 1) * N] = A
        for j in range(k):  # history term (b_j - b_{j+1}) u^{k-j}
            col = k - j - 1  # u^{k-j} lives in block k-j-1
            L[k * N:(k + 1) * N, col * N:(col + 1) * N] -= (b[j] - b[j + 1]) * M
        B[k * N:(k + 1) * N] = eta * mu[k + 1] * M
    return np.linalg.solve(L, B)  # (K N, N)


def straight_line_pd_step(n, K, alpha, T, mu, omega, u_delta, f_n, p_n, gamma, sigma, theta, lo, hi,
                          dual_point="tilde"):
    """One primal-dual step computed with dense linear algebra only.

    Returns ``(f_tilde, f_next, p_next)``.
    """
    N = n + 1
    h = 1.0 / n
    M, _, Mw = dense_1d_matrices(n, omega)
    G = space_time_operator(n, K, alpha, T, mu)
    tau = T / K
    c = np.ones(K + 1)
    c[0] = c[-1] = 0.5
    W = np.zeros((K * N, K * N))
    for k in range(1, K + 1):
        W[(k - 1) * N:k * N, (k - 1) * N:k * N] = tau * c[k] * Mw
    r = G @ f_n - u_delta[1:].reshape(-1)
    # derivative of (1/2) r^T W r w.r.t. f, then its L2 Riesz representative
    grad_misfit = np.linalg.solve(M, G.T @ (W @ r))
    # (q, grad g) = r_div . g ; in 1D each element e pushes -q_e to node e, +q_e to node e+1
    q = np.asarray(p_n, dtype=float).reshape(n)
    r_div = np.zeros(N)
    for e in range(n):
        r_div[e] -= q[e]
        r_div[e + 1] += q[e]
    div_p = -np.linalg.solve(M, r_div)
    f_tilde = np.clip(f_n + sigma * (gamma * div_p - grad_misfit), lo, hi)
    f_next = 2.0 * f_tilde - f_n
    f_dual = f_tilde if dual_point == "tilde" else f_next
    grad_f = np.array([(f_dual[e + 1] - f_dual[e]) / h for e in range(n)])
    p_raw = q + gamma * sigma / theta * grad_f
    p_next = np.array([v / max(1.0, abs(v)) for v in p_raw])
    return f_tilde, f_next, p_next
