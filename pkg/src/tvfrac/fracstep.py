"""Uniform time grid, L1 weights for the Caputo derivative, trapezoid weights."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

# Lanczos approximation, g = 7, 9 terms; relative error ~1e-15 for real z > 0.5.
_LANCZOS_G = 7
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(z):
    """Gamma function of a real argument (not a pole)."""
    z = float(z)
    if z < 0.5:
        return math.pi / (math.sin(math.pi * z) * gamma(1.0 - z))
    z -= 1.0
    x = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        x += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * x


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha!r}")


def l1_weights(alpha, K):
    """b_j = (j+1)^(1-alpha) - j^(1-alpha) for j = 0..K-1."""
    _check_alpha(alpha)
    if int(K) != K or K < 1:
        raise InvalidArgument(f"K must be a positive integer, got {K!r}")
    j = np.arange(int(K) + 1, dtype=np.float64)
    powers = j ** (1.0 - alpha)
    return np.diff(powers)


def eta(alpha, tau):
    """Scaling factor Gamma(2 - alpha) * tau^alpha of the L1 scheme."""
    _check_alpha(alpha)
    if not tau > 0:
        raise InvalidArgument(f"tau must be positive, got {tau!r}")
    return gamma(2.0 - alpha) * tau**alpha


@dataclass(frozen=True, eq=False)
class TimeGrid:
    T: float
    K_tau: int
    tau: float = field(init=False)
    t: np.ndarray = field(init=False, repr=False)
    c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgument(f"T must be positive, got {self.T!r}")
        if int(self.K_tau) != self.K_tau or self.K_tau < 1:
            raise InvalidArgument(f"K_tau must be a positive integer, got {self.K_tau!r}")
        K = int(self.K_tau)
        object.__setattr__(self, "K_tau", K)
        tau = self.T / K
        c = np.ones(K + 1)
        c[0] = c[-1] = 0.5
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "t", np.arange(K + 1) * tau)
        object.__setattr__(self, "c", c)

    @property
    def quad_weights(self):
        """tau * c_k, the composite trapezoid weights on [0, T]."""
        return self.tau * self.c


@dataclass(frozen=True, eq=False)
class L1Scheme:
    alpha: float
    tau: float
    K_tau: int
    b: np.ndarray = field(init=False, repr=False)
    d: np.ndarray = field(init=False, repr=False)
    eta: float = field(init=False)

    def __post_init__(self):
        b = l1_weights(self.alpha, self.K_tau)
        object.__setattr__(self, "b", b)
        # history coefficients b_j - b_{j+1}, j = 0..K-2 (padded with a trailing 0)
        object.__setattr__(self, "d", np.ascontiguousarray(np.append(b[:-1] - b[1:], 0.0)))
        object.__setattr__(self, "eta", eta(self.alpha, self.tau))

    @classmethod
    def for_grid(cls, alpha, grid):
        return cls(alpha, grid.tau, grid.K_tau)


def caputo_apply(scheme, history):
    """L1 approximation of the Caputo derivative at the last level of ``history``.

    ``history`` holds u^0..u^{k+1} (rows); returns
    (1/eta) * sum_{j=0}^{k} b_j (u^{k-j+1} - u^{k-j}).
    """
    U = np.asarray(history, dtype=np.float64)
    if U.shape[0] < 2:
        raise InvalidArgument("history needs at least two time levels")
    k = U.shape[0] - 2
    if k + 1 > len(scheme.b):
        raise InvalidArgument("history is longer than the scheme's weight table")
    incr = U[1:] - U[:-1]  # incr[i] = u^{i+1} - u^i
    # j = 0..k pairs b_j with incr[k - j]
    return np.tensordot(scheme.b[: k + 1], incr[::-1], axes=(0, 0)) / scheme.eta
