"""Discrete total variation, its subgradient test, and the two projections."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgument
from .mesh_fem import grad


@dataclass(frozen=True)
class BoxBounds:
    f_lower: float = 0.0
    f_upper: float = 1.0

    def __post_init__(self):
        if not self.f_lower < self.f_upper:
            raise InvalidArgument(f"need f_lower < f_upper, got [{self.f_lower}, {self.f_upper}]")


def tv_value(mesh, f):
    """sum_K |K| |grad f|_K with the Euclidean norm; exact for P1."""
    return _kernels.element_norm_sum(grad(mesh, f), mesh.element_measure)


def project_ball(p):
    """Element-wise p_K / max(1, |p_K|)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    return _kernels.project_ball(p)


def project_box(f, box):
    """Nodal clamp into [f_lower, f_upper]."""
    return np.clip(np.asarray(f, dtype=np.float64), box.f_lower, box.f_upper)


def normalized_gradient(mesh, f):
    """The dual field attaining sup_{|p|<=1} (grad f, p); zero where grad f = 0."""
    g = grad(mesh, f)
    n = np.sqrt(np.sum(g * g, axis=1))
    out = np.zeros_like(g)
    nz = n > 0
    out[nz] = g[nz] / n[nz, None]
    return out


def check_subgradient(mesh, f, p, ball_slack=1e-12, rel_tol=1e-10):
    """Test ``p`` in dTV(f): |p_K| <= 1 and (grad f, p) = TV(f).

    Returns ``(ok, defect)`` with ``defect = TV(f) - (grad f, p)`` (>= 0 when
    ``p`` is in the ball). Elements where grad f vanishes do not enter the
    equality.
    """
    p = np.asarray(p, dtype=np.float64).reshape(mesh.n_elements, mesh.dim)
    in_ball = bool(np.all(np.sqrt(np.sum(p * p, axis=1)) <= 1.0 + ball_slack))
    g = grad(mesh, f)
    tv = tv_value(mesh, f)
    pairing = float(np.sum(mesh.element_measure * np.sum(g * p, axis=1)))
    defect = tv - pairing
    ok = in_ball and abs(defect) <= rel_tol * max(tv, 1e-300)
    if tv == 0.0:
        ok = in_ball
    return ok, defect
