"""The numba kernels and their numpy fallbacks must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numba import njit

from tvfrac import _kernels
from tvfrac.fracstep import L1Scheme
from tvfrac.mesh_fem import build_uniform_mesh

NAMES = ("history_sum", "element_grad", "div_scatter", "project_ball", "element_norm_sum")
_compiled = {name: njit(cache=True)(getattr(_kernels, f"_{name}_loop")) for name in NAMES}


def _args(name, seed, dim):
    rng = np.random.default_rng(seed)
    mesh = build_uniform_mesh(dim, 5)
    q = rng.standard_normal((mesh.n_elements, dim)) * 2
    if name == "history_sum":
        U = rng.standard_normal((13, mesh.n_nodes))
        return (L1Scheme(0.4, 1 / 12, 12).d, U, int(rng.integers(0, 13)))
    if name == "element_grad":
        return (rng.standard_normal(mesh.n_nodes), mesh.elements, mesh.dphi)
    if name == "div_scatter":
        return (q, mesh.elements, mesh.dphi, mesh.element_measure, mesh.n_nodes)
    if name == "project_ball":
        return (q,)
    return (q, mesh.element_measure)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 2**31 - 1), st.sampled_from([1, 2]))
def test_numba_and_numpy_kernels_agree(name, seed, dim):
    args = _args(name, seed, dim)
    ref = getattr(_kernels, f"{name}_numpy")(*args)
    got = _compiled[name](*args)
    np.testing.assert_allclose(np.asarray(got), np.asarray(ref), rtol=1e-13, atol=1e-13)


def test_backend_flag_selects_numpy_in_a_fresh_process():
    code = "from tvfrac import _kernels; print(_kernels.backend())"
    for flag, expected in (("1", "numpy"), ("0", "numba")):
        env = dict(os.environ, TVFRAC_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == expected


def test_both_backends_give_the_same_inversion():
    code = (
        "from tvfrac.harness import ExperimentConfig, run_experiment; "
        "r = run_experiment(ExperimentConfig(n_per_axis=10, K_tau=10, omega_boxes=(((0.2, 0.7),),), "
        "sigma=5.0, N_max=30)); print(repr(r.row.e_r), r.row.n)"
    )
    results = []
    for flag in ("0", "1"):
        env = dict(os.environ, TVFRAC_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        e, n = out.stdout.split()
        results.append((float(e), int(n)))
    assert results[0][1] == results[1][1]
    assert results[0][0] == pytest.approx(results[1][0], rel=1e-10)
