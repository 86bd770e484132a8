"""Time the numba kernels against their numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20] [--end-to-end]

Kernel timings are best-of-``repeat`` after a warm-up call (so numba compile
time is excluded). ``--end-to-end`` also times one Example 1 inversion in a
subprocess per backend, selected through ``TVFRAC_DISABLE_NUMBA``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
from numba import njit

from tvfrac import _kernels
from tvfrac.fracstep import L1Scheme
from tvfrac.mesh_fem import build_uniform_mesh

E2E_SNIPPET = (
    "import time; from tvfrac import presets; from tvfrac.harness import run_experiment; "
    "t=time.perf_counter(); r=run_experiment(presets.example1()); "
    "print(f'{time.perf_counter()-t:.3f} {r.row.n}')"
)


def _cases():
    mesh = build_uniform_mesh(2, 40)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(mesh.n_nodes)
    q = rng.standard_normal((mesh.n_elements, 2))
    scheme = L1Scheme(0.6, 1 / 50, 50)
    U = rng.standard_normal((51, mesh.n_nodes))
    args = {
        "history_sum": (scheme.d, U, 50),
        "element_grad": (f, mesh.elements, mesh.dphi),
        "div_scatter": (q, mesh.elements, mesh.dphi, mesh.element_measure, mesh.n_nodes),
        "project_ball": (q,),
        "element_norm_sum": (q, mesh.element_measure),
    }
    return args


def bench(repeat):
    rows = []
    for name, args in _cases().items():
        np_fn = getattr(_kernels, f"{name}_numpy")
        nb_fn = njit(cache=True)(getattr(_kernels, f"_{name}_loop"))
        a, b = np_fn(*args), nb_fn(*args)  # warm-up and agreement check
        err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        t_np = min(timeit.repeat(lambda: np_fn(*args), number=10, repeat=repeat)) / 10
        t_nb = min(timeit.repeat(lambda: nb_fn(*args), number=10, repeat=repeat)) / 10
        rows.append((name, t_np, t_nb, err))
    print(f"{'kernel':<18}{'numpy [us]':>12}{'numba [us]':>12}{'speedup':>9}{'max diff':>11}")
    for name, t_np, t_nb, err in rows:
        print(f"{name:<18}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>9.2f}{err:>11.1e}")
    return rows


def end_to_end():
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, TVFRAC_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env, capture_output=True, text=True, check=True)
        secs, n = out.stdout.split()
        print(f"example1 inversion [{label}]: {float(secs):.2f} s for {n} iterations")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--end-to-end", action="store_true")
    opts = ap.parse_args()
    bench(opts.repeat)
    if opts.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
