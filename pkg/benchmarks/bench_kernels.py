"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Also times one 64^3 steady-state solve with each backend.  Both backends
are imported directly, so ``CRIP_PURE_PYTHON`` has no effect here.
"""

import argparse
import json
import platform
import timeit
import warnings

import numpy as np

from crip import _kernels_py

try:
    from crip import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def _cases(rng):
    n = 64
    p3 = rng.random((n, n, n))
    active = np.ones((n, n, n), dtype=np.uint8)
    active[:, :, :4] = 0
    dirichlet = np.array([0, 0, 0, 0, 0, 1], dtype=np.int32)
    out3 = np.empty_like(p3)
    p1 = rng.random(262144)
    u1 = rng.random(262144) * 50
    pos = rng.random((1500, 3)) * 20
    pp = rng.random(1500)
    out1 = np.empty(1500)
    return {
        "reaction_update (262144 cells)": lambda k: k.reaction_update(p1, u1, 1.0, 1e-3),
        "neg_laplacian_3d (64^3)": lambda k: k.neg_laplacian_3d(p3, active, dirichlet, out3),
        "pair_exchange (1500 spins)": lambda k: k.pair_exchange(pos, pp, 1e3, out1),
        "pair_rate_rowsum (1500 spins)": lambda k: k.pair_rate_rowsum(pos, 1e3, out1),
    }


def _time(fn, repeat):
    fn()
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def _steady_solve(module):
    from crip import kernels
    from crip.cli import experiment_text
    from crip.config import Built, parse_config
    from crip.pde import CripProblem

    saved = kernels.neg_laplacian_3d
    kernels.neg_laplacian_3d = module.neg_laplacian_3d
    try:
        b = Built(parse_config(experiment_text("fig3_ratio")))
        prob = CripProblem(b.grid, b.ensemble, b.probe, b.model, b.solver)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return _time(prob.steady_state, 1)
    finally:
        kernels.neg_laplacian_3d = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    ap.add_argument("--skip-solve", action="store_true")
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not built; only the fallback can be timed")
    rng = np.random.default_rng(0)
    rows = []
    for name, call in _cases(rng).items():
        t_py = _time(lambda: call(_kernels_py), args.repeat)
        t_c = _time(lambda: call(_kernels_c), args.repeat) if _kernels_c else float("nan")
        rows.append({"kernel": name, "python_s": t_py, "cython_s": t_c, "speedup": t_py / t_c})
    if not args.skip_solve:
        t_py = _steady_solve(_kernels_py)
        t_c = _steady_solve(_kernels_c) if _kernels_c else float("nan")
        rows.append({"kernel": "steady_state solve (64^3 PMMA)", "python_s": t_py, "cython_s": t_c,
                     "speedup": t_py / t_c})
    print(f"{'kernel':<34} {'python':>11} {'cython':>11} {'speedup':>8}")
    for r in rows:
        print(f"{r['kernel']:<34} {r['python_s'] * 1e3:9.3f}ms {r['cython_s'] * 1e3:9.3f}ms {r['speedup']:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"machine": platform.machine(), "python": platform.python_version(), "results": rows},
                      fh, indent=2)


if __name__ == "__main__":
    main()
