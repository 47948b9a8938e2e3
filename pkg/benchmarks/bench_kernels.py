"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--full-step]
"""

import argparse
import timeit

import numpy as np

from lpminkowski import convexbody, flow, kernels, spheregrid


def _cases(backend, dim, n):
    g = spheregrid.make_grid(dim, n)
    u = convexbody.ellipsoid(g, [1.5] + [1.0] * dim).u
    f = 1.0 + 0.3 * g.nodes[:, 0] ** 2
    alpha = 0.6
    w = g.weights
    z0 = np.zeros(dim + 1)
    q = 1.0 - 1.0 / alpha
    if dim == 1:
        sigma = backend.sigma_1d(u, g.inv_c2)
        cases = {
            "sigma_1d": lambda: backend.sigma_1d(u, g.inv_c2),
            "grad_1d": lambda: backend.grad_1d(u, g.inv_2s),
        }
    else:
        x = g.extras
        args = (g.nlat, g.nlon, g.d1, g.d2, g.inv_c2, g.inv_2s, x["sin_phi"], x["cos_phi"])
        h11, h12, h22 = backend.hess_2d(u, *args)
        sigma = h11 * h22 - h12 * h12
        cases = {
            "hess_2d": lambda: backend.hess_2d(u, *args),
            "grad_2d": lambda: backend.grad_2d(u, g.nlat, g.nlon, g.d1, g.inv_2s),
        }
    fa = f ** alpha
    F, _, _ = backend.flow_terms(sigma, fa, w, alpha, g.omega)
    cases["flow_terms"] = lambda: backend.flow_terms(sigma, fa, w, alpha, g.omega)
    cases["dsigma_stats"] = lambda: backend.dsigma_stats(u, sigma, f, w, alpha, g.omega)
    cases["entropy_newton"] = lambda: backend.entropy_newton(
        u, f, g.nodes, w, g.omega, q, False, z0, 500, 1e-10)
    if dim == 1:
        cases["split_step_1d"] = lambda: backend.split_step_1d(u, F, 1e-5, g.inv_c2, w)
    return cases


def bench(repeat, sizes):
    try:
        compiled = kernels.load_backend("cython")
    except ImportError:
        print("compiled extension not built; only the numpy fallback is available")
        compiled = None
    pure = kernels.load_backend("python")
    print(f"{'kernel':16s} {'dim':>3s} {'N':>6s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for dim, n in sizes:
        ref = _cases(pure, dim, n)
        fast = _cases(compiled, dim, n) if compiled else {}
        for name, fn in ref.items():
            tp = min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat * 1e6
            if name in fast:
                tc = min(timeit.repeat(fast[name], number=repeat, repeat=3)) / repeat * 1e6
                print(f"{name:16s} {dim:3d} {n:6d} {tp:10.1f} {tc:10.1f} {tp / tc:8.1f}")
            else:
                print(f"{name:16s} {dim:3d} {n:6d} {tp:10.1f} {'-':>10s} {'-':>8s}")


def bench_flow(steps):
    """Wall time of complete flow steps with each backend."""
    g = spheregrid.make_grid(1, 256)
    f = np.ones(g.size)
    for name in ("python", "cython"):
        try:
            ctx = kernels.use_backend(name)
            ctx.__enter__()
        except ImportError:
            continue
        try:
            st = flow.initial_state(convexbody.ellipsoid(g, [2.0, 1.0]), f, 1.0)
            t = timeit.timeit(lambda: flow.step(st, f, 1.0), number=steps)
        finally:
            ctx.__exit__(None, None, None)
        print(f"flow.step {name:7s} N=256: {t / steps * 1e6:8.1f} us/step")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--full-step", action="store_true", help="also time complete flow steps")
    args = ap.parse_args()
    bench(args.repeat, [(1, 256), (1, 2048), (2, 64), (2, 128)])
    if args.full_step:
        bench_flow(2000)


if __name__ == "__main__":
    main()
