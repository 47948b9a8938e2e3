import os
import subprocess
import sys

import numpy as np
import pytest

from lpminkowski import convexbody as cb, flow, kernels
from lpminkowski.spheregrid import make_grid

pure = kernels.load_backend("python")
try:
    compiled = kernels.load_backend("cython")
except ImportError:  # pragma: no cover
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _inputs(dim, n, alpha=0.6):
    g = make_grid(dim, n)
    u = cb.ellipsoid(g, [1.5] + [1.0] * dim).u
    u = u + 0.01 * g.nodes[:, 0] ** 3
    f = 1.0 + 0.3 * g.nodes[:, -1] ** 2
    return g, np.ascontiguousarray(u), f, alpha


def _sigma(backend, g, u):
    if g.dim == 1:
        return backend.sigma_1d(u, g.inv_c2)
    x = g.extras
    h11, h12, h22 = backend.hess_2d(u, g.nlat, g.nlon, g.d1, g.d2, g.inv_c2, g.inv_2s,
                                    x["sin_phi"], x["cos_phi"])
    return h11 * h22 - h12 * h12


@needs_compiled
def test_backend_names():
    assert pure.BACKEND == "python"
    assert compiled.BACKEND == "cython"
    assert kernels.BACKEND in ("python", "cython")


@needs_compiled
@pytest.mark.parametrize("dim,n", [(1, 256), (2, 32)])
@pytest.mark.parametrize("alpha", [0.6, 1.0, 2.5])
def test_parity(dim, n, alpha):
    g, u, f, _ = _inputs(dim, n)
    s_p, s_c = _sigma(pure, g, u), _sigma(compiled, g, u)
    assert np.allclose(s_p, s_c, rtol=1e-12, atol=1e-12)
    if dim == 1:
        assert np.allclose(pure.grad_1d(u, g.inv_2s), compiled.grad_1d(u, g.inv_2s), atol=1e-12)
    else:
        a = pure.grad_2d(u, g.nlat, g.nlon, g.d1, g.inv_2s)
        b = compiled.grad_2d(u, g.nlat, g.nlon, g.d1, g.inv_2s)
        for x, y in zip(a, b):
            assert np.allclose(x, y, atol=1e-12)
    fa = f ** alpha
    tp = pure.flow_terms(s_p, fa, g.weights, alpha, g.omega)
    tc = compiled.flow_terms(s_p, fa, g.weights, alpha, g.omega)
    assert np.allclose(tp[0], tc[0], rtol=1e-12)
    assert np.allclose(tp[1:], tc[1:], rtol=1e-12)
    dp = pure.dsigma_stats(u, s_p, f, g.weights, alpha, g.omega)
    dc = compiled.dsigma_stats(u, s_p, f, g.weights, alpha, g.omega)
    assert np.allclose(dp, dc, rtol=1e-11)
    if dim == 1:
        sp = pure.split_step_1d(u, tp[0], 1e-5, g.inv_c2, g.weights)
        sc = compiled.split_step_1d(u, tp[0], 1e-5, g.inv_c2, g.weights)
        for x, y in zip(sp, sc):
            assert np.allclose(x, y, rtol=1e-12, atol=1e-13)
    q = 1.0 - 1.0 / alpha
    log_branch = abs(alpha - 1.0) < 1e-12
    z0 = np.full(dim + 1, 0.05)
    ep = pure.entropy_newton(u, f, g.nodes, g.weights, g.omega, q, log_branch, z0, 200, 1e-10)
    ec = compiled.entropy_newton(u, f, g.nodes, g.weights, g.omega, q, log_branch, z0, 200, 1e-10)
    assert np.allclose(ep[0], ec[0], atol=1e-9)
    assert ep[1] == pytest.approx(ec[1], abs=1e-11)


@needs_compiled
def test_flow_steps_agree():
    g = make_grid(1, 128)
    f = 1.0 + 0.2 * np.cos(2 * g.angles)
    out = {}
    for name in ("python", "cython"):
        with kernels.use_backend(name):
            assert kernels.BACKEND == name
            st = flow.initial_state(cb.ellipsoid(g, [2.0, 1.0]), f, 0.7)
            for _ in range(50):
                st = flow.step(st, f, 0.7)
            out[name] = st
    assert np.allclose(out["python"].u.u, out["cython"].u.u, rtol=1e-10)
    assert out["python"].t == pytest.approx(out["cython"].t, rel=1e-12)


def test_use_backend_restores():
    before = kernels.BACKEND, kernels.sigma_1d
    with kernels.use_backend("python"):
        assert kernels.sigma_1d is pure.sigma_1d
    assert (kernels.BACKEND, kernels.sigma_1d) == before
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")


def test_environment_forces_fallback():
    env = dict(os.environ, LPMINKOWSKI_PURE_PYTHON="1")
    code = "import lpminkowski; print(lpminkowski.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
