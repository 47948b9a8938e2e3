"""Pure numpy implementations of the hot kernels.

This module is the reference backend. The compiled extension ``_kernels``
exposes the same functions with the same signatures and is preferred when
it can be imported (see :mod:`lpminkowski.kernels`).
"""

import math

import numpy as np

BACKEND = "python"


def sigma_1d(u, inv_c2):
    """Return ``u'' + u`` on a uniform periodic circle grid.

    The second difference is divided by ``2 - 2 cos h`` instead of ``h**2``,
    which keeps the scheme second order while annihilating ``cos`` and ``sin``
    exactly.
    """
    u = np.asarray(u, dtype=float)
    return (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) * inv_c2 + u


def grad_1d(u, inv_2s):
    """Angular derivative ``u'`` with the fitted central difference."""
    u = np.asarray(u, dtype=float)
    return (np.roll(u, -1) - np.roll(u, 1)) * inv_2s


def _rows_with_ghosts(v, nlat, nlon):
    # pad one ghost row on each side by reflecting through the poles
    half = nlon // 2
    g = np.empty((nlat + 2, nlon))
    g[1:-1] = v
    g[0] = np.roll(v[0], -half)
    g[-1] = np.roll(v[-1], -half)
    return g


def grad_2d(u, nlat, nlon, d1, inv_2sl):
    """Return ``(u_phi, u_lam)`` on a colatitude-longitude product grid."""
    v = np.asarray(u, dtype=float).reshape(nlat, nlon)
    g = _rows_with_ghosts(v, nlat, nlon)
    u_phi = d1[:, 0:1] * g[:-2] + d1[:, 1:2] * g[1:-1] + d1[:, 2:3] * g[2:]
    u_lam = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) * inv_2sl
    return u_phi.ravel(), u_lam.ravel()


def hess_2d(u, nlat, nlon, d1, d2, inv_c2l, inv_2sl, sin_phi, cos_phi):
    """Components ``(h11, h12, h22)`` of the Hessian plus metric on S^2.

    The frame is ``(e_phi, e_lam)``; ``sin_phi`` and ``cos_phi`` hold one
    value per latitude row.
    """
    v = np.asarray(u, dtype=float).reshape(nlat, nlon)
    g = _rows_with_ghosts(v, nlat, nlon)
    up = np.roll(v, -1, axis=1)
    um = np.roll(v, 1, axis=1)
    u_lam = (up - um) * inv_2sl
    u_ll = (up - 2.0 * v + um) * inv_c2l
    u_phi = d1[:, 0:1] * g[:-2] + d1[:, 1:2] * g[1:-1] + d1[:, 2:3] * g[2:]
    u_pp = d2[:, 0:1] * g[:-2] + d2[:, 1:2] * g[1:-1] + d2[:, 2:3] * g[2:]
    gl = _rows_with_ghosts(u_lam, nlat, nlon)
    # across the pole the longitude derivative is just the shifted row's
    u_pl = d1[:, 0:1] * gl[:-2] + d1[:, 1:2] * gl[1:-1] + d1[:, 2:3] * gl[2:]
    s = sin_phi[:, None]
    c = cos_phi[:, None]
    h11 = u_pp + v
    h12 = (u_pl - (c / s) * u_lam) / s
    h22 = (u_ll + s * c * u_phi) / (s * s) + v
    return h11.ravel(), h12.ravel(), h22.ravel()


def flow_terms(sigma, fa, w, alpha, omega):
    """Curvature part of the normalized flow speed.

    Returns ``(F, m, cfl)`` where ``F = f**a K**a / m``,
    ``m = mean(f**a K**(a-1))`` and ``cfl = max(F / sigma)``.
    """
    # K = 1/sigma, so f^a K^a = fa * sigma^-a
    sk = np.power(sigma, -alpha)
    num = fa * sk
    m = float(np.dot(w, num * sigma)) / omega
    F = num / m
    return F, m, float(np.max(F / sigma))


def split_step_1d(u, F, dt, inv_c2, w):
    """Explicit split update on S^1 fused with the curvature evaluation.

    Returns ``(u_new, sigma, min_u, min_sigma, max_sigma, sum_w_u_sigma)``.
    """
    un = math.exp(dt) * np.asarray(u, dtype=float) - dt * np.asarray(F, dtype=float)
    sg = sigma_1d(un, inv_c2)
    return un, sg, float(un.min()), float(sg.min()), float(sg.max()), float(np.dot(w, un * sg))


def dsigma_stats(u, sigma, f, w, alpha, omega):
    """Diagnostics of ``h = f u^(-1/a) K`` against ``d sigma = u sigma d theta``.

    Returns ``(eta, ratio, residual, mass)``: ``eta`` is the mean of ``h`` for
    the normalized-average notation, ``ratio`` is the self-normalized
    dissipation ratio, ``residual`` the mean of ``|u^(1/a) sigma - f / eta|``
    and ``mass`` the mean of the ``d sigma`` density.
    """
    ds = w * u * sigma
    mass = float(ds.sum()) / omega
    lhs = np.power(u, 1.0 / alpha) * sigma
    h = f / lhs
    eta = float(np.dot(ds, h)) / omega
    ha = np.power(h, alpha)
    tot = mass * omega
    m1 = float(np.dot(ds, h)) / tot
    ma = float(np.dot(ds, ha)) / tot
    ma1 = float(np.dot(ds, ha * h)) / tot
    ratio = ma1 / (m1 * ma)
    res = float(np.dot(w, np.abs(lhs - f / eta))) / omega
    return eta, ratio, res, mass


def _entropy_eval(u, f, nodes, w, omega, q, log_branch, z, need_derivs):
    uz = u - nodes @ z
    if uz.min() <= 0.0:
        return None
    if log_branch:
        fw = f * w / omega
        val = float(np.dot(fw, np.log(uz)))
        if not need_derivs:
            return val, None, None
        a = fw / uz
        grad = -(a @ nodes)
        hess = -(nodes.T * (a / uz)) @ nodes
        return val, grad, hess
    fw = f * w / omega
    pq = np.power(uz, q)
    g = float(np.dot(fw, pq))
    if g <= 0.0:
        return None
    val = math.log(g) / q
    if not need_derivs:
        return val, None, None
    a = fw * pq / uz
    g1 = a @ nodes
    g2 = (nodes.T * (a / uz)) @ nodes
    grad = -g1 / g
    hess = (q - 1.0) * g2 / g - q * np.outer(g1, g1) / (g * g)
    return val, grad, hess


def entropy_newton(u, f, nodes, w, omega, q, log_branch, z0, maxit, gtol):
    """Maximize the translated entropy over interior points by damped Newton.

    Returns ``(z, value, value_at_z0, iterations, converged)``. ``value_at_z0``
    is NaN when ``z0`` is not interior. The objective is strictly concave on
    the interior, so Newton with backtracking and a feasibility shrink
    converges from any interior start.
    """
    u = np.asarray(u, dtype=float)
    z = np.array(z0, dtype=float)
    cur = _entropy_eval(u, f, nodes, w, omega, q, log_branch, z, True)
    if cur is None:
        return z, math.nan, math.nan, 0, False
    val0 = cur[0]
    it = 0
    converged = False
    while True:
        val, grad, hess = cur
        gnorm = float(np.sqrt(np.dot(grad, grad)))
        if gnorm < gtol:
            converged = True
            break
        if it >= maxit:
            break
        it += 1
        try:
            chol = np.linalg.cholesky(-hess)
            y = np.linalg.solve(chol, grad)
            s = np.linalg.solve(chol.T, y)
            dec = float(np.dot(grad, s))
        except np.linalg.LinAlgError:
            s = grad.copy()
            dec = gnorm * gnorm
        if dec < 1e-14 * max(1.0, abs(val)):
            # inside the quadratic basin: the line search cannot resolve the
            # gain in floating point, so take the full step if it is feasible
            nxt = _entropy_eval(u, f, nodes, w, omega, q, log_branch, z + s, True)
            if nxt is None:
                break
            z = z + s
            cur = nxt
            continue
        t = 1.0
        accepted = False
        while t > 1e-20:
            zt = z + t * s
            nxt = _entropy_eval(u, f, nodes, w, omega, q, log_branch, zt, True)
            if nxt is not None and nxt[0] >= val + 1e-4 * t * dec:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        z = zt
        cur = nxt
    return z, cur[0], val0, it, converged
