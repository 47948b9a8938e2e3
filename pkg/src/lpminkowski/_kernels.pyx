# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same API as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, log, sqrt, fabs, exp, NAN, INFINITY

cnp.import_array()

BACKEND = "cython"


def sigma_1d(u, double inv_c2):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], j
    out = np.empty(n)
    cdef double[::1] o = out
    if n == 0:
        return out
    o[0] = (uv[1 % n] - 2.0 * uv[0] + uv[n - 1]) * inv_c2 + uv[0]
    for j in range(1, n - 1):
        o[j] = (uv[j + 1] - 2.0 * uv[j] + uv[j - 1]) * inv_c2 + uv[j]
    if n > 1:
        o[n - 1] = (uv[0] - 2.0 * uv[n - 1] + uv[n - 2]) * inv_c2 + uv[n - 1]
    return out


def grad_1d(u, double inv_2s):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], j
    out = np.empty(n)
    cdef double[::1] o = out
    for j in range(n):
        o[j] = (uv[(j + 1) % n] - uv[(j + n - 1) % n]) * inv_2s
    return out


cdef inline double _at(const double[::1] v, Py_ssize_t i, Py_ssize_t j,
                       Py_ssize_t nlat, Py_ssize_t nlon) nogil:
    # value at row i (may be -1 or nlat, the ghost rows across the poles)
    if i < 0:
        return v[(j + nlon // 2) % nlon]
    if i >= nlat:
        return v[(nlat - 1) * nlon + (j + nlon // 2) % nlon]
    return v[i * nlon + j]


def grad_2d(u, Py_ssize_t nlat, Py_ssize_t nlon, d1, double inv_2sl):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] a = np.ascontiguousarray(d1, dtype=np.float64)
    up = np.empty(nlat * nlon)
    ul = np.empty(nlat * nlon)
    cdef double[::1] op = up, ol = ul
    cdef Py_ssize_t i, j
    for i in range(nlat):
        for j in range(nlon):
            op[i * nlon + j] = (a[i, 0] * _at(uv, i - 1, j, nlat, nlon)
                                + a[i, 1] * uv[i * nlon + j]
                                + a[i, 2] * _at(uv, i + 1, j, nlat, nlon))
            ol[i * nlon + j] = (uv[i * nlon + (j + 1) % nlon]
                                - uv[i * nlon + (j + nlon - 1) % nlon]) * inv_2sl
    return up, ul


def hess_2d(u, Py_ssize_t nlat, Py_ssize_t nlon, d1, d2, double inv_c2l,
            double inv_2sl, sin_phi, cos_phi):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] a = np.ascontiguousarray(d1, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(d2, dtype=np.float64)
    cdef const double[::1] sp = np.ascontiguousarray(sin_phi, dtype=np.float64)
    cdef const double[::1] cp = np.ascontiguousarray(cos_phi, dtype=np.float64)
    cdef Py_ssize_t n = nlat * nlon, i, j, k
    lam_arr = np.empty(n)
    cdef double[::1] ulam = lam_arr
    for i in range(nlat):
        for j in range(nlon):
            ulam[i * nlon + j] = (uv[i * nlon + (j + 1) % nlon]
                                  - uv[i * nlon + (j + nlon - 1) % nlon]) * inv_2sl
    h11 = np.empty(n)
    h12 = np.empty(n)
    h22 = np.empty(n)
    cdef double[::1] o11 = h11, o12 = h12, o22 = h22
    cdef double um, u0, upp, ull, uph, upp2, upl, s, c
    for i in range(nlat):
        s = sp[i]
        c = cp[i]
        for j in range(nlon):
            k = i * nlon + j
            um = _at(uv, i - 1, j, nlat, nlon)
            u0 = uv[k]
            upp = _at(uv, i + 1, j, nlat, nlon)
            uph = a[i, 0] * um + a[i, 1] * u0 + a[i, 2] * upp
            upp2 = b[i, 0] * um + b[i, 1] * u0 + b[i, 2] * upp
            ull = (uv[i * nlon + (j + 1) % nlon] - 2.0 * u0
                   + uv[i * nlon + (j + nlon - 1) % nlon]) * inv_c2l
            upl = (a[i, 0] * _at(ulam, i - 1, j, nlat, nlon) + a[i, 1] * ulam[k]
                   + a[i, 2] * _at(ulam, i + 1, j, nlat, nlon))
            o11[k] = upp2 + u0
            o12[k] = (upl - (c / s) * ulam[k]) / s
            o22[k] = (ull + s * c * uph) / (s * s) + u0
    return h11, h12, h22


def flow_terms(sigma, fa, w, double alpha, double omega):
    cdef const double[::1] sg = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef const double[::1] fv = np.ascontiguousarray(fa, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = sg.shape[0], j
    cdef bint one = alpha == 1.0
    # numpy's vectorised pow beats a scalar libm loop
    out = np.empty(n) if one else np.power(sg, -alpha)
    cdef double[::1] F = out
    cdef double m = 0.0, r, mx = 0.0
    with nogil:
        for j in range(n):
            if one:
                F[j] = fv[j] / sg[j]
            else:
                F[j] = fv[j] * F[j]
            m += wv[j] * F[j] * sg[j]
        m /= omega
        for j in range(n):
            F[j] /= m
            r = F[j] / sg[j]
            if r > mx:
                mx = r
    return out, m, mx


def split_step_1d(u, F, double dt, double inv_c2, w):
    """Explicit split update on S^1 fused with the curvature evaluation.

    Returns ``(u_new, sigma, min_u, min_sigma, max_sigma, sum_w_u_sigma)``.
    """
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], j
    cdef double e = exp(dt), mn = INFINITY, smn = INFINITY, smx = -INFINITY, vs = 0.0, sj
    un_arr = np.empty(n)
    sg_arr = np.empty(n)
    cdef double[::1] un = un_arr, sg = sg_arr
    with nogil:
        for j in range(n):
            un[j] = e * uv[j] - dt * Fv[j]
            if un[j] < mn:
                mn = un[j]
        for j in range(n):
            sj = (un[(j + 1) % n] - 2.0 * un[j] + un[(j + n - 1) % n]) * inv_c2 + un[j]
            sg[j] = sj
            if sj < smn:
                smn = sj
            if sj > smx:
                smx = sj
            vs += wv[j] * un[j] * sj
    return un_arr, sg_arr, mn, smn, smx, vs


def dsigma_stats(u, sigma, f, w, double alpha, double omega):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] sg = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef const double[::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], j
    cdef double tot = 0.0, s1 = 0.0, sa = 0.0, sa1 = 0.0, ds, h, ha
    cdef double eta, res = 0.0
    cdef bint one = alpha == 1.0
    lhs_arr = np.array(uv) if one else np.power(uv, 1.0 / alpha)
    h_arr = np.empty(n)
    cdef double[::1] lhs = lhs_arr, hv = h_arr
    with nogil:
        for j in range(n):
            lhs[j] = lhs[j] * sg[j]
            hv[j] = fv[j] / lhs[j]
    cdef const double[::1] hav = h_arr if one else np.power(h_arr, alpha)
    with nogil:
        for j in range(n):
            ds = wv[j] * uv[j] * sg[j]
            h = hv[j]
            ha = hav[j]
            tot += ds
            s1 += ds * h
            sa += ds * ha
            sa1 += ds * ha * h
        eta = s1 / omega
        for j in range(n):
            res += wv[j] * fabs(lhs[j] - fv[j] / eta)
    return eta, (sa1 / tot) / ((s1 / tot) * (sa / tot)), res / omega, tot / omega


cdef int _eval(const double[::1] u, const double[::1] fw, const double[:, ::1] X,
               Py_ssize_t d, double q, bint logb, double* z, double* val,
               double* grad, double* hess) nogil:
    # returns 0 if z is infeasible; fw already includes weights / omega
    cdef Py_ssize_t n = u.shape[0], j, a, b
    cdef double uz, g = 0.0, c, pq
    cdef double g1[3]
    cdef double g2[9]
    for a in range(d):
        g1[a] = 0.0
        for b in range(d):
            g2[a * d + b] = 0.0
    for j in range(n):
        uz = u[j]
        for a in range(d):
            uz -= X[j, a] * z[a]
        if uz <= 0.0:
            return 0
        if logb:
            g += fw[j] * log(uz)
            c = fw[j] / uz
        else:
            pq = fw[j] * pow(uz, q)
            g += pq
            c = pq / uz
        for a in range(d):
            g1[a] += c * X[j, a]
        c /= uz
        for a in range(d):
            for b in range(a, d):
                g2[a * d + b] += c * X[j, a] * X[j, b]
    for a in range(d):
        for b in range(a):
            g2[a * d + b] = g2[b * d + a]
    if logb:
        val[0] = g
        for a in range(d):
            grad[a] = -g1[a]
            for b in range(d):
                hess[a * d + b] = -g2[a * d + b]
        return 1
    if g <= 0.0:
        return 0
    val[0] = log(g) / q
    for a in range(d):
        grad[a] = -g1[a] / g
    for a in range(d):
        for b in range(d):
            hess[a * d + b] = (q - 1.0) * g2[a * d + b] / g - q * g1[a] * g1[b] / (g * g)
    return 1


cdef int _solve_neg_def(double* H, double* g, double* s, Py_ssize_t d) nogil:
    # solve (-H) s = g by Cholesky; returns 0 if -H is not positive definite
    cdef double L[9]
    cdef double y[3]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(d):
        for j in range(i + 1):
            acc = -H[i * d + j]
            for k in range(j):
                acc -= L[i * d + k] * L[j * d + k]
            if i == j:
                if acc <= 0.0:
                    return 0
                L[i * d + i] = sqrt(acc)
            else:
                L[i * d + j] = acc / L[j * d + j]
    for i in range(d):
        acc = g[i]
        for k in range(i):
            acc -= L[i * d + k] * y[k]
        y[i] = acc / L[i * d + i]
    for i in range(d - 1, -1, -1):
        acc = y[i]
        for k in range(i + 1, d):
            acc -= L[k * d + i] * s[k]
        s[i] = acc / L[i * d + i]
    return 1


def entropy_newton(u, f, nodes, w, double omega, double q, bint log_branch,
                   z0, int maxit, double gtol):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] X = np.ascontiguousarray(nodes, dtype=np.float64)
    fw_arr = np.ascontiguousarray(f, dtype=np.float64) * np.asarray(w, dtype=np.float64) / omega
    cdef const double[::1] fw = fw_arr
    cdef Py_ssize_t d = X.shape[1], a
    cdef double z[3]
    cdef double zt[3]
    cdef double grad[3]
    cdef double hess[9]
    cdef double gt[3]
    cdef double ht[9]
    cdef double s[3]
    cdef double val = 0.0, vt = 0.0, val0, gnorm, dec, t
    cdef int it = 0, ok
    cdef bint converged = False, accepted
    zin = np.asarray(z0, dtype=np.float64)
    for a in range(d):
        z[a] = zin[a]
    if not _eval(uv, fw, X, d, q, log_branch, z, &val, grad, hess):
        return zin.copy(), NAN, NAN, 0, False
    val0 = val
    with nogil:
        while True:
            gnorm = 0.0
            for a in range(d):
                gnorm += grad[a] * grad[a]
            gnorm = sqrt(gnorm)
            if gnorm < gtol:
                converged = True
                break
            if it >= maxit:
                break
            it += 1
            if _solve_neg_def(hess, grad, s, d):
                dec = 0.0
                for a in range(d):
                    dec += grad[a] * s[a]
            else:
                for a in range(d):
                    s[a] = grad[a]
                dec = gnorm * gnorm
            if dec < 1e-14 * (fabs(val) if fabs(val) > 1.0 else 1.0):
                for a in range(d):
                    zt[a] = z[a] + s[a]
                if not _eval(uv, fw, X, d, q, log_branch, zt, &vt, gt, ht):
                    break
                for a in range(d):
                    z[a] = zt[a]
                    grad[a] = gt[a]
                for a in range(d * d):
                    hess[a] = ht[a]
                val = vt
                continue
            t = 1.0
            accepted = False
            while t > 1e-20:
                for a in range(d):
                    zt[a] = z[a] + t * s[a]
                ok = _eval(uv, fw, X, d, q, log_branch, zt, &vt, gt, ht)
                if ok and vt >= val + 1e-4 * t * dec:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                break
            for a in range(d):
                z[a] = zt[a]
                grad[a] = gt[a]
            for a in range(d * d):
                hess[a] = ht[a]
            val = vt
    zout = np.empty(d)
    for a in range(d):
        zout[a] = z[a]
    return zout, val, val0, it, bool(converged)
