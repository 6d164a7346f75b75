"""Compiled inner loops for the Newton solver.

``mos_point`` must stay numerically identical to ``devices.square_law`` +
``devices.terminal_currents`` (tests compare them on random points).
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def mos_point(p, vd, vg, vs, beta, vt0, lam, leak, nvt, vt):
    vgs = p * (vg - vs)
    vds = p * (vd - vs)
    rev = vds < 0.0
    if rev:
        vgs = vgs - vds
        vds = -vds
    vov = vgs - vt0
    i = 0.0
    gm = 0.0
    gds = 0.0
    clm = 1.0 + lam * vds
    if vov > 0.0:
        if vds < vov:
            it = beta * (vov * vds - 0.5 * vds * vds)
            i = it * clm
            gm = beta * vds * clm
            gds = beta * (vov - vds) * clm + lam * it
        else:
            isat = 0.5 * beta * vov * vov
            i = isat * clm
            gm = beta * vov * clm
            gds = lam * isat
    if leak > 0.0:
        ex = math.exp(min(vov, 0.0) / nvt)
        ed = math.exp(-vds / vt)
        sub = leak * ex
        i += sub * (1.0 - ed)
        if vov <= 0.0:
            gm += sub * (1.0 - ed) / nvt
        gds += sub * ed / vt
    if rev:
        return -p * i, gm + gds, -gm, -gds
    return p * i, gds, gm, -gm - gds


@njit(cache=True)
def assemble(x, G, b, m_d, m_g, m_s, m_p, m_beta, m_vt0, m_lam, m_leak, m_nvt, m_vt,
             r_a, r_b, r_g, c_a, c_b, c_geq, c_hist, use_caps, src_p, src_n, nn, gmin):
    """Residual F, Jacobian J, drain currents and per-node incident current.

    Ground is index N (= len(x)); stamps touching it are dropped.
    """
    N = x.shape[0]
    ve = np.empty(N + 1)
    ve[:N] = x
    ve[N] = 0.0
    F = G @ x - b
    J = G.copy()
    scale = np.zeros(N + 1)
    nm = m_d.shape[0]
    ids = np.empty(nm)
    for k in range(nm):
        d, g, s = m_d[k], m_g[k], m_s[k]
        i, dd, dg, ds = mos_point(m_p[k], ve[d], ve[g], ve[s], m_beta[k], m_vt0[k],
                                  m_lam[k], m_leak[k], m_nvt[k], m_vt[k])
        ids[k] = i
        a = abs(i)
        scale[d] += a
        scale[s] += a
        if d != N:
            F[d] += i
            J[d, d] += dd
            if g != N:
                J[d, g] += dg
            if s != N:
                J[d, s] += ds
        if s != N:
            F[s] -= i
            if d != N:
                J[s, d] -= dd
            if g != N:
                J[s, g] -= dg
            J[s, s] -= ds
    for k in range(r_a.shape[0]):
        a = abs(r_g[k] * (ve[r_a[k]] - ve[r_b[k]]))
        scale[r_a[k]] += a
        scale[r_b[k]] += a
    if use_caps:
        for k in range(c_a.shape[0]):
            a = abs(c_geq[k] * (ve[c_a[k]] - ve[c_b[k]]) - c_hist[k])
            scale[c_a[k]] += a
            scale[c_b[k]] += a
    for k in range(src_p.shape[0]):
        a = abs(x[nn + k])
        scale[src_p[k]] += a
        scale[src_n[k]] += a
    for k in range(nn):
        scale[k] += gmin * abs(x[k])
    return F, J, ids, scale[:nn]


@njit(cache=True)
def lu_solve(A, rhs):
    """Gaussian elimination with partial pivoting on copies of A, rhs.

    Returns (x, bad) where ``bad`` is -1 on success, else the column whose
    pivot vanished.
    """
    n = A.shape[0]
    M = A.copy()
    y = rhs.copy()
    norm = 0.0
    for i in range(n):
        for j in range(n):
            norm = max(norm, abs(M[i, j]))
    tiny = 1e-300 + norm * 1e-18
    for k in range(n):
        p = k
        best = abs(M[k, k])
        for i in range(k + 1, n):
            if abs(M[i, k]) > best:
                best = abs(M[i, k])
                p = i
        if best <= tiny:
            return y, k
        if p != k:
            for j in range(n):
                tmp = M[k, j]
                M[k, j] = M[p, j]
                M[p, j] = tmp
            tmp = y[k]
            y[k] = y[p]
            y[p] = tmp
        piv = M[k, k]
        for i in range(k + 1, n):
            f = M[i, k] / piv
            if f != 0.0:
                M[i, k] = 0.0
                for j in range(k + 1, n):
                    M[i, j] -= f * M[k, j]
                y[i] -= f * y[k]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for j in range(i + 1, n):
            s -= M[i, j] * x[j]
        x[i] = s / M[i, i]
    return x, -1


@njit(cache=True)
def build_rhs(N, nn, vsrc, c_a, c_b, hist):
    b = np.zeros(N + 1)
    for k in range(vsrc.shape[0]):
        b[nn + k] = vsrc[k]
    for k in range(c_a.shape[0]):
        b[c_a[k]] += hist[k]
        b[c_b[k]] -= hist[k]
    return b[:N].copy()


@njit(cache=True)
def newton(x0, G, b, m_d, m_g, m_s, m_p, m_beta, m_vt0, m_lam, m_leak, m_nvt, m_vt,
           r_a, r_b, r_g, c_a, c_b, c_geq, c_hist, use_caps, src_p, src_n, nn, gmin,
           vntol, reltol, abstol, max_iter, max_step):
    """Damped Newton on F(x) = 0.

    Returns (x, ids, iterations, residual, status, worst): status 0 means
    converged, 1 no convergence (``worst`` = unknown with the largest
    tolerance ratio), 2 singular Jacobian (``worst`` = pivot column).
    """
    N = x0.shape[0]
    x = x0.copy()
    dx_ok = False
    ratio_x = np.zeros(N)
    ratio_f = np.zeros(N)
    ids = np.zeros(m_d.shape[0])
    for it in range(max_iter + 1):
        F, J, ids, scale = assemble(x, G, b, m_d, m_g, m_s, m_p, m_beta, m_vt0, m_lam,
                                    m_leak, m_nvt, m_vt, r_a, r_b, r_g, c_a, c_b, c_geq,
                                    c_hist, use_caps, src_p, src_n, nn, gmin)
        fmax = 0.0
        for k in range(N):
            if k < nn:
                tol = abstol + reltol * scale[k]
            else:
                tol = vntol + reltol * abs(b[k])
            ratio_f[k] = abs(F[k]) / tol
            fmax = max(fmax, ratio_f[k])
        if dx_ok and fmax <= 1.0:
            res = 0.0
            for k in range(nn):
                res = max(res, abs(F[k]))
            return x, ids, it, res, 0, -1
        if it == max_iter:
            break
        dx, bad = lu_solve(J, -F)
        if bad >= 0:
            return x, ids, it, 0.0, 2, bad
        vmax = 0.0
        for k in range(nn):
            vmax = max(vmax, abs(dx[k]))
        if not np.isfinite(vmax):
            return x, ids, it, 0.0, 2, 0
        if vmax > max_step:
            dx *= max_step / vmax
        x = x + dx
        xmax = 0.0
        for k in range(N):
            if k < nn:
                tol = vntol + reltol * abs(x[k])
            else:
                tol = abstol + reltol * abs(x[k])
            ratio_x[k] = abs(dx[k]) / tol
            xmax = max(xmax, ratio_x[k])
        dx_ok = xmax <= 1.0
    worst = 0
    wv = -1.0
    for k in range(N):
        r = max(ratio_x[k], ratio_f[k])
        if r > wv:
            wv = r
            worst = k
    return x, ids, max_iter, 0.0, 1, worst
