# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for univariate covariates.

Every routine expects the covariates sorted ascending (the Python wrappers
sort once per sample) and exploits the compact kernel support to touch only
in-window observations. Kernel ids: 0 = Epanechnikov, 1 = biweight.
All loops run without the GIL so replications can be spread over threads.
"""

import numpy as np
from libc.math cimport ceil, floor, fabs

# Slack on window edges; points just outside contribute an exact zero anyway.
cdef double EDGE = 1e-12


cdef inline double _kern(int kid, double u) noexcept nogil:
    cdef double t
    u = fabs(u)
    if u > 1.0:
        return 0.0
    t = 1.0 - u * u
    if kid == 0:
        return 0.75 * t
    return 0.9375 * t * t


cdef inline Py_ssize_t _lower(const double[::1] x, double v) noexcept nogil:
    # first index with x[idx] >= v
    cdef Py_ssize_t lo = 0, hi = x.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if x[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _upper(const double[::1] x, double v) noexcept nogil:
    # first index with x[idx] > v
    cdef Py_ssize_t lo = 0, hi = x.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if x[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def nw_loo(const double[::1] x, const double[::1] y, double b0, int kid):
    """Leave-one-out Nadaraya-Watson fits at every sorted covariate."""
    cdef Py_ssize_t n = x.shape[0], i, j, lo, hi
    cdef double num, den, w, reach = b0 * (1.0 + EDGE)
    m_arr = np.zeros(n, dtype=np.float64)
    v_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] m = m_arr
    cdef unsigned char[::1] valid = v_arr
    with nogil:
        lo = 0
        hi = 0
        for i in range(n):
            while x[lo] < x[i] - reach:
                lo += 1
            while hi < n and x[hi] <= x[i] + reach:
                hi += 1
            num = 0.0
            den = 0.0
            for j in range(lo, hi):
                if j == i:
                    continue
                w = _kern(kid, (x[j] - x[i]) / b0)
                num += w * y[j]
                den += w
            if den > 0.0:
                m[i] = num / den
                valid[i] = 1
    return m_arr, v_arr.astype(bool)


def nw_at(const double[::1] x, const double[::1] y, double b0, int kid,
          const double[::1] pts):
    """Nadaraya-Watson fits at arbitrary query points."""
    cdef Py_ssize_t n = x.shape[0], q = pts.shape[0], k, j, lo, hi
    cdef double num, den, w, reach = b0 * (1.0 + EDGE)
    m_arr = np.zeros(q, dtype=np.float64)
    v_arr = np.zeros(q, dtype=np.uint8)
    cdef double[::1] m = m_arr
    cdef unsigned char[::1] valid = v_arr
    with nogil:
        for k in range(q):
            lo = _lower(x, pts[k] - reach)
            hi = _upper(x, pts[k] + reach)
            num = 0.0
            den = 0.0
            for j in range(lo, hi):
                w = _kern(kid, (x[j] - pts[k]) / b0)
                num += w * y[j]
                den += w
            if den > 0.0:
                m[k] = num / den
                valid[k] = 1
    return m_arr, v_arr.astype(bool)


def kde_grid(const double[::1] centers, double bw, int kid,
             double eps_start, double eps_step, Py_ssize_t G):
    """``sum_c K((c - e_g)/bw)`` on the uniform grid ``e_g = start + g*step``.

    Unnormalised: the caller divides by ``N * bw``.
    """
    cdef Py_ssize_t N = centers.shape[0], i, g, g_lo, g_hi
    cdef double c
    out_arr = np.zeros(G, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(N):
            c = centers[i]
            g_lo = <Py_ssize_t>ceil((c - bw - eps_start) / eps_step) - 1
            g_hi = <Py_ssize_t>floor((c + bw - eps_start) / eps_step) + 1
            if g_lo < 0:
                g_lo = 0
            if g_hi > G - 1:
                g_hi = G - 1
            for g in range(g_lo, g_hi + 1):
                out[g] += _kern(kid, (c - (eps_start + g * eps_step)) / bw)
    return out_arr


def kde_points(const double[::1] centers, double bw, int kid,
               const double[::1] eps):
    """Unnormalised ``sum_c K((c - e)/bw)`` at arbitrary points."""
    cdef Py_ssize_t N = centers.shape[0], P = eps.shape[0], i, p
    out_arr = np.zeros(P, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for p in range(P):
            for i in range(N):
                out[p] += _kern(kid, (centers[i] - eps[p]) / bw)
    return out_arr


cdef inline void _poly_add(double* coef, Py_ssize_t at, int k2, double w,
                           double a, double s2) noexcept nogil:
    # kernel at local index v is 0.75*q or 0.9375*q*q with q = 1 - s2*(a - v)^2
    cdef double q0 = 1.0 - s2 * a * a, q1 = 2.0 * s2 * a, q2 = -s2
    cdef double* c = coef + 5 * at
    if k2 == 0:
        w = 0.75 * w
        c[0] += w * q0
        c[1] += w * q1
        c[2] += w * q2
    else:
        w = 0.9375 * w
        c[0] += w * q0 * q0
        c[1] += w * 2.0 * q0 * q1
        c[2] += w * (q1 * q1 + 2.0 * q0 * q2)
        c[3] += w * 2.0 * q1 * q2
        c[4] += w * q2 * q2


cdef inline void _poly_sub(double* coef, Py_ssize_t at, int k2, double w,
                           double a, double s2) noexcept nogil:
    _poly_add(coef, at, k2, -w, a, s2)


def _integral_grid_direct(const double[::1] x, const double[::1] y,
                          const double[::1] nodes, const double[::1] weights,
                          const double[::1] m_nodes, double b1, double h,
                          int k1, int k2, double eps_start, double eps_step,
                          Py_ssize_t G):
    cdef Py_ssize_t J = nodes.shape[0], j, i, g, lo, hi, g_lo, g_hi
    cdef double xj, wk, c, reach = b1 * (1.0 + EDGE), inv_b1 = 1.0 / b1, inv_h = 1.0 / h
    out_arr = np.zeros(G, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for j in range(J):
            xj = nodes[j]
            lo = _lower(x, xj - reach)
            hi = _upper(x, xj + reach)
            for i in range(lo, hi):
                wk = _kern(k1, (x[i] - xj) * inv_b1)
                if wk == 0.0:
                    continue
                wk = wk * weights[j]
                c = y[i] - m_nodes[j]
                g_lo = <Py_ssize_t>ceil((c - h - eps_start) / eps_step) - 1
                g_hi = <Py_ssize_t>floor((c + h - eps_start) / eps_step) + 1
                if g_lo < 0:
                    g_lo = 0
                if g_hi > G - 1:
                    g_hi = G - 1
                for g in range(g_lo, g_hi + 1):
                    out[g] += wk * _kern(k2, (c - (eps_start + g * eps_step)) * inv_h)
    return out_arr


def integral_grid(const double[::1] x, const double[::1] y,
                  const double[::1] nodes, const double[::1] weights,
                  const double[::1] m_nodes, double b1, double h,
                  int k1, int k2, double eps_start, double eps_step,
                  Py_ssize_t G):
    """Riemann sum of the joint-density estimate along ``y = e + m(x_j)``.

    Returns ``sum_j w_j sum_i K1((x_i - x_j)/b1) K2((y_i - m_j - e_g)/h)`` on
    the uniform grid; the caller divides by ``n * b1 * h``.

    On a uniform grid each ``(i, j)`` term is a polynomial in the grid index
    over its support, so terms are accumulated as coefficient differences and
    expanded once. Blocks of ``B`` grid points restart the local coordinate to
    keep the expansion well conditioned, and an active-term count keeps values
    outside every support exactly zero.
    """
    cdef Py_ssize_t J = nodes.shape[0], j, i, g, lo, hi, g_lo, g_hi, blk, b_lo, b_hi, B, lo_g, hi_g
    cdef double xj, wk, cp, s = eps_step / h, s2, half, v, acc0, acc1, acc2, acc3, acc4
    cdef long active
    cdef double reach = b1 * (1.0 + EDGE), inv_b1 = 1.0 / b1, inv_step = 1.0 / eps_step
    cdef double wj, shift
    if s > 0.5:
        # support spans at most four grid points: direct evaluation is cheaper
        return _integral_grid_direct(x, y, nodes, weights, m_nodes, b1, h, k1, k2,
                                     eps_start, eps_step, G)
    # s * B <= 4 bounds the local polynomial coefficients
    B = <Py_ssize_t>(4.0 / s)
    if B > G:
        B = G if G > 0 else 1
    s2 = s * s
    half = 1.0 / s
    coef_arr = np.zeros(5 * (G + 1), dtype=np.float64)
    cnt_arr = np.zeros(G + 1, dtype=np.int64)
    out_arr = np.zeros(G, dtype=np.float64)
    cdef double[::1] coef_v = coef_arr
    cdef long long[::1] cnt = cnt_arr
    cdef double[::1] out = out_arr
    cdef double* coef = &coef_v[0]
    with nogil:
        for j in range(J):
            xj = nodes[j]
            lo = _lower(x, xj - reach)
            hi = _upper(x, xj + reach)
            wj = weights[j]
            shift = (m_nodes[j] + eps_start) * inv_step
            for i in range(lo, hi):
                wk = _kern(k1, (x[i] - xj) * inv_b1)
                if wk == 0.0:
                    continue
                wk = wk * wj
                cp = y[i] * inv_step - shift
                g_lo = <Py_ssize_t>ceil(cp - half)
                g_hi = <Py_ssize_t>floor(cp + half)
                if g_lo < 0:
                    g_lo = 0
                if g_hi > G - 1:
                    g_hi = G - 1
                if g_lo > g_hi:
                    continue
                cnt[g_lo] += 1
                cnt[g_hi + 1] -= 1
                blk = g_lo // B
                while blk * B <= g_hi:
                    b_lo = blk * B
                    b_hi = b_lo + B - 1
                    if b_hi > G - 1:
                        b_hi = G - 1
                    lo_g = g_lo if g_lo > b_lo else b_lo
                    hi_g = g_hi if g_hi < b_hi else b_hi
                    _poly_add(coef, lo_g, k2, wk, cp - b_lo, s2)
                    if hi_g < b_hi:
                        _poly_sub(coef, hi_g + 1, k2, wk, cp - b_lo, s2)
                    blk += 1
        active = 0
        for g in range(G):
            if g % B == 0:
                acc0 = 0.0
                acc1 = 0.0
                acc2 = 0.0
                acc3 = 0.0
                acc4 = 0.0
            acc0 += coef[5 * g]
            acc1 += coef[5 * g + 1]
            acc2 += coef[5 * g + 2]
            acc3 += coef[5 * g + 3]
            acc4 += coef[5 * g + 4]
            active += cnt[g]
            if active > 0:
                v = <double>(g % B)
                out[g] = acc0 + v * (acc1 + v * (acc2 + v * (acc3 + v * acc4)))
    return out_arr


def integral_points(const double[::1] x, const double[::1] y,
                    const double[::1] nodes, const double[::1] weights,
                    const double[::1] m_nodes, double b1, double h,
                    int k1, int k2, const double[::1] eps):
    """Same sum as ``integral_grid`` at arbitrary evaluation points."""
    cdef Py_ssize_t J = nodes.shape[0], P = eps.shape[0], j, i, p, lo, hi
    cdef double xj, wk, c, wj, mj, reach = b1 * (1.0 + EDGE), inv_b1 = 1.0 / b1, inv_h = 1.0 / h
    out_arr = np.zeros(P, dtype=np.float64)
    cdef double[::1] out = out_arr
    eh_arr = np.asarray(eps, dtype=np.float64) * inv_h
    cdef double[::1] eps_h = eh_arr
    with nogil:
        for j in range(J):
            xj = nodes[j]
            lo = _lower(x, xj - reach)
            hi = _upper(x, xj + reach)
            wj = weights[j]
            mj = m_nodes[j]
            for i in range(lo, hi):
                wk = _kern(k1, (x[i] - xj) * inv_b1)
                if wk == 0.0:
                    continue
                c = (y[i] - mj) * inv_h
                for p in range(P):
                    out[p] += wk * wj * _kern(k2, c - eps_h[p])
    return out_arr
