"""Pure numpy versions of the compiled routines in ``_core``.

Same signatures and semantics; dense kernel matrices replace the windowed
loops, so results agree with the compiled core up to summation order.
"""

import numpy as np


def _kern(kid, u):
    u = np.abs(u)
    t = 1.0 - u * u
    val = 0.75 * t if kid == 0 else 0.9375 * t * t
    return np.where(u > 1.0, 0.0, val)


def nw_loo(x, y, b0, kid):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = _kern(kid, (x[None, :] - x[:, None]) / b0)
    np.fill_diagonal(w, 0.0)
    den = w.sum(axis=1)
    num = w @ y
    valid = den > 0.0
    m = np.zeros_like(x)
    m[valid] = num[valid] / den[valid]
    return m, valid


def nw_at(x, y, b0, kid, pts):
    x = np.asarray(x, dtype=float)
    pts = np.asarray(pts, dtype=float)
    w = _kern(kid, (x[None, :] - pts[:, None]) / b0)
    den = w.sum(axis=1)
    num = w @ np.asarray(y, dtype=float)
    valid = den > 0.0
    m = np.zeros_like(pts)
    m[valid] = num[valid] / den[valid]
    return m, valid


def _grid(eps_start, eps_step, G):
    return eps_start + np.arange(G) * eps_step


def kde_grid(centers, bw, kid, eps_start, eps_step, G):
    return kde_points(centers, bw, kid, _grid(eps_start, eps_step, G))


def kde_points(centers, bw, kid, eps):
    centers = np.asarray(centers, dtype=float)
    eps = np.asarray(eps, dtype=float)
    return _kern(kid, (centers[None, :] - eps[:, None]) / bw).sum(axis=1)


def integral_grid(x, y, nodes, weights, m_nodes, b1, h, k1, k2,
                  eps_start, eps_step, G):
    return integral_points(x, y, nodes, weights, m_nodes, b1, h, k1, k2,
                           _grid(eps_start, eps_step, G))


def integral_points(x, y, nodes, weights, m_nodes, b1, h, k1, k2, eps):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    m_nodes = np.asarray(m_nodes, dtype=float)
    eps = np.asarray(eps, dtype=float)
    # (J, n) covariate weights, then one (n, P) response block per node.
    wx = _kern(k1, (x[None, :] - nodes[:, None]) / b1) * np.asarray(weights)[:, None]
    out = np.zeros(eps.shape[0])
    for j in np.flatnonzero(wx.any(axis=1)):
        c = y - m_nodes[j]
        out += wx[j] @ _kern(k2, (c[:, None] - eps[None, :]) / h)
    return out
