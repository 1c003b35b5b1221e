"""Compiled inner loops for power-cell clipping and polynomial quadrature."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _poly(c, x, y):
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y


@njit(cache=True)
def _clip(vx, vy, lab, n, ax, ay, b, j, ox, oy, olab, slack):
    """One Sutherland-Hodgman pass against {a.x <= b}; edge k runs v[k] -> v[k+1] with label lab[k]."""
    m = 0
    for k in range(n):
        k1 = k + 1 if k + 1 < n else 0
        sk = ax * vx[k] + ay * vy[k] - b
        sn = ax * vx[k1] + ay * vy[k1] - b
        ink = sk <= slack
        inn = sn <= slack
        if ink:
            ox[m] = vx[k]
            oy[m] = vy[k]
            olab[m] = lab[k]
            m += 1
            if not inn:
                t = sk / (sk - sn)
                ox[m] = vx[k] + t * (vx[k1] - vx[k])
                oy[m] = vy[k] + t * (vy[k1] - vy[k])
                olab[m] = j
                m += 1
        elif inn:
            t = sn / (sn - sk)
            ox[m] = vx[k1] + t * (vx[k] - vx[k1])
            oy[m] = vy[k1] + t * (vy[k] - vy[k1])
            olab[m] = lab[k]
            m += 1
    return m


@njit(cache=True)
def power_cells(domain, sites, weights, nbr_ptr, nbr_idx, dens):
    """Clip the domain polygon to every power cell.

    Returns per-cell vertex ranges (ptr), vertices, edge labels (-1 = domain
    boundary, j = power bisector with site j), cell masses, and the list of
    (i, j, integral of the density along the shared edge) triples.
    """
    nsite = sites.shape[0]
    nd = domain.shape[0]
    scale = 1.0
    for k in range(nd):
        scale = max(scale, abs(domain[k, 0]), abs(domain[k, 1]))
    cap = 2 * nd + 16
    for i in range(nsite):
        cap = max(cap, 2 * nd + 2 * (nbr_ptr[i + 1] - nbr_ptr[i]) + 16)
    ax_ = np.empty(cap)
    ay_ = np.empty(cap)
    al = np.empty(cap, np.int64)
    bx_ = np.empty(cap)
    by_ = np.empty(cap)
    bl = np.empty(cap, np.int64)

    out_ptr = np.zeros(nsite + 1, np.int64)
    out_cap = nsite * 8 + nd * 4
    out_v = np.empty((out_cap, 2))
    out_l = np.empty(out_cap, np.int64)
    masses = np.zeros(nsite)
    e_cap = nsite * 8
    e_i = np.empty(e_cap, np.int64)
    e_j = np.empty(e_cap, np.int64)
    e_w = np.empty(e_cap)
    ne = 0
    nv_tot = 0

    for i in range(nsite):
        yi0 = sites[i, 0]
        yi1 = sites[i, 1]
        pi = yi0 * yi0 + yi1 * yi1 - weights[i]
        n = nd
        for k in range(nd):
            ax_[k] = domain[k, 0]
            ay_[k] = domain[k, 1]
            al[k] = -1
        for q in range(nbr_ptr[i], nbr_ptr[i + 1]):
            j = nbr_idx[q]
            a0 = 2.0 * (sites[j, 0] - yi0)
            a1 = 2.0 * (sites[j, 1] - yi1)
            b = sites[j, 0] * sites[j, 0] + sites[j, 1] * sites[j, 1] - weights[j] - pi
            slack = 1e-14 * (abs(a0) + abs(a1)) * scale
            if 2 * n + 2 > cap:
                cap = 4 * n + 16
                ax2 = np.empty(cap)
                ay2 = np.empty(cap)
                al2 = np.empty(cap, np.int64)
                ax2[:n] = ax_[:n]
                ay2[:n] = ay_[:n]
                al2[:n] = al[:n]
                ax_ = ax2
                ay_ = ay2
                al = al2
                bx_ = np.empty(cap)
                by_ = np.empty(cap)
                bl = np.empty(cap, np.int64)
            n = _clip(ax_, ay_, al, n, a0, a1, b, j, bx_, by_, bl, slack)
            for k in range(n):
                ax_[k] = bx_[k]
                ay_[k] = by_[k]
                al[k] = bl[k]
            if n == 0:
                break
        # drop near-duplicate consecutive vertices
        m = 0
        for k in range(n):
            if m > 0 and abs(ax_[k] - bx_[m - 1]) <= 1e-14 * scale and abs(ay_[k] - by_[m - 1]) <= 1e-14 * scale:
                bl[m - 1] = al[k]
                continue
            bx_[m] = ax_[k]
            by_[m] = ay_[k]
            bl[m] = al[k]
            m += 1
        if m > 1 and abs(bx_[0] - bx_[m - 1]) <= 1e-14 * scale and abs(by_[0] - by_[m - 1]) <= 1e-14 * scale:
            m -= 1
        if m < 3:
            m = 0
        if nv_tot + m > out_cap:
            new_cap = 2 * (nv_tot + m) + 16
            nv = np.empty((new_cap, 2))
            nl = np.empty(new_cap, np.int64)
            nv[:nv_tot] = out_v[:nv_tot]
            nl[:nv_tot] = out_l[:nv_tot]
            out_v = nv
            out_l = nl
            out_cap = new_cap
        mass = 0.0
        x0 = bx_[0] if m > 0 else 0.0
        y0 = by_[0] if m > 0 else 0.0
        for k in range(m):
            k1 = k + 1 if k + 1 < m else 0
            out_v[nv_tot + k, 0] = bx_[k]
            out_v[nv_tot + k, 1] = by_[k]
            out_l[nv_tot + k] = bl[k]
            # fan triangle (v0, vk, vk+1), edge-midpoint rule: exact for degree 2
            if 0 < k < m - 1:
                x1 = bx_[k]
                y1 = by_[k]
                x2 = bx_[k1]
                y2 = by_[k1]
                ar = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
                fm = (_poly(dens, 0.5 * (x0 + x1), 0.5 * (y0 + y1))
                      + _poly(dens, 0.5 * (x1 + x2), 0.5 * (y1 + y2))
                      + _poly(dens, 0.5 * (x2 + x0), 0.5 * (y2 + y0)))
                mass += ar * fm / 3.0
            j = bl[k]
            if j >= 0:
                xa = bx_[k]
                ya = by_[k]
                xb = bx_[k1]
                yb = by_[k1]
                ln = np.sqrt((xb - xa) ** 2 + (yb - ya) ** 2)
                if ln > 0.0:
                    # Simpson along the edge: exact for degree 2
                    w = ln * (_poly(dens, xa, ya) + 4.0 * _poly(dens, 0.5 * (xa + xb), 0.5 * (ya + yb))
                              + _poly(dens, xb, yb)) / 6.0
                    if ne >= e_cap:
                        e_cap2 = 2 * e_cap + 16
                        t_i = np.empty(e_cap2, np.int64)
                        t_j = np.empty(e_cap2, np.int64)
                        t_w = np.empty(e_cap2)
                        t_i[:ne] = e_i[:ne]
                        t_j[:ne] = e_j[:ne]
                        t_w[:ne] = e_w[:ne]
                        e_i = t_i
                        e_j = t_j
                        e_w = t_w
                        e_cap = e_cap2
                    e_i[ne] = i
                    e_j[ne] = j
                    e_w[ne] = w
                    ne += 1
        masses[i] = mass
        nv_tot += m
        out_ptr[i + 1] = nv_tot
    return out_ptr, out_v[:nv_tot].copy(), out_l[:nv_tot].copy(), masses, e_i[:ne].copy(), e_j[:ne].copy(), e_w[:ne].copy()


@njit(cache=True)
def polygon_integrals(vx, vy, dens):
    """(integral of f, integral of x f, integral of y f) over a polygon, by fan triangulation.

    The moments use the edge-midpoint rule on f times a linear factor, which is
    exact only for affine f; they are used for centroids of constant-density cells.
    """
    n = vx.shape[0]
    m0 = 0.0
    mx = 0.0
    my = 0.0
    for k in range(1, n - 1):
        x0, y0 = vx[0], vy[0]
        x1, y1 = vx[k], vy[k]
        x2, y2 = vx[k + 1], vy[k + 1]
        ar = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        f01 = _poly(dens, 0.5 * (x0 + x1), 0.5 * (y0 + y1))
        f12 = _poly(dens, 0.5 * (x1 + x2), 0.5 * (y1 + y2))
        f20 = _poly(dens, 0.5 * (x2 + x0), 0.5 * (y2 + y0))
        m0 += ar * (f01 + f12 + f20) / 3.0
        mx += ar * (f01 * 0.5 * (x0 + x1) + f12 * 0.5 * (x1 + x2) + f20 * 0.5 * (x2 + x0)) / 3.0
        my += ar * (f01 * 0.5 * (y0 + y1) + f12 * 0.5 * (y1 + y2) + f20 * 0.5 * (y2 + y0)) / 3.0
    return m0, mx, my
