"""Compiled finite-volume kernels for the depth-averaged shallow water equations.

State is cell-centred ``(h, hu, hv)`` on triangles over a flat bed.  Edge
fluxes are computed independently per edge (so any range of edges can be
handed to a worker) and accumulated into cells serially in edge order, which
keeps results bitwise independent of the number of workers.
"""
import math

import numpy as np
from numba import njit

INTERIOR, INFLOW, OUTFLOW, WALL = 0, 1, 2, 3
HLLC, ROE_LOW_FROUDE = 0, 1


@njit(cache=True, nogil=True)
def hll_component(fl, fr, ql, qr, sl, sr):
    if sl >= 0.0:
        return fl
    if sr <= 0.0:
        return fr
    inv = 1.0 / (sr - sl)
    # central form: reduces exactly to fl when left and right states coincide
    return 0.5 * (fl + fr) - 0.5 * (sr + sl) * inv * (fr - fl) + sl * sr * inv * (qr - ql)


@njit(cache=True, nogil=True)
def hllc_flux(hl, ul, vl, hr, ur, vr, nx, ny, g):
    """HLLC flux per unit edge length through unit normal ``(nx, ny)``.

    Returns Cartesian ``(mass, x-momentum, y-momentum)`` fluxes.
    """
    unl = ul * nx + vl * ny
    unr = ur * nx + vr * ny
    cl = math.sqrt(g * hl)
    cr = math.sqrt(g * hr)
    # two-rarefaction depth estimate for the wave speeds
    hs = (0.5 * (cl + cr) + 0.25 * (unl - unr)) ** 2 / g
    ql = math.sqrt(0.5 * (hs + hl) * hs) / hl if hs > hl else 1.0
    qr = math.sqrt(0.5 * (hs + hr) * hs) / hr if hs > hr else 1.0
    sl = min(unl - cl * ql, unr - cr)
    sr = max(unr + cr * qr, unl + cl)

    pl = 0.5 * g * hl * hl
    pr = 0.5 * g * hr * hr
    ml = hl * unl
    mr = hr * unr
    fm = hll_component(ml, mr, hl, hr, sl, sr)
    fx = hll_component(ml * ul + pl * nx, mr * ur + pr * nx, hl * ul, hr * ur, sl, sr)
    fy = hll_component(ml * vl + pl * ny, mr * vr + pr * ny, hl * vl, hr * vr, sl, sr)

    # restore the shear wave: tangential momentum is carried by the mass flux
    utl = -ul * ny + vl * nx
    utr = -ur * ny + vr * nx
    denom = hr * (unr - sr) - hl * (unl - sl)
    sm = (sl * hr * (unr - sr) - sr * hl * (unl - sl)) / denom if denom != 0.0 else 0.5 * (unl + unr)
    ft_hll = hll_component(ml * utl, mr * utr, hl * utl, hr * utr, sl, sr)
    ut_up = utl if sm >= 0.0 else utr
    dft = fm * ut_up - ft_hll
    return fm, fx - dft * ny, fy + dft * nx


@njit(cache=True, nogil=True)
def roe_flux(hl, ul, vl, hr, ur, vr, nx, ny, g):
    """Roe flux with the normal-velocity jump of the acoustic waves scaled by
    the local Froude number (low-Froude fix).

    Without the scaling the acoustic dissipation on the momentum grows like
    ``c h du`` instead of ``|u| h du`` and smears the flow around a drag
    cell at the Froude numbers of tidal channels.  Returns Cartesian fluxes
    per unit length; identical states give the exact physical flux.
    """
    unl = ul * nx + vl * ny
    unr = ur * nx + vr * ny
    utl = -ul * ny + vl * nx
    utr = -ur * ny + vr * nx
    pl = 0.5 * g * hl * hl
    pr = 0.5 * g * hr * hr
    ml = hl * unl
    mr = hr * unr
    fm = 0.5 * (ml + mr)
    fx = 0.5 * (ml * ul + pl * nx + mr * ur + pr * nx)
    fy = 0.5 * (ml * vl + pl * ny + mr * vr + pr * ny)

    sl = math.sqrt(hl)
    sr = math.sqrt(hr)
    un = (sl * unl + sr * unr) / (sl + sr)
    ut = (sl * utl + sr * utr) / (sl + sr)
    c = math.sqrt(0.5 * g * (hl + hr))
    hroe = sl * sr
    froude = max(math.sqrt(ul * ul + vl * vl) / math.sqrt(g * hl), math.sqrt(ur * ur + vr * vr) / math.sqrt(g * hr))
    z = min(1.0, froude)
    dh = hr - hl
    dun = z * (unr - unl)
    a1 = 0.5 * (dh - hroe * dun / c)
    a3 = 0.5 * (dh + hroe * dun / c)
    a2 = hroe * (utr - utl)
    l1 = abs(un - c)
    l2 = abs(un)
    l3 = abs(un + c)
    # Harten entropy fix on the acoustic waves
    delta = 0.1 * c
    if l1 < delta:
        l1 = 0.5 * (l1 * l1 / delta + delta)
    if l3 < delta:
        l3 = 0.5 * (l3 * l3 / delta + delta)
    d_m = l1 * a1 + l3 * a3
    d_n = l1 * a1 * (un - c) + l3 * a3 * (un + c)
    d_t = (l1 * a1 + l3 * a3) * ut + l2 * a2
    fm -= 0.5 * d_m
    fx -= 0.5 * (d_n * nx - d_t * ny)
    fy -= 0.5 * (d_n * ny + d_t * nx)
    return fm, fx, fy


@njit(cache=True, nogil=True)
def riemann_flux(hl, ul, vl, hr, ur, vr, nx, ny, g, scheme):
    if scheme == ROE_LOW_FROUDE:
        return roe_flux(hl, ul, vl, hr, ur, vr, nx, ny, g)
    return hllc_flux(hl, ul, vl, hr, ur, vr, nx, ny, g)


@njit(cache=True, nogil=True)
def flather_flux(h, u, v, nx, ny, h_rest, eta_ext, u_ext, g):
    """Radiating outflow flux.

    Normal boundary speed ``u_ext + sqrt(g/h) (eta - eta_ext)``; the
    tangential speed and the depth are taken from the interior.
    """
    eta = h - h_rest
    un = u_ext + math.sqrt(g / h) * (eta - eta_ext)
    ut = -u * ny + v * nx
    m = h * un
    p = 0.5 * g * h * h
    ub = un * nx - ut * ny
    vb = un * ny + ut * nx
    return m, m * ub + p * nx, m * vb + p * ny


@njit(cache=True, nogil=True)
def inflow_flux(h, u, v, nx, ny, u_in, g):
    """Velocity-enforcing inflow: boundary depth from the outgoing characteristic."""
    un_i = u * nx + v * ny
    ub, vb = u_in, 0.0  # inflow along +x
    un_b = ub * nx + vb * ny
    # un + 2c leaves the domain along the outward normal and is kept
    c = math.sqrt(g * h) + 0.5 * (un_i - un_b)
    hb = c * c / g
    m = hb * un_b
    p = 0.5 * g * hb * hb
    return m, m * ub + p * nx, m * vb + p * ny


@njit(cache=True, nogil=True)
def edge_fluxes(
    start,
    stop,
    h,
    u,
    v,
    gh,
    gu,
    gv,
    edge_cells,
    edge_tags,
    normals,
    r0,
    r1,
    g,
    h_rest,
    u_in,
    eta_ext,
    u_ext_out,
    scheme,
    out,
):
    """Fluxes per unit length for edges ``start:stop`` written to ``out[e, :]``.

    ``gh, gu, gv`` are limited gradients of depth and velocity (all zero for
    the first-order scheme); ``r0``/``r1`` are the edge-midpoint offsets from
    the two cell centroids.  A NaN ``u_ext_out`` takes the exterior speed of
    the outflow condition from the interior state.
    """
    for e in range(start, stop):
        c0 = edge_cells[e, 0]
        c1 = edge_cells[e, 1]
        nx = normals[e, 0]
        ny = normals[e, 1]
        hl = h[c0] + gh[c0, 0] * r0[e, 0] + gh[c0, 1] * r0[e, 1]
        ul = u[c0] + gu[c0, 0] * r0[e, 0] + gu[c0, 1] * r0[e, 1]
        vl = v[c0] + gv[c0, 0] * r0[e, 0] + gv[c0, 1] * r0[e, 1]
        tag = edge_tags[e]
        if tag == INTERIOR:
            hr = h[c1] + gh[c1, 0] * r1[e, 0] + gh[c1, 1] * r1[e, 1]
            ur = u[c1] + gu[c1, 0] * r1[e, 0] + gu[c1, 1] * r1[e, 1]
            vr = v[c1] + gv[c1, 0] * r1[e, 0] + gv[c1, 1] * r1[e, 1]
            fm, fx, fy = riemann_flux(hl, ul, vl, hr, ur, vr, nx, ny, g, scheme)
        elif tag == WALL:
            un = ul * nx + vl * ny
            fm, fx, fy = riemann_flux(hl, ul, vl, hl, ul - 2.0 * un * nx, vl - 2.0 * un * ny, nx, ny, g, scheme)
        elif tag == INFLOW:
            fm, fx, fy = inflow_flux(hl, ul, vl, nx, ny, u_in, g)
        else:
            u_ext = ul * nx + vl * ny if math.isnan(u_ext_out) else u_ext_out
            fm, fx, fy = flather_flux(hl, ul, vl, nx, ny, h_rest, eta_ext, u_ext, g)
        out[e, 0] = fm
        out[e, 1] = fx
        out[e, 2] = fy


@njit(cache=True)
def residual(h, flux, edge_cells, normals, lengths, areas, g, res):
    """Flux divergence ``-(1/A) sum_e F_e L_e`` per cell.

    Each cell's own pressure times its (geometrically zero) normal sum is
    subtracted, which makes a flat free surface at rest an exact fixed point.
    """
    res[:] = 0.0
    for e in range(edge_cells.shape[0]):
        c0 = edge_cells[e, 0]
        c1 = edge_cells[e, 1]
        L = lengths[e]
        nx = normals[e, 0]
        ny = normals[e, 1]
        p0 = 0.5 * g * h[c0] * h[c0]
        res[c0, 0] -= flux[e, 0] * L
        res[c0, 1] -= (flux[e, 1] - p0 * nx) * L
        res[c0, 2] -= (flux[e, 2] - p0 * ny) * L
        if c1 >= 0:
            p1 = 0.5 * g * h[c1] * h[c1]
            res[c1, 0] += flux[e, 0] * L
            res[c1, 1] += (flux[e, 1] - p1 * nx) * L
            res[c1, 2] += (flux[e, 2] - p1 * ny) * L
    for c in range(areas.shape[0]):
        inv = 1.0 / areas[c]
        res[c, 0] *= inv
        res[c, 1] *= inv
        res[c, 2] *= inv


@njit(cache=True)
def advance(h, hu, hv, h0, hu0, hv0, res, dt, alpha, drag, hn, hun, hvn):
    """One forward-Euler stage with pointwise-implicit quadratic drag.

    ``new = alpha * old0 + (1 - alpha) * (stage + dt * res)`` (``alpha = 0``
    is plain forward Euler, ``alpha = 1/2`` the second SSP-RK2 stage); the
    drag coefficient ``drag`` is frozen at the stage state and divided out.
    Returns the index of the first dry cell, or -1.
    """
    n = h.shape[0]
    for c in range(n):
        hs = h[c] + dt * res[c, 0]
        hus = hu[c] + dt * res[c, 1]
        hvs = hv[c] + dt * res[c, 2]
        hnew = alpha * h0[c] + (1.0 - alpha) * hs
        if not hnew > 0.0:
            return c
        speed = math.sqrt(hu[c] * hu[c] + hv[c] * hv[c]) / h[c]
        damp = 1.0 / (1.0 + (1.0 - alpha) * dt * drag[c] * speed / hnew)
        hn[c] = hnew
        hun[c] = (alpha * hu0[c] + (1.0 - alpha) * hus) * damp
        hvn[c] = (alpha * hv0[c] + (1.0 - alpha) * hvs) * damp
    return -1


@njit(cache=True)
def stable_dt(h, hu, hv, inv_span, g):
    """Largest explicit step: ``min_c A_c / (P_c (|u_c| + c_c))``."""
    best = np.inf
    for c in range(h.shape[0]):
        s = math.sqrt(hu[c] * hu[c] + hv[c] * hv[c]) / h[c] + math.sqrt(g * h[c])
        dt = 1.0 / (s * inv_span[c])
        if dt < best:
            best = dt
    return best


@njit(cache=True)
def change_norm(h, hu, hv, hn, hun, hvn):
    """Max absolute change of depth and of discharge between two states."""
    dh = 0.0
    dq = 0.0
    for c in range(h.shape[0]):
        a = abs(hn[c] - h[c])
        if a > dh:
            dh = a
        b = max(abs(hun[c] - hu[c]), abs(hvn[c] - hv[c]))
        if b > dq:
            dq = b
    return dh, dq


@njit(cache=True)
def zone_gradients(cells, neighbours, offsets, lsq, h, u, v, gh, gu, gv):
    """Unlimited least-squares gradients of depth and velocity on ``cells``.

    ``neighbours[k, j]`` is the cell across the j-th edge of ``cells[k]``
    (-1 on a boundary, where a mirrored neighbour of equal value adds to the
    normal matrix only), ``offsets[k, j]`` the centroid offset to it and
    ``lsq[k]`` the inverse normal matrix.
    """
    for k in range(cells.shape[0]):
        c = cells[k]
        bh0 = bh1 = bu0 = bu1 = bv0 = bv1 = 0.0
        for j in range(3):
            o = neighbours[k, j]
            if o < 0:
                continue
            dx = offsets[k, j, 0]
            dy = offsets[k, j, 1]
            d = h[o] - h[c]
            bh0 += dx * d
            bh1 += dy * d
            d = u[o] - u[c]
            bu0 += dx * d
            bu1 += dy * d
            d = v[o] - v[c]
            bv0 += dx * d
            bv1 += dy * d
        m00 = lsq[k, 0, 0]
        m01 = lsq[k, 0, 1]
        m10 = lsq[k, 1, 0]
        m11 = lsq[k, 1, 1]
        gh[c, 0] = m00 * bh0 + m01 * bh1
        gh[c, 1] = m10 * bh0 + m11 * bh1
        gu[c, 0] = m00 * bu0 + m01 * bu1
        gu[c, 1] = m10 * bu0 + m11 * bu1
        gv[c, 0] = m00 * bv0 + m01 * bv1
        gv[c, 1] = m10 * bv0 + m11 * bv1
