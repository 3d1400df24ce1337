"""Hot numerical kernels: geodesic tracing and fast-marching.

Written in nopython-compatible style; JIT-compiled when numba is
available and executed as plain Python otherwise (identical results,
slower).  Everything here is deterministic and allocation-free in the
inner loops.
"""
from __future__ import annotations

import math

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


QUARTER_PI = math.pi / 4.0
HALF_PI = math.pi / 2.0

# trace status codes
TRACE_OK = 0
TRACE_TANGENCY = 1
TRACE_OVERFLOW = 2


@njit(cache=True)
def _rk4_step(u, v, chi, c, h):
    """One RK4 step of the unit-speed geodesic flow inside one band.

    State is (u, v, chi) with chi the angle of the tangent against the
    u-direction measured in the metric; c is the band center.  The flow
    is du = cos(chi)/w, dv = sin(chi), dchi = (w'/w) cos(chi) with
    w = cos(v - c).
    """
    # k1
    w = math.cos(v - c)
    cc = math.cos(chi)
    k1u = cc / w
    k1v = math.sin(chi)
    k1c = -math.sin(v - c) / w * cc
    # k2
    v2 = v + 0.5 * h * k1v
    chi2 = chi + 0.5 * h * k1c
    w = math.cos(v2 - c)
    cc = math.cos(chi2)
    k2u = cc / w
    k2v = math.sin(chi2)
    k2c = -math.sin(v2 - c) / w * cc
    # k3
    v3 = v + 0.5 * h * k2v
    chi3 = chi + 0.5 * h * k2c
    w = math.cos(v3 - c)
    cc = math.cos(chi3)
    k3u = cc / w
    k3v = math.sin(chi3)
    k3c = -math.sin(v3 - c) / w * cc
    # k4
    v4 = v + h * k3v
    chi4 = chi + h * k3c
    w = math.cos(v4 - c)
    cc = math.cos(chi4)
    k4u = cc / w
    k4v = math.sin(chi4)
    k4c = -math.sin(v4 - c) / w * cc
    un = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    vn = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    chin = chi + h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
    return un, vn, chin


@njit(cache=True)
def _advance(u, v, chi, c, h):
    """Advance by at most h, stopping exactly on a corner if one is crossed.

    Returns (u, v, chi, c, advanced, crossed, tangent) where ``advanced``
    is the arclength actually consumed.  On a crossing the state lands
    on the corner (v set exactly) and c is switched to the new band.
    """
    un, vn, chin = _rk4_step(u, v, chi, c, h)
    if abs(vn - c) <= QUARTER_PI:
        return un, vn, chin, c, h, False, False
    # bisect the step length until the endpoint sits on the corner
    lo = 0.0
    hi = h
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        um, vm, chim = _rk4_step(u, v, chi, c, mid)
        if abs(vm - c) > QUARTER_PI:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-17:
            break
    advanced = 0.5 * (lo + hi)
    ub, vb, chib = _rk4_step(u, v, chi, c, advanced)
    side = 1.0 if vb > c else -1.0
    vb = c + side * QUARTER_PI
    if abs(math.sin(chib)) < 1e-10:
        return ub, vb, chib, c, advanced, True, True
    cnew = c + side * HALF_PI
    return ub, vb, chib, cnew, advanced, True, False


@njit(cache=True)
def trace_surface(u0, v0, chi0, c0, length, step, us, vs, chis, cs, ss):
    """Integrate the surface geodesic for ``length``, recording every step.

    The sample arrays must be preallocated; returns (status, n) with n
    the number of samples written.
    """
    cap = us.shape[0]
    u, v, chi, c = u0, v0, chi0, c0
    s = 0.0
    n = 0
    us[n] = u
    vs[n] = v
    chis[n] = chi
    cs[n] = c
    ss[n] = s
    n += 1
    while length - s > 1e-14:
        h = step
        if length - s < h:
            h = length - s
        u, v, chi, c, adv, crossed, tangent = _advance(u, v, chi, c, h)
        if tangent:
            return TRACE_TANGENCY, n
        s += adv
        if n >= cap:
            return TRACE_OVERFLOW, n
        us[n] = u
        vs[n] = v
        chis[n] = chi
        cs[n] = c
        ss[n] = s
        n += 1
    return TRACE_OK, n


@njit(cache=True)
def shoot_closest(u0, v0, chi0, c0, length, step, qu, qv, wq):
    """Trace a geodesic and track its closest approach to the point (qu, qv).

    Proximity is measured in the metric frozen at the target latitude
    (weight ``wq``).  Returns (status, miss2, s_at_min) where the
    closest-approach arclength is refined by a parabolic fit through the
    discrete minimum.
    """
    u, v, chi, c = u0, v0, chi0, c0
    s = 0.0
    du = wq * (u - qu)
    dv = v - qv
    best = du * du + dv * dv
    s_best = 0.0
    prev1 = best
    best_im1 = best
    best_ip1 = -1.0
    take_next = False
    while length - s > 1e-14:
        h = step
        if length - s < h:
            h = length - s
        u, v, chi, c, adv, crossed, tangent = _advance(u, v, chi, c, h)
        if tangent:
            return TRACE_TANGENCY, best, s_best
        s += adv
        du = wq * (u - qu)
        dv = v - qv
        m = du * du + dv * dv
        if take_next:
            best_ip1 = m
            take_next = False
        if m < best:
            best = m
            s_best = s
            best_im1 = prev1
            best_ip1 = -1.0
            take_next = True
        prev1 = m
    if best_ip1 >= 0.0 and best_im1 >= 0.0:
        denom = best_ip1 - 2.0 * best + best_im1
        if denom > 0.0:
            delta = 0.5 * (best_im1 - best_ip1) / denom
            if -1.0 < delta < 1.0:
                s_ref = s_best + delta * step
                m_ref = best - 0.25 * (best_im1 - best_ip1) * delta
                if m_ref < 0.0:
                    m_ref = 0.0
                return TRACE_OK, m_ref, s_ref
    return TRACE_OK, best, s_best


BIG = 1e30


@njit(cache=True)
def _heap_push(hval, hiu, hjv, size, val, iu, jv):
    i = size
    hval[i] = val
    hiu[i] = iu
    hjv[i] = jv
    while i > 0:
        parent = (i - 1) // 2
        if hval[parent] <= hval[i]:
            break
        hval[parent], hval[i] = hval[i], hval[parent]
        hiu[parent], hiu[i] = hiu[i], hiu[parent]
        hjv[parent], hjv[i] = hjv[i], hjv[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(hval, hiu, hjv, size):
    val = hval[0]
    iu = hiu[0]
    jv = hjv[0]
    size -= 1
    if size > 0:
        hval[0] = hval[size]
        hiu[0] = hiu[size]
        hjv[0] = hjv[size]
        i = 0
        while True:
            l = 2 * i + 1
            r = l + 1
            smallest = i
            if l < size and hval[l] < hval[smallest]:
                smallest = l
            if r < size and hval[r] < hval[smallest]:
                smallest = r
            if smallest == i:
                break
            hval[smallest], hval[i] = hval[i], hval[smallest]
            hiu[smallest], hiu[i] = hiu[i], hiu[smallest]
            hjv[smallest], hjv[i] = hjv[i], hjv[smallest]
            i = smallest
    return val, iu, jv, size


@njit(cache=True)
def _fmm_update(T, frozen, wcol, hu, hv, iu, jv, nu, nv):
    """Upwind first-order eikonal update at node (iu, jv)."""
    cu = hu * wcol[jv]
    cv = hv
    a = BIG
    if iu > 0 and frozen[iu - 1, jv]:
        a = T[iu - 1, jv]
    if iu < nu - 1 and frozen[iu + 1, jv] and T[iu + 1, jv] < a:
        a = T[iu + 1, jv]
    b = BIG
    if jv > 0 and frozen[iu, jv - 1]:
        b = T[iu, jv - 1]
    if jv < nv - 1 and frozen[iu, jv + 1] and T[iu, jv + 1] < b:
        b = T[iu, jv + 1]
    if a >= BIG and b >= BIG:
        return BIG
    if a >= BIG:
        return b + cv
    if b >= BIG:
        return a + cu
    diff = a - b
    disc = cu * cu + cv * cv - diff * diff
    if disc > 0.0:
        t = (a * cv * cv + b * cu * cu + cu * cv * math.sqrt(disc)) / (cu * cu + cv * cv)
        if t >= a and t >= b:
            return t
    one_u = a + cu
    one_v = b + cv
    return one_u if one_u < one_v else one_v


@njit(cache=True)
def fmm_solve(T, wcol, hu, hv, seed_iu, seed_jv, seed_t):
    """First-order fast marching for ((dT/du)/w)^2 + (dT/dv)^2 = 1.

    ``T`` is the (nu, nv) value array (overwritten); ``wcol`` holds the
    latitude weight per v-row.  Seeds are given as parallel index/value
    arrays.  The march is deterministic: ties pop in heap order.
    """
    nu, nv = T.shape
    frozen = np.zeros((nu, nv), dtype=np.uint8)
    for i in range(nu):
        for j in range(nv):
            T[i, j] = BIG
    cap = 6 * nu * nv + 16
    hval = np.empty(cap, dtype=np.float64)
    hiu = np.empty(cap, dtype=np.int32)
    hjv = np.empty(cap, dtype=np.int32)
    size = 0
    for k in range(seed_iu.shape[0]):
        i = seed_iu[k]
        j = seed_jv[k]
        if seed_t[k] < T[i, j]:
            T[i, j] = seed_t[k]
            size = _heap_push(hval, hiu, hjv, size, seed_t[k], i, j)
    while size > 0:
        val, iu, jv, size = _heap_pop(hval, hiu, hjv, size)
        if frozen[iu, jv]:
            continue
        if val > T[iu, jv] + 1e-12:
            continue
        frozen[iu, jv] = 1
        for k in range(4):
            if k == 0:
                ni, nj = iu - 1, jv
            elif k == 1:
                ni, nj = iu + 1, jv
            elif k == 2:
                ni, nj = iu, jv - 1
            else:
                ni, nj = iu, jv + 1
            if ni < 0 or ni >= nu or nj < 0 or nj >= nv:
                continue
            if frozen[ni, nj]:
                continue
            t = _fmm_update(T, frozen, wcol, hu, hv, ni, nj, nu, nv)
            if t < T[ni, nj]:
                T[ni, nj] = t
                if size < cap:
                    size = _heap_push(hval, hiu, hjv, size, t, ni, nj)
    return 0
