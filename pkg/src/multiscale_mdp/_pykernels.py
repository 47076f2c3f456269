"""Pure-Python path kernels for the built-in model.

These are the reference implementations; ``_ckernels.pyx`` mirrors them
statement for statement so both produce the same floating-point results.

Parameter vector layout for :func:`multiscale_gauss_ou` (``prm``)::

    0 eps       1 kappa    2 kappa2    3 gamma     4 f1_base   5 f1_mod
    6 g_diff    7 reset0   8 fast_on   9 sigma    10 jump_scale 11 c_mod
   12 tau      13 radius  14 slow_m1  15 fast_F1  16 fast_F0

``reset0`` is ``g_level sqrt(alpha)`` (zero when the fast jump channel is
off) and ``fast_on`` is 1.0, or 0.0 to hold ``y`` fixed (averaged runs);
the reset scale is ``reset0 / sqrt(f1)``.  ``slow_m1`` is the
compensator moment int_{|z|>=cut} z nu(dz); the fast variable gets the extra
drift ``fast_F1 * scale - fast_F0 * y`` (small-jump drift or compensator).

Status codes: 0 finished, 1 blow-up (non-finite or |state| > 1e150).
"""
from __future__ import annotations

import math

BLOWUP = 1e150


def _f1(prm, x0):
    return prm[4] * (1.0 + prm[5] * x0 * x0 / (1.0 + x0 * x0))


def multiscale_gauss_ou(
    ev_t, ev_kind, ev_mark, ev_gidx, z1, z2,
    xl, xr, yl, yr, yhat, dhat,
    i0, y0, prm, xi1, xi2, delta_steps,
):
    """Jump-adapted Euler scheme on the merged event list.

    Events ``0 .. i0-1`` hold the initial segment (already written into
    ``xl``/``xr``); event ``i0`` is time 0.  Sub-interval ``i`` runs from
    event ``i`` to event ``i+1`` and uses normals ``z1[i]``, ``z2[i]``.
    Controls ``xi1``/``xi2`` are indexed by grid step (empty = no control).
    With ``delta_steps > 0`` the frozen-segment auxiliaries are advanced on
    the same noise: ``yhat`` and the running drift gap ``dhat`` (so that
    the slow auxiliary equals ``x + dhat``).

    Returns ``(status, exit_time, last_time)``; ``exit_time`` is -1 when the
    slow path never leaves the ball of radius ``prm[13]``.
    """
    n = len(ev_t)
    eps = prm[0]
    kap, kap2, gam = prm[1], prm[2], prm[3]
    gdiff, reset0 = prm[6], prm[7]
    sig, js, cm = prm[9], prm[10], prm[11]
    tau, radius = prm[12], prm[13]
    sm1, F1, F0 = prm[14], prm[15], prm[16]
    fast_on = prm[8]
    sq_eps = math.sqrt(eps)
    has_ctrl = len(xi1) > 0
    khas = delta_steps > 0
    n_ctrl = len(xi1)

    x = xr[i0]
    y = y0
    yl[i0] = y
    yr[i0] = y
    yh = y
    dh = 0.0
    fx0 = x
    fxd = 0.0
    if khas:
        yhat[i0] = yh
        dhat[i0] = 0.0
    exit_time = -1.0
    if abs(x) > radius:
        exit_time = ev_t[i0]
    p = 0
    for i in range(i0, n - 1):
        t = ev_t[i]
        hstep = ev_t[i + 1] - t
        x = xr[i]
        y = yr[i]
        # delayed value x(t - tau) by monotone search and linear interpolation
        u = t - tau
        while p + 1 < n and ev_t[p + 1] <= u:
            p += 1
        span = ev_t[p + 1] - ev_t[p]
        if span > 0.0:
            xd = xr[p] + (u - ev_t[p]) / span * (xl[p + 1] - xr[p])
        else:
            xd = xr[p]
        g_i = ev_gidx[i]
        if has_ctrl and 0 <= g_i < n_ctrl:
            c1 = xi1[g_i]
            c2 = xi2[g_i]
        else:
            c1 = 0.0
            c2 = 0.0
        f1 = _f1(prm, x)
        scale = reset0 / math.sqrt(f1)
        a = -kap * x - kap2 * xd + gam * xd * y
        th = math.tanh(x)
        sq_h = math.sqrt(hstep)
        x_new = x + (a + sig * c1 - js * (1.0 + cm * th) * sm1) * hstep + sig * sq_eps * sq_h * z1[i]
        if fast_on:
            y_new = y + (-f1 * y + gdiff * c2 + F1 * scale - F0 * y) * hstep / eps + gdiff / sq_eps * sq_h * z2[i]
        else:
            y_new = y
        if khas:
            if ev_kind[i] == 0 and g_i >= 0 and g_i % delta_steps == 0:
                fx0 = x
                fxd = xd
                yh = y
            f1h = _f1(prm, fx0)
            scale_h = reset0 / math.sqrt(f1h)
            ah = -kap * fx0 - kap2 * fxd + gam * fxd * yh
            dh = dh + (ah - a) * hstep
            yh = yh + (-f1h * yh + gdiff * c2 + F1 * scale_h - F0 * yh) * hstep / eps + gdiff / sq_eps * sq_h * z2[i]
        xl[i + 1] = x_new
        yl[i + 1] = y_new
        if ev_kind[i + 1] == 1:
            zm = ev_mark[i + 1]
            th_new = math.tanh(x_new)
            f1_new = _f1(prm, x_new)
            x_post = x_new + eps * js * zm * (1.0 + cm * th_new)
            y_post = y_new + fast_on * (reset0 / math.sqrt(f1_new) * zm - (y_new if reset0 != 0.0 else 0.0))
            if khas:
                yh = yh + (reset0 / math.sqrt(_f1(prm, fx0)) * zm - (yh if reset0 != 0.0 else 0.0))
        else:
            x_post = x_new
            y_post = y_new
        xr[i + 1] = x_post
        yr[i + 1] = y_post
        if khas:
            yhat[i + 1] = yh
            dhat[i + 1] = dh
        if not (abs(x_post) < BLOWUP and abs(y_post) < BLOWUP):
            return 1, exit_time, t
        if exit_time < 0.0 and (abs(x_new) > radius or abs(x_post) > radius):
            exit_time = ev_t[i + 1]
    return 0, exit_time, ev_t[n - 1]


def frozen_gauss_ou(ev_t, ev_kind, ev_mark, z2, yl, yr, y0, prm):
    """Fast equation at unit scale with a frozen slow segment.

    ``prm = (f1, g_diff, scale, F1, F0)`` with ``scale`` the reset factor
    (zero switches the jump channel off).  Returns ``(status, last_time)``.
    """
    n = len(ev_t)
    f1, gdiff, scale, F1, F0 = prm[0], prm[1], prm[2], prm[3], prm[4]
    y = y0
    yl[0] = y
    yr[0] = y
    for i in range(n - 1):
        hstep = ev_t[i + 1] - ev_t[i]
        y = y + (-f1 * y + F1 * scale - F0 * y) * hstep + gdiff * math.sqrt(hstep) * z2[i]
        yl[i + 1] = y
        if ev_kind[i + 1] == 1:
            y = y + (scale * ev_mark[i + 1] - (y if scale != 0.0 else 0.0))
        yr[i + 1] = y
        if not abs(y) < BLOWUP:
            return 1, ev_t[i]
    return 0, ev_t[n - 1]
