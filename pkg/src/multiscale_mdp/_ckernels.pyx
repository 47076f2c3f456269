# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernels; statement-for-statement ports of ``_pykernels``."""
from libc.math cimport sqrt, tanh, fabs

cdef double BLOWUP = 1e150


cdef inline double _f1(const double[::1] prm, double x0) noexcept nogil:
    return prm[4] * (1.0 + prm[5] * x0 * x0 / (1.0 + x0 * x0))


def multiscale_gauss_ou(
    const double[::1] ev_t, const signed char[::1] ev_kind, const double[::1] ev_mark,
    const long long[::1] ev_gidx, const double[::1] z1, const double[::1] z2,
    double[::1] xl, double[::1] xr, double[::1] yl, double[::1] yr,
    double[::1] yhat, double[::1] dhat,
    Py_ssize_t i0, double y0, const double[::1] prm,
    const double[::1] xi1, const double[::1] xi2, long long delta_steps,
):
    cdef Py_ssize_t n = ev_t.shape[0]
    cdef double eps = prm[0]
    cdef double kap = prm[1], kap2 = prm[2], gam = prm[3]
    cdef double gdiff = prm[6], reset0 = prm[7]
    cdef double sig = prm[9], js = prm[10], cm = prm[11]
    cdef double tau = prm[12], radius = prm[13]
    cdef double sm1 = prm[14], F1 = prm[15], F0 = prm[16]
    cdef double fast_on = prm[8]
    cdef double sq_eps = sqrt(eps)
    cdef bint has_ctrl = xi1.shape[0] > 0
    cdef bint khas = delta_steps > 0
    cdef long long n_ctrl = xi1.shape[0]
    cdef double x, y, yh, dh, fx0, fxd, exit_time, t, hstep, u, span, xd
    cdef double c1, c2, f1, scale, a, th, sq_h, x_new, y_new, f1h, scale_h, ah
    cdef double zm, th_new, f1_new, x_post, y_post
    cdef long long g_i
    cdef Py_ssize_t i, p
    cdef int status = 0
    cdef double last_time

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
    if fabs(x) > radius:
        exit_time = ev_t[i0]
    p = 0
    last_time = ev_t[n - 1]
    with nogil:
        for i in range(i0, n - 1):
            t = ev_t[i]
            hstep = ev_t[i + 1] - t
            x = xr[i]
            y = yr[i]
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
            scale = reset0 / sqrt(f1)
            a = -kap * x - kap2 * xd + gam * xd * y
            th = tanh(x)
            sq_h = sqrt(hstep)
            x_new = x + (a + sig * c1 - js * (1.0 + cm * th) * sm1) * hstep + sig * sq_eps * sq_h * z1[i]
            if fast_on != 0.0:
                y_new = y + (-f1 * y + gdiff * c2 + F1 * scale - F0 * y) * hstep / eps + gdiff / sq_eps * sq_h * z2[i]
            else:
                y_new = y
            if khas:
                if ev_kind[i] == 0 and g_i >= 0 and g_i % delta_steps == 0:
                    fx0 = x
                    fxd = xd
                    yh = y
                f1h = _f1(prm, fx0)
                scale_h = reset0 / sqrt(f1h)
                ah = -kap * fx0 - kap2 * fxd + gam * fxd * yh
                dh = dh + (ah - a) * hstep
                yh = yh + (-f1h * yh + gdiff * c2 + F1 * scale_h - F0 * yh) * hstep / eps + gdiff / sq_eps * sq_h * z2[i]
            xl[i + 1] = x_new
            yl[i + 1] = y_new
            if ev_kind[i + 1] == 1:
                zm = ev_mark[i + 1]
                th_new = tanh(x_new)
                f1_new = _f1(prm, x_new)
                x_post = x_new + eps * js * zm * (1.0 + cm * th_new)
                y_post = y_new + fast_on * (reset0 / sqrt(f1_new) * zm - (y_new if reset0 != 0.0 else 0.0))
                if khas:
                    yh = yh + (reset0 / sqrt(_f1(prm, fx0)) * zm - (yh if reset0 != 0.0 else 0.0))
            else:
                x_post = x_new
                y_post = y_new
            xr[i + 1] = x_post
            yr[i + 1] = y_post
            if khas:
                yhat[i + 1] = yh
                dhat[i + 1] = dh
            if not (fabs(x_post) < BLOWUP and fabs(y_post) < BLOWUP):
                status = 1
                last_time = t
                break
            if exit_time < 0.0 and (fabs(x_new) > radius or fabs(x_post) > radius):
                exit_time = ev_t[i + 1]
    return status, exit_time, last_time


def frozen_gauss_ou(
    const double[::1] ev_t, const signed char[::1] ev_kind, const double[::1] ev_mark,
    const double[::1] z2, double[::1] yl, double[::1] yr, double y0, const double[::1] prm,
):
    cdef Py_ssize_t n = ev_t.shape[0]
    cdef double f1 = prm[0], gdiff = prm[1], scale = prm[2], F1 = prm[3], F0 = prm[4]
    cdef double y = y0, hstep
    cdef Py_ssize_t i
    cdef int status = 0
    cdef double last_time = ev_t[n - 1]
    yl[0] = y
    yr[0] = y
    with nogil:
        for i in range(n - 1):
            hstep = ev_t[i + 1] - ev_t[i]
            y = y + (-f1 * y + F1 * scale - F0 * y) * hstep + gdiff * sqrt(hstep) * z2[i]
            yl[i + 1] = y
            if ev_kind[i + 1] == 1:
                y = y + (scale * ev_mark[i + 1] - (y if scale != 0.0 else 0.0))
            yr[i + 1] = y
            if not fabs(y) < BLOWUP:
                status = 1
                last_time = ev_t[i]
                break
    return status, last_time
