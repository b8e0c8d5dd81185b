# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled AND/OR layer kernels.

Inputs are 3-D views ``z[b, r, j]``; a shared input layer is passed as a
view with a zero stride on the node axis, and its gradient buffer likewise,
so the sequential loops below accumulate the reduction over nodes in place.
"""

from libc.stdlib cimport malloc, free


cdef inline double _clamp(double v) noexcept nogil:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def and_forward(const double[:, :, :] z, const double[:, ::1] w,
                const double[::1] bias, double[:, ::1] out):
    cdef Py_ssize_t nb = z.shape[0], nr = z.shape[1], n = z.shape[2]
    cdef Py_ssize_t b, r, j
    cdef double p, wj, zj
    with nogil:
        for b in range(nb):
            for r in range(nr):
                p = bias[r]
                for j in range(n):
                    wj = w[r, j]
                    zj = z[b, r, j]
                    if wj >= 0.0:
                        p *= 1.0 - wj * (1.0 - zj)
                    else:
                        p *= 1.0 + wj * zj
                out[b, r] = _clamp(p)


def or_forward(const double[:, :, :] z, const double[:, ::1] w,
               const double[::1] bias, double[:, ::1] out):
    cdef Py_ssize_t nb = z.shape[0], nr = z.shape[1], n = z.shape[2]
    cdef Py_ssize_t b, r, j
    cdef double p, wj, zj
    with nogil:
        for b in range(nb):
            for r in range(nr):
                p = 1.0 - bias[r]
                for j in range(n):
                    wj = w[r, j]
                    zj = z[b, r, j]
                    if wj >= 0.0:
                        p *= 1.0 - wj * zj
                    else:
                        p *= 1.0 + wj * (1.0 - zj)
                out[b, r] = _clamp(1.0 - p)


def and_backward(const double[:, :, :] z, const double[:, ::1] w,
                 const double[::1] bias, const double[:, ::1] g,
                 double[:, :, :] dz, double[:, ::1] dw, double[::1] dbias):
    cdef Py_ssize_t nb = z.shape[0], nr = z.shape[1], n = z.shape[2]
    cdef Py_ssize_t b, r, j
    cdef double p, s, rest, gb, wj, zj, f
    cdef double *fac = <double *> malloc((n + 1) * sizeof(double))
    cdef double *pre = <double *> malloc((n + 1) * sizeof(double))
    if fac == NULL or pre == NULL:
        free(fac)
        free(pre)
        raise MemoryError()
    try:
        with nogil:
            for b in range(nb):
                for r in range(nr):
                    gb = g[b, r]
                    if gb == 0.0:
                        continue
                    p = 1.0
                    for j in range(n):
                        wj = w[r, j]
                        zj = z[b, r, j]
                        if wj >= 0.0:
                            f = 1.0 - wj * (1.0 - zj)
                        else:
                            f = 1.0 + wj * zj
                        fac[j] = f
                        pre[j] = p
                        p *= f
                    dbias[r] += gb * p
                    s = 1.0
                    for j in range(n - 1, -1, -1):
                        wj = w[r, j]
                        zj = z[b, r, j]
                        rest = gb * bias[r] * pre[j] * s
                        dz[b, r, j] += rest * wj
                        if wj > 0.0:
                            dw[r, j] -= rest * (1.0 - zj)
                        elif wj < 0.0:
                            dw[r, j] += rest * zj
                        else:
                            dw[r, j] += rest * (2.0 * zj - 1.0)
                        s *= fac[j]
    finally:
        free(fac)
        free(pre)


def or_backward(const double[:, :, :] z, const double[:, ::1] w,
                const double[::1] bias, const double[:, ::1] g,
                double[:, :, :] dz, double[:, ::1] dw, double[::1] dbias):
    cdef Py_ssize_t nb = z.shape[0], nr = z.shape[1], n = z.shape[2]
    cdef Py_ssize_t b, r, j
    cdef double p, s, rest, gb, wj, zj, f
    cdef double *fac = <double *> malloc((n + 1) * sizeof(double))
    cdef double *pre = <double *> malloc((n + 1) * sizeof(double))
    if fac == NULL or pre == NULL:
        free(fac)
        free(pre)
        raise MemoryError()
    try:
        with nogil:
            for b in range(nb):
                for r in range(nr):
                    gb = g[b, r]
                    if gb == 0.0:
                        continue
                    p = 1.0
                    for j in range(n):
                        wj = w[r, j]
                        zj = z[b, r, j]
                        if wj >= 0.0:
                            f = 1.0 - wj * zj
                        else:
                            f = 1.0 + wj * (1.0 - zj)
                        fac[j] = f
                        pre[j] = p
                        p *= f
                    dbias[r] += gb * p
                    s = 1.0
                    for j in range(n - 1, -1, -1):
                        wj = w[r, j]
                        zj = z[b, r, j]
                        rest = gb * (1.0 - bias[r]) * pre[j] * s
                        dz[b, r, j] += rest * wj
                        if wj > 0.0:
                            dw[r, j] += rest * zj
                        elif wj < 0.0:
                            dw[r, j] -= rest * (1.0 - zj)
                        else:
                            dw[r, j] += rest * (2.0 * zj - 1.0)
                        s *= fac[j]
    finally:
        free(fac)
        free(pre)
