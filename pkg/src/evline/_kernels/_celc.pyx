# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of _celc_numpy; see that module for the math.

Scalar C loops over events; the axis-angle decomposition is hoisted out
of the loop since all events of a cluster share the rotation axis.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, sin, sqrt

cnp.import_array()

cdef double SMALL_ANGLE = 1e-8


cdef inline void _apply(double theta,
                        const double* l, const double* axl, double al,
                        const double* a,
                        double* rot, double* jac) noexcept nogil:
    """rot = R(theta a)^T l, jac = J(theta a)^T l."""
    cdef double c = cos(theta)
    cdef double s = sin(theta)
    cdef double A, C
    if fabs(theta) < SMALL_ANGLE:
        A = 1.0 - theta * theta / 6.0
        C = 0.5 * theta
    else:
        A = s / theta
        C = (1.0 - c) / theta
    cdef int i
    for i in range(3):
        rot[i] = c * l[i] - s * axl[i] + (1.0 - c) * al * a[i]
        jac[i] = A * l[i] + (1.0 - A) * al * a[i] - C * axl[i]


cdef inline void _prepare(const double[:] omega, const double[:] l1,
                          const double[:] l3,
                          double* a, double* n_out,
                          double* l1c, double* l3c,
                          double* axl1, double* axl3,
                          double* al1, double* al3) noexcept nogil:
    cdef double n = sqrt(omega[0] * omega[0] + omega[1] * omega[1]
                         + omega[2] * omega[2])
    cdef int i
    if n == 0.0:
        for i in range(3):
            a[i] = 0.0
    else:
        for i in range(3):
            a[i] = omega[i] / n
    for i in range(3):
        l1c[i] = l1[i]
        l3c[i] = l3[i]
    axl1[0] = a[1] * l1c[2] - a[2] * l1c[1]
    axl1[1] = a[2] * l1c[0] - a[0] * l1c[2]
    axl1[2] = a[0] * l1c[1] - a[1] * l1c[0]
    axl3[0] = a[1] * l3c[2] - a[2] * l3c[1]
    axl3[1] = a[2] * l3c[0] - a[0] * l3c[2]
    axl3[2] = a[0] * l3c[1] - a[1] * l3c[0]
    al1[0] = a[0] * l1c[0] + a[1] * l1c[1] + a[2] * l1c[2]
    al3[0] = a[0] * l3c[0] + a[1] * l3c[1] + a[2] * l3c[2]
    n_out[0] = n


def celc_rows(l1, l3, double t_s, double t_e, omega, times, bearings):
    """Constraint rows B_k^T f_k for all events of one cluster, shape (N, 3)."""
    cdef double[:] l1v = np.ascontiguousarray(l1, dtype=np.float64)
    cdef double[:] l3v = np.ascontiguousarray(l3, dtype=np.float64)
    cdef double[:] wv = np.ascontiguousarray(omega, dtype=np.float64)
    cdef double[:] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[:, :] fv = np.ascontiguousarray(bearings, dtype=np.float64)
    cdef Py_ssize_t n_ev = tv.shape[0]
    out_arr = np.empty((n_ev, 3), dtype=np.float64)
    cdef double[:, :] out = out_arr

    cdef double a[3]
    cdef double l1c[3]
    cdef double l3c[3]
    cdef double axl1[3]
    cdef double axl3[3]
    cdef double al1, al3, n
    cdef double u[3]
    cdef double q[3]
    cdef double s[3]
    cdef double p[3]
    cdef double ds, de, uf, sf, c1, c2
    cdef Py_ssize_t k
    cdef int i

    _prepare(wv, l1v, l3v, a, &n, l1c, l3c, axl1, axl3, &al1, &al3)
    with nogil:
        for k in range(n_ev):
            ds = tv[k] - t_s
            de = tv[k] - t_e
            _apply(n * ds, l1c, axl1, al1, a, u, q)
            _apply(n * de, l3c, axl3, al3, a, s, p)
            uf = u[0] * fv[k, 0] + u[1] * fv[k, 1] + u[2] * fv[k, 2]
            sf = s[0] * fv[k, 0] + s[1] * fv[k, 1] + s[2] * fv[k, 2]
            c1 = de * uf
            c2 = ds * sf
            for i in range(3):
                out[k, i] = c1 * p[i] - c2 * q[i]
    return out_arr


def celc_matrices(l1, l3, double t_s, double t_e, omega, times):
    """Per-event matrices B_k for all events of one cluster, shape (N, 3, 3)."""
    cdef double[:] l1v = np.ascontiguousarray(l1, dtype=np.float64)
    cdef double[:] l3v = np.ascontiguousarray(l3, dtype=np.float64)
    cdef double[:] wv = np.ascontiguousarray(omega, dtype=np.float64)
    cdef double[:] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n_ev = tv.shape[0]
    out_arr = np.empty((n_ev, 3, 3), dtype=np.float64)
    cdef double[:, :, :] out = out_arr

    cdef double a[3]
    cdef double l1c[3]
    cdef double l3c[3]
    cdef double axl1[3]
    cdef double axl3[3]
    cdef double al1, al3, n
    cdef double u[3]
    cdef double q[3]
    cdef double s[3]
    cdef double p[3]
    cdef double ds, de
    cdef Py_ssize_t k
    cdef int i, j

    _prepare(wv, l1v, l3v, a, &n, l1c, l3c, axl1, axl3, &al1, &al3)
    with nogil:
        for k in range(n_ev):
            ds = tv[k] - t_s
            de = tv[k] - t_e
            _apply(n * ds, l1c, axl1, al1, a, u, q)
            _apply(n * de, l3c, axl3, al3, a, s, p)
            for i in range(3):
                for j in range(3):
                    out[k, i, j] = de * u[i] * p[j] - ds * s[i] * q[j]
    return out_arr
