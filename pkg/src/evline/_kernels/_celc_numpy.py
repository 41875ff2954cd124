"""Pure-numpy implementation of the per-event constraint kernels.

For each event at time t with boundary lines l1 (at t_s) and l3 (at t_e)
and known angular velocity w, the 3x3 event matrix is

    B = (t - t_e) * outer(R_s^T l1, J_e^T l3) - (t - t_s) * outer(R_e^T l3, J_s^T l1)

with R_s = exp(skew(w)(t - t_s)), J_s the SO(3) left Jacobian at w(t - t_s),
and R_e, J_e the same at (t - t_e).  The solver consumes rows B^T f per
event bearing f; the refiner consumes the full B stack.

All rotations share the axis a = w/|w|, so per event only the signed angle
changes; rotations and Jacobian transposes are applied to l1/l3 directly
via the Rodrigues vector form.
"""

import numpy as np

SMALL_ANGLE = 1e-8


def _axis(omega):
    n = np.linalg.norm(omega)
    if n == 0.0:
        return np.zeros(3), 0.0
    return omega / n, n


def _trig_coeffs(theta):
    """cos, sin, sin(t)/t and (1-cos(t))/t with series fallback near 0."""
    c = np.cos(theta)
    s = np.sin(theta)
    small = np.abs(theta) < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    A = np.where(small, 1.0 - theta * theta / 6.0, s / safe)
    C = np.where(small, 0.5 * theta, (1.0 - c) / safe)
    return c, s, A, C


def _rotated_and_jacobian_applied(l, a, al, axl, theta):
    """R(theta a)^T l and J(theta a)^T l for an array of signed angles.

    al = a . l and axl = a x l are per-cluster constants.
    """
    c, s, A, C = _trig_coeffs(theta)
    # R(th)^T x = cos(th) x - sin(th) (a x x) + (1 - cos(th)) a (a.x)
    rot = (c[:, None] * l[None, :]
           - s[:, None] * axl[None, :]
           + ((1.0 - c) * al)[:, None] * a[None, :])
    # J(th a)^T x = A x + (1 - A) a (a.x) - C (a x x)
    jac = (A[:, None] * l[None, :]
           + ((1.0 - A) * al)[:, None] * a[None, :]
           - C[:, None] * axl[None, :])
    return rot, jac


def _uv_pq(l1, l3, t_s, t_e, omega, times):
    a, n = _axis(np.asarray(omega, dtype=float))
    l1 = np.asarray(l1, dtype=float)
    l3 = np.asarray(l3, dtype=float)
    times = np.asarray(times, dtype=float)
    ds = times - t_s
    de = times - t_e
    u, q = _rotated_and_jacobian_applied(l1, a, a @ l1, np.cross(a, l1), n * ds)
    s, p = _rotated_and_jacobian_applied(l3, a, a @ l3, np.cross(a, l3), n * de)
    return ds, de, u, s, p, q


def celc_rows(l1, l3, t_s, t_e, omega, times, bearings):
    """Constraint rows B_k^T f_k for all events of one cluster, shape (N, 3)."""
    ds, de, u, s, p, q = _uv_pq(l1, l3, t_s, t_e, omega, times)
    f = np.asarray(bearings, dtype=float)
    uf = np.einsum("ij,ij->i", u, f)
    sf = np.einsum("ij,ij->i", s, f)
    return (de * uf)[:, None] * p - (ds * sf)[:, None] * q


def celc_matrices(l1, l3, t_s, t_e, omega, times):
    """Per-event matrices B_k for all events of one cluster, shape (N, 3, 3)."""
    ds, de, u, s, p, q = _uv_pq(l1, l3, t_s, t_e, omega, times)
    return (de[:, None, None] * u[:, :, None] * p[:, None, :]
            - ds[:, None, None] * s[:, :, None] * q[:, None, :])
