"""Per-event line-transfer constraint between two boundary lines.

A cluster of events triggered by one 3D line is summarized by the lines
l1 and l3 it projects to at the cluster's boundary times t_s and t_e.
With known angular velocity w, each event at time t_k contributes a 3x3
matrix B such that the transferred line at t_k is B v for any candidate
linear velocity v, and the event bearing f must satisfy f^T B v = 0.

This module is the scalar reference path assembled from the geometry
ops; the vectorized hot path lives in evline._kernels and is tested
against it.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTransferError
from .geometry import (
    normalize_line,
    skew,
    so3_exp,
    so3_left_jacobian,
    translation_from_velocity,
)

# Clock jitter allowance when checking that an event time lies inside its
# cluster interval; times within the tolerance are clamped to the boundary.
TIME_TOLERANCE = 1e-9


@dataclass
class ClusterGeometry:
    """Boundary lines of one event cluster in calibrated coordinates.

    l1 is the line at t_s, l3 the line at t_e; both are unit-normalized
    on construction.
    """

    l1: np.ndarray
    l3: np.ndarray
    t_s: float
    t_e: float

    def __post_init__(self):
        self.l1 = normalize_line(self.l1)
        self.l3 = normalize_line(self.l3)
        self.t_s = float(self.t_s)
        self.t_e = float(self.t_e)
        if not self.t_e > self.t_s:
            raise ValueError(f"need t_e > t_s, got [{self.t_s}, {self.t_e}]")

    @property
    def line_direction(self):
        """Direction of the underlying 3D line in camera coordinates, l1 x l3."""
        return np.cross(self.l1, self.l3)


@dataclass
class ConstraintRow:
    """One stacked row B^T f with the cluster/event it came from."""

    r: np.ndarray
    cluster_id: int = 0
    event_index: int = 0


def _clamp_time(geom, t_k):
    """Validate t_k against [t_s, t_e] with jitter tolerance; clamp to boundary."""
    if t_k < geom.t_s - TIME_TOLERANCE or t_k > geom.t_e + TIME_TOLERANCE:
        raise ValueError(
            f"event time {t_k} outside cluster interval "
            f"[{geom.t_s}, {geom.t_e}]"
        )
    return min(max(t_k, geom.t_s), geom.t_e)


def continuous_trifocal(geom, omega, v, t_k):
    """Three 3x3 trifocal matrices for the event at t_k, shape (3, 3, 3).

    T_i = r_i_s (J_e v (t_k - t_e))^T - (t_k - t_s) J_s v r_i_e^T, where
    r_i_s / r_i_e are the i-th columns of the relative rotations to the
    boundary times and J_s / J_e the matching left Jacobians.
    """
    t_k = _clamp_time(geom, t_k)
    ds = t_k - geom.t_s
    de = t_k - geom.t_e
    R_s = so3_exp(omega, ds)
    R_e = so3_exp(omega, de)
    t_e_vec = translation_from_velocity(omega, v, de)
    J_s_v_ds = translation_from_velocity(omega, v, ds)
    T = np.empty((3, 3, 3))
    for i in range(3):
        T[i] = np.outer(R_s[:, i], t_e_vec) - np.outer(J_s_v_ds, R_e[:, i])
    return T


def build_celc_matrix(geom, omega, t_k):
    """Event matrix B with rows indexed like the trifocal matrices.

    Row i is (t_k - t_e)(l1 . r_i_s) l3^T J_e - (t_k - t_s)(l3 . r_i_e) l1^T J_s,
    so that (B v)_i = l1^T T_i l3 for every velocity v.  B does not depend
    on v.
    """
    t_k = _clamp_time(geom, t_k)
    ds = t_k - geom.t_s
    de = t_k - geom.t_e
    R_s = so3_exp(omega, ds)
    R_e = so3_exp(omega, de)
    J_s = so3_left_jacobian(omega, ds)
    J_e = so3_left_jacobian(omega, de)
    u = R_s.T @ geom.l1
    s = R_e.T @ geom.l3
    p = J_e.T @ geom.l3
    q = J_s.T @ geom.l1
    return de * np.outer(u, p) - ds * np.outer(s, q)


def celc_residual(f, B, v):
    """Scalar constraint value f^T B v (zero for a consistent triple)."""
    return float(np.asarray(f) @ B @ np.asarray(v))


def scaled_residual(f, B, v):
    """f^T B v / (|B^T f| |v|); scale-free diagnostic of constraint violation."""
    f = np.asarray(f, dtype=float)
    v = np.asarray(v, dtype=float)
    row = B.T @ f
    denom = np.linalg.norm(row) * np.linalg.norm(v)
    if denom == 0.0:
        return 0.0
    return float(row @ v) / denom


def transfer_line(geom, omega, v, t_k):
    """Predicted (unit) line at time t_k for candidate velocity v.

    Raises DegenerateTransferError when B v (nearly) vanishes, e.g. under
    pure rotation, where the transfer carries no information about v.
    """
    B = build_celc_matrix(geom, omega, t_k)
    l = B @ np.asarray(v, dtype=float)
    n = np.linalg.norm(l)
    if n < 1e-14:
        raise DegenerateTransferError(
            f"transferred line vanishes at t={t_k} (|Bv|={n:.3e})"
        )
    return l / n


def build_ce3lc_rows(geom, l2, omega, t_k_mid):
    """Rows of skew(l2) B at the interval-center time, shape (3, 3).

    l2 is the line fitted at the center of the cluster interval; the rows
    constrain v through l2 x (B v) = 0 and have rank at most 2.
    """
    l2 = np.asarray(l2, dtype=float)
    B = build_celc_matrix(geom, omega, t_k_mid)
    return skew(l2) @ B


__all__ = [
    "ClusterGeometry",
    "ConstraintRow",
    "TIME_TOLERANCE",
    "continuous_trifocal",
    "build_celc_matrix",
    "celc_residual",
    "scaled_residual",
    "transfer_line",
    "build_ce3lc_rows",
]
