"""Nonlinear refinement of the velocity direction.

The linear solve gives an algebraic estimate; this module polishes it by
minimizing Huber-robustified perpendicular distances between each event's
normalized image point and the line transferred to that event's timestamp.
The optimization runs on the unit sphere (two tangent-plane parameters,
projective retraction) because the scale of v is unobservable.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constraint import TIME_TOLERANCE
from .errors import DegenerateSystemError
from .solver import _as_observation

# 1 px at the default synthetic camera (mean focal length 200). Callers
# with a real calibration should pass huber_k_norm = 1 / mean_focal.
DEFAULT_HUBER_K_NORM = 1.0 / 200.0


@dataclass
class RefineParams:
    huber_k_norm: float | None = None   # None -> 1 px equivalent
    max_iters: int = 100
    gradient_tol: float = 1e-10
    step_tol: float = 1e-12

    def __post_init__(self):
        if self.huber_k_norm is not None and self.huber_k_norm <= 0:
            raise ValueError("huber_k_norm must be positive")
        if self.max_iters <= 0 or self.gradient_tol <= 0 or self.step_tol <= 0:
            raise ValueError("iteration limits and tolerances must be positive")


@dataclass
class RefineResult:
    v_refined: np.ndarray
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    n_dropped: int = 0


def geometric_distance(l, f):
    """Perpendicular distance from a bearing's image point to a 2D line.

    The bearing f (f_z > 0) maps to the inhomogeneous normalized image
    point x̄ = f / f_z; the distance is |x̄ᵀl| / √(l_a² + l_b²), invariant
    to rescaling of l.
    """
    l = np.asarray(l, dtype=float)
    f = np.asarray(f, dtype=float)
    if f[2] <= 0:
        raise ValueError("bearing must point in front of the camera (f_z > 0)")
    den = np.hypot(l[0], l[1])
    if den == 0.0:
        raise ValueError("line at infinity has no finite point distance")
    x_bar = f / f[2]
    return abs(float(x_bar @ l)) / den


def tangent_basis(v):
    """Orthonormal (3, 2) basis of the plane orthogonal to unit vector v."""
    v = np.asarray(v, dtype=float)
    e = np.zeros(3)
    e[np.argmin(np.abs(v))] = 1.0
    t1 = np.cross(v, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(v, t1)
    return np.column_stack([t1, t2])


def prepare_refinement(clusters, omega):
    """Precompute per-event 3x3 constraint matrices and image points.

    Returns (matrices (N,3,3), points (N,3) homogeneous normalized image
    coordinates).  The matrices do not depend on v, so they are computed
    once per refinement.
    """
    omega = np.asarray(omega, dtype=float)
    mats, pts = [], []
    for obs in clusters:
        obs = _as_observation(obs)
        geom = obs.geom
        t = obs.times
        ok = (t >= geom.t_s - TIME_TOLERANCE) & (t <= geom.t_e + TIME_TOLERANCE)
        if not np.any(ok):
            continue
        tc = np.clip(t[ok], geom.t_s, geom.t_e)
        mats.append(_kernels.celc_matrices(
            geom.l1, geom.l3, geom.t_s, geom.t_e, omega, tc))
        f = obs.bearings[ok]
        pts.append(f / f[:, 2:3])
    if not mats:
        raise DegenerateSystemError("no admissible events to refine against")
    return np.concatenate(mats), np.concatenate(pts)


def transfer_residuals(matrices, points, v):
    """Signed point-to-transferred-line distances for all events.

    Returns (r, valid) where r is the (N,) signed distance and valid
    flags rows whose transferred line has a usable finite-point part.
    """
    lines = matrices @ v                      # (N, 3)
    den = np.hypot(lines[:, 0], lines[:, 1])
    norm_l = np.linalg.norm(lines, axis=1)
    valid = den > 1e-12 * (norm_l + 1e-300)
    r = np.zeros(len(lines))
    safe = np.maximum(den, 1e-300)
    r[valid] = (np.einsum("ij,ij->i", points, lines) / safe)[valid]
    return r, valid


def residual_jacobian(matrices, points, v):
    """d r / d v for the signed distances of transfer_residuals, (N, 3).

    Rows whose transferred line is degenerate hold zeros; mask them with
    the valid flags before use.
    """
    lines = matrices @ v
    den = np.hypot(lines[:, 0], lines[:, 1])
    safe = np.maximum(den, 1e-300)
    num = np.einsum("ij,ij->i", points, lines)
    d_num = np.einsum("ij,ijk->ik", points, matrices)          # (N, 3)
    d_den = (lines[:, 0:1] * matrices[:, 0, :]
             + lines[:, 1:2] * matrices[:, 1, :]) / safe[:, None]
    J = d_num / safe[:, None] - (num / safe ** 2)[:, None] * d_den
    J[den <= 1e-12 * (np.linalg.norm(lines, axis=1) + 1e-300)] = 0.0
    return J


def _huber_cost(r, k):
    a = np.abs(r)
    quad = a <= k
    return float(0.5 * np.sum(r[quad] ** 2) + np.sum(k * (a[~quad] - 0.5 * k)))


def _huber_weights(r, k):
    a = np.abs(r)
    return np.where(a <= k, 1.0, k / np.maximum(a, 1e-300))


def refine_velocity(clusters, omega, v_init, params=None, cam=None):
    """Trust-region Huber minimization of transferred-line distances.

    Starts from v_init (a unit vector from the linear solver), keeps ω
    fixed, and damps Gauss-Newton steps in the 2-DoF tangent plane until
    the robust cost stops decreasing.  Steps are only accepted when the
    cost strictly decreases, so final_cost <= initial_cost always holds.
    """
    if params is None:
        params = RefineParams()
    k = params.huber_k_norm
    if k is None:
        k = 1.0 / (0.5 * (cam.fx + cam.fy)) if cam is not None \
            else DEFAULT_HUBER_K_NORM

    matrices, points = prepare_refinement(clusters, omega)
    v = np.asarray(v_init, dtype=float)
    v = v / np.linalg.norm(v)

    r, valid = transfer_residuals(matrices, points, v)
    if not np.any(valid):
        raise DegenerateSystemError("all transferred lines are degenerate")
    n_dropped = int(np.count_nonzero(~valid))
    initial_cost = _huber_cost(r[valid], k)
    cost = initial_cost
    lam = 1e-4
    iterations = 0
    converged = False

    for _ in range(params.max_iters):
        iterations += 1
        T = tangent_basis(v)
        r, valid = transfer_residuals(matrices, points, v)
        if not np.any(valid):
            raise DegenerateSystemError("all transferred lines are degenerate")
        n_dropped = int(np.count_nonzero(~valid))
        J = residual_jacobian(matrices, points, v)[valid] @ T    # (n, 2)
        rr = r[valid]
        w = _huber_weights(rr, k)
        g = J.T @ (w * rr)
        if np.linalg.norm(g) < params.gradient_tol:
            converged = True
            break
        H = J.T @ (w[:, None] * J)
        D = np.diag(np.maximum(np.diag(H), 1e-300))
        accepted = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(H + lam * D, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if np.linalg.norm(delta) < params.step_tol:
                converged = True
                break
            v_new = v + T @ delta
            v_new /= np.linalg.norm(v_new)
            r_new, valid_new = transfer_residuals(matrices, points, v_new)
            if not np.any(valid_new):
                lam *= 10.0
                continue
            cost_new = _huber_cost(r_new[valid_new], k)
            if np.isfinite(cost_new) and cost_new < cost:
                v = v_new
                cost = cost_new
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e12:
                break
        if converged or not accepted:
            if not accepted and not converged:
                # no improving step exists at any damping: local minimum
                converged = True
            break

    if n_dropped:
        warnings.warn(f"refinement dropped {n_dropped} degenerate residuals",
                      RuntimeWarning, stacklevel=2)
    return RefineResult(
        v_refined=v,
        initial_cost=initial_cost,
        final_cost=cost,
        iterations=iterations,
        converged=converged,
        n_dropped=n_dropped,
    )


__all__ = [
    "DEFAULT_HUBER_K_NORM",
    "RefineParams",
    "RefineResult",
    "geometric_distance",
    "tangent_basis",
    "prepare_refinement",
    "transfer_residuals",
    "residual_jacobian",
    "refine_velocity",
]
