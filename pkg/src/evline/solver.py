"""Stacked homogeneous system and robust nullspace extraction.

Every admissible event contributes one row B^T f; the velocity direction
is the right-singular vector of the (Huber-reweighted) row matrix for
the smallest singular value.  The estimate is up to scale and sign.

Because the event bearings carry the measurement noise, each row's
residual noise is proportional to the image-plane part of B v.  The
solve therefore normalizes by the per-row noise gradient (a generalized
eigenproblem, equivalent to an SVD of the two-sided weighted row
matrix); without gradient blocks it reduces to the plain weighted SVD.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .constraint import TIME_TOLERANCE, build_celc_matrix
from .errors import DegenerateSystemError
from .geometry import skew

# Median time-normalized row magnitude below which the system carries no
# translation information at all (pure rotation, or v = 0).
PURE_ROTATION_SCALE = 1e-8

KIND_NONE = "none"
KIND_PURE_ROTATION = "pure_rotation"
KIND_PARALLEL_LINES = "parallel_lines_translation"


@dataclass
class ClusterObservation:
    """One cluster's geometry plus the events it must explain.

    times (N,) and bearings (N, 3) are aligned; center_line/center_time
    are only needed for the three-line baseline solver.
    """

    geom: object
    times: np.ndarray
    bearings: np.ndarray
    center_line: np.ndarray | None = None
    center_time: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.bearings = np.asarray(self.bearings, dtype=float)
        if self.bearings.shape != (len(self.times), 3):
            raise ValueError("bearings must be (N, 3) aligned with times")


def _as_observation(obs):
    if isinstance(obs, ClusterObservation):
        return obs
    geom, times, bearings = obs
    return ClusterObservation(geom=geom, times=times, bearings=bearings)


@dataclass
class StackedSystem:
    """Rows B^T f with provenance and per-row scale information.

    grad_rows holds the first two rows of each event's B (the gradient
    of the residual with respect to the noisy image point); it drives
    the noise normalization in the solve and is None for line-only
    systems such as the three-line baseline.
    """

    rows: np.ndarray          # (N, 3)
    cluster_ids: np.ndarray   # (N,)
    event_index: np.ndarray   # (N,) index within the source cluster
    time_norms: np.ndarray    # (N,) |t - t_s| + |t - t_e|
    n_dropped: int = 0
    grad_rows: np.ndarray | None = None   # (N, 2, 3)

    @property
    def n_total(self):
        return self.rows.shape[0]

    def row_scale(self):
        """Median row norm after dividing out the elapsed-time factors."""
        if self.n_total == 0:
            return 0.0
        norms = np.linalg.norm(self.rows, axis=1)
        return float(np.median(norms / np.maximum(self.time_norms, 1e-300)))


@dataclass
class MotionEstimate:
    """Unit velocity direction (sign-ambiguous) plus solver diagnostics."""

    v_dir: np.ndarray
    singular_values: np.ndarray     # sigma1 >= sigma2 >= sigma3 of weighted rows
    degenerate: bool
    degeneracy_kind: str = KIND_NONE
    inlier_fraction: float = 1.0
    n_rows: int = 0
    row_scale: float = 0.0
    ill_conditioned: bool = False
    iterations: int = 0
    objective_history: list = field(default_factory=list)


def stack_rows(clusters, omega):
    """Stack one row per admissible event across all clusters.

    Event times within TIME_TOLERANCE outside [t_s, t_e] are clamped to
    the boundary; times further out are dropped (counted in n_dropped).
    Raises DegenerateSystemError when no admissible events remain.
    """
    omega = np.asarray(omega, dtype=float)
    rows, grads, cids, eidx, tnorms = [], [], [], [], []
    n_dropped = 0
    for cid, obs in enumerate(clusters):
        obs = _as_observation(obs)
        geom = obs.geom
        t = obs.times
        ok = (t >= geom.t_s - TIME_TOLERANCE) & (t <= geom.t_e + TIME_TOLERANCE)
        n_dropped += int(np.count_nonzero(~ok))
        if not np.any(ok):
            continue
        tc = np.clip(t[ok], geom.t_s, geom.t_e)
        B = _kernels.celc_matrices(
            geom.l1, geom.l3, geom.t_s, geom.t_e, omega, tc)
        f = np.ascontiguousarray(obs.bearings[ok])
        rows.append(np.einsum("nij,ni->nj", B, f))
        grads.append(B[:, :2, :])
        cids.append(np.full(len(tc), cid, dtype=np.int64))
        eidx.append(np.flatnonzero(ok).astype(np.int64))
        tnorms.append(np.abs(tc - geom.t_s) + np.abs(tc - geom.t_e))
    if not rows:
        raise DegenerateSystemError("no admissible events in any cluster")
    return StackedSystem(
        rows=np.concatenate(rows),
        cluster_ids=np.concatenate(cids),
        event_index=np.concatenate(eidx),
        time_norms=np.concatenate(tnorms),
        n_dropped=n_dropped,
        grad_rows=np.concatenate(grads),
    )


def _huber_weights(u, k):
    au = np.abs(u)
    return np.where(au <= k, 1.0, k / np.maximum(au, 1e-300))


def _huber_rho(u, k):
    au = np.abs(u)
    quad = au <= k
    return float(0.5 * np.sum(u[quad] ** 2) + np.sum(k * (au[~quad] - 0.5 * k)))


def _smallest_right_singular(rows, weights):
    M = rows * np.sqrt(weights)[:, None]
    _, S, Vt = np.linalg.svd(M, full_matrices=False)
    return Vt[-1], S


def _whitened_minimizer(rows, grads, weights):
    """Smallest generalized singular direction of the weighted system.

    Solves min_v (v^T M v)/(v^T C v) with M the weighted row Gram matrix
    and C the weighted noise-gradient Gram matrix; equivalently an SVD
    of sqrt(W) A L^{-T} where C = L L^T.  Returns (v, singular_values).
    Raises scipy.linalg.LinAlgError when C is not positive definite.
    """
    M = np.einsum("i,ij,ik->jk", weights, rows, rows)
    C = np.einsum("i,iaj,iak->jk", weights, grads, grads)
    L = scipy.linalg.cholesky(C, lower=True)
    X = scipy.linalg.solve_triangular(
        L, (rows * np.sqrt(weights)[:, None]).T, lower=True)
    S = np.linalg.svd(X.T, compute_uv=False)
    _, V = scipy.linalg.eigh(M, C)
    v = V[:, 0]
    return v / np.linalg.norm(v), S


def solve_nullspace_robust(system, sample_size=1000, huber_k=1.345,
                           max_iters=50, rng=0, weight_tol=1e-8,
                           degenerate_ratio=1e-6, gap_ratio=0.3):
    """Huber-IRLS nullspace estimate of the velocity direction.

    When the system holds more than sample_size rows, a uniform
    without-replacement subsample (seeded by rng) is used.  Each
    iteration solves the weighted homogeneous problem (noise-gradient
    normalized when grad_rows is available), then recomputes Huber
    weights on residuals scaled by 1.4826 * MAD.  Pass sample_size=None
    to always use every row.
    """
    if system.n_total < 3:
        raise DegenerateSystemError(
            f"need at least 3 rows, have {system.n_total}")
    rows = system.rows
    grads = system.grad_rows
    if sample_size is not None and system.n_total > sample_size:
        gen = rng if isinstance(rng, np.random.Generator) \
            else np.random.default_rng(rng)
        idx = np.sort(gen.choice(system.n_total, size=sample_size,
                                 replace=False))
        rows = rows[idx]
        if grads is not None:
            grads = grads[idx]

    def decompose(w):
        if grads is not None:
            try:
                return _whitened_minimizer(rows, grads, w)
            except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
                pass  # gradient Gram not PD: degenerate geometry
        return _smallest_right_singular(rows, w)

    row_norm_med = float(np.median(np.linalg.norm(rows, axis=1)))
    w = np.ones(rows.shape[0])
    inlier_fraction = 1.0
    iterations = 0
    history = []
    v = S = None
    ref_scale = None
    for it in range(max_iters):
        iterations = it + 1
        v_new, S_new = decompose(w)
        raw = rows @ v_new
        if grads is not None:
            sig = np.linalg.norm(np.einsum("iaj,j->ia", grads, v_new), axis=1)
            sig = np.maximum(sig, 1e-9 * max(float(np.median(sig)), 1e-300))
            r = raw / sig
        else:
            r = raw
        if ref_scale is None:
            ref_scale = 1.4826 * float(np.median(np.abs(r - np.median(r))))
        # objective at a fixed reference scale; reject non-descending
        # iterates so the reweighting cannot oscillate
        if ref_scale > 0.0:
            obj = _huber_rho(r / ref_scale, huber_k)
            if history and obj > history[-1]:
                iterations -= 1
                break
            history.append(obj)
        v, S = v_new, S_new
        if float(np.median(np.abs(raw))) <= 1e-13 * max(row_norm_med, 1e-300):
            # exact fit: residuals are at rounding level, weights are moot
            inlier_fraction = 1.0
            break
        scale = 1.4826 * float(np.median(np.abs(r - np.median(r))))
        if scale <= 0.0:
            break
        u = r / scale
        w_new = _huber_weights(u, huber_k)
        inlier_fraction = float(np.mean(np.abs(u) <= huber_k))
        if np.max(np.abs(w_new - w)) < weight_tol:
            w = w_new
            break
        w = w_new

    row_scale = system.row_scale()
    with np.errstate(invalid="ignore", divide="ignore"):
        rank_ratio = S[1] / S[0] if S[0] > 0 else 0.0
        gap = S[2] / S[1] if S[1] > 0 else 0.0
    pure_rotation = row_scale < PURE_ROTATION_SCALE
    degenerate = bool(pure_rotation or rank_ratio < degenerate_ratio)
    return MotionEstimate(
        v_dir=v,
        singular_values=S,
        degenerate=degenerate,
        degeneracy_kind=KIND_PURE_ROTATION if pure_rotation else KIND_NONE,
        inlier_fraction=inlier_fraction,
        n_rows=rows.shape[0],
        row_scale=row_scale,
        ill_conditioned=bool(gap > gap_ratio),
        iterations=iterations,
        objective_history=history,
    )


def solve_nullspace_svd(system):
    """Plain (unweighted, unsampled, unnormalized) SVD nullspace.

    Baseline for the robustness comparison; ignores grad_rows.
    """
    if system.n_total < 3:
        raise DegenerateSystemError(
            f"need at least 3 rows, have {system.n_total}")
    v, S = _smallest_right_singular(system.rows, np.ones(system.n_total))
    row_scale = system.row_scale()
    pure_rotation = row_scale < PURE_ROTATION_SCALE
    rank_ratio = S[1] / S[0] if S[0] > 0 else 0.0
    return MotionEstimate(
        v_dir=v,
        singular_values=S,
        degenerate=bool(pure_rotation or rank_ratio < 1e-6),
        degeneracy_kind=KIND_PURE_ROTATION if pure_rotation else KIND_NONE,
        inlier_fraction=1.0,
        n_rows=system.n_total,
        row_scale=row_scale,
    )


def diagnose_degeneracy(est, clusters, omega, pure_rotation_scale=None,
                        omega_tol=1e-8, parallel_angle_tol=1e-4):
    """Classify a degenerate configuration after a solve.

    pure_rotation: the rows carry no translation signal at all (their
    time-normalized magnitudes vanish), which happens when v = 0.
    parallel_lines_translation: rotation-free motion where every cluster's
    3D line direction l1 x l3 is parallel, leaving the common direction
    unobservable.
    """
    if pure_rotation_scale is None:
        pure_rotation_scale = PURE_ROTATION_SCALE
    if est.row_scale < pure_rotation_scale:
        return KIND_PURE_ROTATION
    if np.linalg.norm(np.asarray(omega, dtype=float)) < omega_tol:
        dirs = []
        for obs in clusters:
            obs = _as_observation(obs)
            d = np.cross(obs.geom.l1, obs.geom.l3)
            n = np.linalg.norm(d)
            if n == 0.0:
                continue
            dirs.append(d / n)
        if dirs:
            d0 = dirs[0]
            sines = [np.linalg.norm(np.cross(d0, d)) for d in dirs[1:]]
            if all(s < parallel_angle_tol for s in sines):
                return KIND_PARALLEL_LINES
    return KIND_NONE


def stack_ce3lc_rows(clusters, omega):
    """Three rows skew(l2) B per cluster (line-line-line baseline)."""
    omega = np.asarray(omega, dtype=float)
    rows, cids, eidx, tnorms = [], [], [], []
    for cid, obs in enumerate(clusters):
        obs = _as_observation(obs)
        if obs.center_line is None:
            raise ValueError(f"cluster {cid} has no center line")
        geom = obs.geom
        t_mid = obs.center_time
        if t_mid is None:
            t_mid = 0.5 * (geom.t_s + geom.t_e)
        B = build_celc_matrix(geom, omega, t_mid)
        rows.append(skew(obs.center_line) @ B)
        cids.append(np.full(3, cid, dtype=np.int64))
        eidx.append(np.arange(3, dtype=np.int64))
        tn = abs(t_mid - geom.t_s) + abs(t_mid - geom.t_e)
        tnorms.append(np.full(3, tn))
    if not rows:
        raise DegenerateSystemError("no clusters with center lines")
    return StackedSystem(
        rows=np.concatenate(rows),
        cluster_ids=np.concatenate(cids),
        event_index=np.concatenate(eidx),
        time_norms=np.concatenate(tnorms),
    )


def solve_ce3lc(clusters, omega, **solver_kwargs):
    """Robust nullspace estimate from center-line constraints only."""
    system = stack_ce3lc_rows(clusters, omega)
    return solve_nullspace_robust(system, **solver_kwargs)


__all__ = [
    "ClusterObservation",
    "StackedSystem",
    "MotionEstimate",
    "PURE_ROTATION_SCALE",
    "KIND_NONE",
    "KIND_PURE_ROTATION",
    "KIND_PARALLEL_LINES",
    "stack_rows",
    "solve_nullspace_robust",
    "solve_nullspace_svd",
    "diagnose_degeneracy",
    "stack_ce3lc_rows",
    "solve_ce3lc",
]
