"""Robust 2D line fitting on cluster boundary sub-windows.

The earliest and latest few milliseconds of a cluster trace the image
line that generated it.  A Huber-weighted total-least-squares fit on
those pixels yields the boundary lines l1 and l3 (and optionally a
center line for the three-line baseline), which are lifted into
calibrated coordinates with anchor times taken at the sub-window
centers so each line corresponds temporally to its data.
"""

from dataclasses import dataclass

import numpy as np

from .constraint import ClusterGeometry
from .errors import ClusterRejectedError, LineFitError
from .geometry import lift_line


@dataclass
class LineFitParams:
    """Knobs for boundary-line extraction; all values must be positive."""

    window_len: float = 0.005      # seconds of events per boundary fit
    huber_k: float = 1.345         # px, 95%-efficiency Huber constant
    max_irls_iters: int = 50
    convergence_tol: float = 1e-10
    min_points: int = 10

    def __post_init__(self):
        for name in ("window_len", "huber_k", "max_irls_iters",
                     "convergence_tol", "min_points"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FittedLine:
    """A fitted image line, both in pixels and lifted to calibrated space.

    pixel_line is unit-normalized in its first two components, so a
    point-line product gives a signed distance in pixels.  inlier_rms
    is the RMS perpendicular residual over points within huber_k.
    """

    line: np.ndarray
    pixel_line: np.ndarray
    anchor_time: float
    inlier_rms: float


def _canonical_sign(line):
    """Fix the overall sign so successive iterates are comparable."""
    if line[0] < 0 or (line[0] == 0 and line[1] < 0):
        return -line
    return line


def _weighted_tls(pts, w):
    """Weighted total-least-squares line through 2D points.

    Returns (a, b, c) with unit (a, b); the perpendicular residual of a
    point p is then a*p_x + b*p_y + c.
    """
    wsum = w.sum()
    ctr = (w[:, None] * pts).sum(axis=0) / wsum
    q = pts - ctr
    cov = (w[:, None] * q).T @ q
    _, vecs = np.linalg.eigh(cov)
    n = vecs[:, 0]
    return _canonical_sign(np.array([n[0], n[1], -float(n @ ctr)]))


def _huber_rho(r, k):
    a = np.abs(r)
    quad = a <= k
    out = np.empty_like(a)
    out[quad] = 0.5 * a[quad] ** 2
    out[~quad] = k * (a[~quad] - 0.5 * k)
    return out


def fit_line_huber(points, params=None):
    """IRLS Huber fit of a 2D line to pixel points.

    Total least squares (perpendicular distance) inside each reweighting
    step, so near-vertical lines need no special casing.  Returns
    (line, inlier_rms) with line = (a, b, c), a^2 + b^2 = 1.
    """
    if params is None:
        params = LineFitParams()
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (N, 2) array")
    if len(pts) < params.min_points:
        raise LineFitError(
            f"need at least {params.min_points} points, got {len(pts)}")
    if np.all(pts == pts[0]):
        raise LineFitError("all points coincident")

    k = params.huber_k
    w = np.ones(len(pts))
    line = None
    obj_prev = np.inf
    for _ in range(params.max_irls_iters):
        new_line = _weighted_tls(pts, w)
        r = pts @ new_line[:2] + new_line[2]
        obj = float(_huber_rho(r, k).sum())
        # IRLS minimizes a quadratic majorizer exactly, so the robust
        # objective cannot increase (up to roundoff)
        assert obj <= obj_prev * (1.0 + 1e-9) + 1e-12
        obj_prev = obj
        converged = (line is not None
                     and np.linalg.norm(new_line - line) < params.convergence_tol)
        line = new_line
        absr = np.abs(r)
        if converged or absr.max() <= 1e-12:
            break
        w = np.ones_like(absr)
        np.divide(k, absr, out=w, where=absr > k)

    r = pts @ line[:2] + line[2]
    inliers = np.abs(r) <= k
    if not np.any(inliers):
        inliers = np.ones(len(pts), dtype=bool)
    rms = float(np.sqrt(np.mean(r[inliers] ** 2)))
    return line, rms


def _window_points(events, lo, hi):
    sel = (events.t >= lo) & (events.t <= hi)
    return np.flatnonzero(sel)


def _slide_window(events, t_s, t_e, params, from_start):
    """Find the first window_len sub-window with enough points.

    Starts at the requested cluster edge and slides toward the center
    in steps of window_len / 2; raises ClusterRejectedError when no
    position can gather min_points.
    """
    length = params.window_len
    step = 0.5 * length
    mid = 0.5 * (t_s + t_e)
    j = 0
    while True:
        if from_start:
            lo = t_s + j * step
            if lo > mid:
                break
            hi = min(lo + length, t_e)
        else:
            hi = t_e - j * step
            if hi < mid:
                break
            lo = max(hi - length, t_s)
        idx = _window_points(events, lo, hi)
        if idx.size >= params.min_points:
            return idx, 0.5 * (lo + hi)
        j += 1
    side = "start" if from_start else "end"
    raise ClusterRejectedError(
        f"no {length * 1e3:g} ms sub-window near the cluster {side} "
        f"holds {params.min_points} events")


def _fit_subwindow(events, idx, anchor, params, cam):
    pixel_line, rms = fit_line_huber(events.pixels()[idx], params)
    return FittedLine(line=lift_line(pixel_line, cam),
                      pixel_line=pixel_line,
                      anchor_time=float(anchor),
                      inlier_rms=rms)


def extract_boundary_lines(cluster, params, cam):
    """Fit l1 and l3 on a cluster's first/last sub-windows of events.

    Sub-windows slide toward the cluster center when their nominal
    position is too sparse.  The fitted lines are lifted to calibrated
    coordinates and anchored at the sub-window centers, which become
    the effective (t_s, t_e) of the returned ClusterGeometry.
    """
    events = cluster.events
    if len(events) == 0:
        raise ClusterRejectedError("empty cluster")
    t_s = float(events.t[0])
    t_e = float(events.t[-1])
    idx1, anchor1 = _slide_window(events, t_s, t_e, params, from_start=True)
    idx3, anchor3 = _slide_window(events, t_s, t_e, params, from_start=False)
    first = _fit_subwindow(events, idx1, anchor1, params, cam)
    last = _fit_subwindow(events, idx3, anchor3, params, cam)
    return ClusterGeometry(l1=first.line, l3=last.line,
                           t_s=first.anchor_time, t_e=last.anchor_time)


def extract_center_line(cluster, params, cam):
    """Fit the line at the cluster's temporal center (CE3LC's l2).

    The window starts window_len wide, centered at (t_s + t_e) / 2, and
    widens symmetrically in steps of window_len / 2 per side until it
    holds min_points; the anchor time is the center regardless.
    """
    events = cluster.events
    if len(events) == 0:
        raise ClusterRejectedError("empty cluster")
    t_s = float(events.t[0])
    t_e = float(events.t[-1])
    mid = 0.5 * (t_s + t_e)
    half = 0.5 * params.window_len
    while True:
        idx = _window_points(events, mid - half, mid + half)
        if idx.size >= params.min_points:
            break
        if mid - half <= t_s and mid + half >= t_e:
            raise ClusterRejectedError(
                f"cluster holds fewer than {params.min_points} events")
        half += 0.5 * params.window_len
    return _fit_subwindow(events, idx, mid, params, cam)
