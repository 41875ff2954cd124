"""Region-growing plane segmentation of event windows.

Events from one moving straight line trace an approximately planar
surface in the scaled space-time volume [x, y, t/c].  Clusters are grown
from the earliest unassigned event: ball neighbors join while they stay
within plane_dist_thresh of the cluster's total-least-squares plane and
their local surface normal agrees with the plane normal.  Events that
never join a large-enough cluster are treated as noise and dropped.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import PartialWindowError
from .events import EventArray

REFIT_EVERY = 50          # plane refit cadence during growth, in admissions
NORMAL_NEIGHBORS = 20     # k-NN count for local normal estimation
MAX_FINALIZE_ROUNDS = 20  # trim/absorb alternations when finalizing a cluster


@dataclass
class ClusteringParams:
    """Knobs for windowing and region growing.

    c converts seconds to pixel-equivalent units on the time axis; None
    picks span/width per window so the window duration maps to a span
    comparable to the sensor width.  All distance-like fields are in
    pixels (of the scaled space-time metric).
    """

    window_size: int = 30000
    c: float | None = None
    neighbor_radius: float = 5.0
    plane_dist_thresh: float = 2.0
    normal_angle_thresh: float = 0.2
    min_cluster_size: int = 200
    split_by_polarity: bool = False

    def __post_init__(self):
        positive = (self.window_size, self.neighbor_radius,
                    self.plane_dist_thresh, self.normal_angle_thresh,
                    self.min_cluster_size)
        if any(p <= 0 for p in positive):
            raise ValueError("clustering parameters must be positive")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive")
        if self.window_size < self.min_cluster_size:
            raise ValueError("window_size must be >= min_cluster_size")


@dataclass
class EventCluster:
    """Members of one space-time plane, sorted by timestamp."""

    events: EventArray
    indices: np.ndarray      # positions within the source window
    cluster_id: int
    polarity: int | None = None

    def __len__(self):
        return len(self.events)


def make_window(events, n, start=0):
    """Slice the next n consecutive events starting at index start.

    Raises PartialWindowError carrying the remaining partial window when
    fewer than n events are left; the caller decides whether to process
    or skip it.
    """
    if n <= 0:
        raise ValueError("window size must be positive")
    remaining = len(events) - start
    if remaining < n:
        raise PartialWindowError(events[start:len(events)], n)
    return events[start:start + n]


def cluster_geometry_bounds(cluster):
    """(t_s, t_e): first and last member timestamps of a cluster."""
    if len(cluster) == 0:
        raise ValueError("empty cluster has no time bounds")
    return float(cluster.events.t[0]), float(cluster.events.t[-1])


def _fit_plane(points):
    """Total-least-squares plane; returns (unit normal, offset)."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    return normal, float(normal @ centroid)


def _local_normals(points, tree):
    """Per-point unit normals from k-NN PCA, batched."""
    k = min(NORMAL_NEIGHBORS, len(points))
    _, idx = tree.query(points, k=k)
    if k == 1:
        idx = idx[:, None]
    neigh = points[idx]                       # (N, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0]


def _grow_cluster(seed, points, tree, normals, blocked, params):
    """Region-grow one cluster from a seed.

    blocked marks points unavailable as members (already clustered).
    Returns (indices, True) on success, where the indices satisfy the
    RMS plane-distance postcondition, or (attempted_indices, False)
    when the attempt ends below min_cluster_size; the caller uses the
    failed membership to avoid reseeding the same patch.
    """
    thresh = params.plane_dist_thresh
    cos_gate = np.cos(params.normal_angle_thresh)
    n_pts = len(points)

    member = np.zeros(n_pts, dtype=bool)
    member[seed] = True
    members = [seed]
    normal = normals[seed]
    offset = float(normal @ points[seed])
    since_refit = 0

    frontier = np.array([seed])
    while frontier.size:
        balls = tree.query_ball_point(points[frontier],
                                      params.neighbor_radius)
        cand = np.unique(np.concatenate(
            [np.asarray(b, dtype=np.int64) for b in balls]))
        cand = cand[~blocked[cand] & ~member[cand]]
        wave_added = []
        while cand.size:
            dist = np.abs(points[cand] @ normal - offset)
            angle_ok = np.abs(normals[cand] @ normal) >= cos_gate
            ok = cand[(dist <= thresh) & angle_ok]
            if ok.size == 0:
                break
            take = ok[:REFIT_EVERY - (since_refit % REFIT_EVERY)]
            member[take] = True
            members.extend(take.tolist())
            wave_added.append(take)
            since_refit += take.size
            cand = cand[~member[cand]]
            if since_refit % REFIT_EVERY == 0 and len(members) >= 3:
                normal, offset = _fit_plane(points[np.asarray(members)])
        frontier = np.concatenate(wave_added) if wave_added \
            else np.empty(0, dtype=np.int64)

    idx = np.asarray(sorted(members), dtype=np.int64)
    attempt = idx
    if idx.size < params.min_cluster_size:
        return attempt, False
    # Finalize: alternate trimming to the RMS postcondition with an
    # absorption pass that regrows from the frozen fitted plane, so
    # points rejected earlier against interim fits get a second look.
    # Every absorbed point lies within thresh of the frozen plane and
    # the pre-absorption RMS is <= thresh, so the RMS postcondition
    # survives the terminal refit on every exit path.
    for _ in range(MAX_FINALIZE_ROUNDS):
        while True:
            normal, offset = _fit_plane(points[idx])
            dist = np.abs(points[idx] @ normal - offset)
            if np.sqrt(np.mean(dist ** 2)) <= thresh:
                break
            keep = dist <= thresh
            if keep.sum() < params.min_cluster_size:
                return attempt, False
            idx = idx[keep]
        member = np.zeros(n_pts, dtype=bool)
        member[idx] = True
        frontier = idx
        while frontier.size:
            balls = tree.query_ball_point(points[frontier],
                                          params.neighbor_radius)
            cand = np.unique(np.concatenate(
                [np.asarray(b, dtype=np.int64) for b in balls]))
            cand = cand[~blocked[cand] & ~member[cand]]
            if cand.size == 0:
                break
            dist = np.abs(points[cand] @ normal - offset)
            angle_ok = np.abs(normals[cand] @ normal) >= cos_gate
            ok = cand[(dist <= thresh) & angle_ok]
            member[ok] = True
            frontier = ok
        grown = np.flatnonzero(member)
        if grown.size == idx.size:
            break
        idx = grown
    return idx, True


def _cluster_subset(window, subset, params, width):
    """Run region growing on one polarity subset; returns index lists."""
    if subset.size == 0:
        return []
    t = window.t[subset]
    x = window.x[subset]
    y = window.y[subset]
    span = float(t[-1] - t[0]) if subset.size > 1 else 0.0
    if params.c is not None:
        c = params.c
    else:
        if width is None:
            width = max(float(np.ptp(x)), 1.0)
        c = span / float(width) if span > 0 else 1.0
    points = np.column_stack([x, y, t / c])

    tree = cKDTree(points)
    normals = _local_normals(points, tree)
    blocked = np.zeros(subset.size, dtype=bool)
    dead_seed = np.zeros(subset.size, dtype=bool)

    clusters = []
    for seed in range(subset.size):
        if blocked[seed] or dead_seed[seed]:
            continue
        idx, accepted = _grow_cluster(seed, points, tree, normals, blocked,
                                      params)
        if not accepted:
            # a failed patch would regrow near-identically from any of
            # its own points, so none of them may seed again; they stay
            # available as members of later clusters
            dead_seed[idx] = True
            continue
        blocked[idx] = True
        clusters.append(subset[idx])
    return clusters


def cluster_events(window, params=None, width=None):
    """Segment a window of events into per-line space-time plane clusters.

    Events are processed in timestamp order regardless of input order,
    so shuffled inputs yield the same memberships.  Each returned
    cluster holds >= min_cluster_size events sorted by time and fits its
    plane with RMS distance <= plane_dist_thresh; leftover events are
    dropped as noise.  width (px) feeds the default time scale when
    params.c is None.
    """
    if params is None:
        params = ClusteringParams()
    if len(window) == 0:
        return []

    order = np.lexsort((window.p, window.y, window.x, window.t))
    canonical = window[order]

    if params.split_by_polarity:
        groups = [np.flatnonzero(canonical.p == pol) for pol in (1, -1)]
    else:
        groups = [np.arange(len(canonical))]

    clusters = []
    for subset in groups:
        for idx in _cluster_subset(canonical, subset, params, width):
            # members sorted by timestamp, ties broken by input order
            original = np.sort(order[idx])
            member_order = np.argsort(window.t[original], kind="stable")
            original = original[member_order]
            pol = int(canonical.p[idx[0]]) if params.split_by_polarity \
                else None
            clusters.append(EventCluster(
                events=window[original],
                indices=original,
                cluster_id=len(clusters),
                polarity=pol,
            ))
    return clusters


__all__ = [
    "ClusteringParams",
    "EventCluster",
    "make_window",
    "cluster_events",
    "cluster_geometry_bounds",
]
