"""Shared scenario builders for the test suite.

The clustering oracles use hand-built scenes whose event sheets are
planar to well under the distance threshold: event sheets of generic
projectively swept lines are measurably curved (several pixels over a
half-second window at desk-scale motion), so scenes for exact-count
cluster checks keep the motion slow and the lines fronto-parallel.
"""

import numpy as np

from evline import synth
from evline.clustering import EventCluster
from evline.events import EventArray
from evline.geometry import lift_pixels
from evline.solver import ClusterObservation

CAM = synth.DEFAULT_CAMERA

SLAB_MOTION = synth.MotionSpec(omega=np.array([0.0, 0.0, 0.15]),
                               v=np.array([0.5, 1.0, 0.0]),
                               duration=0.2)
SLAB_EVENTS = 40000


def five_slab_scene(rng):
    """Five near-vertical, non-crossing lines spread across the frame.

    Each line projects near a fixed image column; depths, columns and a
    small in-plane tilt are jittered per trial.  Under SLAB_MOTION the
    resulting event sheets stay planar to < 2 px.
    """
    segs = []
    for i in range(5):
        xpix = 45.0 + 65.0 * i + rng.uniform(-10.0, 10.0)
        z = rng.uniform(2.8, 3.4)
        tilt = rng.uniform(-0.04, 0.04)
        X = (xpix - CAM.cx) * z / CAM.fx
        Y = 1.3 * (260.0 - CAM.cy) * z / CAM.fy
        segs.append([[X - tilt, -Y, z], [X + tilt, Y, z]])
    return synth.SceneSpec(segments=np.array(segs))


def crossing_scene():
    """Two lines whose projections cross inside the frame."""
    z = 3.0
    x0 = (100.0 - CAM.cx) * z / CAM.fx
    x1 = (250.0 - CAM.cx) * z / CAM.fx
    y = 1.3 * (260.0 - CAM.cy) * z / CAM.fy
    segs = np.array([
        [[x0, -y, z], [x0 + 0.1, y, z]],       # near-vertical
        [[x1, -y, z], [x1 - 2.2, y, z]],       # strongly tilted, crosses
    ])
    return synth.SceneSpec(segments=segs)


def grid_cluster(segment, motion, cam=CAM, n_times=501, pts_per_time=5,
                 alpha_lo=0.15, alpha_hi=0.85):
    """Synthetic cluster with symmetric, grid-sampled event times.

    Sampling times on a regular grid makes the mean event time of any
    centered sub-window equal to its midpoint, which removes the
    first-order anchor error that random (Poisson-like) event times
    leave behind; boundary-line fits on such clusters match the true
    lines at the anchor times to ~1e-8 rad.
    """
    alphas = np.linspace(alpha_lo, alpha_hi, pts_per_time)
    times = np.linspace(0.0, motion.duration, n_times)
    ts, xs, ys = [], [], []
    for t in times:
        ends = synth.project_segment_line(segment, motion, cam, t)
        if ends is None:
            raise ValueError(f"segment leaves the frame at t={t}")
        pts = ends[0] + alphas[:, None] * (ends[1] - ends[0])
        ts.extend([t] * len(alphas))
        xs.extend(pts[:, 0])
        ys.extend(pts[:, 1])
    n = len(ts)
    events = EventArray(t=np.asarray(ts), x=np.asarray(xs),
                        y=np.asarray(ys), p=np.ones(n, dtype=np.int8))
    return EventCluster(events=events, indices=np.arange(n),
                        cluster_id=0)


def gt_observations(scene, motion, events, labels, cam=CAM,
                    with_center=False, line_sigma=0.0, rng=None,
                    min_events=10):
    """Solver observations with ground-truth (optionally noised) lines.

    Groups the events by generating line, anchors each cluster at its
    first and last event time and attaches the true projected lines
    there, bypassing clustering and line fitting entirely.
    """
    noise = synth.NoiseSpec(line_endpoint_sigma=line_sigma)
    obs = []
    for lab in range(len(scene.segments)):
        mask = labels == lab
        if np.count_nonzero(mask) < min_events:
            continue
        t = events.t[mask]
        if t[-1] - t[0] <= 1e-9:
            continue
        seg = scene.segments[lab]
        geom = synth.ground_truth_boundary_lines(
            seg, motion, cam, t[0], t[-1], noise=noise, rng=rng)
        bearings = lift_pixels(events.pixels()[mask], cam)
        center = center_time = None
        if with_center:
            center_time = 0.5 * (t[0] + t[-1])
            center = synth.center_line(seg, motion, cam, center_time,
                                       noise=noise, rng=rng)
        obs.append(ClusterObservation(geom=geom, times=t, bearings=bearings,
                                      center_line=center,
                                      center_time=center_time))
    return obs


def purity(cluster, labels):
    """Fraction of a cluster's members sharing its majority label."""
    member_labels = labels[cluster.indices]
    counts = np.bincount(member_labels)
    return counts.max() / len(member_labels)


def correct_fraction(clusters, labels, n_total):
    """Fraction of all window events assigned to the cluster whose
    majority label matches their own label."""
    n_correct = 0
    for cluster in clusters:
        member_labels = labels[cluster.indices]
        majority = np.bincount(member_labels).argmax()
        n_correct += int(np.count_nonzero(member_labels == majority))
    return n_correct / n_total
