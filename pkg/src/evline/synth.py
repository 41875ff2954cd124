"""Ground-truth synthetic scenes, motions and event streams.

The generator produces events that satisfy the event-line constraint
exactly when noise-free, which makes it the oracle for the geometry,
constraint and solver layers: any bug in the shared conventions shows up
as a nonzero residual on generated data.

Motion model: the camera starts at the identity pose and moves with a
constant body-frame twist (w, v), so the world-from-camera pose at time
t is (exp(skew(w) t), J(w t) v t) and relative poses between two times
depend only on the time difference.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .constraint import ClusterGeometry
from .events import EventArray
from .geometry import (
    CameraModel,
    lift_line,
    pixel_line_through,
    project,
    so3_exp,
    translation_from_velocity,
)

# DAVIS346-like sensor with round intrinsics; zero distortion.
DEFAULT_CAMERA = CameraModel(fx=200.0, fy=200.0, cx=173.0, cy=130.0,
                             width=346, height=260)

# Sampling volume for random 3D line endpoints (meters, camera at origin
# looking down +z at t=0).
DEFAULT_VOLUME = ((-2.0, 2.0), (-2.0, 2.0), (3.0, 6.0))

MIN_SEGMENT_LENGTH = 0.1


@dataclass
class SceneSpec:
    """3D line segments as an (M, 2, 3) endpoint array, meters."""

    segments: np.ndarray
    volume: tuple = DEFAULT_VOLUME

    def __post_init__(self):
        self.segments = np.asarray(self.segments, dtype=float)
        if self.segments.ndim != 3 or self.segments.shape[1:] != (2, 3):
            raise ValueError("segments must have shape (M, 2, 3)")
        lengths = np.linalg.norm(
            self.segments[:, 1] - self.segments[:, 0], axis=-1)
        if np.any(lengths <= 0):
            raise ValueError("segments must have positive length")

    @property
    def n_lines(self):
        return self.segments.shape[0]


@dataclass
class MotionSpec:
    """Constant body twist over the interval [0, duration]."""

    omega: np.ndarray
    v: np.ndarray
    duration: float = 0.5

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass
class NoiseSpec:
    """Perturbation levels for the generator (all standard deviations)."""

    event_sigma: float = 0.0        # px, per axis on event pixels
    line_endpoint_sigma: float = 0.0  # px, per axis on projected endpoints
    omega_sigma: float = 0.0        # rad/s, per axis on the known omega
    seed: int | None = None

    def __post_init__(self):
        if min(self.event_sigma, self.line_endpoint_sigma,
               self.omega_sigma) < 0:
            raise ValueError("noise levels must be non-negative")


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def random_scene(n_lines, volume=DEFAULT_VOLUME, rng=None):
    """Random 3D segments with endpoints uniform in the volume.

    Segments shorter than MIN_SEGMENT_LENGTH are resampled.
    """
    if n_lines < 1:
        raise ValueError("need at least one line")
    rng = _as_rng(rng)
    lo = np.array([volume[0][0], volume[1][0], volume[2][0]])
    hi = np.array([volume[0][1], volume[1][1], volume[2][1]])
    segments = np.empty((n_lines, 2, 3))
    filled = 0
    while filled < n_lines:
        cand = rng.uniform(lo, hi, size=(n_lines - filled, 2, 3))
        ok = np.linalg.norm(cand[:, 1] - cand[:, 0], axis=-1) >= MIN_SEGMENT_LENGTH
        kept = cand[ok]
        segments[filled:filled + len(kept)] = kept
        filled += len(kept)
    return SceneSpec(segments=segments, volume=volume)


def camera_pose_at(motion, t):
    """World-from-camera pose (R, t) at time t in [0, duration]."""
    if t < 0 or t > motion.duration:
        raise ValueError(f"time {t} outside motion interval [0, {motion.duration}]")
    return so3_exp(motion.omega, t), translation_from_velocity(
        motion.omega, motion.v, t)


def _world_to_camera(points_w, R_wc, t_wc):
    return (points_w - t_wc) @ R_wc


def _world_points_to_camera(points_w, omega, v, ts):
    """Camera-frame coordinates of world points at per-point times.

    Vectorized twin of camera_pose_at + _world_to_camera: all poses share
    the rotation axis, so only the angle varies per point.
    """
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float)
    ts = np.asarray(ts, dtype=float)
    n = np.linalg.norm(omega)
    a = omega / n if n > 0 else np.zeros(3)
    theta = n * ts
    c, s = np.cos(theta), np.sin(theta)
    small = np.abs(theta) < 1e-8
    safe = np.where(small, 1.0, theta)
    A = np.where(small, 1.0 - theta * theta / 6.0, s / safe)
    C = np.where(small, 0.5 * theta, (1.0 - c) / safe)
    # t_wc = J(w t) v t expanded along (v, a, a x v)
    axv = np.cross(a, v)
    t_wc = ((A * ts)[:, None] * v[None, :]
            + ((1.0 - A) * (a @ v) * ts)[:, None] * a[None, :]
            + (C * ts)[:, None] * axv[None, :])
    y = points_w - t_wc
    ay = y @ a
    axy = np.cross(np.broadcast_to(a, y.shape), y)
    # R(w t)^T y = cos y - sin (a x y) + (1 - cos) a (a . y)
    return (c[:, None] * y - s[:, None] * axy
            + ((1.0 - c) * ay)[:, None] * a[None, :])


def generate_events(scene, motion, cam=DEFAULT_CAMERA, n_events=5000,
                    noise=None, rng=None, max_batches=200):
    """Sample labeled events from the scene under the motion.

    Each event picks a random point on its line and a random time in
    [0, duration]; the point is projected with the camera pose at that
    time.  Samples behind the camera or outside the sensor are redrawn.
    Pixel noise (if any) is added after the visibility check.

    Returns (events, labels) with events sorted by timestamp and labels
    the per-event line indices.  A line that never projects into view
    produces a warning and zero events.
    """
    noise = noise or NoiseSpec()
    rng = _as_rng(rng)
    if n_events == 0:
        return EventArray.empty(), np.empty(0, dtype=int)
    counts = np.full(scene.n_lines, n_events // scene.n_lines, dtype=int)
    counts[:n_events % scene.n_lines] += 1

    all_t, all_px, all_label = [], [], []
    for j in range(scene.n_lines):
        a, b = scene.segments[j, 0], scene.segments[j, 1]
        need = counts[j]
        got_t, got_px = [], []
        for _ in range(max_batches):
            if need <= 0:
                break
            m = max(need * 2, 64)
            ts = rng.uniform(0.0, motion.duration, size=m)
            alphas = rng.uniform(0.0, 1.0, size=m)
            pts_w = a[None, :] + alphas[:, None] * (b - a)[None, :]
            pts_c = _world_points_to_camera(pts_w, motion.omega, motion.v, ts)
            visible = pts_c[:, 2] > 1e-6
            if not np.any(visible):
                continue
            px = project(pts_c[visible], cam)
            in_view = ((px[:, 0] >= 0) & (px[:, 0] < cam.width)
                       & (px[:, 1] >= 0) & (px[:, 1] < cam.height))
            px = px[in_view][:need]
            tv = ts[visible][in_view][:need]
            got_px.append(px)
            got_t.append(tv)
            need -= len(px)
        if need > 0:
            warnings.warn(
                f"line {j} produced only {counts[j] - need} of {counts[j]} "
                "events (rarely or never visible)")
        if got_t:
            all_t.append(np.concatenate(got_t))
            all_px.append(np.concatenate(got_px))
            all_label.append(np.full(len(all_t[-1]), j, dtype=int))

    if not all_t:
        return EventArray.empty(), np.empty(0, dtype=int)
    t = np.concatenate(all_t)
    px = np.concatenate(all_px)
    labels = np.concatenate(all_label)
    if noise.event_sigma > 0:
        px = px + rng.normal(0.0, noise.event_sigma, size=px.shape)
    order = np.argsort(t, kind="stable")
    events = EventArray(t[order], px[order, 0], px[order, 1],
                        np.ones(len(t), dtype=np.int8))
    return events, labels[order]


def project_segment_line(segment, motion, cam, t):
    """Noise-free pixel endpoints of a segment at time t, or None if behind."""
    R_wc, t_wc = camera_pose_at(motion, t)
    ends_c = _world_to_camera(np.asarray(segment, dtype=float), R_wc, t_wc)
    if np.any(ends_c[:, 2] <= 1e-6):
        return None
    return project(ends_c, cam)


def ground_truth_boundary_lines(segment, motion, cam, t_s, t_e,
                                noise=None, rng=None):
    """Cluster geometry from the true projected lines at t_s and t_e.

    The segment endpoints are projected at both times, perturbed by the
    endpoint noise (per axis), joined into pixel lines and lifted.  When
    t_s == t_e the same line is built twice, which is how a center line
    for the three-line baseline is generated.
    """
    noise = noise or NoiseSpec()
    rng = _as_rng(rng)
    lines = []
    for t in (t_s, t_e):
        ends_px = project_segment_line(segment, motion, cam, t)
        if ends_px is None:
            raise ValueError(f"segment not in front of the camera at t={t}")
        if noise.line_endpoint_sigma > 0:
            ends_px = ends_px + rng.normal(
                0.0, noise.line_endpoint_sigma, size=ends_px.shape)
        if np.linalg.norm(ends_px[1] - ends_px[0]) < 1.0:
            raise ValueError(
                f"projected segment collapses below 1 px at t={t}")
        lines.append(lift_line(pixel_line_through(ends_px[0], ends_px[1]), cam))
    if t_s == t_e:
        # degenerate request used for center lines: return the pair anyway
        return ClusterGeometry(l1=lines[0], l3=lines[1],
                               t_s=t_s, t_e=t_e + 1e-12)
    return ClusterGeometry(l1=lines[0], l3=lines[1], t_s=t_s, t_e=t_e)


def center_line(segment, motion, cam, t_mid, noise=None, rng=None):
    """Noisy lifted line of the segment at a single time (for the baseline)."""
    noise = noise or NoiseSpec()
    rng = _as_rng(rng)
    ends_px = project_segment_line(segment, motion, cam, t_mid)
    if ends_px is None:
        raise ValueError(f"segment not in front of the camera at t={t_mid}")
    if noise.line_endpoint_sigma > 0:
        ends_px = ends_px + rng.normal(
            0.0, noise.line_endpoint_sigma, size=ends_px.shape)
    if np.linalg.norm(ends_px[1] - ends_px[0]) < 1.0:
        raise ValueError(f"projected segment collapses below 1 px at t={t_mid}")
    return lift_line(pixel_line_through(ends_px[0], ends_px[1]), cam)


def export_synth(out_dir, n_lines=5, n_events=30000, duration=0.5,
                 omega=(0.0, 0.0, 2.0), v=(1.0, 2.0, 0.0),
                 event_sigma=0.0, seed=0, gyro_rate=200.0,
                 cam=DEFAULT_CAMERA):
    """Generate a scenario and write it in the plain-text file formats.

    Pixel coordinates are rounded to integers before writing (the event
    format stores integer pixels), and the returned dict carries the
    rounded in-memory events, the gyro track and the camera alongside
    the file paths, so callers can verify that re-reading the files
    reproduces the in-memory pipeline bit for bit.
    """
    import os

    from .fileio import (GyroTrack, write_calibration, write_events,
                         write_gyro)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    scene = random_scene(n_lines, rng=rng)
    motion = MotionSpec(omega=np.asarray(omega, dtype=float),
                        v=np.asarray(v, dtype=float), duration=duration)
    events, labels = generate_events(
        scene, motion, cam=cam, n_events=n_events,
        noise=NoiseSpec(event_sigma=event_sigma), rng=rng)
    rounded = EventArray(t=events.t, x=np.rint(events.x),
                         y=np.rint(events.y), p=events.p)
    n_samples = max(2, int(round(gyro_rate * duration)) + 1)
    gyro = GyroTrack(t=np.linspace(0.0, duration, n_samples),
                     omega=np.tile(motion.omega, (n_samples, 1)))

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "events": os.path.join(out_dir, "events.txt"),
        "gyro": os.path.join(out_dir, "gyro.txt"),
        "calib": os.path.join(out_dir, "calib.yaml"),
    }
    write_events(paths["events"], rounded)
    write_gyro(paths["gyro"], gyro)
    write_calibration(paths["calib"], cam)
    return {
        "paths": paths,
        "events": rounded,
        "gyro": gyro,
        "cam": cam,
        "scene": scene,
        "motion": motion,
        "labels": labels,
    }


__all__ = [
    "DEFAULT_CAMERA",
    "DEFAULT_VOLUME",
    "SceneSpec",
    "MotionSpec",
    "NoiseSpec",
    "random_scene",
    "camera_pose_at",
    "generate_events",
    "project_segment_line",
    "ground_truth_boundary_lines",
    "center_line",
    "export_synth",
]
