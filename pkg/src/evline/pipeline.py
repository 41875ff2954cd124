"""End-to-end estimation: event windows -> clusters -> lines -> velocity.

estimate_windows consumes an in-memory event stream plus an angular
velocity source and emits one report per fixed-size window.  Windows
that cannot be estimated (partial tail, no gyro coverage, too few usable
clusters, degenerate system) still produce a report row whose numeric
fields are NaN and whose skip_reason names the cause, so downstream
tables keep one row per window.

estimate_from_files is the same pipeline fed from the plain-text event,
gyro and calibration formats of the fileio module.
"""

from dataclasses import dataclass

import numpy as np

from . import fileio
from .clustering import ClusteringParams, cluster_events, make_window
from .errors import (ClusterRejectedError, DegenerateSystemError,
                     LineFitError, PartialWindowError)
from .geometry import lift_pixels
from .linefit import LineFitParams, extract_boundary_lines
from .refine import refine_velocity
from .solver import (ClusterObservation, KIND_NONE, diagnose_degeneracy,
                     solve_nullspace_robust, stack_rows)

SKIP_PARTIAL_WINDOW = "partial_window"
SKIP_GYRO_GAP = "gyro_gap"
SKIP_TOO_FEW_CLUSTERS = "too_few_clusters"
SKIP_DEGENERATE_SYSTEM = "degenerate_system"

_MIN_USABLE_CLUSTERS = 2


@dataclass
class WindowReport:
    """One row of the pipeline output table."""

    index: int
    t_start: float
    t_end: float
    t_mid: float
    n_events: int
    n_clusters: int          # clusters that yielded usable boundary lines
    n_rows: int
    v_x: float
    v_y: float
    v_z: float
    sigma1: float
    sigma2: float
    sigma3: float
    degenerate: bool
    degeneracy_kind: str
    ill_conditioned: bool
    refined: bool
    skip_reason: str         # empty when the window was estimated


REPORT_COLUMNS = ("window", "t_start", "t_end", "t_mid", "n_events",
                  "n_clusters", "n_rows", "v_x", "v_y", "v_z",
                  "sigma1", "sigma2", "sigma3", "degenerate",
                  "degeneracy_kind", "ill_conditioned", "refined",
                  "skip_reason")


def _skip_report(index, window, reason, n_clusters=0):
    nan = float("nan")
    t0 = float(window.t[0]) if len(window) else nan
    t1 = float(window.t[-1]) if len(window) else nan
    return WindowReport(
        index=index, t_start=t0, t_end=t1,
        t_mid=0.5 * (t0 + t1), n_events=len(window),
        n_clusters=n_clusters, n_rows=0,
        v_x=nan, v_y=nan, v_z=nan,
        sigma1=nan, sigma2=nan, sigma3=nan,
        degenerate=False, degeneracy_kind=KIND_NONE,
        ill_conditioned=False, refined=False, skip_reason=reason)


def _omega_for_window(omega_source, t_mid, span):
    """Angular velocity at the window midpoint, or a skip reason.

    A gyro track must cover t_mid and its bracketing samples must not be
    further apart than the window itself (a wider gap means the track
    holds no information at this window's time scale).
    """
    if isinstance(omega_source, fileio.GyroTrack):
        if not omega_source.covers(t_mid) or \
                omega_source.gap_at(t_mid) > max(span, 1e-12):
            return None, SKIP_GYRO_GAP
        return omega_source.omega_at(t_mid), None
    omega = np.asarray(omega_source, dtype=float)
    if omega.shape != (3,):
        raise ValueError("omega source must be a GyroTrack or a 3-vector")
    return omega, None


def estimate_windows(events, omega_source, cam, clustering=None,
                     line_params=None, refine=False, refine_params=None,
                     sample_size=1000, solver_seed=0):
    """Estimate the velocity direction for every full window of events.

    events must be time sorted.  omega_source is a constant 3-vector or
    a GyroTrack sampled around the event interval.  Returns a list of
    WindowReport, one per window including skipped ones.
    """
    if clustering is None:
        clustering = ClusteringParams()
    if line_params is None:
        line_params = LineFitParams()
    reports = []
    start = 0
    index = 0
    while start < len(events):
        try:
            window = make_window(events, clustering.window_size, start)
        except PartialWindowError as exc:
            if len(exc.window):
                reports.append(_skip_report(index, exc.window,
                                            SKIP_PARTIAL_WINDOW))
            break
        reports.append(_estimate_one(index, window, omega_source, cam,
                                     clustering, line_params, refine,
                                     refine_params, sample_size,
                                     solver_seed))
        start += clustering.window_size
        index += 1
    return reports


def _estimate_one(index, window, omega_source, cam, clustering,
                  line_params, refine, refine_params, sample_size,
                  solver_seed):
    t0, t1 = float(window.t[0]), float(window.t[-1])
    t_mid = 0.5 * (t0 + t1)
    omega, skip = _omega_for_window(omega_source, t_mid, t1 - t0)
    if skip is not None:
        return _skip_report(index, window, skip)

    clusters = cluster_events(window, clustering, width=cam.width)
    observations = []
    for cluster in clusters:
        try:
            geom = extract_boundary_lines(cluster, line_params, cam)
        except (ClusterRejectedError, LineFitError):
            continue
        observations.append(ClusterObservation(
            geom=geom,
            times=cluster.events.t,
            bearings=lift_pixels(cluster.events.pixels(), cam),
        ))
    if len(observations) < _MIN_USABLE_CLUSTERS:
        return _skip_report(index, window, SKIP_TOO_FEW_CLUSTERS,
                            n_clusters=len(observations))

    rng = np.random.default_rng(
        np.random.SeedSequence(solver_seed, spawn_key=(index,)))
    try:
        system = stack_rows(observations, omega)
        est = solve_nullspace_robust(system, sample_size=sample_size,
                                     rng=rng)
    except DegenerateSystemError:
        return _skip_report(index, window, SKIP_DEGENERATE_SYSTEM,
                            n_clusters=len(observations))

    kind = est.degeneracy_kind
    if est.degenerate:
        kind = diagnose_degeneracy(est, observations, omega)
    v = est.v_dir
    refined = False
    if refine and not est.degenerate:
        result = refine_velocity(observations, omega, v,
                                 params=refine_params, cam=cam)
        v = result.v_refined
        refined = True
    s = est.singular_values
    return WindowReport(
        index=index, t_start=t0, t_end=t1, t_mid=t_mid,
        n_events=len(window), n_clusters=len(observations),
        n_rows=est.n_rows,
        v_x=float(v[0]), v_y=float(v[1]), v_z=float(v[2]),
        sigma1=float(s[0]), sigma2=float(s[1]), sigma3=float(s[2]),
        degenerate=est.degenerate, degeneracy_kind=kind,
        ill_conditioned=est.ill_conditioned, refined=refined,
        skip_reason="")


def estimate_from_files(events_path, gyro_path, calib_path, **kwargs):
    """Run estimate_windows on the plain-text file formats.

    Raises ParseError (with file and line number) on malformed inputs.
    Extra keyword arguments are forwarded to estimate_windows.
    """
    events = fileio.read_events(events_path)
    gyro = fileio.read_gyro(gyro_path)
    cam = fileio.read_calibration(calib_path)
    return estimate_windows(events, gyro, cam, **kwargs)


def reports_to_rows(reports):
    rows = []
    for r in reports:
        rows.append([r.index, r.t_start, r.t_end, r.t_mid, r.n_events,
                     r.n_clusters, r.n_rows, r.v_x, r.v_y, r.v_z,
                     r.sigma1, r.sigma2, r.sigma3, int(r.degenerate),
                     r.degeneracy_kind, int(r.ill_conditioned),
                     int(r.refined), r.skip_reason])
    return rows


def write_reports_csv(path, reports):
    fileio.write_csv(path, list(REPORT_COLUMNS), reports_to_rows(reports))


__all__ = [
    "SKIP_PARTIAL_WINDOW",
    "SKIP_GYRO_GAP",
    "SKIP_TOO_FEW_CLUSTERS",
    "SKIP_DEGENERATE_SYSTEM",
    "WindowReport",
    "REPORT_COLUMNS",
    "estimate_windows",
    "estimate_from_files",
    "reports_to_rows",
    "write_reports_csv",
]
