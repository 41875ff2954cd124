"""Synthetic sweep harness: run trials over a disturbance grid, score them.

Each sweep varies one scenario knob (event noise, line-endpoint noise,
gyro noise, speed, interval length or line count) while the rest stay at
the base scenario: omega = [0, 0, 2] rad/s, v = [1, 2, 0] m/s, 5 random
lines, a 0.5 s window and 5000 events.  Noise sweeps isolate their own
disturbance (the other noise sources are held at zero); the speed,
interval and line-count sweeps keep the base 2 px event and line noise
so the trend against geometry is measured under realistic conditions.

Per trial a fresh random scene is generated, events are drawn, the
ground-truth boundary/center lines are perturbed, and each requested
method (CELC, CELC+opt, CE3LC) is scored by the direction error of its
velocity estimate.  Trials are seeded per (grid point, trial) so results
are reproducible regardless of worker count or method list.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import synth
from .errors import DegenerateSystemError
from .fileio import read_csv, write_csv
from .geometry import lift_pixels
from .refine import refine_velocity
from .solver import (ClusterObservation, KIND_NONE, diagnose_degeneracy,
                     solve_nullspace_robust, stack_ce3lc_rows, stack_rows)

METHOD_CELC = "CELC"
METHOD_CELC_OPT = "CELC+opt"
METHOD_CE3LC = "CE3LC"

# unit direction of [1, 2, 0] rounded to three decimals, used when the
# swept variable is the speed itself
SPEED_DIRECTION = np.array([0.447, 0.894, 0.0])

VARIABLES = ("event_noise", "line_noise", "omega_noise",
             "speed", "interval", "n_lines")

DEFAULT_GRIDS = {
    "event_noise": np.linspace(0.0, 5.0, 11),
    "line_noise": np.linspace(0.0, 5.0, 11),
    "omega_noise": np.linspace(0.0, 1.0, 11),
    "speed": np.linspace(0.0, 10.0, 11),
    "interval": np.linspace(0.2, 2.2, 11),
    "n_lines": np.arange(2, 11, dtype=float),
}

# noise sweeps isolate the swept disturbance; geometry sweeps keep the
# base noise so their trend is measured under realistic conditions
_NOISE_VARIABLES = ("event_noise", "line_noise", "omega_noise")

_MIN_CLUSTER_EVENTS = 10
_MIN_SPAN = 1e-9


def metrics(v_gt, v_est):
    """Scaled error and direction angle between truth and an estimate.

    The estimate's sign ambiguity is resolved toward the ground truth
    (ties keep the estimate as is); eps is the norm of the difference of
    the unit vectors and phi the angle between them, so eps = 2 sin(phi/2)
    holds by construction.  Raises ValueError on zero ground truth.
    """
    v_gt = np.asarray(v_gt, dtype=float)
    v_est = np.asarray(v_est, dtype=float)
    n_gt = np.linalg.norm(v_gt)
    n_est = np.linalg.norm(v_est)
    if n_gt == 0.0:
        raise ValueError("ground-truth velocity is zero; direction undefined")
    if n_est == 0.0:
        raise ValueError("estimated velocity is zero; direction undefined")
    u_gt = v_gt / n_gt
    u_est = v_est / n_est
    dot = float(u_gt @ u_est)
    s = 1.0 if dot >= 0.0 else -1.0
    eps = float(np.linalg.norm(u_gt - s * u_est))
    # the chord form of the angle is exact in the identity eps =
    # 2 sin(phi/2) and keeps full precision near zero, where arccos
    # loses ~1e-8; both agree to the arccos noise floor
    phi = float(2.0 * np.arcsin(np.clip(0.5 * eps, 0.0, 1.0)))
    assert abs(phi - np.arccos(np.clip(s * dot, -1.0, 1.0))) <= 1e-7
    return eps, phi


@dataclass
class TrialRecord:
    """Outcome of one method on one trial of one grid point."""

    variable: str
    value: float
    trial: int
    method: str
    eps: float
    phi: float
    degenerate: bool
    degeneracy_kind: str
    seed: int
    wall_time: float


@dataclass
class PointSummary:
    """Aggregate of the valid trials of one method at one grid point."""

    variable: str
    value: float
    method: str
    n_valid: int
    n_degenerate: int
    eps_mean: float
    eps_std: float
    phi_mean: float
    phi_std: float


@dataclass
class SweepConfig:
    """One sweep: the varied knob, its grid and the base scenario."""

    variable: str
    grid: np.ndarray | None = None
    trials: int = 500
    seed: int = 0
    n_events: int = 5000
    omega: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 2.0]))
    v: np.ndarray = field(default_factory=lambda: np.array([1.0, 2.0, 0.0]))
    n_lines: int = 5
    duration: float = 0.5
    event_sigma: float = 2.0
    line_sigma: float = 2.0
    omega_sigma: float = 0.0
    refine: bool = True
    ce3lc: bool = True
    sample_size: int | None = 1000
    workers: int = 1

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ValueError(
                f"unknown sweep variable {self.variable!r}; "
                f"choose from {', '.join(VARIABLES)}")
        if self.grid is None:
            self.grid = DEFAULT_GRIDS[self.variable].copy()
        self.grid = np.asarray(self.grid, dtype=float)
        if self.trials < 1:
            raise ValueError("trials must be positive")
        self.omega = np.asarray(self.omega, dtype=float)
        self.v = np.asarray(self.v, dtype=float)


def _scenario_at(cfg, value):
    """Scenario knobs (omega, v, n_lines, duration, noise sigmas) at a
    grid value of the swept variable."""
    omega, v = cfg.omega, cfg.v
    n_lines, duration = cfg.n_lines, cfg.duration
    if cfg.variable in _NOISE_VARIABLES:
        ev_sig = ln_sig = om_sig = 0.0
        if cfg.variable == "event_noise":
            ev_sig = value
        elif cfg.variable == "line_noise":
            ln_sig = value
        else:
            om_sig = value
    else:
        ev_sig, ln_sig, om_sig = (cfg.event_sigma, cfg.line_sigma,
                                  cfg.omega_sigma)
        if cfg.variable == "speed":
            v = value * SPEED_DIRECTION
        elif cfg.variable == "interval":
            duration = value
        else:
            n_lines = int(round(value))
    return omega, v, n_lines, duration, ev_sig, ln_sig, om_sig


def _build_observations(scene, motion, cam, events, labels,
                        line_sigma, rng, want_center):
    """Per-line observations with noisy ground-truth boundary lines."""
    noise = synth.NoiseSpec(line_endpoint_sigma=line_sigma)
    observations = []
    for j in range(scene.segments.shape[0]):
        mask = labels == j
        if np.count_nonzero(mask) < _MIN_CLUSTER_EVENTS:
            continue
        t = events.t[mask]
        t_s, t_e = float(t[0]), float(t[-1])
        if t_e - t_s < _MIN_SPAN:
            continue
        try:
            geom = synth.ground_truth_boundary_lines(
                scene.segments[j], motion, cam, t_s, t_e,
                noise=noise, rng=rng)
            center = None
            if want_center:
                center = synth.center_line(
                    scene.segments[j], motion, cam, 0.5 * (t_s + t_e),
                    noise=noise, rng=rng)
        except ValueError:
            continue
        observations.append(ClusterObservation(
            geom=geom,
            times=t,
            bearings=lift_pixels(events.pixels()[mask], cam),
            center_line=center,
            center_time=0.5 * (t_s + t_e),
        ))
    return observations


def _nan_record(cfg, value, trial, method, kind, wall):
    return TrialRecord(
        variable=cfg.variable, value=float(value), trial=trial,
        method=method, eps=float("nan"), phi=float("nan"),
        degenerate=True, degeneracy_kind=kind, seed=cfg.seed,
        wall_time=wall)


def _score(cfg, value, trial, method, v_gt, v_dir, wall):
    try:
        eps, phi = metrics(v_gt, v_dir)
    except ValueError:
        return _nan_record(cfg, value, trial, method, "zero_velocity", wall)
    return TrialRecord(
        variable=cfg.variable, value=float(value), trial=trial,
        method=method, eps=eps, phi=phi, degenerate=False,
        degeneracy_kind=KIND_NONE, seed=cfg.seed, wall_time=wall)


def run_trial(cfg, point_idx, trial_idx):
    """All method records for one (grid point, trial) cell."""
    value = float(cfg.grid[point_idx])
    methods = [METHOD_CELC]
    if cfg.refine:
        methods.append(METHOD_CELC_OPT)
    if cfg.ce3lc:
        methods.append(METHOD_CE3LC)

    # seeded by trial only (not grid point): every grid point replays the
    # same scenes and latent noise draws, so the trend along the grid is
    # paired (common random numbers) and mean curves stay smooth at
    # moderate trial counts without biasing any single point
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(trial_idx,))
    rng = np.random.default_rng(ss)
    omega, v, n_lines, duration, ev_sig, ln_sig, om_sig = \
        _scenario_at(cfg, value)
    scene = synth.random_scene(n_lines, rng=rng)
    motion = synth.MotionSpec(omega=omega, v=v, duration=duration)
    cam = synth.DEFAULT_CAMERA
    events, labels = synth.generate_events(
        scene, motion, cam=cam, n_events=cfg.n_events,
        noise=synth.NoiseSpec(event_sigma=ev_sig), rng=rng)
    observations = _build_observations(
        scene, motion, cam, events, labels, ln_sig, rng,
        want_center=cfg.ce3lc)
    omega_used = omega + rng.normal(0.0, om_sig, 3) if om_sig > 0 else omega

    if len(observations) < 2:
        return [_nan_record(cfg, value, trial_idx, m, "too_few_clusters", 0.0)
                for m in methods]

    records = []
    solver_rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(trial_idx, 1)))
    t0 = time.perf_counter()
    try:
        system = stack_rows(observations, omega_used)
        est = solve_nullspace_robust(system, sample_size=cfg.sample_size,
                                     rng=solver_rng)
    except DegenerateSystemError:
        est = None
    t_solve = time.perf_counter() - t0
    if est is None or est.degenerate:
        kind = "unsolvable" if est is None else \
            diagnose_degeneracy(est, observations, omega_used)
        records.append(_nan_record(cfg, value, trial_idx, METHOD_CELC,
                                   kind, t_solve))
        if cfg.refine:
            records.append(_nan_record(cfg, value, trial_idx,
                                       METHOD_CELC_OPT, kind, t_solve))
    else:
        records.append(_score(cfg, value, trial_idx, METHOD_CELC,
                              v, est.v_dir, t_solve))
        if cfg.refine:
            t1 = time.perf_counter()
            result = refine_velocity(observations, omega_used, est.v_dir,
                                     cam=cam)
            t_ref = time.perf_counter() - t1
            records.append(_score(cfg, value, trial_idx, METHOD_CELC_OPT,
                                  v, result.v_refined, t_solve + t_ref))

    if cfg.ce3lc:
        t2 = time.perf_counter()
        try:
            system3 = stack_ce3lc_rows(observations, omega_used)
            est3 = solve_nullspace_robust(system3,
                                          sample_size=cfg.sample_size,
                                          rng=solver_rng)
        except (DegenerateSystemError, ValueError):
            est3 = None
        t_3 = time.perf_counter() - t2
        if est3 is None or est3.degenerate:
            kind = "unsolvable" if est3 is None else \
                diagnose_degeneracy(est3, observations, omega_used)
            records.append(_nan_record(cfg, value, trial_idx, METHOD_CE3LC,
                                       kind, t_3))
        else:
            records.append(_score(cfg, value, trial_idx, METHOD_CE3LC,
                                  v, est3.v_dir, t_3))
    return records


def _run_point(args):
    cfg, point_idx = args
    records = []
    for trial_idx in range(cfg.trials):
        records.extend(run_trial(cfg, point_idx, trial_idx))
    return records


def run_sweep(cfg):
    """Run every (grid point, trial) cell; returns (records, summaries).

    Records are ordered by grid point, then trial, then method,
    independent of the worker count.
    """
    tasks = [(cfg, pi) for pi in range(len(cfg.grid))]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_point = list(pool.map(_run_point, tasks))
    else:
        per_point = [_run_point(t) for t in tasks]
    records = [rec for point in per_point for rec in point]
    return records, summarize(records)


def summarize(records):
    """Per (grid point, method) mean/std over the non-degenerate trials."""
    groups = {}
    order = []
    for rec in records:
        key = (rec.variable, rec.value, rec.method)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)
    summaries = []
    for key in order:
        variable, value, method = key
        good = [r for r in groups[key] if not r.degenerate]
        eps = np.array([r.eps for r in good])
        phi = np.array([r.phi for r in good])
        summaries.append(PointSummary(
            variable=variable, value=value, method=method,
            n_valid=len(good),
            n_degenerate=len(groups[key]) - len(good),
            eps_mean=float(eps.mean()) if len(good) else float("nan"),
            eps_std=float(eps.std()) if len(good) else float("nan"),
            phi_mean=float(phi.mean()) if len(good) else float("nan"),
            phi_std=float(phi.std()) if len(good) else float("nan"),
        ))
    return summaries


# ---------------------------------------------------------------------------
# CSV serialization

_RECORD_COLUMNS = ("variable", "value", "trial", "method", "eps", "phi",
                   "degenerate", "degeneracy_kind", "seed")
_SUMMARY_COLUMNS = ("variable", "value", "method", "n_valid", "n_degenerate",
                    "eps_mean", "eps_std", "phi_mean", "phi_std")


def write_records_csv(path, records, timing=False):
    """Write trial records; the wall_time column is opt-in so default
    outputs from identical seeds stay byte-identical."""
    header = list(_RECORD_COLUMNS) + (["wall_time"] if timing else [])
    rows = []
    for r in records:
        row = [r.variable, r.value, r.trial, r.method, r.eps, r.phi,
               int(r.degenerate), r.degeneracy_kind, r.seed]
        if timing:
            row.append(r.wall_time)
        rows.append(row)
    write_csv(path, header, rows)


def read_records_csv(path):
    _, rows = read_csv(path)
    records = []
    for row in rows:
        records.append(TrialRecord(
            variable=row["variable"],
            value=float(row["value"]),
            trial=int(row["trial"]),
            method=row["method"],
            eps=float(row["eps"]),
            phi=float(row["phi"]),
            degenerate=bool(int(row["degenerate"])),
            degeneracy_kind=row["degeneracy_kind"],
            seed=int(row["seed"]),
            wall_time=float(row.get("wall_time", "nan")),
        ))
    return records


def write_summary_csv(path, summaries):
    rows = [[s.variable, s.value, s.method, s.n_valid, s.n_degenerate,
             s.eps_mean, s.eps_std, s.phi_mean, s.phi_std]
            for s in summaries]
    write_csv(path, list(_SUMMARY_COLUMNS), rows)


def compare_methods(records):
    """Median and mean eps/phi per method over shared valid trials.

    Expects each method to cover the same (value, trial) cells; raises
    ValueError on empty input or mismatched trial sets.  Degenerate
    trials are dropped for every method (a cell is kept only where all
    methods are valid) so the medians compare like with like.
    """
    if not records:
        raise ValueError("no records to compare")
    methods = []
    cells = {}
    for rec in records:
        if rec.method not in methods:
            methods.append(rec.method)
        cells.setdefault((rec.value, rec.trial), {})[rec.method] = rec
    incomplete = [c for c, per in cells.items() if len(per) != len(methods)]
    if incomplete:
        raise ValueError(
            f"{len(incomplete)} trial cell(s) miss some methods; "
            f"records are not comparable")
    usable = [per for per in cells.values()
              if all(not per[m].degenerate for m in methods)]
    n_dropped = len(cells) - len(usable)
    if not usable:
        raise ValueError("every trial cell is degenerate for some method")
    table = {}
    for m in methods:
        eps = np.array([per[m].eps for per in usable])
        phi = np.array([per[m].phi for per in usable])
        table[m] = {
            "n": len(usable),
            "n_dropped": n_dropped,
            "eps_median": float(np.median(eps)),
            "eps_mean": float(eps.mean()),
            "phi_median": float(np.median(phi)),
            "phi_mean": float(phi.mean()),
        }
    return table


__all__ = [
    "METHOD_CELC",
    "METHOD_CELC_OPT",
    "METHOD_CE3LC",
    "SPEED_DIRECTION",
    "VARIABLES",
    "DEFAULT_GRIDS",
    "metrics",
    "TrialRecord",
    "PointSummary",
    "SweepConfig",
    "run_trial",
    "run_sweep",
    "summarize",
    "write_records_csv",
    "read_records_csv",
    "write_summary_csv",
    "compare_methods",
]
