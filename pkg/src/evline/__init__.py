"""Up-to-scale linear velocity of an event camera from line clusters.

The estimator assumes a calibrated camera with known angular velocity
(e.g. from a gyroscope) observing a scene of straight 3D lines.  Events
of one line form a cluster in space-time; the cluster's boundary lines
plus per-event bearings yield one homogeneous constraint per event on
the linear velocity direction (CELC), solved in closed form and
optionally refined.  A three-line baseline (CE3LC) and a synthetic
sweep harness are included.
"""

from .clustering import ClusteringParams, EventCluster, cluster_events, \
    make_window
from .constraint import (ClusterGeometry, build_celc_matrix,
                         celc_residual, continuous_trifocal,
                         scaled_residual, transfer_line)
from .errors import (CalibrationError, ClusterRejectedError,
                     DegenerateSystemError, DegenerateTransferError,
                     EvlineError, LineFitError, ParseError,
                     PartialWindowError)
from .events import EventArray
from .fileio import (GyroTrack, read_calibration, read_events, read_gyro,
                     write_calibration, write_events, write_gyro)
from .geometry import (CameraModel, lift_line, lift_pixels,
                       normalize_line, pixel_line_through)
from .linefit import (FittedLine, LineFitParams, extract_boundary_lines,
                      extract_center_line, fit_line_huber)
from .pipeline import (WindowReport, estimate_from_files,
                       estimate_windows, write_reports_csv)
from .refine import RefineParams, RefineResult, refine_velocity
from .solver import (ClusterObservation, MotionEstimate, StackedSystem,
                     diagnose_degeneracy, solve_ce3lc,
                     solve_nullspace_robust, solve_nullspace_svd,
                     stack_ce3lc_rows, stack_rows)
from .sweep import (PointSummary, SweepConfig, TrialRecord,
                    compare_methods, metrics, run_sweep)
from .synth import (DEFAULT_CAMERA, MotionSpec, NoiseSpec, SceneSpec,
                    export_synth, generate_events,
                    ground_truth_boundary_lines, random_scene)

__version__ = "0.1.0"

__all__ = [
    "ClusteringParams", "EventCluster", "cluster_events", "make_window",
    "ClusterGeometry", "build_celc_matrix", "celc_residual",
    "continuous_trifocal", "scaled_residual", "transfer_line",
    "CalibrationError", "ClusterRejectedError", "DegenerateSystemError",
    "DegenerateTransferError", "EvlineError", "LineFitError",
    "ParseError", "PartialWindowError",
    "EventArray",
    "GyroTrack", "read_calibration", "read_events", "read_gyro",
    "write_calibration", "write_events", "write_gyro",
    "CameraModel", "lift_line", "lift_pixels", "normalize_line",
    "pixel_line_through",
    "FittedLine", "LineFitParams", "extract_boundary_lines",
    "extract_center_line", "fit_line_huber",
    "WindowReport", "estimate_from_files", "estimate_windows",
    "write_reports_csv",
    "RefineParams", "RefineResult", "refine_velocity",
    "ClusterObservation", "MotionEstimate", "StackedSystem",
    "diagnose_degeneracy", "solve_ce3lc", "solve_nullspace_robust",
    "solve_nullspace_svd", "stack_ce3lc_rows", "stack_rows",
    "PointSummary", "SweepConfig", "TrialRecord", "compare_methods",
    "metrics", "run_sweep",
    "DEFAULT_CAMERA", "MotionSpec", "NoiseSpec", "SceneSpec",
    "export_synth", "generate_events", "ground_truth_boundary_lines",
    "random_scene",
    "__version__",
]
