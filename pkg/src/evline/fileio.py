"""Plain-text readers and writers for event, gyro, calibration and CSV data.

Event files hold one event per line as ``t x y p`` with t in decimal
seconds (non-decreasing), x/y integer pixel coordinates and p in {0, 1}
(mapped to polarity -1/+1 in memory).  Gyro files hold ``t wx wy wz``
samples with strictly increasing timestamps in rad/s.  Both formats skip
blank lines and '#' comments.  Calibration is a small YAML mapping with
keys fx, fy, cx, cy and optional dist, width, height.

Floats are written as their shortest round-tripping decimal (``repr``),
so reading a file back reproduces the in-memory values bit for bit.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import CalibrationError, ParseError
from .events import EventArray
from .geometry import CameraModel


def format_float(x):
    """Shortest decimal string that parses back to exactly this float."""
    return repr(float(x))


def _data_lines(path):
    """Yield (line_no, stripped_text) for non-blank, non-comment lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            yield line_no, text


# ---------------------------------------------------------------------------
# events


def read_events(path):
    """Parse a ``t x y p`` event file into an EventArray.

    Raises ParseError (with the offending line number) on malformed
    fields, polarities outside {0, 1} or timestamps that decrease.
    """
    ts, xs, ys, ps = [], [], [], []
    prev_t = -np.inf
    for line_no, text in _data_lines(path):
        fields = text.split()
        if len(fields) != 4:
            raise ParseError(path, line_no,
                             f"expected 4 fields 't x y p', got {len(fields)}")
        try:
            t = float(fields[0])
            x = int(fields[1])
            y = int(fields[2])
            p = int(fields[3])
        except ValueError:
            raise ParseError(path, line_no,
                             f"could not parse event fields from {text!r}")
        if not np.isfinite(t):
            raise ParseError(path, line_no, f"non-finite timestamp {fields[0]}")
        if p not in (0, 1):
            raise ParseError(path, line_no,
                             f"polarity must be 0 or 1, got {fields[3]}")
        if t < prev_t:
            raise ParseError(path, line_no,
                             f"timestamp {t!r} decreases (previous {prev_t!r})")
        prev_t = t
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(2 * p - 1)
    return EventArray(
        t=np.asarray(ts, dtype=float),
        x=np.asarray(xs, dtype=float),
        y=np.asarray(ys, dtype=float),
        p=np.asarray(ps, dtype=np.int8),
    )


def write_events(path, events):
    """Write an EventArray as ``t x y p`` lines (polarity mapped to 0/1).

    Pixel coordinates are written as integers; callers exporting
    synthetic data must round them first.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# t x y p\n")
        for i in range(len(events)):
            p01 = (int(events.p[i]) + 1) // 2
            fh.write(f"{format_float(events.t[i])} "
                     f"{int(round(float(events.x[i])))} "
                     f"{int(round(float(events.y[i])))} {p01}\n")


# ---------------------------------------------------------------------------
# gyro


@dataclass
class GyroTrack:
    """Sampled angular velocity with piecewise-linear interpolation."""

    t: np.ndarray        # (N,) strictly increasing seconds
    omega: np.ndarray    # (N, 3) rad/s

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        if self.omega.shape != (self.t.size, 3):
            raise ValueError("omega must be (N, 3) aligned with t")
        if self.t.size == 0:
            raise ValueError("gyro track must hold at least one sample")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("gyro timestamps must be strictly increasing")

    def covers(self, t):
        return self.t[0] <= t <= self.t[-1]

    def gap_at(self, t):
        """Spacing of the samples bracketing t (inf outside the track)."""
        if not self.covers(t):
            return np.inf
        if self.t.size == 1:
            return 0.0
        hi = int(np.searchsorted(self.t, t, side="left"))
        if self.t[min(hi, self.t.size - 1)] == t:
            return 0.0
        return float(self.t[hi] - self.t[hi - 1])

    def omega_at(self, t):
        """Linearly interpolated angular velocity at time t (scalar)."""
        if not self.covers(t):
            raise ValueError(
                f"t={t!r} outside gyro range [{self.t[0]!r}, {self.t[-1]!r}]")
        return np.array([np.interp(t, self.t, self.omega[:, k])
                         for k in range(3)])


def read_gyro(path):
    """Parse a ``t wx wy wz`` gyro file into a GyroTrack."""
    ts, ws = [], []
    prev_t = -np.inf
    for line_no, text in _data_lines(path):
        fields = text.split()
        if len(fields) != 4:
            raise ParseError(path, line_no,
                             f"expected 4 fields 't wx wy wz', "
                             f"got {len(fields)}")
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise ParseError(path, line_no,
                             f"could not parse gyro fields from {text!r}")
        if not all(np.isfinite(v) for v in vals):
            raise ParseError(path, line_no, f"non-finite value in {text!r}")
        if vals[0] <= prev_t:
            raise ParseError(
                path, line_no,
                f"timestamp {vals[0]!r} does not increase "
                f"(previous {prev_t!r})")
        prev_t = vals[0]
        ts.append(vals[0])
        ws.append(vals[1:])
    if not ts:
        raise ParseError(path, 0, "gyro file holds no samples")
    return GyroTrack(t=np.asarray(ts), omega=np.asarray(ws))


def write_gyro(path, track):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# t wx wy wz\n")
        for i in range(track.t.size):
            row = " ".join(format_float(v) for v in
                           (track.t[i], *track.omega[i]))
            fh.write(row + "\n")


# ---------------------------------------------------------------------------
# calibration


_CALIB_REQUIRED = ("fx", "fy", "cx", "cy")


def read_calibration(path):
    """Load a YAML intrinsics file into a CameraModel.

    Required keys: fx, fy, cx, cy.  Optional: dist (list), width, height.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line_no = mark.line + 1 if mark is not None else 0
        raise ParseError(path, line_no, f"invalid YAML: {exc}")
    if not isinstance(data, dict):
        raise ParseError(path, 0, "calibration file must be a YAML mapping")
    missing = [k for k in _CALIB_REQUIRED if k not in data]
    if missing:
        raise ParseError(path, 0,
                         f"missing required key(s): {', '.join(missing)}")
    try:
        return CameraModel(
            fx=float(data["fx"]), fy=float(data["fy"]),
            cx=float(data["cx"]), cy=float(data["cy"]),
            dist=tuple(data.get("dist") or ()),
            width=data.get("width"), height=data.get("height"),
        )
    except (TypeError, ValueError, CalibrationError) as exc:
        raise ParseError(path, 0, f"bad calibration value: {exc}")


def write_calibration(path, cam):
    data = {
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "dist": list(cam.dist),
    }
    if cam.width is not None:
        data["width"] = cam.width
    if cam.height is not None:
        data["height"] = cam.height
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, default_flow_style=False, sort_keys=False)


# ---------------------------------------------------------------------------
# CSV reports


def _cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    raise TypeError(f"unsupported CSV cell type {type(value).__name__}")


def write_csv(path, header, rows):
    """Write rows (sequences matching header) with lossless floats."""
    header = list(header)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            row = list(row)
            if len(row) != len(header):
                raise ValueError(
                    f"row width {len(row)} != header width {len(header)}")
            writer.writerow([_cell(v) for v in row])


def read_csv(path):
    """Read a CSV written by write_csv: (header, list of per-row dicts)."""
    if not os.path.exists(path):
        raise ParseError(path, 0, "file does not exist")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 0, "empty CSV file")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    path, line_no,
                    f"row width {len(row)} != header width {len(header)}")
            rows.append(dict(zip(header, row)))
    return header, rows


__all__ = [
    "format_float",
    "read_events",
    "write_events",
    "GyroTrack",
    "read_gyro",
    "write_gyro",
    "read_calibration",
    "write_calibration",
    "write_csv",
    "read_csv",
]
