"""Rotation/kinematics kernels and calibrated lifting of pixels and lines.

Conventions:
    - Rotations are 3x3 orthonormal matrices acting on column vectors.
    - Image lines are homogeneous 3-vectors; a point [x, y, 1] lies on
      line l iff l . [x, y, 1] = 0.  Calibrated lines are unit-normalized.
    - Bearings are unit 3-vectors with positive z for points in front of
      the camera.
"""

import numpy as np

from .errors import CalibrationError

# Below this rotation angle the closed-form sin/cos expressions are
# replaced by their 2nd-order series to avoid 0/0.
SMALL_ANGLE = 1e-8


def skew(v):
    """Cross-product (skew-symmetric) matrix of a 3-vector."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def so3_exp(omega, dt=1.0):
    """Rotation matrix exp(skew(omega) * dt) via the Rodrigues formula.

    omega is an angular velocity in rad/s and dt a (signed) time span;
    omega * dt is the axis-angle vector of the returned rotation.
    """
    phi = np.asarray(omega, dtype=float) * dt
    theta = np.linalg.norm(phi)
    P = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + P + 0.5 * (P @ P)
    a = phi / theta
    A = skew(a)
    c = np.cos(theta)
    return c * np.eye(3) + (1.0 - c) * np.outer(a, a) + np.sin(theta) * A


def so3_left_jacobian(omega, dt=1.0):
    """Left Jacobian J of SO(3) at the axis-angle vector omega * dt.

    J satisfies integral_0^dt exp(skew(omega) s) ds = J * dt, so it maps a
    constant body-frame velocity to the integrated displacement direction.
    """
    phi = np.asarray(omega, dtype=float) * dt
    theta = np.linalg.norm(phi)
    P = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * P + (P @ P) / 6.0
    a = phi / theta
    A = skew(a)
    s_t = np.sin(theta) / theta
    return s_t * np.eye(3) + (1.0 - s_t) * np.outer(a, a) \
        + ((1.0 - np.cos(theta)) / theta) * A


def translation_from_velocity(omega, v, dt):
    """Displacement accumulated over dt under constant body twist (omega, v).

    Equals integral_0^dt exp(skew(omega) s) v ds = J(omega*dt) v dt.
    """
    return so3_left_jacobian(omega, dt) @ (np.asarray(v, dtype=float) * dt)


def normalize_line(l):
    """Unit-normalize a homogeneous line vector; raises on a zero vector."""
    l = np.asarray(l, dtype=float)
    n = np.linalg.norm(l)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite line vector")
    return l / n


class CameraModel:
    """Pinhole intrinsics with radial-tangential distortion.

    dist is (k1, k2, p1, p2) or (k1, k2, p1, p2, k3); an empty tuple means
    no distortion.
    """

    def __init__(self, fx, fy, cx, cy, dist=(), width=None, height=None):
        if fx <= 0 or fy <= 0:
            raise CalibrationError("focal lengths must be positive")
        self.fx = float(fx)
        self.fy = float(fy)
        self.cx = float(cx)
        self.cy = float(cy)
        self.dist = tuple(float(d) for d in dist)
        if self.dist and len(self.dist) not in (4, 5):
            raise CalibrationError(
                "dist must be empty, (k1,k2,p1,p2) or (k1,k2,p1,p2,k3)"
            )
        self.width = None if width is None else int(width)
        self.height = None if height is None else int(height)

    @property
    def K(self):
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def __repr__(self):
        return (f"CameraModel(fx={self.fx}, fy={self.fy}, cx={self.cx}, "
                f"cy={self.cy}, dist={self.dist}, width={self.width}, "
                f"height={self.height})")


def _distort_normalized(x, y, dist):
    """Apply radial-tangential distortion to normalized image coordinates."""
    k1, k2, p1, p2 = dist[:4]
    k3 = dist[4] if len(dist) == 5 else 0.0
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return xd, yd


def _undistort_normalized(xd, yd, dist, max_iters=20, tol=1e-8):
    """Invert the distortion map by fixed-point iteration.

    Raises CalibrationError when the iteration does not reach tol within
    max_iters (bad calibration or points far outside the model's validity).
    """
    k1, k2, p1, p2 = dist[:4]
    k3 = dist[4] if len(dist) == 5 else 0.0
    x, y = np.array(xd, dtype=float, copy=True), np.array(yd, dtype=float, copy=True)
    for _ in range(max_iters):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        x_new = (xd - dx) / radial
        y_new = (yd - dy) / radial
        err = np.max(np.hypot(x_new - x, y_new - y))
        x, y = x_new, y_new
        if err < tol:
            return x, y
    raise CalibrationError(
        f"undistortion did not converge within {max_iters} iterations"
    )


def lift_pixels(pixels, cam):
    """Unit bearing vectors for distorted pixel coordinates, shape (..., 2) -> (..., 3)."""
    pixels = np.asarray(pixels, dtype=float)
    xd = (pixels[..., 0] - cam.cx) / cam.fx
    yd = (pixels[..., 1] - cam.cy) / cam.fy
    if cam.dist:
        x, y = _undistort_normalized(xd, yd, cam.dist)
    else:
        x, y = xd, yd
    f = np.stack([x, y, np.ones_like(x)], axis=-1)
    return f / np.linalg.norm(f, axis=-1, keepdims=True)


def lift_pixel(p, cam):
    """Unit bearing of a single distorted pixel (2-vector)."""
    return lift_pixels(np.asarray(p, dtype=float), cam)


def undistort_pixels(pixels, cam):
    """Map distorted pixels to their ideal-pinhole pixel coordinates."""
    pixels = np.asarray(pixels, dtype=float)
    if not cam.dist:
        return pixels.copy()
    xd = (pixels[..., 0] - cam.cx) / cam.fx
    yd = (pixels[..., 1] - cam.cy) / cam.fy
    x, y = _undistort_normalized(xd, yd, cam.dist)
    return np.stack([x * cam.fx + cam.cx, y * cam.fy + cam.cy], axis=-1)


def project(points, cam):
    """Project camera-frame points (..., 3) to distorted pixels (..., 2).

    All points must be strictly in front of the camera (z > 0).
    """
    points = np.asarray(points, dtype=float)
    z = points[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project points with non-positive depth")
    x = points[..., 0] / z
    y = points[..., 1] / z
    if cam.dist:
        x, y = _distort_normalized(x, y, cam.dist)
    return np.stack([x * cam.fx + cam.cx, y * cam.fy + cam.cy], axis=-1)


def lift_line(l_px, cam):
    """Calibrated unit line K^T l_px from a pixel-space homogeneous line.

    The pixel line must refer to ideal (undistorted) pixel coordinates.
    """
    l_px = np.asarray(l_px, dtype=float)
    return normalize_line(cam.K.T @ l_px)


def pixel_line_through(p0, p1):
    """Homogeneous pixel line through two pixel points."""
    a = np.array([p0[0], p0[1], 1.0])
    b = np.array([p1[0], p1[1], 1.0])
    return np.cross(a, b)
