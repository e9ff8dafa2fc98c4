"""SE(2) rigid-transform arithmetic on the plane.

Poses are elements g = (x, y, theta) of the special Euclidean group SE(2);
tangent vectors are 3-vectors (dx, dy, dtheta) in the Lie algebra. The
exponential and logarithm maps convert between the two, and Mahalanobis
norms on tangent vectors score relative motions under a covariance Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

_TWO_PI = 2.0 * math.pi
# Below this angle the sin/cos ratios in V(theta) use 4th-order Taylor
# series to avoid cancellation.
_SMALL_ANGLE = 1e-4


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = (theta + math.pi) % _TWO_PI - math.pi
    if t <= -math.pi:
        t += _TWO_PI
    return t


@dataclass(frozen=True)
class Pose2:
    """A planar rigid transform: translation (x, y) in pixels, rotation theta.

    theta is wrapped to (-pi, pi] on construction, so log stays single-valued.
    Instances are immutable values; share them freely.
    """

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def rotation(self) -> np.ndarray:
        """2x2 rotation matrix."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 2) by this pose."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + np.array([self.x, self.y])

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])


IDENTITY = Pose2()


def _sinc_pair(theta: float) -> tuple[float, float]:
    """Return (sin(t)/t, (1-cos(t))/t) with a Taylor guard near t = 0."""
    if abs(theta) < _SMALL_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = theta / 2.0 - theta * t2 / 24.0
        return a, b
    return math.sin(theta) / theta, (1.0 - math.cos(theta)) / theta


def exp(xi: np.ndarray) -> Pose2:
    """SE(2) exponential map: tangent (dx, dy, dtheta) -> Pose2.

    Translation goes through the left Jacobian V(dtheta), so exp matches
    the matrix exponential of the 3x3 twist.
    """
    dx, dy, dtheta = float(xi[0]), float(xi[1]), float(xi[2])
    a, b = _sinc_pair(dtheta)
    return Pose2(a * dx - b * dy, b * dx + a * dy, dtheta)


def log(g: Pose2) -> np.ndarray:
    """SE(2) logarithm map, inverse of exp on |theta| < pi."""
    a, b = _sinc_pair(g.theta)
    den = a * a + b * b
    dx = (a * g.x + b * g.y) / den
    dy = (-b * g.x + a * g.y) / den
    return np.array([dx, dy, g.theta])


def compose(g1: Pose2, g2: Pose2) -> Pose2:
    """Group product g1 * g2."""
    c, s = math.cos(g1.theta), math.sin(g1.theta)
    return Pose2(
        g1.x + c * g2.x - s * g2.y,
        g1.y + s * g2.x + c * g2.y,
        g1.theta + g2.theta,
    )


def inverse(g: Pose2) -> Pose2:
    c, s = math.cos(g.theta), math.sin(g.theta)
    return Pose2(-(c * g.x + s * g.y), -(-s * g.x + c * g.y), -g.theta)


def between(g1: Pose2, g2: Pose2) -> Pose2:
    """Relative transform g1^{-1} * g2."""
    return compose(inverse(g1), g2)


def log_right_jacobian(r: np.ndarray) -> np.ndarray:
    """Right Jacobian Jr of the exponential map at tangent r.

    Satisfies exp(r + d) ~= exp(r) * exp(Jr(r) d) to first order; its inverse
    is the derivative of log(m * exp(d)) w.r.t. d at d = 0 where r = log(m).
    """
    rx, ry, th = float(r[0]), float(r[1]), float(r[2])
    a, b = _sinc_pair(th)
    if abs(th) < _SMALL_ANGLE:
        t2 = th * th
        u = th / 6.0 - th * t2 / 120.0  # (th - sin th) / th^2
        v = -0.5 + t2 / 24.0            # (cos th - 1) / th^2
    else:
        u = (th - math.sin(th)) / (th * th)
        v = (math.cos(th) - 1.0) / (th * th)
    return np.array(
        [
            [a, b, rx * u + ry * v],
            [-b, a, -rx * v + ry * u],
            [0.0, 0.0, 1.0],
        ]
    )


def log_right_jacobian_inverse(r: np.ndarray) -> np.ndarray:
    """Inverse of log_right_jacobian, using the affine block structure."""
    J = log_right_jacobian(r)
    A = J[:2, :2]
    bcol = J[:2, 2]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / det
    out = np.eye(3)
    out[:2, :2] = Ainv
    out[:2, 2] = -Ainv @ bcol
    return out


class TangentCovariance:
    """A 3x3 SPD covariance over pose tangents, Cholesky-backed.

    The factorization is computed once at construction because Mahalanobis
    evaluation sits in the tracker's inner loop. Raises ValueError for
    asymmetric or non-positive-definite input.
    """

    def __init__(self, Q: np.ndarray):
        Q = np.asarray(Q, dtype=float)
        if Q.shape != (3, 3):
            raise ValueError(f"expected 3x3 covariance, got shape {Q.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("covariance must be symmetric to 1e-12")
        try:
            self._cho = cho_factor(Q, lower=True)
        except np.linalg.LinAlgError as err:
            raise ValueError("covariance must be positive-definite") from err
        self.Q = Q.copy()
        self.Q.setflags(write=False)

    @staticmethod
    def from_diagonal(sx: float, sy: float, stheta: float) -> "TangentCovariance":
        """Build from per-axis standard deviations (pixels, pixels, radians)."""
        return TangentCovariance(np.diag([sx * sx, sy * sy, stheta * stheta]))

    def solve(self, e: np.ndarray) -> np.ndarray:
        """Return Q^{-1} e."""
        return cho_solve(self._cho, np.asarray(e, dtype=float))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n tangents from N(0, Q); shape (n, 3)."""
        L = np.tril(self._cho[0])
        return rng.standard_normal((n, 3)) @ L.T


def mahalanobis_sq(e: np.ndarray, Q: TangentCovariance) -> float:
    """Squared Mahalanobis norm e^T Q^{-1} e."""
    e = np.asarray(e, dtype=float)
    return float(e @ Q.solve(e))
