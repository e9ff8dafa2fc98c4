"""Oriented-box overlap geometry and tracking metrics.

Boxes are rectangles placed by an SE(2) pose; overlap is polygon IoU via
Sutherland-Hodgman clipping. Sequence scoring follows the no-reset
convention: the first zero-overlap frame is the failure point and every
later frame counts as overlap zero. Accuracy averages pre-failure overlap,
robustness is the tracked fraction of frames, and expected average overlap
averages truncated-mean overlap over an interval of sequence lengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import Pose2


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OrientedBox:
    pose: Pose2
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("box extents must be positive")

    def corners(self) -> np.ndarray:
        """Counter-clockwise corners, shape (4, 2)."""
        w, h = self.width / 2.0, self.height / 2.0
        local = np.array([[-w, -h], [w, -h], [w, h], [-w, h]])
        return self.pose.apply(local)

    @property
    def area(self) -> float:
        return self.width * self.height


def _clip_polygon(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Keep the part of poly left of the directed edge a -> b."""
    if len(poly) == 0:
        return poly
    edge = b - a
    # cross(edge, p - a): positive on the interior (left) side for CCW polygons
    d = edge[0] * (poly[:, 1] - a[1]) - edge[1] * (poly[:, 0] - a[0])
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        di, dj = d[i], d[j]
        if di >= 0.0:
            out.append(poly[i])
        if (di > 0.0 and dj < 0.0) or (di < 0.0 and dj > 0.0):
            t = di / (di - dj)
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out) if out else np.empty((0, 2))


def _shoelace(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def obb_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection-over-union of two oriented boxes by convex clipping."""
    poly = a.corners()
    bc = b.corners()
    for i in range(4):
        poly = _clip_polygon(poly, bc[i], bc[(i + 1) % 4])
        if len(poly) == 0:
            return 0.0
    inter = _shoelace(poly)
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return float(inter / union)


@dataclass(frozen=True)
class SequenceResult:
    """Per-frame overlaps with post-failure frames already zeroed."""

    overlaps: np.ndarray
    failure_frame: int | None

    def __post_init__(self):
        arr = np.asarray(self.overlaps, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "overlaps", arr)

    @property
    def length(self) -> int:
        return len(self.overlaps)

    @property
    def pre_failure_count(self) -> int:
        return self.length if self.failure_frame is None else self.failure_frame


def score_overlaps(raw_overlaps) -> SequenceResult:
    """Apply the failure rule to a raw per-frame overlap list."""
    arr = np.asarray(raw_overlaps, dtype=float).copy()
    zero = np.flatnonzero(arr == 0.0)
    failure = int(zero[0]) if len(zero) else None
    if failure is not None:
        arr[failure:] = 0.0
    return SequenceResult(arr, failure)


def score_sequence(pred_boxes, truth_boxes) -> SequenceResult:
    """Score aligned per-frame box lists; lengths must match."""
    if len(pred_boxes) != len(truth_boxes):
        raise EvaluationError(
            f"sequence length mismatch: {len(pred_boxes)} predictions vs {len(truth_boxes)} truths"
        )
    raw = [obb_iou(p, t) for p, t in zip(pred_boxes, truth_boxes)]
    return score_overlaps(raw)


def accuracy(results) -> float:
    """Mean over sequences of mean overlap across pre-failure frames."""
    if not results:
        raise EvaluationError("no sequences to score")
    per_seq = []
    for r in results:
        n = r.pre_failure_count
        per_seq.append(float(np.mean(r.overlaps[:n])) if n > 0 else 0.0)
    return float(np.mean(per_seq))


def robustness(results) -> float:
    """Mean over sequences of the tracked fraction of frames."""
    if not results:
        raise EvaluationError("no sequences to score")
    return float(np.mean([r.pre_failure_count / r.length for r in results]))


def eao(results, interval: tuple[int, int]) -> float:
    """Expected average overlap over sequence-length interval [lo, hi]."""
    if not results:
        raise EvaluationError("no sequences to score")
    lo, hi = int(interval[0]), int(interval[1])
    length = results[0].length
    if any(r.length != length for r in results):
        raise EvaluationError("sequences must share a common length")
    if not (1 <= lo <= hi <= length):
        raise EvaluationError(f"interval [{lo}, {hi}] outside sequence length {length}")
    phis = []
    for ns in range(lo, hi + 1):
        phis.append(float(np.mean([np.mean(r.overlaps[:ns]) for r in results])))
    return float(np.mean(phis))


def default_eao_interval(length: int) -> tuple[int, int]:
    """The [L/4, 3L/4] protocol default; reported alongside every EAO."""
    lo = max(1, length // 4)
    hi = max(lo, (3 * length) // 4)
    return lo, hi


def obb_iou_monte_carlo(a: OrientedBox, b: OrientedBox, n_points: int, rng) -> float:
    """Point-sampling IoU estimate; test oracle for the clipping path."""
    ca, cb = a.corners(), b.corners()
    allc = np.vstack([ca, cb])
    lo = allc.min(axis=0)
    hi = allc.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n_points, 2))

    def inside(box: OrientedBox, p: np.ndarray) -> np.ndarray:
        rel = p - np.array([box.pose.x, box.pose.y])
        R = box.pose.rotation()
        local = rel @ R  # world->body uses R^T acting on column vectors
        return (np.abs(local[:, 0]) <= box.width / 2.0) & (np.abs(local[:, 1]) <= box.height / 2.0)

    in_a = inside(a, pts)
    in_b = inside(b, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(in_a & in_b) / union)
