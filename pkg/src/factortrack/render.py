"""Overlay and chart rasterization without plotting dependencies.

Overlays draw oriented-box outlines onto frames: truth boxes solid white,
predicted boxes dashed black. Charts are simple PGM rasters with axes,
ticks, polylines, and scatter markers, bit-reproducible across runs.
"""

from __future__ import annotations

import numpy as np

from .imaging import GrayImage
from .metrics import OrientedBox


def _stamp(canvas: np.ndarray, xs: np.ndarray, ys: np.ndarray, value: float, thickness: int = 1) -> None:
    h, w = canvas.shape
    for t in range(-(thickness // 2), thickness - thickness // 2):
        xi = np.rint(xs).astype(int)
        yi = np.rint(ys).astype(int) + t
        keep = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        canvas[yi[keep], xi[keep]] = value
        yi = np.rint(ys).astype(int)
        xi = np.rint(xs).astype(int) + t
        keep = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        canvas[yi[keep], xi[keep]] = value


def draw_box(canvas: np.ndarray, box: OrientedBox, value: float, dashed: bool = False) -> None:
    """Rasterize the box perimeter; dashes alternate 4 px on / 4 px off."""
    corners = box.corners()
    for i in range(4):
        a = corners[i]
        b = corners[(i + 1) % 4]
        length = float(np.hypot(*(b - a)))
        n = max(2, int(np.ceil(length * 2)))
        ts = np.linspace(0.0, 1.0, n)
        xs = a[0] + ts * (b[0] - a[0])
        ys = a[1] + ts * (b[1] - a[1])
        if dashed:
            arc = ts * length
            keep = (arc % 8.0) < 4.0
            xs, ys = xs[keep], ys[keep]
        _stamp(canvas, xs, ys, value)


def overlay(image: GrayImage, truth_boxes, pred_boxes) -> GrayImage:
    canvas = image.data.copy()
    for box in truth_boxes:
        draw_box(canvas, box, 1.0, dashed=False)
    for box in pred_boxes:
        draw_box(canvas, box, 0.0, dashed=True)
    return GrayImage(canvas)


class Chart:
    """Minimal raster chart: white canvas, black axes and data marks."""

    def __init__(self, width: int = 480, height: int = 360, margin: int = 40):
        self.width = width
        self.height = height
        self.margin = margin
        self.canvas = np.ones((height, width))
        self._xlim = (0.0, 1.0)
        self._ylim = (0.0, 1.0)

    def set_limits(self, xlim, ylim) -> None:
        dx = (xlim[1] - xlim[0]) or 1.0
        dy = (ylim[1] - ylim[0]) or 1.0
        self._xlim = (xlim[0], xlim[0] + dx)
        self._ylim = (ylim[0], ylim[0] + dy)

    def _to_px(self, x, y):
        m = self.margin
        fx = (np.asarray(x, dtype=float) - self._xlim[0]) / (self._xlim[1] - self._xlim[0])
        fy = (np.asarray(y, dtype=float) - self._ylim[0]) / (self._ylim[1] - self._ylim[0])
        px = m + fx * (self.width - 2 * m)
        py = self.height - m - fy * (self.height - 2 * m)
        return px, py

    def axes(self, n_ticks: int = 5) -> None:
        m = self.margin
        self.canvas[self.height - m, m : self.width - m] = 0.0
        self.canvas[m : self.height - m, m] = 0.0
        for i in range(n_ticks):
            f = i / (n_ticks - 1)
            x = int(m + f * (self.width - 2 * m))
            y = int(self.height - m - f * (self.height - 2 * m))
            self.canvas[self.height - m : self.height - m + 4, x] = 0.0
            self.canvas[y, m - 4 : m] = 0.0

    def polyline(self, xs, ys, value: float = 0.0) -> None:
        px, py = self._to_px(xs, ys)
        for i in range(len(px) - 1):
            n = max(2, int(np.hypot(px[i + 1] - px[i], py[i + 1] - py[i])) * 2)
            ts = np.linspace(0.0, 1.0, n)
            _stamp(self.canvas, px[i] + ts * (px[i + 1] - px[i]), py[i] + ts * (py[i + 1] - py[i]), value)

    def scatter(self, xs, ys, value: float = 0.0, size: int = 2) -> None:
        px, py = self._to_px(xs, ys)
        for x, y in zip(px, py):
            for dx in range(-size, size + 1):
                for dy in range(-size, size + 1):
                    if dx * dx + dy * dy <= size * size:
                        xi, yi = int(round(x + dx)), int(round(y + dy))
                        if 0 <= xi < self.width and 0 <= yi < self.height:
                            self.canvas[yi, xi] = value

    def image(self) -> GrayImage:
        return GrayImage(np.clip(self.canvas, 0.0, 1.0))
