"""Reference routes (arc-length parameterized polylines) and circle covers of boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Route:
    """A polyline the ego follows.

    ``exposure`` lists arc-length intervals where the route crosses or enters
    lanes used by other traffic; the cooperative policy wants a clear gap for
    the whole interval before it commits to one.
    """

    points: np.ndarray  # (n, 2)
    exposure: tuple[tuple[float, float], ...] = ()
    s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("route needs at least two (x, y) points")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 0):
            raise ValueError("route has repeated points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "s", np.concatenate([[0.0], np.cumsum(seg)]))

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def point_at(self, s) -> np.ndarray:
        """Position(s) at arc length ``s``; clamps to the ends."""
        s = np.clip(s, 0.0, self.length)
        return np.stack([np.interp(s, self.s, self.points[:, 0]),
                         np.interp(s, self.s, self.points[:, 1])], axis=-1)

    def heading_at(self, s) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.points) - 2)
        d = self.points[i + 1] - self.points[i]
        return np.arctan2(d[..., 1], d[..., 0])

    def project(self, x: float, y: float) -> tuple[float, float]:
        """(arc length, signed lateral offset, left positive) of the nearest route point.

        The route is treated as extended straight beyond both ends.
        """
        s, lat = self.project_many(np.array([[x, y]], dtype=float))
        return float(s[0]), float(lat[0])

    def project_many(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """:meth:`project` for an (m, 2) array of points."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        a = self.points[:-1]
        d = self.points[1:] - a
        seg_len2 = np.einsum("ij,ij->i", d, d)
        rx = xy[:, 0:1] - a[:, 0]
        ry = xy[:, 1:2] - a[:, 1]
        t = (rx * d[:, 0] + ry * d[:, 1]) / seg_len2
        # the end segments extend past the route ends, so points behind the
        # start get negative arc length
        lo = np.zeros(len(d))
        hi = np.ones(len(d))
        lo[0], hi[-1] = -np.inf, np.inf
        t = np.clip(t, lo, hi)
        ex = rx - t * d[:, 0]
        ey = ry - t * d[:, 1]
        i = np.argmin(ex * ex + ey * ey, axis=1)
        rows = np.arange(len(xy))
        ti = t[rows, i]
        s = self.s[i] + ti * np.sqrt(seg_len2[i])
        dist = np.hypot(ex[rows, i], ey[rows, i])
        cross = d[i, 0] * ry[rows, i] - d[i, 1] * rx[rows, i]
        return s, np.copysign(dist, cross)

    def next_exposure(self, s: float) -> tuple[float, float] | None:
        for lo, hi in self.exposure:
            if hi > s:
                return (lo, hi)
        return None


def polyline(*pieces: np.ndarray, spacing: float = 0.5) -> np.ndarray:
    """Join point arrays and resample at roughly uniform ``spacing``."""
    pts = np.concatenate([np.asarray(p, dtype=float) for p in pieces])
    keep = np.concatenate([[True], np.hypot(*np.diff(pts, axis=0).T) > 1e-9])
    pts = pts[keep]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    n = max(2, int(math.ceil(s[-1] / spacing)) + 1)
    q = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(q, s, pts[:, 0]), np.interp(q, s, pts[:, 1])], axis=1)


def line(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y1]], dtype=float)


def arc(cx: float, cy: float, r: float, a0: float, a1: float, n: int = 64) -> np.ndarray:
    a = np.linspace(a0, a1, n)
    return np.stack([cx + r * np.cos(a), cy + r * np.sin(a)], axis=1)


def circle_cover(length: float, width: float) -> tuple[np.ndarray, float]:
    """Centers (along the long axis, box frame) and common radius of a circle cover.

    ``n = ceil(length / width) + 1`` equal circles, each covering a slice of
    length ``length / n``.
    """
    n = int(math.ceil(length / width)) + 1
    half = length / (2 * n)
    offsets = -length / 2 + half + 2 * half * np.arange(n)
    return offsets, math.hypot(half, width / 2)


def cover_points(x, y, heading, length: float, width: float):
    """World positions (..., n, 2) of the circle cover for poses broadcast over leading dims."""
    offs, r = circle_cover(length, width)
    x, y, heading = np.asarray(x, float), np.asarray(y, float), np.asarray(heading, float)
    c, s = np.cos(heading)[..., None], np.sin(heading)[..., None]
    pts = np.stack([x[..., None] + c * offs, y[..., None] + s * offs], axis=-1)
    return pts, r
