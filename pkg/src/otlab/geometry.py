"""Planar polygons, the experiment domains, and half-plane clipping.

Every domain used by the laboratory is a polygon (curved pieces are sampled).
Polygons are stored counter-clockwise; clockwise input is reversed on
construction so downstream code can rely on a single orientation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

MERGE_TOL = 1e-12


def _signed_area(v: np.ndarray) -> float:
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _merge_close(v: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    if len(v) == 0:
        return v
    keep = [v[0]]
    for p in v[1:]:
        if abs(p[0] - keep[-1][0]) > tol or abs(p[1] - keep[-1][1]) > tol:
            keep.append(p)
    if len(keep) > 1 and abs(keep[0][0] - keep[-1][0]) <= tol and abs(keep[0][1] - keep[-1][1]) <= tol:
        keep.pop()
    return np.asarray(keep, dtype=float).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Counter-clockwise polygon; fewer than three vertices means empty."""

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        v = _merge_close(v)
        if len(v) < 3 or _signed_area(v) == 0.0:
            v = np.zeros((0, 2))
        elif _signed_area(v) < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def empty(cls) -> "Polygon":
        return cls(np.zeros((0, 2)))

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    def __len__(self) -> int:
        return len(self.vertices)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polygon):
            return NotImplemented
        return self.vertices.shape == other.vertices.shape and bool(np.all(self.vertices == other.vertices))

    @property
    def area(self) -> float:
        return area(self)

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        if self.is_empty:
            raise ValueError("empty polygon has no centroid")
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def is_convex(self, tol: float = 1e-12) -> bool:
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        return bool(np.all(cross >= -tol))

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        """Closed-set membership test; points within ``tol`` of the boundary count as inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_empty:
            return np.zeros(len(pts), dtype=bool)
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        px, py = pts[:, 0:1], pts[:, 1:2]
        ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
        crosses = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
        inside = (np.sum(crosses & (px < xint), axis=1) % 2) == 1
        return inside | (segment_distance(pts, a, b) <= tol)

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Polygon":
        return cls(np.asarray(d["vertices"], dtype=float).reshape(-1, 2))


def segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the segments a[k]-b[k]."""
    pts = np.atleast_2d(points)
    d = b - a
    ll = (d**2).sum(-1)
    rel = pts[:, None, :] - a[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ll > 0, (rel * d[None]).sum(-1) / ll, 0.0)
    t = np.clip(t, 0.0, 1.0)
    foot = a[None] + t[..., None] * d[None]
    return np.sqrt(((pts[:, None, :] - foot) ** 2).sum(-1)).min(axis=1)


def area(P: Polygon) -> float:
    """Shoelace area (0 for the empty polygon)."""
    return abs(_signed_area(P.vertices))


def clip_halfplane(P: Polygon, point, normal) -> Polygon:
    """Return P ∩ {x : (x - point)·normal <= 0}.

    Sequential Sutherland-Hodgman step against one line. Vertices already on the
    kept side (up to a relative 1e-14 slack) are passed through untouched, which
    makes the operation idempotent.
    """
    n = np.asarray(normal, dtype=float)
    nn = math.hypot(n[0], n[1])
    if not np.isfinite(nn) or nn == 0.0:
        raise ValueError("clip_halfplane: normal must be a non-zero finite vector")
    if P.is_empty:
        return P
    v = P.vertices
    s = (v - np.asarray(point, dtype=float)) @ n
    scale = nn * max(1.0, float(np.abs(v).max()))
    inside = s <= 1e-14 * scale
    if inside.all():
        return P
    if not inside.any():
        return Polygon.empty()
    out = []
    k = len(v)
    for i in range(k):
        j = (i + 1) % k
        if inside[i]:
            out.append(v[i])
            if not inside[j]:
                out.append(v[i] + (s[i] / (s[i] - s[j])) * (v[j] - v[i]))
        elif inside[j]:
            out.append(v[j] + (s[j] / (s[j] - s[i])) * (v[i] - v[j]))
    return Polygon(np.array(out))


def translate(P: Polygon, offset) -> Polygon:
    return Polygon(P.vertices + np.asarray(offset, dtype=float))


# ---------------------------------------------------------------------------
# domain specifications


@dataclass(frozen=True)
class Square:
    side: float = 1.0


@dataclass(frozen=True)
class Rectangle:
    x_range: tuple[float, float] = (0.0, 4.0)
    y_range: tuple[float, float] = (-2.0, 2.0)


@dataclass(frozen=True)
class NotchedRectangle:
    """(0, 4+eps/4) x (-2, 2) minus the closed triangle (eps,0), (0,1), (0,-1)."""

    eps: float


@dataclass(frozen=True)
class Dumbbell:
    """Two shifted half discs joined by the bar [-1,1] x (-eps, eps), total area pi."""

    eps: float
    arc_vertices: int = 256


@dataclass(frozen=True)
class Disc:
    radius: float = 1.0
    arc_vertices: int = 256


@dataclass(frozen=True)
class SmoothedNotch:
    """NotchedRectangle with its three notch corners replaced by C^{1,alpha} caps."""

    eps: float
    alpha: float = 0.5
    smoothing_radius: float | None = None
    cap_vertices: int = 32

    @property
    def radius(self) -> float:
        return self.smoothing_radius if self.smoothing_radius is not None else self.eps / 4


DomainSpec = Union[Square, Rectangle, NotchedRectangle, Dumbbell, Disc, SmoothedNotch]

_VARIANTS = {
    "Square": Square,
    "Rectangle": Rectangle,
    "NotchedRectangle": NotchedRectangle,
    "Dumbbell": Dumbbell,
    "Disc": Disc,
    "SmoothedNotch": SmoothedNotch,
}


def spec_to_dict(spec: DomainSpec) -> dict:
    d = {"variant": type(spec).__name__}
    for k, v in spec.__dict__.items():
        d[k] = list(v) if isinstance(v, tuple) else v
    return d


def spec_from_dict(d: dict) -> DomainSpec:
    d = dict(d)
    try:
        cls = _VARIANTS[d.pop("variant")]
    except KeyError as exc:
        raise ValueError(f"unknown domain variant {exc}") from None
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**kwargs)


def dumbbell_radius(eps: float) -> float:
    """r_eps with pi r^2 + 4 eps = pi."""
    return math.sqrt(1.0 - 4.0 * eps / math.pi)


def _check(spec: DomainSpec) -> None:
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ValueError(f"{type(spec).__name__}: {msg}")

    if isinstance(spec, Square):
        need(spec.side > 0, "side must be positive")
    elif isinstance(spec, Rectangle):
        need(spec.x_range[1] > spec.x_range[0] and spec.y_range[1] > spec.y_range[0], "empty range")
    elif isinstance(spec, NotchedRectangle):
        need(0 < spec.eps < 1, "eps must lie in (0, 1)")
    elif isinstance(spec, Dumbbell):
        need(spec.eps > 0, "eps must be positive")
        need(spec.arc_vertices >= 16, "arc_vertices must be >= 16")
        need(4 * spec.eps < math.pi and spec.eps < dumbbell_radius(spec.eps), "eps too large for a dumbbell")
    elif isinstance(spec, Disc):
        need(spec.radius > 0, "radius must be positive")
        need(spec.arc_vertices >= 16, "arc_vertices must be >= 16")
    elif isinstance(spec, SmoothedNotch):
        need(0 < spec.eps < 1, "eps must lie in (0, 1)")
        need(0 < spec.alpha < 1, "alpha must lie in (0, 1)")
        need(0 < spec.radius < spec.eps / 2, "smoothing radius must lie in (0, eps/2)")
        need(spec.cap_vertices >= 4, "cap_vertices must be >= 4")
    else:
        raise ValueError(f"unknown domain spec {spec!r}")


def _notch_vertices(eps: float) -> np.ndarray:
    w = 4.0 + eps / 4.0
    return np.array([(0.0, -2.0), (w, -2.0), (w, 2.0), (0.0, 2.0), (0.0, 1.0), (eps, 0.0), (0.0, -1.0)])


def _cap(prev: np.ndarray, corner: np.ndarray, nxt: np.ndarray, radius: float, alpha: float, k: int) -> np.ndarray:
    """Replace the corner by the graph of b + c|t|^(1+alpha) in corner-local coordinates.

    The cap spans the points at distance ``radius`` from the corner along both
    edges and meets them with matching tangents.
    """
    d1 = corner - prev
    d1 /= np.linalg.norm(d1)
    d2 = nxt - corner
    d2 /= np.linalg.norm(d2)
    e = d1 + d2
    e /= np.linalg.norm(e)
    n = d2 - d1
    n /= np.linalg.norm(n)
    cos_phi = float(d2 @ e)
    slope = float(d2 @ n) / cos_phi
    t0 = radius * cos_phi
    c = slope / ((1 + alpha) * t0**alpha)
    b = slope * t0 * alpha / (1 + alpha)
    t = np.linspace(-t0, t0, k + 1)
    y = b + c * np.abs(t) ** (1 + alpha)
    return corner + t[:, None] * e + y[:, None] * n


def build_domain(spec: DomainSpec) -> Polygon:
    _check(spec)
    if isinstance(spec, Square):
        s = float(spec.side)
        return Polygon(np.array([(0.0, 0.0), (s, 0.0), (s, s), (0.0, s)]))
    if isinstance(spec, Rectangle):
        (x0, x1), (y0, y1) = spec.x_range, spec.y_range
        return Polygon(np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=float))
    if isinstance(spec, NotchedRectangle):
        return Polygon(_notch_vertices(spec.eps))
    if isinstance(spec, Disc):
        th = 2 * np.pi * np.arange(spec.arc_vertices) / spec.arc_vertices
        return Polygon(spec.radius * np.column_stack([np.cos(th), np.sin(th)]))
    if isinstance(spec, Dumbbell):
        r, e, m = dumbbell_radius(spec.eps), spec.eps, spec.arc_vertices // 2
        th = np.linspace(-np.pi / 2, np.pi / 2, m + 1)
        right = np.column_stack([1 + r * np.cos(th), r * np.sin(th)])
        left = np.column_stack([-1 - r * np.cos(th), -r * np.sin(th)])
        pts = np.vstack([right, [(1, e), (-1, e)], left, [(-1, -e), (1, -e)]])
        return Polygon(pts)
    if isinstance(spec, SmoothedNotch):
        v = _notch_vertices(spec.eps)
        out = []
        for i, p in enumerate(v):
            if i in (4, 5, 6):
                out.extend(_cap(v[i - 1], p, v[(i + 1) % len(v)], spec.radius, spec.alpha, spec.cap_vertices))
            else:
                out.append(p)
        return Polygon(np.array(out))
    raise ValueError(f"unknown domain spec {spec!r}")
