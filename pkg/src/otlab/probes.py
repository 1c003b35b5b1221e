"""Numerical probes of (dis)continuity for computed transport maps.

Every probe reads a solved :class:`~otlab.sdot.LaguerreDiagram` and never
mutates it. Random sampling always goes through a seeded generator whose seed
is stored on the result.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .geometry import Polygon, segment_distance
from .sdot import LaguerreDiagram, eval_map, regular_triangles

JUMP_FACTOR = 10.0
OFFSET_FACTOR = 2.0


class ProbeError(RuntimeError):
    """A probe could not produce a meaningful value from its samples."""


@dataclass(frozen=True, eq=False)
class TransportSamples:
    sources: np.ndarray
    images: np.ndarray
    spacing: float
    seed: int | None = None

    def __post_init__(self) -> None:
        src = np.asarray(self.sources, dtype=float).reshape(-1, 2)
        img = np.asarray(self.images, dtype=float).reshape(-1, 2)
        if len(src) == 0 or len(src) != len(img):
            raise ValueError("transport samples need matching, nonempty source and image lists")
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "images", img)

    def __len__(self) -> int:
        return len(self.sources)

    def to_dict(self) -> dict:
        return {"sources": self.sources.tolist(), "images": self.images.tolist(),
                "spacing": self.spacing, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TransportSamples":
        return cls(np.asarray(d["sources"], float), np.asarray(d["images"], float),
                   float(d["spacing"]), d.get("seed"))


@dataclass(frozen=True, eq=False)
class JumpProfile:
    s: np.ndarray
    jumps: np.ndarray
    delta: float
    skipped: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=float)
        j = np.asarray(self.jumps, dtype=float)
        if s.shape != j.shape:
            raise ValueError("jump profile needs one jump per parameter value")
        if not self.delta > 0:
            raise ValueError("probe offset must be positive")
        skipped = np.zeros(len(s), bool) if self.skipped is None else np.asarray(self.skipped, bool)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "jumps", j)
        object.__setattr__(self, "skipped", skipped)

    @property
    def max_jump(self) -> float:
        valid = self.jumps[~self.skipped]
        return float(valid.max()) if len(valid) else 0.0

    def rows(self) -> list[tuple]:
        return [(float(s), float(j), int(k)) for s, j, k in zip(self.s, self.jumps, self.skipped)]


@dataclass(frozen=True)
class SplitEstimate:
    t_hat: float
    split: bool
    threshold: float
    delta: float
    profile: JumpProfile = field(repr=False, compare=False)


@dataclass(frozen=True)
class HolderFit:
    log_constant: float
    exponent: float
    n_pairs: int
    window: tuple[float, float]
    seed: int
    log_dist: np.ndarray = field(repr=False, compare=False)
    log_image_dist: np.ndarray = field(repr=False, compare=False)

    @property
    def constant(self) -> float:
        return float(np.exp(self.log_constant))


@dataclass(frozen=True)
class BoundaryReport:
    edge_distance: dict
    corner_displacement: float
    spacing: float

    @property
    def max_edge_distance(self) -> float:
        return max(self.edge_distance.values())

    def to_dict(self) -> dict:
        return {"edge_distance": dict(self.edge_distance),
                "corner_displacement": self.corner_displacement, "spacing": self.spacing}


def default_delta(D: LaguerreDiagram) -> float:
    return OFFSET_FACTOR * D.mean_spacing


def default_threshold(D: LaguerreDiagram) -> float:
    return JUMP_FACTOR * D.mean_spacing


def _segment(segment) -> tuple[np.ndarray, np.ndarray]:
    a, b = (np.asarray(p, dtype=float) for p in segment)
    if not np.linalg.norm(b - a) > 0:
        raise ValueError("probe segment has zero length")
    return a, b


def cloud_diameter(points: np.ndarray) -> float:
    """Largest pairwise distance, taken over convex-hull vertices."""
    pts = np.asarray(points, dtype=float)
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    return float(pdist(pts).max()) if len(pts) > 1 else 0.0


def sample_points(P: Polygon, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points drawn uniformly from P by rejection from its bounding box."""
    x0, y0, x1, y1 = P.bounds
    out = np.zeros((0, 2))
    while len(out) < n:
        m = max(2 * (n - len(out)), 64)
        cand = np.column_stack([rng.uniform(x0, x1, m), rng.uniform(y0, y1, m)])
        out = np.vstack([out, cand[P.contains(cand, tol=0.0)]])
    return out[:n]


def sample_transport(D: LaguerreDiagram, n: int = 2000, seed: int = 0) -> TransportSamples:
    rng = np.random.default_rng(seed)
    x = sample_points(D.source, n, rng)
    return TransportSamples(x, eval_map(D, x), D.mean_spacing, seed)


def displacement_jump(D: LaguerreDiagram, segment, delta: float | None = None, n_samples: int = 200) -> JumpProfile:
    """J(s) = |T(x + delta n) - T(x - delta n)| at n_samples points of the segment.

    s is arc length from the segment's first end point and n is its left unit
    normal. Pairs with a member outside the source are flagged as skipped.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    delta = default_delta(D) if delta is None else float(delta)
    if not delta > 0:
        raise ValueError("probe offset must be positive")
    a, b = _segment(segment)
    length = float(np.linalg.norm(b - a))
    t = (b - a) / length
    nrm = np.array([-t[1], t[0]])
    s = np.linspace(0.0, length, n_samples)
    x = a + s[:, None] * t
    plus, minus = x + delta * nrm, x - delta * nrm
    ok = D.source.contains(plus) & D.source.contains(minus)
    if not ok.any():
        raise ProbeError("every probe pair left the source domain")
    jumps = np.zeros(n_samples)
    jumps[ok] = np.linalg.norm(eval_map(D, plus[ok]) - eval_map(D, minus[ok]), axis=1)
    return JumpProfile(s, jumps, delta, ~ok)


def subdiff_measure(D: LaguerreDiagram, segment, tube_width: float | None = None) -> float:
    """Lebesgue measure of the subdifferential image of a tube around a segment.

    The discrete potential is piecewise affine; its subdifferential is a single
    site inside cells, a segment on edges, and the triangle of the three
    adjacent sites at each interior power vertex. The measure of the image of
    the tube is therefore the total area of the regular triangles whose power
    vertex lies in the tube and in the source domain.
    """
    width = 2.0 * D.mean_spacing if tube_width is None else float(tube_width)
    if not width > 0:
        raise ValueError("tube width must be positive")
    a, b = _segment(segment)
    tri, pv = regular_triangles(D)
    if len(tri) == 0:
        return 0.0
    near = segment_distance(pv, a[None], b[None]) <= width
    if not near.any():
        return 0.0
    near[near] = D.source.contains(pv[near], tol=0.0)
    y = D.sites
    p0, p1, p2 = y[tri[near, 0]], y[tri[near, 1]], y[tri[near, 2]]
    areas = 0.5 * np.abs((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
    return float(np.sort(areas).sum())


def _reflect(v: np.ndarray, a: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Mirror points across the line through a with unit direction t."""
    r = v - a
    return a + 2.0 * (r @ t)[:, None] * t - r


def estimate_split_point(
    D: LaguerreDiagram,
    delta: float | None = None,
    resolution: int = 400,
    threshold: float | None = None,
    line=((0.0, 0.0), (2.0, 0.0)),
    side: str = "both",
) -> SplitEstimate:
    """Largest s on the probe line whose jump exceeds the threshold.

    The probe line is the symmetry axis of the notched configuration. With
    ``side="both"`` the jump compares the images of x + delta n and
    x - delta n. With ``"upper"`` or ``"lower"`` it compares the image of the
    one-sided point with its own mirror image, so the two halves can be probed
    independently and compared. The scan starts at the far end of the line and
    stops at the first exceedance.
    """
    if side not in ("both", "upper", "lower"):
        raise ValueError(f"unknown side {side!r}")
    delta = default_delta(D) if delta is None else float(delta)
    threshold = default_threshold(D) if threshold is None else float(threshold)
    a, b = _segment(line)
    if side == "both":
        prof = displacement_jump(D, (a, b), delta, resolution)
    else:
        length = float(np.linalg.norm(b - a))
        t = (b - a) / length
        nrm = np.array([-t[1], t[0]]) * (1.0 if side == "upper" else -1.0)
        s = np.linspace(0.0, length, resolution)
        x = a + s[:, None] * t + delta * nrm
        ok = D.source.contains(x)
        if not ok.any():
            raise ProbeError("every probe point left the source domain")
        jumps = np.zeros(resolution)
        img = eval_map(D, x[ok])
        jumps[ok] = np.linalg.norm(img - _reflect(img, a, t), axis=1)
        prof = JumpProfile(s, jumps, delta, ~ok)
    hit = np.flatnonzero((prof.jumps > threshold) & ~prof.skipped)
    if len(hit) == 0:
        return SplitEstimate(0.0, False, threshold, delta, prof)
    return SplitEstimate(float(prof.s[hit[-1]]), True, threshold, delta, prof)


def holder_fit(
    S: TransportSamples,
    n_pairs: int = 50000,
    seed: int = 0,
    window: tuple[float, float] | None = None,
    pair_mask=None,
) -> HolderFit:
    """Fit log|T(x) - T(x')| = log C + alpha log|x - x'| over random sample pairs.

    The default distance window is [4 spacing, diam / 4] with diam the
    diameter of the sample cloud. ``pair_mask(x, x')`` may restrict the pairs,
    e.g. to those straddling a line.
    """
    if len(S) < 100:
        raise ValueError("holder_fit needs at least 100 samples")
    rng = np.random.default_rng(seed)
    if window is None:
        window = (4.0 * S.spacing, cloud_diameter(S.sources) / 4.0)
    i = rng.integers(0, len(S), n_pairs)
    j = rng.integers(0, len(S), n_pairs)
    d = np.linalg.norm(S.sources[i] - S.sources[j], axis=1)
    e = np.linalg.norm(S.images[i] - S.images[j], axis=1)
    keep = (d >= window[0]) & (d <= window[1])
    if pair_mask is not None:
        keep &= np.asarray(pair_mask(S.sources[i], S.sources[j]), bool)
    if not (e[keep] > 0).any():
        raise ProbeError("all sampled image pairs coincide; no modulus to fit")
    keep &= e > 0
    if keep.sum() < 2 or np.ptp(d[keep]) == 0:
        raise ProbeError("too few distinct pair distances inside the fitting window")
    ld, le = np.log(d[keep]), np.log(e[keep])
    slope, intercept = np.polyfit(ld, le, 1)
    return HolderFit(float(intercept), float(slope), int(keep.sum()), (float(window[0]), float(window[1])),
                     seed, ld, le)


def boundary_preservation(D: LaguerreDiagram, n_boundary_samples: int = 200) -> BoundaryReport:
    """Distance from T(x) to the edge of x, for x on each edge of a square source."""
    x0, y0, x1, y1 = D.source.bounds
    t = (np.arange(n_boundary_samples) + 0.5) / n_boundary_samples
    edges = {
        "bottom": (np.column_stack([x0 + t * (x1 - x0), np.full_like(t, y0)]), 1, y0),
        "top": (np.column_stack([x0 + t * (x1 - x0), np.full_like(t, y1)]), 1, y1),
        "left": (np.column_stack([np.full_like(t, x0), y0 + t * (y1 - y0)]), 0, x0),
        "right": (np.column_stack([np.full_like(t, x1), y0 + t * (y1 - y0)]), 0, x1),
    }
    dist = {}
    for name, (pts, axis, level) in edges.items():
        dist[name] = float(np.abs(eval_map(D, pts)[:, axis] - level).max())
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    corner = float(np.linalg.norm(eval_map(D, corners) - corners, axis=1).max())
    return BoundaryReport(dist, corner, D.mean_spacing)
