"""Semi-discrete optimal transport with quadratic cost.

A target density is replaced by a weighted point cloud; the Kantorovich dual
weights are found by a damped Newton iteration, and the optimal map sends each
power (Laguerre) cell to its site.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, QhullError, cKDTree

from . import density as dens
from ._kernels import polygon_integrals, power_cells
from .density import DensityField
from .geometry import Polygon, clip_halfplane

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """A solver stopped before meeting its tolerance; carries the last residual."""

    def __init__(self, message: str, residual: float, history=None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.history = list(history or [])


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    sites: np.ndarray
    masses: np.ndarray
    spacing: float | None = None

    def __post_init__(self) -> None:
        sites = np.asarray(self.sites, dtype=float).reshape(-1, 2)
        masses = np.asarray(self.masses, dtype=float).ravel()
        if len(sites) == 0 or len(sites) != len(masses):
            raise ValueError("a discrete measure needs one positive mass per site")
        if not np.all(masses > 0):
            raise ValueError("discrete measure masses must be positive")
        if len(np.unique(sites, axis=0)) != len(sites):
            raise ValueError("discrete measure sites must be pairwise distinct")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "masses", masses)

    def __len__(self) -> int:
        return len(self.masses)

    @property
    def total(self) -> float:
        return math.fsum(self.masses)

    def rescaled(self, total: float) -> "DiscreteMeasure":
        """Same sites, masses multiplied so they sum to ``total``."""
        return DiscreteMeasure(self.sites, self.masses * (total / self.total), self.spacing)

    def to_dict(self) -> dict:
        return {"sites": self.sites.tolist(), "masses": self.masses.tolist(), "spacing": self.spacing}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMeasure":
        return cls(np.asarray(d["sites"], float), np.asarray(d["masses"], float), d.get("spacing"))


@dataclass(eq=False)
class LaguerreDiagram:
    source: Polygon
    density: DensityField
    sites: np.ndarray
    weights: np.ndarray
    cell_ptr: np.ndarray
    cell_vertices: np.ndarray
    cell_labels: np.ndarray
    masses: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_flux: np.ndarray
    spacing: float | None = None
    target_masses: np.ndarray | None = None
    iterations: int = 0
    history: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sites)

    def cell(self, i: int) -> Polygon:
        return Polygon(self.cell_vertices[self.cell_ptr[i]:self.cell_ptr[i + 1]])

    @property
    def cells(self) -> list[Polygon]:
        return [self.cell(i) for i in range(len(self))]

    def cell_areas(self) -> np.ndarray:
        v, ptr = self.cell_vertices, self.cell_ptr
        out = np.zeros(len(self))
        if len(v) == 0:
            return out
        x, y = v[:, 0], v[:, 1]
        idx = np.arange(len(v))
        owner = np.repeat(np.arange(len(self)), np.diff(ptr))
        nxt = idx + 1
        last = ptr[1:][owner] == nxt
        nxt[last] = ptr[:-1][owner[last]]
        cross = x * y[nxt] - x[nxt] * y
        np.add.at(out, owner, cross)
        return out / 2.0

    def cell_centroids(self) -> np.ndarray:
        """Density-weighted centroids (NaN for empty cells)."""
        c = dens.coefficients(self.density)
        out = np.full((len(self), 2), np.nan)
        for i in range(len(self)):
            v = self.cell_vertices[self.cell_ptr[i]:self.cell_ptr[i + 1]]
            if len(v) >= 3:
                m0, mx, my = polygon_integrals(np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]), c)
                out[i] = (mx / m0, my / m0)
        return out

    @property
    def mean_spacing(self) -> float:
        if self.spacing is not None:
            return float(self.spacing)
        return math.sqrt(self.source.area / len(self))

    def residual(self) -> np.ndarray:
        if self.target_masses is None:
            raise ValueError("diagram has no target masses")
        return self.masses - self.target_masses

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "density": dens.to_dict(self.density),
            "sites": self.sites.tolist(),
            "weights": self.weights.tolist(),
            "masses": self.masses.tolist(),
            "target_masses": None if self.target_masses is None else self.target_masses.tolist(),
            "spacing": self.spacing,
            "cells": [self.cell_vertices[self.cell_ptr[i]:self.cell_ptr[i + 1]].tolist() for i in range(len(self))],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LaguerreDiagram":
        """Rebuild from serialized sites and weights (cells are recomputed, not trusted)."""
        D = laguerre_diagram(Polygon.from_dict(d["source"]), dens.from_dict(d["density"]),
                             np.asarray(d["sites"], float), np.asarray(d["weights"], float))
        D.spacing = d.get("spacing")
        if d.get("target_masses") is not None:
            D.target_masses = np.asarray(d["target_masses"], float)
        return D


# ---------------------------------------------------------------------------
# target discretization


def sample_target(Y: Polygon, g: DensityField, N: int, sliver: float = 0.25) -> DiscreteMeasure:
    """Partition Y by a uniform grid and put one site at the centroid of each grid piece.

    The grid cell size is sqrt(|Y|/N). Pieces smaller than ``sliver`` times a full
    grid cell are not given their own site; their mass goes to the nearest full
    piece, so the masses still integrate g over a partition of Y.
    """
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ValueError("N must be a positive integer")
    if N > 10**7:
        raise ValueError("N too large for the sampling grid")
    if Y.is_empty:
        raise ValueError("empty target domain")
    dens.check_positive(g, Y)
    x0, y0, x1, y1 = Y.bounds
    s = math.sqrt(Y.area / N)
    nx = max(1, math.ceil((x1 - x0) / s - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / s - 1e-9))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    coeff = dens.coefficients(g)
    full = (xs[1] - xs[0]) * (ys[1] - ys[0])
    cent, mass, area_ = [], [], []
    for r in range(ny):
        strip = clip_halfplane(Y, (0.0, ys[r]), (0.0, -1.0))
        strip = clip_halfplane(strip, (0.0, ys[r + 1]), (0.0, 1.0))
        if strip.is_empty:
            continue
        for c in range(nx):
            piece = clip_halfplane(strip, (xs[c], 0.0), (-1.0, 0.0))
            piece = clip_halfplane(piece, (xs[c + 1], 0.0), (1.0, 0.0))
            if piece.is_empty:
                continue
            v = piece.vertices
            m0, _, _ = polygon_integrals(np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]), coeff)
            cent.append(piece.centroid)
            mass.append(m0)
            area_.append(piece.area)
    cent = np.array(cent)
    mass = np.array(mass)
    area_ = np.array(area_)
    big = area_ >= sliver * full
    if not big.any():
        big[np.argmax(area_)] = True
    if not big.all():
        tree = cKDTree(cent[big])
        _, near = tree.query(cent[~big])
        gathered = mass[big].copy()
        np.add.at(gathered, near, mass[~big])
        cent, mass = cent[big], gathered
    return DiscreteMeasure(cent, mass, spacing=math.sqrt(Y.area / len(mass)))


# ---------------------------------------------------------------------------
# power diagrams


def _neighbor_lists(sites: np.ndarray, weights: np.ndarray):
    """Candidate bisectors per site from the regular triangulation.

    Lower facets of the hull of the lifted points (y, |y|^2 - w) give exactly the
    pairs of sites whose power cells share an edge. Sites that are not vertices of
    a lower facet have empty cells. Falls back to all pairs when the hull is
    degenerate (fewer than four sites or collinear input).
    """
    n = len(sites)
    allpairs = n <= 4
    hull = None
    if not allpairs:
        lifted = np.column_stack([sites, (sites**2).sum(1) - weights])
        try:
            hull = ConvexHull(lifted, qhull_options="Qt Qbb Qc")
        except QhullError:
            allpairs = True
    if allpairs:
        idx = np.arange(n)
        ptr = np.arange(n + 1) * (n - 1)
        nbr = np.concatenate([np.delete(idx, i) for i in range(n)]) if n > 1 else np.zeros(0, np.int64)
        return ptr.astype(np.int64), nbr.astype(np.int64), np.ones(n, bool), None
    eq = hull.equations
    lower = eq[:, 2] < -1e-12 * np.linalg.norm(eq[:, :3], axis=1)
    tri = hull.simplices[lower]
    ii = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2], tri[:, 1], tri[:, 2], tri[:, 0]])
    jj = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0], tri[:, 0], tri[:, 1], tri[:, 2]])
    active = np.zeros(n, bool)
    active[tri.ravel()] = True
    # sites qhull set aside as coplanar get checked against everyone
    brute = np.zeros(n, bool)
    if len(hull.coplanar):
        brute[hull.coplanar[:, 0]] = True
    pairs = np.unique(np.column_stack([ii, jj]), axis=0)
    order = np.argsort(pairs[:, 0], kind="stable")
    pairs = pairs[order]
    counts = np.bincount(pairs[:, 0], minlength=n)
    lists = np.split(pairs[:, 1], np.cumsum(counts)[:-1])
    everyone = np.arange(n)
    for i in np.flatnonzero(brute):
        lists[i] = np.delete(everyone, i)
        active[i] = True
    ptr = np.zeros(n + 1, np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    nbr = np.concatenate(lists).astype(np.int64) if n else np.zeros(0, np.int64)
    return ptr, nbr, active, tri


def laguerre_diagram(X: Polygon, f: DensityField, sites, weights, spacing: float | None = None) -> LaguerreDiagram:
    """Power diagram of (sites, weights) restricted to X, with f-masses of every cell."""
    sites = np.ascontiguousarray(np.asarray(sites, dtype=float).reshape(-1, 2))
    weights = np.ascontiguousarray(np.asarray(weights, dtype=float).ravel())
    if len(sites) == 0 or len(sites) != len(weights):
        raise ValueError("need one weight per site")
    if len(np.unique(sites, axis=0)) != len(sites):
        raise ValueError("laguerre_diagram: duplicate sites")
    if X.is_empty:
        raise ValueError("empty source domain")
    ptr, nbr, active, _ = _neighbor_lists(sites, weights)
    domain = np.ascontiguousarray(X.vertices)
    cptr, cv, cl, masses, ei, ej, ew = power_cells(domain, sites, weights, ptr, nbr, dens.coefficients(f))
    if not active.all():
        # sites hidden in the regular triangulation own nothing
        keep = np.repeat(active, np.diff(cptr))
        cv, cl = cv[keep], cl[keep]
        counts = np.where(active, np.diff(cptr), 0)
        cptr = np.concatenate([[0], np.cumsum(counts)])
        masses = np.where(active, masses, 0.0)
        ek = active[ei]
        ei, ej, ew = ei[ek], ej[ek], ew[ek]
    return LaguerreDiagram(X, f, sites, weights, cptr, cv, cl, masses, ei, ej, ew, spacing=spacing)


def regular_triangles(D: LaguerreDiagram) -> tuple[np.ndarray, np.ndarray]:
    """Triangles of the regular triangulation and their power vertices.

    The power vertex of triangle (i, j, k) is the point with equal power distance
    to the three sites; the subdifferential of the Brenier potential there is the
    triangle itself.
    """
    _, _, _, tri = _neighbor_lists(D.sites, D.weights)
    if tri is None or len(tri) == 0:
        return np.zeros((0, 3), np.int64), np.zeros((0, 2))
    y, w = D.sites, D.weights
    p = (y**2).sum(1) - w
    yi, yj, yk = y[tri[:, 0]], y[tri[:, 1]], y[tri[:, 2]]
    A = np.stack([2 * (yj - yi), 2 * (yk - yi)], axis=1)
    rhs = np.column_stack([p[tri[:, 1]] - p[tri[:, 0]], p[tri[:, 2]] - p[tri[:, 0]]])
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    ok = np.abs(det) > 1e-300
    vx = np.where(ok, (rhs[:, 0] * A[:, 1, 1] - rhs[:, 1] * A[:, 0, 1]) / np.where(ok, det, 1), np.nan)
    vy = np.where(ok, (A[:, 0, 0] * rhs[:, 1] - A[:, 1, 0] * rhs[:, 0]) / np.where(ok, det, 1), np.nan)
    return tri[ok], np.column_stack([vx, vy])[ok]


# ---------------------------------------------------------------------------
# dual solver


def _initial_weights(X: Polygon, sites: np.ndarray) -> np.ndarray:
    """Weights whose power diagram is the Voronoi diagram of the cloud shrunk into X.

    With w_i = (1 - lam) |y_i - c|^2 the power cells coincide with the Voronoi cells
    of c + lam (y_i - c); choosing lam so that every shrunk site lies in X makes all
    cells non-empty.
    """
    c = X.centroid
    if not X.contains(c, tol=0.0)[0]:
        c = X.vertices.mean(axis=0)
    lam = 1.0
    for _ in range(60):
        if np.all(X.contains(c + lam * (sites - c), tol=0.0)):
            break
        lam *= 0.5
    lam *= 0.99 if lam < 1.0 else 1.0
    w = (1.0 - lam) * ((sites - c) ** 2).sum(1)
    return w - w[0]


def _mass_jacobian(D: LaguerreDiagram) -> sp.csr_matrix:
    """d(cell mass_i)/d(w_j): boundary flux of f over 2|y_i - y_j| on shared edges."""
    n = len(D)
    d = D.sites[D.edge_i] - D.sites[D.edge_j]
    c = D.edge_flux / (2.0 * np.sqrt((d**2).sum(1)))
    J = sp.coo_matrix((-c, (D.edge_i, D.edge_j)), shape=(n, n)).tocsr()
    diag = np.bincount(D.edge_i, weights=c, minlength=n)
    return (J + sp.diags(diag)).tocsr()


def solve_dual(
    X: Polygon,
    f: DensityField,
    nu: DiscreteMeasure,
    tol: float = 1e-6,
    max_iterations: int = 100,
    damping_floor: float = 2.0**-20,
    weights0=None,
) -> LaguerreDiagram:
    """Find dual weights so each power cell carries the target mass of its site.

    Damped Newton on the concave Kantorovich dual. A step is accepted when no cell
    mass drops below half of the smallest initial/target mass and the residual
    norm decreases by the factor (1 - tau/2). When the step length would fall
    below ``damping_floor`` (or the linear solve fails) a fixed-step gradient
    ascent move is taken instead. Stops when
    max_i |cell mass_i - nu_i| <= tol * total / N. Weights are returned in the
    gauge w_0 = 0.
    """
    src_total = integrate(X, f)
    if abs(src_total - nu.total) > 1e-8 * src_total:
        raise ValueError(f"mass imbalance: source {src_total:.12g} vs target {nu.total:.12g}")
    n = len(nu)
    spacing = nu.spacing
    target = nu.masses
    threshold = tol * nu.total / n
    w = _initial_weights(X, nu.sites) if weights0 is None else np.asarray(weights0, float) - weights0[0]
    D = laguerre_diagram(X, f, nu.sites, w, spacing)
    history = []
    if n == 1:
        D.target_masses = target
        return D
    eps0 = 0.5 * min(target.min(), D.masses.min()) if D.masses.min() > 0 else 0.5 * target.min()
    for it in range(max_iterations + 1):
        r = D.masses - target
        err = float(np.abs(r).max())
        history.append(err)
        log.debug("newton it=%d residual=%.3e", it, err)
        if err <= threshold:
            D.target_masses = target
            D.iterations = it
            D.history = history
            return D
        if it == max_iterations:
            break
        J = _mass_jacobian(D)
        step = None
        try:
            delta = np.zeros(n)
            delta[1:] = spla.spsolve(J[1:, 1:].tocsc(), -r[1:])
            if np.all(np.isfinite(delta)):
                step = delta
        except (RuntimeError, ValueError):
            step = None
        norm0 = float(np.linalg.norm(r))
        accepted = None
        if step is not None:
            tau = 1.0
            while tau >= damping_floor:
                Dn = laguerre_diagram(X, f, nu.sites, w + tau * step, spacing)
                if Dn.masses.min() >= eps0 and np.linalg.norm(Dn.masses - target) <= (1 - tau / 2) * norm0:
                    accepted = Dn
                    break
                tau *= 0.5
        if accepted is None:
            # gradient ascent with a fixed step scaled by the Jacobian diagonal
            eta = 0.5 / max(float(J.diagonal().max()), 1e-300)
            accepted = laguerre_diagram(X, f, nu.sites, w - eta * r, spacing)
            log.debug("newton stalled at it=%d, gradient step taken", it)
        w = accepted.weights - accepted.weights[0]
        accepted.weights = w
        D = accepted
    raise ConvergenceError("solve_dual did not converge", history[-1], history)


def integrate(P: Polygon, f: DensityField) -> float:
    if P.is_empty:
        return 0.0
    v = P.vertices
    m0, _, _ = polygon_integrals(np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]), dens.coefficients(f))
    return float(m0)


# ---------------------------------------------------------------------------
# the transport map


class _MapIndex:
    """Nearest-site queries in the lifted space where power distance is Euclidean."""

    def __init__(self, D: LaguerreDiagram):
        self.sites = D.sites
        self.weights = D.weights
        top = D.weights.max()
        self.tree = cKDTree(np.column_stack([D.sites, np.sqrt(top - D.weights)]))

    def argmin(self, pts: np.ndarray) -> np.ndarray:
        k = min(8, len(self.sites))
        _, cand = self.tree.query(np.column_stack([pts, np.zeros(len(pts))]), k=k)
        cand = np.asarray(cand).reshape(len(pts), k)
        y = self.sites[cand]
        pw = ((pts[:, None, :] - y) ** 2).sum(-1) - self.weights[cand]
        best = pw.min(axis=1, keepdims=True)
        ties = np.where(pw == best, cand, np.iinfo(np.int64).max)
        return ties.min(axis=1)


def map_index(D: LaguerreDiagram, x, check_domain: bool = True) -> np.ndarray:
    """Index of the site whose cell contains each point (lowest index on ties)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if check_domain:
        inside = D.source.contains(pts)
        if not inside.all():
            bad = pts[~inside][0]
            raise ValueError(f"eval_map: point {tuple(bad)} lies outside the source domain")
    idx = getattr(D, "_index", None)
    if idx is None:
        idx = _MapIndex(D)
        D._index = idx
    return idx.argmin(pts)


def eval_map(D: LaguerreDiagram, x, check_domain: bool = True) -> np.ndarray:
    """T(x) = argmin_i |x - y_i|^2 - w_i; vectorized over an (m, 2) array."""
    arr = np.asarray(x, dtype=float)
    out = D.sites[map_index(D, arr, check_domain)]
    return out[0] if arr.ndim == 1 else out
