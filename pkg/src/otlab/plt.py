"""Square-to-square transport through the partial Legendre transform.

With u* (p, x2) = sup_x1 (p x1 - u(x1, x2)) the Monge-Ampere problem on the unit
square becomes the quasi-linear equation

    f(d1 u*, x2) d11 u* + g(p, -d2 u*) d22 u* = 0

with Neumann data d1 u* = 0, 1 on p = 0, 1 and d2 u* = 0, -1 on x2 = 0, 1.
It is written in flux form, d1 F(d1 u*, x2) - d2 G(p, -d2 u*) = 0 with F, G
the antiderivatives of f and g in their first and second argument, and
discretized by node-centred finite volumes. Boundary control volumes are half
or quarter cells, which is the same scheme as second-order ghost nodes. Flux
differences telescope, so the discrete problem is exactly compatible and the
constant null direction is removed by pinning u*(0, 0) = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import density as dens
from .density import DensityField
from .geometry import Polygon
from .probes import TransportSamples
from .sdot import ConvergenceError, integrate

log = logging.getLogger(__name__)

RELAXATION = 0.5
CONVEXITY_FLOOR = 1e-8


class ConvexityError(ConvergenceError):
    """The iterate lost strict convexity in p."""


@dataclass(eq=False)
class ScalarGrid:
    """Node values on the closed unit square; values[i, j] sits at (i h, j h)."""

    values: np.ndarray
    f: DensityField | None = None
    g: DensityField | None = None
    residual: float = float("nan")
    iterations: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 9:
            raise ValueError("a scalar grid is square with at least 9 nodes per side")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    def meta(self) -> dict:
        return {
            "n": self.n,
            "h": self.h,
            "gauge": float(self.values[0, 0]),
            "f": None if self.f is None else dens.to_dict(self.f),
            "g": None if self.g is None else dens.to_dict(self.g),
            "residual": self.residual,
            "iterations": self.iterations,
        }


def _secant_x(f: DensityField, s: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """F(s, x2) / s, continued to s = 0."""
    c = dens.coefficients(f)
    return (c[0] + c[2] * x2 + c[5] * x2 * x2) + (c[1] + c[4] * x2) * s / 2 + c[3] * s * s / 3


def _secant_y(g: DensityField, x1: np.ndarray, s: np.ndarray) -> np.ndarray:
    """G(x1, s) / s, continued to s = 0."""
    c = dens.coefficients(g)
    return (c[0] + c[1] * x1 + c[3] * x1 * x1) + (c[2] + c[4] * x1) * s / 2 + c[5] * s * s / 3


class _Scheme:
    """Flux-form discretization on an n x n node grid."""

    def __init__(self, f: DensityField, g: DensityField, n: int):
        self.f, self.g, self.n = f, g, n
        self.h = h = 1.0 / (n - 1)
        self.x = np.linspace(0.0, 1.0, n)
        ell = np.full(n, h)
        ell[0] = ell[-1] = h / 2
        self.ell = ell
        self.cv = np.outer(ell, ell)
        right = dens.antiderivative_x(f, 1.0, self.x)
        top = dens.antiderivative_y(g, self.x, 1.0)
        # trapezoid sums of the boundary fluxes; their ratio makes the system exactly compatible
        out_f = math.fsum(ell * right)
        out_g = math.fsum(ell * top)
        self.top_scale = out_f / out_g
        self.b = np.zeros((n, n))
        self.b[-1, :] += right * ell
        self.b[:, -1] -= self.top_scale * top * ell
        idx = np.arange(n * n).reshape(n, n)
        self.idx = idx

    def coefficients(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = self.h
        s1 = (u[1:, :] - u[:-1, :]) / h
        k1 = _secant_x(self.f, s1, self.x[None, :]) * self.ell[None, :] / h
        s2 = -(u[:, 1:] - u[:, :-1]) / h
        k2 = self.top_scale * _secant_y(self.g, self.x[:, None], s2) * self.ell[:, None] / h
        return k1, k2

    def apply(self, u: np.ndarray, k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
        """Net flux into each control volume for frozen face coefficients."""
        out = self.b.copy()
        q1 = k1 * (u[1:, :] - u[:-1, :])
        out[:-1, :] += q1
        out[1:, :] -= q1
        q2 = k2 * (u[:, 1:] - u[:, :-1])
        out[:, :-1] += q2
        out[:, 1:] -= q2
        return out

    def residual(self, u: np.ndarray) -> np.ndarray:
        """Pointwise equation residual (net flux per control-volume area)."""
        k1, k2 = self.coefficients(u)
        return self.apply(u, k1, k2) / self.cv

    def matrix(self, k1: np.ndarray, k2: np.ndarray) -> sp.csr_matrix:
        idx, N = self.idx, self.n * self.n
        rows, cols, vals = [], [], []
        for a, b, k in ((idx[:-1, :], idx[1:, :], k1), (idx[:, :-1], idx[:, 1:], k2)):
            a, b, k = a.ravel(), b.ravel(), k.ravel()
            rows += [a, a, b, b]
            cols += [b, a, a, b]
            vals += [k, -k, k, -k]
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)).tocsr()
        # pin the corner: replace its (redundant) balance equation by u = 0
        keep = np.ones(N)
        keep[0] = 0.0
        pin = sp.csr_matrix(([1.0], ([0], [0])), shape=(N, N))
        return (sp.diags(keep) @ A + pin).tocsr()

    def correction(self, u: np.ndarray, k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
        """Solve the frozen-coefficient problem for its update from u (defect form)."""
        rhs = -self.apply(u, k1, k2).ravel()
        rhs[0] = 0.0
        du = spla.spsolve(self.matrix(k1, k2).tocsc(), rhs)
        return du.reshape(self.n, self.n)


def _check_balance(f: DensityField, g: DensityField) -> None:
    Q = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    dens.check_positive(f, Q)
    dens.check_positive(g, Q)
    mf, mg = integrate(Q, f), integrate(Q, g)
    if abs(mf - mg) > 1e-10 * abs(mf):
        raise ValueError(f"densities are not mass balanced: {mf!r} vs {mg!r}")


def min_convexity(u: np.ndarray) -> float:
    """Smallest second p-difference over interior-in-p nodes."""
    return float((u[2:, :] - 2 * u[1:-1, :] + u[:-2, :]).min())


def solve_plt(
    f: DensityField,
    g: DensityField,
    n: int = 129,
    tol: float = 1e-8,
    max_iterations: int = 200,
    initial: np.ndarray | None = None,
) -> ScalarGrid:
    """Picard iteration with secant coefficients and under-relaxation 0.5.

    Stops when the max-norm pointwise residual is at most ``tol``.
    """
    if n < 9:
        raise ValueError("grid size must be at least 9")
    _check_balance(f, g)
    S = _Scheme(f, g, n)
    p, x2 = np.meshgrid(S.x, S.x, indexing="ij")
    u = (p**2 - x2**2) / 2 if initial is None else np.array(initial, dtype=float)
    if u.shape != (n, n):
        raise ValueError("initial guess has the wrong shape")
    u = u - u[0, 0]
    floor = S.h**2 * CONVEXITY_FLOOR
    history = []
    for it in range(max_iterations + 1):
        r = float(np.abs(S.residual(u)).max())
        history.append(r)
        log.debug("plt n=%d iteration %d residual %.3e", n, it, r)
        if r <= tol:
            return ScalarGrid(u, f, g, r, it, history)
        if it == max_iterations:
            break
        k1, k2 = S.coefficients(u)
        u = u + RELAXATION * S.correction(u, k1, k2)
        u -= u[0, 0]
        c = min_convexity(u)
        if not c >= floor:
            raise ConvexityError(f"iterate lost convexity in p (min second difference {c:.3e})", r, history)
    raise ConvergenceError(f"Picard iteration did not reach tol={tol:g} in {max_iterations} iterations",
                           history[-1], history)


def invert_plt(ustar: ScalarGrid) -> TransportSamples:
    """Pairs x = (d1 u*, x2) -> T(x) = (p, -d2 u*) at every node."""
    v, h = ustar.values, ustar.h
    if min_convexity(v) <= 0:
        raise ConvexityError("u* is not strictly convex in p", float("nan"))
    d1 = np.gradient(v, h, axis=0, edge_order=2)
    d2 = np.gradient(v, h, axis=1, edge_order=2)
    if not np.all(np.diff(d1, axis=0) > 0):
        raise ConvexityError("d1 u* is not increasing in p", float("nan"))
    p, x2 = np.meshgrid(ustar.nodes, ustar.nodes, indexing="ij")
    src = np.column_stack([d1.ravel(), x2.ravel()])
    img = np.column_stack([p.ravel(), -d2.ravel()])
    return TransportSamples(src, img, h)


def edge_report(ustar: ScalarGrid) -> dict:
    """For boundary nodes of each edge: distance of source and image to that edge."""
    S = invert_plt(ustar)
    n = ustar.n
    src, img = S.sources.reshape(n, n, 2), S.images.reshape(n, n, 2)
    sel = {
        "left": (np.s_[0, :], 0, 0.0),
        "right": (np.s_[-1, :], 0, 1.0),
        "bottom": (np.s_[:, 0], 1, 0.0),
        "top": (np.s_[:, -1], 1, 1.0),
    }
    out = {}
    for name, (s, axis, level) in sel.items():
        out[name] = {
            "source": float(np.abs(src[s][:, axis] - level).max()),
            "image": float(np.abs(img[s][:, axis] - level).max()),
        }
    corners = [(0, 0), (-1, 0), (-1, -1), (0, -1)]
    out["corner"] = float(max(np.linalg.norm(img[c] - src[c]) for c in corners))
    return out


# ---------------------------------------------------------------------------
# corner obstruction


def corner_d11(v: np.ndarray, h: float) -> float:
    """Second-order one-sided d11 u*(0) using d1 u*(0) = 0."""
    return float((-7 * v[0, 0] + 8 * v[1, 0] - v[2, 0]) / (2 * h * h))


def _d3(a: np.ndarray, i: int, h: float) -> np.ndarray:
    return (a[i + 2] - 2 * a[i + 1] + 2 * a[i - 1] - a[i - 2]) / (2 * h**3)


def mixed_fourth(v: np.ndarray, h: float, k: int, ratio: float) -> float:
    """d1112 u* + ratio * d2221 u* at node (k, k) with centred order-2 stencils."""
    if k < 2 or k + 2 >= v.shape[0]:
        raise ValueError("stencil needs two nodes on each side")
    d1112 = (_d3(v[:, k + 1], k, h) - _d3(v[:, k - 1], k, h)) / (2 * h)
    d2221 = (_d3(v[k + 1, :], k, h) - _d3(v[k - 1, :], k, h)) / (2 * h)
    return float(d1112 + ratio * d2221)


@dataclass
class CornerReport:
    grids: list
    d11: list
    offsets: list
    interior: dict
    boundary_trace: float
    mismatch: dict
    predicted: list
    d11_richardson: float | None
    residuals: list
    a: float

    @property
    def finest(self) -> int:
        return self.grids[-1]

    def mismatch_at(self, n: int) -> float:
        """Interior estimate used for the verdict: the median over offsets."""
        return float(np.median(self.mismatch[n]))

    @property
    def non_decay_ratio(self) -> float:
        """Finest over coarsest interior estimate; stays near 1 if the combination does not decay."""
        lo, hi = self.mismatch_at(self.grids[0]), self.mismatch_at(self.grids[-1])
        return hi / lo if lo != 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "grids": list(self.grids),
            "d11": list(self.d11),
            "d11_richardson": self.d11_richardson,
            "offsets": list(self.offsets),
            "interior": {str(n): list(v) for n, v in self.interior.items()},
            "boundary_trace": self.boundary_trace,
            "mismatch": {str(n): list(v) for n, v in self.mismatch.items()},
            "predicted_limit": list(self.predicted),
            "residuals": list(self.residuals),
        }


def corner_obstruction_report(
    a: float,
    grids=(65, 129, 257),
    tol: float = 1e-10,
    offsets=(2, 3, 4),
) -> CornerReport:
    """Finite-difference witness that u* cannot be C^4 at the corner for f = 1 + a x1 x2.

    Differentiating the equation in p then x2 at the origin forces
    d1112 u* + g(0) d2221 u* = -a (d11 u*(0))^2 if u* were C^4, while the
    Neumann data force the same combination to vanish along both edges.
    """
    if not a >= 0:
        raise ValueError("corner report needs a >= 0")
    f, g = dens.AffineProduct(a), dens.Constant(1.0 + a / 4.0)
    ratio = dens.evaluate(g, np.zeros((1, 2)))[0] / dens.evaluate(f, np.zeros((1, 2)))[0]
    grids = sorted(int(n) for n in grids)
    d11, interior, mismatch, predicted, residuals = [], {}, {}, [], []
    for n in grids:
        us = solve_plt(f, g, n, tol)
        v, h = us.values, us.h
        d = corner_d11(v, h)
        d11.append(d)
        vals = [mixed_fourth(v, h, k, ratio) for k in offsets]
        interior[n] = vals
        mismatch[n] = [abs(x - 0.0) for x in vals]
        predicted.append(-a * d * d)
        residuals.append(us.residual)
    rich = None
    if len(grids) >= 2:
        rich = (4 * d11[-1] - d11[-2]) / 3
    return CornerReport(grids, d11, list(offsets), interior, 0.0, mismatch, predicted, rich, residuals, a)
