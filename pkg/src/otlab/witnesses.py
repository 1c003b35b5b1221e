"""Closed-form witnesses: the harmonic barrier near the notch tip and
approximating polynomials for the corner regularity diagnostic."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import bisect

from .plt import ScalarGrid, corner_d11


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ValueError("eps must be positive")


def _re_zlogz(p, x2):
    """Re(z log z) for z = p + i x2, principal branch, 0 at the origin."""
    p = np.asarray(p, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = np.hypot(p, x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p * np.log(r) - x2 * np.arctan2(x2, p)
    return np.where(r > 0, out, 0.0)


def barrier_difference(eps: float, p, x2=0.0):
    """b(p, x2) - b(0, 0), evaluated without the additive constant so tiny values survive."""
    _check_eps(eps)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("the barrier is defined for p >= 0 only")
    x2 = np.asarray(x2, dtype=float)
    out = eps * (2 / math.pi) * _re_zlogz(p, x2) + 2 * (x2**2 - p**2) + 16 * p
    return out[()] if out.ndim == 0 else out


def barrier_eval(eps: float, p, x2):
    """b(p, x2) = eps (2/pi) Re(z log z) + eps + 2 (x2^2 - p^2) + 16 p on p >= 0.

    The logarithm uses the principal branch, cut along the negative real axis,
    which the half-plane p >= 0 never crosses.
    """
    return barrier_difference(eps, p, x2) + eps


def barrier_sign_threshold(eps: float) -> float:
    """Root p* of (2 eps/pi) p ln p + 16 p - 2 p^2 = 0 with the difference negative below it.

    Bisection runs in t = ln p, where the root sits near -8 pi / eps; p* itself
    underflows nothing for eps in (0, 1).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    c = 2 * eps / math.pi

    def phi(t: float) -> float:
        return c * t + 16 - 2 * math.exp(t)

    lo = -16 * math.pi / eps - 1
    hi = math.log(min(eps / math.pi, 1.0))
    t = bisect(phi, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=400)
    return math.exp(t)


def discrete_laplacian(fun, p, x2, h: float = 1e-3):
    """Five-point Laplacian of a vectorized function of (p, x2)."""
    p = np.asarray(p, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (fun(p + h, x2) + fun(p - h, x2) + fun(p, x2 + h) + fun(p, x2 - h) - 4 * fun(p, x2)) / h**2


# ---------------------------------------------------------------------------
# approximating polynomials


@dataclass(frozen=True)
class PolyApprox:
    """P(x) = p0 + p21 x1^2 + p22 x2^2 + p31 x1^3 + p32 x2^3."""

    p0: float
    p21: float
    p22: float
    p31: float
    p32: float

    @property
    def norm(self) -> float:
        return max(abs(c) for c in (self.p0, self.p21, self.p22, self.p31, self.p32))

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return self.p0 + self.p21 * x1**2 + self.p22 * x2**2 + self.p31 * x1**3 + self.p32 * x2**3

    def linear_image(self, grad_a, a_at_0=(1.0, 1.0)) -> tuple[float, float, float]:
        """(d0, d11, d12): coefficients of the affine part of a1 d11 P + a2 d22 P at 0."""
        (g11, g12), (g21, g22) = np.asarray(grad_a, dtype=float)
        a1, a2 = a_at_0
        d0 = 2 * a1 * self.p21 + 2 * a2 * self.p22
        d11 = 6 * a1 * self.p31 + 2 * self.p21 * g11 + 2 * self.p22 * g21
        d12 = 6 * a2 * self.p32 + 2 * self.p21 * g12 + 2 * self.p22 * g22
        return d0, d11, d12

    def is_approximating(self, grad_a, a_at_0=(1.0, 1.0), tol: float = 1e-12) -> bool:
        return all(abs(d) <= tol * max(1.0, self.norm) for d in self.linear_image(grad_a, a_at_0))

    def to_dict(self) -> dict:
        return asdict(self)


def approximating_poly(p21: float, grad_a, a_at_0=(1.0, 1.0), p0: float = 0.0) -> PolyApprox:
    """The unique approximating P with the given p21 and p0 (zero affine image)."""
    (g11, g12), (g21, g22) = np.asarray(grad_a, dtype=float)
    a1, a2 = a_at_0
    p22 = -a1 * p21 / a2
    p31 = -(2 * p21 * g11 + 2 * p22 * g21) / (6 * a1)
    p32 = -(2 * p21 * g12 + 2 * p22 * g22) / (6 * a2)
    return PolyApprox(float(p0), float(p21), float(p22), float(p31), float(p32))


def fit_approx_poly(
    v: ScalarGrid,
    grad_a,
    r: float,
    p21: float | None = None,
    a_at_0=(1.0, 1.0),
) -> tuple[PolyApprox, float]:
    """Best sup-norm approximating polynomial on the grid nodes of [0, r]^2.

    Once p21 is fixed the constraints determine every coefficient except p0,
    and the sup-norm optimum for p0 is the midrange of v - P. p21 defaults to
    half the one-sided second difference of v at the corner.
    """
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    h = v.h
    m = int(math.floor(r / h + 1e-9)) + 1
    if m < 8:
        raise ValueError(f"r = {r:g} spans {m} nodes per side; at least 8 are needed")
    if p21 is None:
        p21 = corner_d11(v.values, h) / 2
    P = approximating_poly(p21, grad_a, a_at_0)
    x = v.nodes[:m]
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    d = v.values[:m, :m] - P(x1, x2)
    p0 = 0.5 * (d.max() + d.min())
    P = PolyApprox(float(p0), P.p21, P.p22, P.p31, P.p32)
    return P, float(0.5 * (d.max() - d.min()))


def node_radius(v: ScalarGrid, r: float) -> float:
    """Largest grid coordinate not exceeding r: the radius the fit actually sees."""
    return (int(math.floor(r / v.h + 1e-9))) * v.h


def residual_table(v: ScalarGrid, grad_a, radii, p21: float | None = None, a_at_0=(1.0, 1.0)) -> list[tuple]:
    """Rows (effective radius, sup residual) for fit_approx_poly over the given radii."""
    return [(node_radius(v, r), fit_approx_poly(v, grad_a, r, p21, a_at_0)[1]) for r in radii]


@dataclass(frozen=True)
class RegularityFit:
    alpha: float
    slope: float
    intercept: float
    polynomial: bool
    radii: tuple
    residuals: tuple

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "slope": self.slope, "intercept": self.intercept,
                "polynomial": self.polynomial, "radii": list(self.radii), "residuals": list(self.residuals)}


def regularity_exponent(table, zero_tol: float = 1e-13) -> RegularityFit:
    """Slope of log residual against log r, minus 3.

    Residuals at or below ``zero_tol`` mean the data is polynomial at this
    resolution; the result is then alpha = +inf with the polynomial flag set.
    """
    rows = [(float(r), float(e)) for r, e in table]
    if len(rows) < 3:
        raise ValueError("need at least three radii")
    r = np.array([a for a, _ in rows])
    e = np.array([b for _, b in rows])
    if np.any(np.diff(r) >= 0) or np.any(r <= 0):
        raise ValueError("radii must be positive and strictly decreasing")
    if np.any(e < 0):
        raise ValueError("residuals must be nonnegative")
    if np.any(e <= zero_tol):
        return RegularityFit(math.inf, math.inf, math.nan, True, tuple(r), tuple(e))
    slope, intercept = np.polyfit(np.log(r), np.log(e), 1)
    return RegularityFit(float(slope - 3), float(slope), float(intercept), False, tuple(r), tuple(e))
