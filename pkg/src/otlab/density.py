"""Analytic densities: constants, the product family 1 + a*x1*x2, and rescalings.

All members are polynomials of degree <= 2, which the quadrature rules in
``otlab.sdot`` integrate exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import Polygon


@dataclass(frozen=True)
class Constant:
    c: float = 1.0


@dataclass(frozen=True)
class AffineProduct:
    """1 + a * x1 * x2."""

    a: float


@dataclass(frozen=True)
class Scaled:
    c: float
    inner: "DensityField"


DensityField = Union[Constant, AffineProduct, Scaled]


def coefficients(f: DensityField) -> np.ndarray:
    """Monomial coefficients of f in the basis (1, x, y, x^2, xy, y^2)."""
    if isinstance(f, Constant):
        return np.array([f.c, 0, 0, 0, 0, 0], dtype=float)
    if isinstance(f, AffineProduct):
        return np.array([1.0, 0, 0, 0, f.a, 0], dtype=float)
    if isinstance(f, Scaled):
        return f.c * coefficients(f.inner)
    raise TypeError(f"not a density: {f!r}")


def evaluate(f: DensityField, x, y=None) -> np.ndarray:
    """Evaluate at points; accepts an (m, 2) array or separate coordinate arrays."""
    if y is None:
        pts = np.asarray(x, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
    c = coefficients(f)
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y


def is_constant(f: DensityField) -> bool:
    return bool(np.all(coefficients(f)[1:] == 0))


def antiderivative_x(f: DensityField, s, x2) -> np.ndarray:
    """F(s, x2) = integral of f(t, x2) dt over t in [0, s]."""
    c = coefficients(f)
    s = np.asarray(s, dtype=float)
    return (c[0] + c[2] * x2 + c[5] * x2 * x2) * s + (c[1] + c[4] * x2) * s**2 / 2 + c[3] * s**3 / 3


def antiderivative_y(f: DensityField, x1, s) -> np.ndarray:
    """G(x1, s) = integral of f(x1, t) dt over t in [0, s]."""
    c = coefficients(f)
    s = np.asarray(s, dtype=float)
    return (c[0] + c[1] * x1 + c[3] * x1 * x1) * s + (c[2] + c[4] * x1) * s**2 / 2 + c[5] * s**3 / 3


def check_positive(f: DensityField, support: Polygon, samples: int = 64) -> float:
    """Return the minimum of f over a sample grid of the support; raise if not positive."""
    if isinstance(f, AffineProduct) and f.a <= -1:
        raise ValueError("AffineProduct density needs a > -1")
    x0, y0, x1, y1 = support.bounds
    gx, gy = np.meshgrid(np.linspace(x0, x1, samples), np.linspace(y0, y1, samples))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = np.vstack([pts[support.contains(pts)], support.vertices])
    lam = float(evaluate(f, pts).min())
    if not lam > 0:
        raise ValueError(f"density {f!r} is not positive on its support (min {lam:g})")
    return lam


def to_dict(f: DensityField) -> dict:
    if isinstance(f, Constant):
        return {"variant": "Constant", "c": f.c}
    if isinstance(f, AffineProduct):
        return {"variant": "AffineProduct", "a": f.a}
    if isinstance(f, Scaled):
        return {"variant": "Scaled", "c": f.c, "inner": to_dict(f.inner)}
    raise TypeError(f"not a density: {f!r}")


def from_dict(d: dict) -> DensityField:
    kind = d.get("variant")
    if kind == "Constant":
        return Constant(float(d["c"]))
    if kind == "AffineProduct":
        return AffineProduct(float(d["a"]))
    if kind == "Scaled":
        return Scaled(float(d["c"]), from_dict(d["inner"]))
    raise ValueError(f"unknown density variant {kind!r}")
