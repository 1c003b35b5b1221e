"""Named experiment pipelines and their artifact manifests."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import density as dens
from . import geometry as geo
from . import io
from .plt import ScalarGrid, corner_obstruction_report, edge_report, invert_plt, min_convexity, solve_plt
from .probes import (
    boundary_preservation,
    default_threshold,
    displacement_jump,
    estimate_split_point,
    holder_fit,
    sample_points,
    sample_transport,
    subdiff_measure,
)
from .render import render_svg
from .sdot import LaguerreDiagram, eval_map, integrate, sample_target, solve_dual
from .witnesses import (
    barrier_difference,
    barrier_eval,
    barrier_sign_threshold,
    discrete_laplacian,
    regularity_exponent,
    residual_table,
)

log = logging.getLogger(__name__)

DEFAULTS: dict[str, dict] = {
    "identity": {"N": 2500, "tol": 1e-6, "test_grid": 50},
    "dumbbell": {"eps": 0.05, "N": 2000, "arc_vertices": 256, "tol": 1e-6, "delta": 0.01},
    "notch": {"eps": 0.2, "N": 5000, "tol": 1e-6, "delta": 0.02},
    "smoothed-notch": {"eps": 0.01, "alpha": 0.5, "N": 5000, "tol": 1e-6, "samples": 4000},
    "openness-sweep": {"eps": 0.2, "N": 5000, "tol": 1e-6, "delta": 0.02, "perturbation": 0.02},
    "plt-square": {"a": 1.0, "n": 129, "tol": 1e-8},
    "corner-obstruction": {"a": 1.0, "grids": [65, 129, 257], "tol": 1e-10},
    "barrier": {"eps": 0.2, "points": 100, "h": 1e-3},
    "regularity-fit": {"a": 1.0, "n": 321, "radii": [0.2, 0.1, 0.05], "tol": 1e-10,
                       "synthetic_alphas": [0.25, 0.5, 0.75]},
}

RECT = geo.Rectangle((0.0, 4.0), (-2.0, 2.0))
NOTCH_LINE = ((0.0, 0.0), (0.5, 0.0))


@dataclass
class ExperimentConfig:
    name: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "otlab-out"

    def __post_init__(self) -> None:
        if self.name not in DEFAULTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {sorted(DEFAULTS)}")
        unknown = set(self.params) - set(DEFAULTS[self.name])
        if unknown:
            raise ValueError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        merged = copy.deepcopy(DEFAULTS[self.name])
        merged.update(self.params)
        self.params = merged
        self.seed = int(self.seed)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        name = d.pop("experiment", None) or d.pop("name", None)
        if name is None:
            raise ValueError("config needs an 'experiment' field")
        seed = d.pop("seed", 0)
        out = d.pop("out_dir", None) or d.pop("out", None) or f"otlab-out/{name}"
        return cls(name, d, seed, out)

    def to_dict(self) -> dict:
        return {"experiment": self.name, "seed": self.seed, "out_dir": self.out_dir, **self.params}

    def with_param(self, key: str, value) -> "ExperimentConfig":
        params = dict(self.params)
        params[key] = value
        return ExperimentConfig(self.name, params, self.seed, self.out_dir)


class _Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []

    def json(self, name: str, obj) -> None:
        io.write_json(self.root / name, obj)
        self.files.append(name)

    def csv(self, name: str, header, rows) -> None:
        io.write_csv(self.root / name, header, rows)
        self.files.append(name)

    def matrix(self, name: str, values) -> None:
        io.write_matrix_csv(self.root / name, values)
        self.files.append(name)

    def svg(self, name: str, artifact: dict, style=None) -> None:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_svg(artifact, style))
        self.files.append(name)


# ---------------------------------------------------------------------------
# shared sdot plumbing


def solve_case(X: geo.Polygon, f, Y: geo.Polygon, g, N: int, tol: float) -> LaguerreDiagram:
    """Sample the target, rescale it to the source mass, and solve the dual."""
    nu = sample_target(Y, g, int(N))
    nu = nu.rescaled(integrate(X, f))
    return solve_dual(X, f, nu, tol=tol)


def monotonicity_violations(D: LaguerreDiagram, pairs: int = 10_000, seed: int = 0) -> int:
    """Number of sampled pairs with (T(x) - T(x')).(x - x') < 0."""
    rng = np.random.default_rng(seed)
    x = sample_points(D.source, 2 * pairs, rng)
    a, b = x[:pairs], x[pairs:]
    inner = ((eval_map(D, a) - eval_map(D, b)) * (a - b)).sum(1)
    return int((inner < 0).sum())


def solver_summary(D: LaguerreDiagram, tol: float, seed: int) -> dict:
    total = math.fsum(D.target_masses)
    areas = D.cell_areas()
    return {
        "sites": len(D),
        "spacing": D.mean_spacing,
        "iterations": D.iterations,
        "residual_history": list(D.history),
        "max_mass_residual": float(np.abs(D.residual()).max()),
        "mass_residual_bound": tol * total / len(D),
        "cell_area_sum": math.fsum(areas),
        "source_area": D.source.area,
        "monotonicity_violations": monotonicity_violations(D, seed=seed),
    }


def diagram_artifact(D: LaguerreDiagram, target: geo.Polygon | None = None, probes=()) -> dict:
    out = D.to_dict()
    if target is not None:
        out["target"] = target.to_dict()
    out["probes"] = [np.asarray(p, float).tolist() for p in probes]
    return out


# ---------------------------------------------------------------------------
# experiments


def _identity(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    Q = geo.build_domain(geo.Square(1.0))
    one = dens.Constant(1.0)
    D = solve_case(Q, one, Q, one, P["N"], P["tol"])
    t = np.linspace(0.0, 1.0, int(P["test_grid"]))
    gx, gy = np.meshgrid(t, t, indexing="ij")
    x = np.column_stack([gx.ravel(), gy.ravel()])
    Tx = eval_map(D, x)
    disp = np.linalg.norm(Tx - x, axis=1)
    out.csv("displacement.csv", ["x1", "x2", "T1", "T2", "displacement"],
            np.column_stack([x, Tx, disp]).tolist())
    out.json("diagram.json", diagram_artifact(D))
    out.svg("map.svg", diagram_artifact(D))
    s = solver_summary(D, P["tol"], cfg.seed)
    s.update({"max_displacement": float(disp.max()), "bound": 2 * D.mean_spacing,
              "boundary": boundary_preservation(D).to_dict()})
    return s


def _dumbbell(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    k = int(P["arc_vertices"])
    X = geo.build_domain(geo.Disc(1.0, k))
    Y = geo.build_domain(geo.Dumbbell(P["eps"], k))
    one = dens.Constant(1.0)
    D = solve_case(X, one, Y, one, P["N"], P["tol"])
    seg = ((0.0, -1.0), (0.0, 1.0))
    prof = displacement_jump(D, ((0.0, -0.9), (0.0, 0.9)), P["delta"], 200)
    out.csv("jump_profile.csv", ["s", "jump", "skipped"], prof.rows())
    widths = [c * D.mean_spacing for c in (1.0, 2.0, 4.0)]
    sweep = [[w, subdiff_measure(D, seg, w)] for w in widths]
    out.csv("subdiff_tube_sweep.csv", ["tube_width", "subdiff_measure"], sweep)
    out.json("diagram.json", diagram_artifact(D, Y, [seg]))
    out.svg("map.svg", diagram_artifact(D, Y, [seg]))
    s = solver_summary(D, P["tol"], cfg.seed)
    s.update({"subdiff_measure": subdiff_measure(D, seg), "tube_width": 2 * D.mean_spacing,
              "max_jump": prof.max_jump, "delta": prof.delta, "r_eps": geo.dumbbell_radius(P["eps"]),
              "target_area": Y.area})
    return s


def _notch_diagram(P: dict, f=None, g=None) -> tuple[LaguerreDiagram, geo.Polygon]:
    X = geo.build_domain(RECT)
    Y = geo.build_domain(geo.NotchedRectangle(P["eps"]))
    one = dens.Constant(1.0)
    return solve_case(X, f or one, Y, g or one, P["N"], P["tol"]), Y


def _split_summary(D: LaguerreDiagram, delta: float) -> dict:
    out = {}
    for side in ("both", "upper", "lower"):
        est = estimate_split_point(D, delta=delta, side=side)
        out[side] = {"t_hat": est.t_hat, "split": est.split, "threshold": est.threshold}
    return out


def _notch(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    D, Y = _notch_diagram(P)
    prof = displacement_jump(D, NOTCH_LINE, P["delta"], 200)
    out.csv("jump_profile.csv", ["s", "jump", "skipped"], prof.rows())
    split = _split_summary(D, P["delta"])
    art = diagram_artifact(D, Y, [NOTCH_LINE])
    out.json("diagram.json", art)
    out.svg("map.svg", art)
    s = solver_summary(D, P["tol"], cfg.seed)
    s.update({"max_jump": prof.max_jump, "delta": prof.delta, "jump_threshold": default_threshold(D),
              "split": split})
    return s


def _smoothed_notch(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    X = geo.build_domain(RECT)
    Y = geo.build_domain(geo.SmoothedNotch(P["eps"], P["alpha"]))
    one = dens.Constant(1.0)
    D = solve_case(X, one, Y, one, P["N"], P["tol"])
    S = sample_transport(D, int(P["samples"]), cfg.seed)
    fit = holder_fit(S, seed=cfg.seed)
    out.csv("holder_pairs.csv", ["log_distance", "log_image_distance"],
            np.column_stack([fit.log_dist, fit.log_image_dist]).tolist())
    prof = displacement_jump(D, NOTCH_LINE, None, 200)
    out.csv("jump_profile.csv", ["s", "jump", "skipped"], prof.rows())
    art = diagram_artifact(D, Y, [NOTCH_LINE])
    out.json("diagram.json", art)
    out.svg("map.svg", art)
    s = solver_summary(D, P["tol"], cfg.seed)
    s.update({"holder_exponent": fit.exponent, "holder_log_constant": fit.log_constant,
              "holder_pairs": fit.n_pairs, "holder_window": list(fit.window),
              "max_jump": prof.max_jump, "jump_threshold": default_threshold(D),
              "split": _split_summary(D, None), "target_area": Y.area})
    return s


def openness_perturbations(eps: float) -> list[tuple[str, object, object]]:
    """(label, source density, target density) for the openness experiment.

    The literal rescalings by 1 +- eps leave the balanced problem unchanged;
    the tilts 1 +- (eps/8) x1 x2 have sup-norm eps on the rectangle and break
    the mirror symmetry in x2 while keeping the total mass.
    """
    one = dens.Constant(1.0)
    return [
        ("base", one, one),
        ("source_scaled_up", dens.Scaled(1 + eps, one), one),
        ("source_scaled_down", dens.Scaled(1 - eps, one), one),
        ("target_scaled_up", one, dens.Scaled(1 + eps, one)),
        ("target_scaled_down", one, dens.Scaled(1 - eps, one)),
        ("source_tilt_up", dens.AffineProduct(eps / 8), one),
        ("source_tilt_down", dens.AffineProduct(-eps / 8), one),
    ]


def _openness(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    rows, cases = [], {}
    base = None
    for label, f, g in openness_perturbations(P["perturbation"]):
        D, _ = _notch_diagram(P, f, g)
        J = displacement_jump(D, NOTCH_LINE, P["delta"], 200).max_jump
        if base is None:
            base = J
        cases[label] = {"max_jump": J, "ratio": J / base if base else math.nan,
                        "source_density": dens.to_dict(f), "target_density": dens.to_dict(g),
                        "spacing": D.mean_spacing, "max_mass_residual": float(np.abs(D.residual()).max())}
        rows.append([label, J, J / base if base else math.nan])
    out.csv("openness.csv", ["case", "max_jump", "ratio_to_base"], rows)
    return {"base_jump": base, "cases": cases,
            "min_ratio": min(c["ratio"] for c in cases.values())}


def _plt_square(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    f, g = dens.AffineProduct(P["a"]), dens.Constant(1 + P["a"] / 4)
    u = solve_plt(f, g, int(P["n"]), P["tol"])
    out.matrix("ustar.csv", u.values)
    out.json("ustar.json", u.meta())
    S = invert_plt(u)
    out.csv("transport.csv", ["x1", "x2", "T1", "T2"], np.column_stack([S.sources, S.images]).tolist())
    rep = edge_report(u)
    out.json("edge_report.json", rep)
    out.svg("map.svg", {"sources": S.sources.tolist(), "images": S.images.tolist()})
    return {"residual": u.residual, "iterations": u.iterations, "min_second_p_difference": min_convexity(u.values),
            "h": u.h, "edge_report": rep}


def _corner(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    R = corner_obstruction_report(P["a"], P["grids"], P["tol"])
    out.json("corner_report.json", R.to_dict())
    rows = []
    for n, d in zip(R.grids, R.d11):
        for k, v in zip(R.offsets, R.interior[n]):
            rows.append([n, k, d, v, abs(v - R.boundary_trace)])
    out.csv("corner_table.csv", ["n", "offset", "d11", "interior", "mismatch"], rows)
    d = R.d11[-1]
    return {"d11": R.d11, "d11_richardson": R.d11_richardson, "finest_mismatch": R.mismatch_at(R.finest),
            "half_d11_squared": 0.5 * d * d, "non_decay_ratio": R.non_decay_ratio}


def _barrier(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    eps, h = P["eps"], P["h"]
    rng = np.random.default_rng(cfg.seed)
    m = int(P["points"])
    p = rng.uniform(0.25, 2.0, m)
    x2 = rng.uniform(-2.0, 2.0, m)
    lap = discrete_laplacian(lambda a, b: barrier_eval(eps, a, b), p, x2, h)
    out.csv("harmonicity.csv", ["p", "x2", "laplacian"], np.column_stack([p, x2, lap]).tolist())
    ps = barrier_sign_threshold(eps)
    grid = np.concatenate([np.geomspace(ps * 1e-3, 1.0, 400, endpoint=False), np.linspace(1.0, 8.0, 400)])
    sign = np.sign(barrier_difference(eps, grid))
    out.csv("sign_scan.csv", ["p", "sign"], np.column_stack([grid, sign]).tolist())
    return {"p_star": ps, "log_p_star": math.log(ps), "difference_at_tenth": float(barrier_difference(eps, ps / 10)),
            "max_abs_laplacian": float(np.abs(lap).max()), "sign_changes_on_0_8": int((np.diff(sign) != 0).sum()),
            "b_at_origin": float(barrier_eval(eps, 0.0, 0.0))}


def _regularity(cfg: ExperimentConfig, out: _Outputs) -> dict:
    P = cfg.params
    a, n = P["a"], int(P["n"])
    u = solve_plt(dens.AffineProduct(a), dens.Constant(1 + a / 4), n, P["tol"])
    # a1 = f(d1 u*, x2) = 1 + a x2 d1 u* has zero gradient at the corner; a2 = g is constant
    table = residual_table(u, [[0.0, 0.0], [0.0, 0.0]], P["radii"], a_at_0=(1.0, 1 + a / 4))
    fit = regularity_exponent(table)
    out.csv("residuals.csv", ["r", "residual"], table)
    synth = {}
    x = np.linspace(0.0, 1.0, n)
    p, x2 = np.meshgrid(x, x, indexing="ij")
    for a0 in P["synthetic_alphas"]:
        v = ScalarGrid((p**2 - x2**2) / 2 + np.hypot(p, x2) ** (3 + a0))
        synth[str(a0)] = regularity_exponent(residual_table(v, [[0.0, 0.0], [0.0, 0.0]], P["radii"])).alpha
    return {"alpha_hat": fit.alpha, "fit": fit.to_dict(), "synthetic": synth}


PIPELINES = {
    "identity": _identity,
    "dumbbell": _dumbbell,
    "notch": _notch,
    "smoothed-notch": _smoothed_notch,
    "openness-sweep": _openness,
    "plt-square": _plt_square,
    "corner-obstruction": _corner,
    "barrier": _barrier,
    "regularity-fit": _regularity,
}


def run(cfg: ExperimentConfig) -> dict:
    """Run one experiment; write its artifacts and a manifest with content hashes."""
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    out = _Outputs(root)
    manifest = {"experiment": cfg.name, "config": cfg.to_dict(), "status": "ok", "files": []}
    try:
        summary = PIPELINES[cfg.name](cfg, out)
        summary["seed"] = cfg.seed
        out.json("summary.json", summary)
    except Exception as exc:
        manifest["status"] = "partial"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest["files"] = [{"path": name, "sha256": io.sha256(root / name)} for name in out.files]
        io.write_json(root / "manifest.json", manifest)
    return manifest
