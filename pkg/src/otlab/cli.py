"""Command line entry point: ``otlab run | render | sweep``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

EXIT_OK, EXIT_PARAM, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("otlab")


def _thread_cap() -> int | None:
    raw = os.environ.get("OTLAB_THREADS")
    if not raw:
        return None
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"OTLAB_THREADS must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ValueError("OTLAB_THREADS must be a positive integer")
    return k


def _apply_thread_cap(k: int | None) -> None:
    # must run before numpy / numba spin up their pools
    if k is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = str(k)


def _load_config(path: str):
    from .experiments import ExperimentConfig

    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config must be a flat JSON object")
    return ExperimentConfig.from_dict(raw)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _run_one(cfg_dict: dict) -> dict:
    from .experiments import ExperimentConfig, run

    return run(ExperimentConfig.from_dict(cfg_dict))


def cmd_run(args) -> int:
    from .experiments import run

    cfg = _load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    manifest = run(cfg)
    print(Path(cfg.out_dir) / "manifest.json")
    log.info("%s: %d files", manifest["experiment"], len(manifest["files"]))
    return EXIT_OK


def cmd_render(args) -> int:
    from . import io
    from .render import render_svg

    artifact = io.read_json(args.artifact)
    style = json.loads(args.style) if args.style else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_svg(artifact, style))
    print(out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from . import io

    base = _load_config(args.config)
    if args.out:
        base.out_dir = args.out
    if args.param not in base.params:
        raise ValueError(f"{base.name} has no parameter {args.param!r}")
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("--values is empty")
    members = []
    for v in values:
        cfg = base.with_param(args.param, v)
        cfg.out_dir = str(Path(base.out_dir) / f"{args.param}={v}")
        members.append(cfg.to_dict())
    jobs = max(1, args.jobs)
    cap = _thread_cap()
    if cap is not None:
        jobs = min(jobs, cap)
    if jobs == 1:
        manifests = [_run_one(m) for m in members]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            manifests = list(pool.map(_run_one, members))
    summary = {
        "experiment": base.name,
        "param": args.param,
        "members": [{"value": v, "out_dir": m["out_dir"], "status": r["status"]}
                    for v, m, r in zip(values, members, manifests)],
    }
    path = io.write_json(Path(base.out_dir) / "sweep.json", summary)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otlab", description="2D optimal transport laboratory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a flat JSON config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("render", help="render a diagram or samples JSON artifact to SVG")
    d.add_argument("artifact")
    d.add_argument("--out", required=True)
    d.add_argument("--style", help="JSON object overriding style keys")
    d.set_defaults(func=cmd_render)

    s = sub.add_parser("sweep", help="run an experiment over several values of one parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="output directory (overrides the config)")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_thread_cap(_thread_cap())
        from .sdot import ConvergenceError

        try:
            return args.func(args)
        except ConvergenceError as exc:
            print(f"otlab: solver did not converge: {exc}", file=sys.stderr)
            return EXIT_SOLVER
    except (ValueError, TypeError, KeyError) as exc:
        print(f"otlab: parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except OSError as exc:
        print(f"otlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
