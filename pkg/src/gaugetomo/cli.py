"""Command-line experiment runner.

Every subcommand except ``compare`` reads a YAML config (``--config``) and
writes artifacts to ``--out``.  A one-line JSON summary goes to stdout.
Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 for
``compare`` when a gap exceeds the tolerance.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import brt, dtn, recon
from .config import ConfigError, Library, build_scene, load_config
from .fields import ScalarField, gauge_equivalent
from .scene import SceneError, validate
from .tracer import DEFAULT_MAX_REFLECTIONS, BrokenRay, Grazing, Trapped, trace

THREADS_ENV = "GAUGETOMO_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GAP = 0, 1, 2, 3

log = logging.getLogger("gaugetomo")


class NumericalFailure(RuntimeError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n")
    return path


# -- parameter helpers ------------------------------------------------------

def _param(p: dict, key: str, kind, default=None, required=False):
    if key not in p:
        if required:
            raise ConfigError(f"params.{key}", "missing required key")
        return default
    v = p[key]
    try:
        if kind is bool:
            if not isinstance(v, bool):
                raise TypeError
            return v
        if kind is int and (isinstance(v, bool) or float(v) != int(v)):
            raise TypeError
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"params.{key}", f"expected {kind.__name__}, got {v!r}") from None


def _k2(p: dict) -> complex:
    v = p.get("k2")
    if v is None:
        raise ConfigError("params.k2", "missing required key")
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    try:
        return complex(float(v))
    except (TypeError, ValueError):
        raise ConfigError("params.k2", f"expected a number or [re, im], got {v!r}") from None


def _sampling(p: dict, default_sector="outward") -> brt.SamplingSpec:
    ns = _param(p, "ns", int, 64)
    nt = _param(p, "ntheta", int, 64)
    sector = p.get("sector", default_sector)
    if sector not in ("outward", "full"):
        raise ConfigError("params.sector", "expected 'outward' or 'full'")
    if ns < 1 or nt < 1:
        raise ConfigError("params.ns" if ns < 1 else "params.ntheta", "must be positive")
    return brt.SamplingSpec(ns, nt, sector)


def _smooth_scene(cfg):
    scene = build_scene(cfg)
    problems = validate(scene)
    if problems:
        raise ConfigError("scene", "; ".join(problems))
    return scene


# -- tasks ------------------------------------------------------------------

def task_trace(cfg, lib, out, ctx):
    p = cfg["params"]
    scene = _smooth_scene(cfg)
    s0 = _param(p, "s0", float, required=True)
    if "direction" in p:
        ang = _param(p, "direction", float)
        d = np.array([math.cos(ang), math.sin(ang)])
    elif "direction_vector" in p:
        d = np.asarray(p["direction_vector"], dtype=float)
        d = d / np.linalg.norm(d)
    else:
        raise ConfigError("params.direction", "missing required key")
    max_ref = _param(p, "max_reflections", int, DEFAULT_MAX_REFLECTIONS)
    try:
        res = trace(scene, s0, d, max_ref)
    except SceneError as exc:
        raise ConfigError("params.direction", str(exc)) from exc
    doc = {"kind": "trace", "scene": scene.to_dict(), "s0": s0, "direction": d}
    if isinstance(res, BrokenRay):
        doc.update(outcome="ok", vertices=res.vertices(), n_reflections=res.n_reflections,
                   total_length=res.total_length, s_start=res.s_start, s_end=res.s_end,
                   end_direction=res.end_direction)
    elif isinstance(res, Trapped):
        doc.update(outcome="trapped", n_reflections=res.reflections)
    else:
        assert isinstance(res, Grazing)
        doc.update(outcome="grazing", grazing_point=res.hit.point, component=res.hit.component)
    write_json(out / "trace.json", doc)
    return ["trace.json"], {"outcome": doc["outcome"], "n_reflections": doc.get("n_reflections", 0)}


def _field_for(lib, p, kind, key="field"):
    name = p.get(key)
    if name is None:
        raise ConfigError(f"params.{key}", "missing required key")
    where = f"params.{key}"
    return lib.scalar(name, where) if kind == "scalar_integral" else lib.vector(name, where)


def _kind(p):
    kind = p.get("kind", "scalar_integral")
    if kind not in brt.KINDS:
        raise ConfigError("params.kind", f"expected one of {', '.join(brt.KINDS)}")
    return kind


def task_sinogram(cfg, lib, out, ctx):
    p = cfg["params"]
    scene = _smooth_scene(cfg)
    kind = _kind(p)
    fld = _field_for(lib, p, kind)
    spec = _sampling(p)
    step = _param(p, "step", float)
    sino = brt.generate_sinogram(scene, fld, kind, spec, _param(p, "max_reflections", int, DEFAULT_MAX_REFLECTIONS),
                                 step, threads=ctx["threads"])
    sino.to_csv(out / "sinogram.csv")
    summary = {"rows": len(sino), "ok_fraction": float(sino.ok.mean()),
               "trapped_fraction": sino.metadata["trapped_fraction"],
               "grazing_fraction": sino.metadata["grazing_fraction"]}
    return ["sinogram.csv", "sinogram.json"], summary


def _write_grid_csv(path: Path, grid: recon.PixelGrid, image: np.ndarray):
    xs, ys = grid.centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value_re", "value_im"])
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                v = complex(image[i, j])
                w.writerow([repr(float(x)), repr(float(y)), repr(v.real), repr(v.imag)])


def task_reconstruct(cfg, lib, out, ctx):
    p = cfg["params"]
    scene = _smooth_scene(cfg)
    max_ref = _param(p, "max_reflections", int, DEFAULT_MAX_REFLECTIONS)
    truth = None
    if "sinogram" in p:
        path = Path(p["sinogram"])
        path = path if path.is_absolute() else cfg["_base"] / path
        try:
            sino = brt.Sinogram.from_csv(path)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("params.sinogram", f"cannot load sinogram ({exc})") from exc
        if sino.kind != "scalar_integral":
            raise ConfigError("params.sinogram", "reconstruction needs a scalar_integral sinogram")
    else:
        truth = _field_for(lib, p, "scalar_integral")
        sino = brt.generate_sinogram(scene, truth, "scalar_integral", _sampling(p, "full"), max_ref,
                                     _param(p, "step", float), threads=ctx["threads"])
    if "truth" in p:
        truth = lib.scalar(p["truth"], "params.truth")
    if _param(p, "straight_only", bool, False):
        keep = sino.n_reflections == 0
        sino.outcome = np.where(keep, sino.outcome, "excluded")
    grid = recon.PixelGrid(scene, _param(p, "nx", int, 32), _param(p, "ny", int, 32))
    system = recon.build_system(scene, grid, sino, max_reflections=max_ref)
    lam = _param(p, "regularization", float, 1e-6)
    if lam < 0:
        raise ConfigError("params.regularization", "must be nonnegative")
    fld, info = recon.reconstruct_scalar(system, lam, _param(p, "rtol", float, 1e-8), _param(p, "max_iter", int))
    x = info["cell_values"]
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("reconstruction produced non-finite values (solver divergence)")
    if _param(p, "require_convergence", bool, False) and not info["converged"]:
        raise NumericalFailure(f"CGLS did not converge (relative residual {info['history'][-1]:.3e})")
    _write_grid_csv(out / "reconstruction.csv", grid, recon.cell_image(grid, system.cells, x))
    thr = _param(p, "coverage_threshold", int, 4)
    report = {
        "kind": "reconstruction",
        "grid": {"nx": grid.nx, "ny": grid.ny, "lo": grid.lo, "hi": grid.hi},
        "regularization": lam,
        "iterations": info["iterations"],
        "converged": info["converged"],
        "stagnated": info["stagnated"],
        "residual_history": info["history"],
        "data_residual": info["data_residual"],
        "n_rays": int(system.matrix.shape[0]),
        "n_unknowns": int(system.matrix.shape[1]),
        "flagged_cells": system.flagged_cells,
    }
    if truth is not None:
        cov = system.coverage >= thr
        report["relative_error"] = recon.relative_error(grid, system.cells, x, truth, cov)
        report["coverage_threshold"] = thr
    write_json(out / "reconstruction.json", report)
    summary = {k: report[k] for k in ("iterations", "converged", "data_residual")}
    if "relative_error" in report:
        summary["relative_error"] = report["relative_error"]
    return ["reconstruction.csv", "reconstruction.json"], summary


def _pair(lib, p, key):
    spec = p.get(key)
    if not isinstance(spec, dict):
        raise ConfigError(f"params.{key}", "expected a mapping with 'vector' and 'scalar'")
    A = lib.vector(spec.get("vector", {"preset": "zero"}), f"params.{key}.vector")
    V = lib.scalar(spec.get("scalar", {"preset": "constant", "value": 0.0}), f"params.{key}.scalar")
    return A, V


def _rect_scene(cfg):
    return build_scene(cfg)


def _dtn(scene, A, V, k2, margin):
    try:
        return dtn.dtn_matrix(scene, A, V, k2, margin=margin)
    except dtn.NearSingularError as exc:
        raise NumericalFailure(str(exc)) from exc


def task_dtn(cfg, lib, out, ctx):
    p = cfg["params"]
    scene = _rect_scene(cfg)
    A = lib.vector(p.get("vector", {"preset": "zero"}), "params.vector")
    V = lib.scalar(p.get("scalar", {"preset": "constant", "value": 0.0}), "params.scalar")
    lam = _dtn(scene, A, V, _k2(p), _param(p, "margin", float, 1e-10))
    lam.to_json(out / "dtn.json")
    return ["dtn.json"], {"n_boundary": len(lam.nodes), "hermiticity_residual": dtn.hermiticity_residual(lam)}


def task_dtn_compare(cfg, lib, out, ctx):
    p = cfg["params"]
    scene = _rect_scene(cfg)
    k2 = _k2(p)
    margin = _param(p, "margin", float, 1e-10)
    tol = _param(p, "tol", float, 1e-9)
    la = _dtn(scene, *_pair(lib, p, "a"), k2, margin)
    lb = _dtn(scene, *_pair(lib, p, "b"), k2, margin)
    la.to_json(out / "dtn_a.json")
    lb.to_json(out / "dtn_b.json")
    gap = dtn.relative_gap(la, lb)
    gap["verdict"] = "same" if gap["relative_frobenius"] <= tol else "different"
    gap["tol"] = tol
    write_json(out / "dtn_compare.json", {"kind": "dtn-compare", **gap})
    return ["dtn_a.json", "dtn_b.json", "dtn_compare.json"], gap


def task_gauge_check(cfg, lib, out, ctx):
    p = cfg["params"]
    scene = _smooth_scene(cfg)
    A1 = lib.vector(p.get("a"), "params.a") if "a" in p else None
    A2 = lib.vector(p.get("b"), "params.b") if "b" in p else None
    if A1 is None or A2 is None:
        raise ConfigError("params.a" if A1 is None else "params.b", "missing required key")
    spec = _sampling(p)
    tol = _param(p, "tol", float, 1e-7)
    max_ref = _param(p, "max_reflections", int, DEFAULT_MAX_REFLECTIONS)
    rays = brt.trace_grid(scene, spec, max_ref, ctx["threads"])
    step = _param(p, "step", float)
    w1 = brt.generate_sinogram(scene, A1, "phase_factor", step=step, rays=rays, threads=ctx["threads"])
    w2 = brt.generate_sinogram(scene, A2, "phase_factor", step=step, rays=rays, threads=ctx["threads"])
    w1.to_csv(out / "phase_a.csv")
    w2.to_csv(out / "phase_b.csv")
    res = recon.detect_gauge_class(w1, w2, tol)
    doc = {"kind": "gauge-check", "verdict": res.verdict, "max_gap": res.max_gap, "tol": tol,
           "witness": None if res.witness is None else {"s": res.witness[0], "theta": res.witness[1]}}
    if _param(p, "field_check", bool, True):
        dec = gauge_equivalent(A1, A2, scene)
        doc["field_check"] = {"verdict": dec.verdict, "reason": dec.reason}
    write_json(out / "gauge_check.json", doc)
    arts = ["phase_a.csv", "phase_a.json", "phase_b.csv", "phase_b.json", "gauge_check.json"]
    return arts, {"verdict": res.verdict, "max_gap": res.max_gap, "witness": doc["witness"]}


def random_phantoms(rng: np.random.Generator, count: int, amplitude=(0.5, 2.0), width=(0.25, 0.5),
                    radius=(1.25, 1.75)):
    """Gaussian phantoms centred in an annulus, with parameters for the record."""
    out = []
    for _ in range(count):
        r = rng.uniform(*radius)
        ang = rng.uniform(0.0, 2.0 * math.pi)
        c = (r * math.cos(ang), r * math.sin(ang))
        a = rng.uniform(*amplitude)
        w = rng.uniform(*width)
        out.append(({"center": c, "width": w, "amplitude": a}, ScalarField.gaussian(c, w, a)))
    return out


def task_stability(cfg, lib, out, ctx):
    p = cfg["params"]
    scene = _smooth_scene(cfg)
    if p.get("sector", "full") != "full":
        raise ConfigError("params.sector", "the stability probe needs sector 'full'")
    spec = _sampling({**p, "sector": "full"}, "full")
    grid = recon.PixelGrid(scene, _param(p, "nx", int, 32), _param(p, "ny", int, 32))
    phantoms = []
    for name in p.get("phantoms", []) or []:
        phantoms.append(({"preset": name}, lib.scalar(name, "params.phantoms")))
    fam = p.get("family")
    if fam is not None:
        if not isinstance(fam, dict):
            raise ConfigError("params.family", "expected a mapping")
        seed = ctx["seed"] if ctx["seed"] is not None else fam.get("seed", 0)
        rng = np.random.default_rng(int(seed))
        try:
            phantoms.extend(random_phantoms(
                rng, int(fam.get("count", 20)), tuple(fam.get("amplitude", (0.5, 2.0))),
                tuple(fam.get("width", (0.25, 0.5))), tuple(fam.get("radius", (1.25, 1.75)))))
        except (TypeError, ValueError) as exc:
            raise ConfigError("params.family", f"bad family parameters ({exc})") from exc
    if not phantoms:
        raise ConfigError("params.phantoms", "no phantoms given (use 'phantoms' or 'family')")
    squared = _param(p, "squared_variant", bool, True)
    max_ref = _param(p, "max_reflections", int, DEFAULT_MAX_REFLECTIONS)
    rays = brt.trace_grid(scene, spec, max_ref, ctx["threads"])
    step = _param(p, "step", float)
    rows = []
    for desc, f in phantoms:
        sino = brt.generate_sinogram(scene, f, "scalar_integral", step=step, rays=rays, threads=ctx["threads"])
        rep = recon.stability_report(sino, f, grid).to_dict()
        if not squared:
            rep.pop("rhs_squared")
            rep.pop("ratio_squared")
        rows.append({"phantom": desc, **rep})
    doc = {"kind": "stability", "sampling": spec.to_dict(), "phantoms": rows}
    finite = [r["ratio"] for r in rows if isinstance(r["ratio"], float) and math.isfinite(r["ratio"])]
    doc["all_finite"] = len(finite) == len(rows)
    if finite and min(finite) > 0:
        doc["empirical_constant"] = max(finite)
        doc["spread"] = max(finite) / min(finite)
    write_json(out / "stability.json", doc)
    return ["stability.json"], {k: doc[k] for k in ("all_finite", "empirical_constant", "spread") if k in doc}


TASK_FUNCS = {
    "trace": task_trace,
    "sinogram": task_sinogram,
    "reconstruct": task_reconstruct,
    "dtn": task_dtn,
    "dtn-compare": task_dtn_compare,
    "gauge-check": task_gauge_check,
    "stability": task_stability,
}


# -- compare ----------------------------------------------------------------

def load_artifact(path: Path):
    """Return ``(kind, value)`` for a sinogram CSV or a D-to-N JSON file."""
    if path.suffix == ".csv":
        return "sinogram", brt.Sinogram.from_csv(path)
    doc = json.loads(path.read_text())
    if doc.get("kind") == "dtn":
        return "dtn", dtn.DtnMatrix.from_dict(doc)
    raise ValueError(f"{path}: unsupported artifact kind {doc.get('kind')!r}")


def compare_artifacts(a: Path, b: Path, tol: float) -> tuple[dict, bool]:
    ka, va = load_artifact(a)
    kb, vb = load_artifact(b)
    if ka != kb:
        raise ConfigError("compare", f"artifact kinds differ ({ka} vs {kb})")
    if ka == "sinogram":
        if va.kind != vb.kind:
            raise ConfigError("compare", f"sinogram kinds differ ({va.kind} vs {vb.kind})")
        try:
            m = brt.data_distance(va, vb)
        except ValueError as exc:
            raise ConfigError("compare", str(exc)) from exc
        exceeded = m["max_abs"] > tol or m["outcome_mismatches"] > 0
    else:
        try:
            m = dtn.relative_gap(va, vb)
        except ValueError as exc:
            raise ConfigError("compare", str(exc)) from exc
        exceeded = m["relative_frobenius"] > tol
    return {"kind": ka, "tol": tol, **m, "exceeded": exceeded}, exceeded


# -- entry point ------------------------------------------------------------

def _default_threads() -> int:
    v = os.environ.get(THREADS_ENV)
    if v is None:
        return 1
    try:
        n = int(v)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {v!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, "must be positive")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gaugetomo", description="Broken-ray tomography and D-to-N experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in TASK_FUNCS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
    cp = sub.add_parser("compare")
    cp.add_argument("a", type=Path)
    cp.add_argument("b", type=Path)
    cp.add_argument("--tol", type=float, default=1e-9)
    cp.add_argument("--out", type=Path, default=None)
    return ap


def _emit(summary: dict):
    summary["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    sys.stdout.write(json.dumps(_jsonable(summary), sort_keys=True) + "\n")
    sys.stdout.flush()


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    cmd = args.command
    try:
        if cmd == "compare":
            report, exceeded = compare_artifacts(args.a, args.b, args.tol)
            arts = []
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                write_json(args.out / "compare.json", report)
                arts = ["compare.json"]
            code = EXIT_GAP if exceeded else EXIT_OK
            _emit({"task": "compare", "status": "gap" if exceeded else "ok", "exit_code": code,
                   "artifacts": arts, **report})
            return code
        cfg = load_config(args.config, cmd)
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise ConfigError("--threads", "must be positive")
        out = args.out if args.out is not None else Path(cfg.get("output", "out"))
        if not out.is_absolute() and args.out is None:
            out = cfg["_base"] / out
        out.mkdir(parents=True, exist_ok=True)
        seed = args.seed if args.seed is not None else cfg.get("seed")
        lib = Library(cfg, cfg["_base"])
        arts, summary = TASK_FUNCS[cmd](cfg, lib, out, {"threads": threads, "seed": seed})
        _emit({"task": cmd, "status": "ok", "exit_code": EXIT_OK, "out": str(out), "artifacts": arts, **summary})
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _emit({"task": cmd, "status": "config_error", "exit_code": EXIT_CONFIG, "key": exc.key, "message": str(exc)})
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        key = "artifact" if cmd == "compare" else "params"
        print(f"config error: {key}: {exc}", file=sys.stderr)
        _emit({"task": cmd, "status": "config_error", "exit_code": EXIT_CONFIG, "key": key, "message": str(exc)})
        return EXIT_CONFIG
    except (NumericalFailure, dtn.NearSingularError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _emit({"task": cmd, "status": "numerical_failure", "exit_code": EXIT_NUMERIC, "message": str(exc)})
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
