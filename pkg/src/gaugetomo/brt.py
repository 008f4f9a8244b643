"""Forward broken-ray transforms and sinograms.

Rows of a sinogram are indexed by the arclength ``s`` of the ray's endpoint
on the outer boundary and the direction angle ``theta`` of the ray at that
endpoint.  Rays are traced backwards from the endpoint and reversed.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._quadrature import simpson_nodes
from .fields import ScalarField, VectorField
from .scene import Scene
from .tracer import DEFAULT_MAX_REFLECTIONS, BrokenRay, Grazing, Trapped, trace_to_endpoint

KINDS = ("scalar_integral", "magnetic_phase", "phase_factor")
OUTCOMES = ("ok", "trapped", "grazing")
CSV_HEADER = ["s", "theta", "value_re", "value_im", "n_reflections", "total_length", "outcome"]
STEP_FRACTION = 1e-3


def default_step(scene: Scene) -> float:
    return STEP_FRACTION * scene.diameter


def _canonical(leg):
    """Leg endpoints in lexicographic order, and the orientation sign."""
    a, b = leg.start, leg.end
    if (a[0], a[1]) <= (b[0], b[1]):
        return a, b, 1.0
    return b, a, -1.0


def _leg_nodes(a, b, length, step):
    if step is None:
        step = STEP_FRACTION * length
    t, w = simpson_nodes(length, step)
    d = (b - a) / length
    return a + t[:, None] * d, w, d


def _fsum_complex(values) -> complex:
    values = list(values)
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


def integrate_scalar(ray: BrokenRay, V: ScalarField, step: float | None = None) -> complex:
    """Composite-Simpson approximation of the integral of ``V`` along the ray.

    The result is independent of the traversal direction bit for bit.
    """
    parts = []
    for leg in ray.legs:
        a, b, _ = _canonical(leg)
        pts, w, _ = _leg_nodes(a, b, leg.length, step)
        parts.append(complex(np.dot(w, V(pts))))
    return _fsum_complex(parts)


def magnetic_phase(ray: BrokenRay, A: VectorField, step: float | None = None) -> float:
    """``int A . dx`` along the ray, composite Simpson per leg."""
    parts = []
    for leg in ray.legs:
        a, b, sign = _canonical(leg)
        pts, w, d = _leg_nodes(a, b, leg.length, step)
        parts.append(sign * float(np.real(np.dot(w, A(pts) @ d))))
    return math.fsum(parts)


def phase_factor(ray: BrokenRay, A: VectorField, step: float | None = None) -> complex:
    phi = magnetic_phase(ray, A, step)
    return complex(math.cos(phi), math.sin(phi))


def evaluate_transform(ray: BrokenRay, fld, kind: str, step: float) -> complex:
    if kind == "scalar_integral":
        return integrate_scalar(ray, fld, step)
    if kind == "magnetic_phase":
        return complex(magnetic_phase(ray, fld, step))
    if kind == "phase_factor":
        return phase_factor(ray, fld, step)
    raise ValueError(f"unknown transform kind {kind!r}")


@dataclass(frozen=True)
class SamplingSpec:
    """``ns x ntheta`` grid of endpoint arclengths and endpoint directions.

    ``sector="outward"`` samples the open half-circle of directions leaving
    the domain at each endpoint, relative to the outward normal.
    ``sector="full"`` samples absolute angles over the whole circle; rays
    that would end at ``x`` while pointing inward have zero length and value 0.
    """

    ns: int
    ntheta: int
    sector: str = "outward"

    def __post_init__(self):
        if self.ns < 2 or self.ntheta < 2:
            raise ValueError("sampling spec needs ns, ntheta >= 2")
        if self.sector not in ("outward", "full"):
            raise ValueError(f"unknown direction sector {self.sector!r}")

    def s_values(self, scene: Scene) -> np.ndarray:
        return np.arange(self.ns) * (scene.outer.arclength / self.ns)

    def theta_values(self, scene: Scene, s: float) -> np.ndarray:
        j = np.arange(self.ntheta)
        if self.sector == "full":
            return j * (2.0 * math.pi / self.ntheta)
        _, n_out, _ = scene.outer.point(s)
        base = math.atan2(n_out[1], n_out[0])
        return base - 0.5 * math.pi + (j + 0.5) * (math.pi / self.ntheta)

    @property
    def dtheta(self) -> float:
        return (2.0 if self.sector == "full" else 1.0) * math.pi / self.ntheta

    def to_dict(self) -> dict:
        return {"ns": self.ns, "ntheta": self.ntheta, "sector": self.sector}


@dataclass
class RayTable:
    """Traced geometry for every sampling row; reusable across fields."""

    scene: Scene
    spec: SamplingSpec
    max_reflections: int
    s: np.ndarray
    theta: np.ndarray
    outcomes: list  # BrokenRay, Trapped, Grazing or None (zero-length inward row)


def _trace_row(scene, s, th, max_reflections):
    _, n_out, _ = scene.outer.point(s)
    cos_out = n_out[0] * math.cos(th) + n_out[1] * math.sin(th)
    if abs(cos_out) <= math.sin(scene.tangency_tol):
        return Grazing(None)
    if cos_out < 0.0:
        return None
    return trace_to_endpoint(scene, s, th, max_reflections)


def trace_grid(
    scene: Scene,
    spec: SamplingSpec,
    max_reflections: int = DEFAULT_MAX_REFLECTIONS,
    threads: int = 1,
) -> RayTable:
    s_all, th_all = [], []
    for s in spec.s_values(scene):
        for th in spec.theta_values(scene, s):
            s_all.append(float(s))
            th_all.append(float(th))
    jobs = list(zip(s_all, th_all))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(lambda a: _trace_row(scene, a[0], a[1], max_reflections), jobs))
    else:
        outcomes = [_trace_row(scene, s, th, max_reflections) for s, th in jobs]
    return RayTable(scene, spec, max_reflections, np.array(s_all), np.array(th_all), outcomes)


@dataclass
class Sinogram:
    s: np.ndarray
    theta: np.ndarray
    value: np.ndarray
    n_reflections: np.ndarray
    total_length: np.ndarray
    outcome: np.ndarray
    spec: SamplingSpec
    kind: str
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.s)

    @property
    def ok(self) -> np.ndarray:
        return self.outcome == "ok"

    def fraction(self, outcome: str) -> float:
        return float(np.mean(self.outcome == outcome))

    def as_grid(self) -> np.ndarray:
        return self.value.reshape(self.spec.ns, self.spec.ntheta)

    def __eq__(self, other):
        if not isinstance(other, Sinogram):
            return NotImplemented
        arrays_equal = all(
            np.array_equal(getattr(self, name), getattr(other, name), equal_nan=name == "value")
            for name in ("s", "theta", "value", "n_reflections", "total_length")
        )
        return (
            arrays_equal
            and np.array_equal(self.outcome, other.outcome)
            and self.spec == other.spec
            and self.kind == other.kind
            and self.metadata == other.metadata
        )

    # -- serialization ------------------------------------------------------

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for k in range(len(self)):
                ok = self.outcome[k] == "ok"
                v = self.value[k]
                writer.writerow(
                    [
                        repr(float(self.s[k])),
                        repr(float(self.theta[k])),
                        repr(float(v.real)) if ok else "",
                        repr(float(v.imag)) if ok else "",
                        int(self.n_reflections[k]),
                        repr(float(self.total_length[k])),
                        self.outcome[k],
                    ]
                )
        side = {"kind": self.kind, "sampling": self.spec.to_dict(), **self.metadata}
        path.with_suffix(".json").write_text(json.dumps(side, sort_keys=True, indent=1) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "Sinogram":
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        kind = side.pop("kind")
        spec = SamplingSpec(**side.pop("sampling"))
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected sinogram header {header}")
            rows = list(reader)
        s = np.array([float(r[0]) for r in rows])
        th = np.array([float(r[1]) for r in rows])
        val = np.array([complex(float(r[2]), float(r[3])) if r[2] != "" else complex(np.nan, np.nan) for r in rows])
        nref = np.array([int(r[4]) for r in rows])
        length = np.array([float(r[5]) for r in rows])
        outcome = np.array([r[6] for r in rows])
        return cls(s, th, val, nref, length, outcome, spec, kind, side)


def generate_sinogram(
    scene: Scene,
    fld,
    kind: str,
    spec: SamplingSpec | None = None,
    max_reflections: int = DEFAULT_MAX_REFLECTIONS,
    step: float | None = None,
    rays: RayTable | None = None,
    threads: int = 1,
) -> Sinogram:
    """Evaluate a transform over a sampling grid.

    Parameters
    ----------
    scene : Scene
    fld : ScalarField or VectorField
        ``ScalarField`` for ``scalar_integral``, ``VectorField`` otherwise.
    kind : {"scalar_integral", "magnetic_phase", "phase_factor"}
    spec : SamplingSpec
        Ignored when ``rays`` is given.
    rays : RayTable, optional
        Precomputed geometry from :func:`trace_grid`, shared between fields.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown transform kind {kind!r}")
    if rays is None:
        if spec is None:
            raise ValueError("either a sampling spec or a ray table is required")
        rays = trace_grid(scene, spec, max_reflections, threads)
    step = default_step(scene) if step is None else step
    n = len(rays.outcomes)
    value = np.full(n, complex(np.nan, np.nan))
    nref = np.zeros(n, dtype=int)
    length = np.zeros(n)
    outcome = np.empty(n, dtype=object)

    def row(k):
        out = rays.outcomes[k]
        if out is None:
            return (1.0 + 0j if kind == "phase_factor" else 0j), 0, 0.0, "ok"
        if isinstance(out, Trapped):
            return None, out.reflections, 0.0, "trapped"
        if isinstance(out, Grazing):
            return None, 0, 0.0, "grazing"
        return evaluate_transform(out, fld, kind, step), out.n_reflections, out.total_length, "ok"

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(row, range(n)))
    else:
        results = [row(k) for k in range(n)]
    for k, (v, r, L, o) in enumerate(results):
        if v is not None:
            value[k] = v
        nref[k], length[k], outcome[k] = r, L, o
    outcome = outcome.astype(str)
    meta = {
        "scene": rays.scene.to_dict(),
        "scene_hash": rays.scene.digest(),
        "quadrature_step": step,
        "max_reflections": rays.max_reflections,
        "trapped_fraction": float(np.mean(outcome == "trapped")),
        "grazing_fraction": float(np.mean(outcome == "grazing")),
    }
    return Sinogram(rays.s.copy(), rays.theta.copy(), value, nref, length, outcome, rays.spec, kind, meta)


def _check_compatible(w1: Sinogram, w2: Sinogram):
    if w1.spec != w2.spec or len(w1) != len(w2):
        raise ValueError("sinograms have different sampling specs")


def data_distance(w1: Sinogram, w2: Sinogram) -> dict:
    """Gap metrics over rows where both sinograms are ``ok``."""
    _check_compatible(w1, w2)
    both = w1.ok & w2.ok
    diff = np.abs(w1.value[both] - w2.value[both])
    return {
        "max_abs": float(diff.max()) if diff.size else 0.0,
        "l2_mean": float(np.sqrt(np.mean(diff**2))) if diff.size else 0.0,
        "outcome_mismatches": int(np.sum(w1.outcome != w2.outcome)),
        "n_compared": int(both.sum()),
    }
