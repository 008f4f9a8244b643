"""Scalar and vector potentials, gauge functions, holonomy and gauge classes.

All fields are immutable pointwise evaluators acting on arrays of points
with trailing dimension 2.  Gauge transformations act as ``A -> A + grad(phi)``
with real ``phi`` so that the gauge factor ``exp(i phi)`` is unimodular.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._quadrature import polyline_line_integral, simpson_nodes
from .scene import Circle, Scene, SceneError, boundary_point, first_hit

TWO_PI = 2.0 * math.pi


def _pts(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of size 2")
    return p


def dist_to_2pi_multiple(x: float) -> float:
    return abs(x - TWO_PI * round(x / TWO_PI))


# -- grid helpers -----------------------------------------------------------

def _bilinear(xs, ys, values):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    interp = RegularGridInterpolator((xs, ys), np.asarray(values), method="linear", bounds_error=False)

    def evaluate(p):
        q = np.stack(
            [np.clip(p[..., 0], xs[0], xs[-1]), np.clip(p[..., 1], ys[0], ys[-1])], axis=-1
        )
        return interp(q.reshape(-1, 2)).reshape(p.shape[:-1] + np.shape(values)[2:])

    return evaluate


def _read_grid_csv(path, value_columns):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty grid file")
    xs = np.unique([float(r["x"]) for r in rows])
    ys = np.unique([float(r["y"]) for r in rows])
    out = np.full((len(xs), len(ys), len(value_columns)), np.nan, dtype=complex)
    for r in rows:
        i = np.searchsorted(xs, float(r["x"]))
        j = np.searchsorted(ys, float(r["y"]))
        for c, names in enumerate(value_columns):
            re_name, im_name = names
            re = float(r[re_name]) if re_name in r else float(r[re_name.replace("_re", "")])
            im = float(r[im_name]) if im_name and r.get(im_name) not in (None, "") else 0.0
            out[i, j, c] = re + 1j * im
    if np.isnan(out).any():
        raise ValueError(f"{path}: grid file does not cover a full rectangular grid")
    return xs, ys, out


# -- scalar fields ----------------------------------------------------------

class ScalarField:
    """Complex-valued function of position.

    Parameters
    ----------
    func : callable
        Maps an array of points ``(..., 2)`` to values of shape ``(...)``.
    name : str
        Human-readable tag used in reports.
    """

    def __init__(self, func: Callable, name: str = "custom"):
        self._func = func
        self.name = name

    def __call__(self, points):
        p = _pts(points)
        return np.asarray(self._func(p), dtype=complex) * np.ones(p.shape[:-1])

    def __repr__(self):
        return f"ScalarField({self.name})"

    def __add__(self, other):
        if not isinstance(other, ScalarField):
            other = ScalarField.constant(other)
        return ScalarField(lambda p: self(p) + other(p), f"({self.name}+{other.name})")

    __radd__ = __add__

    def __mul__(self, c):
        return ScalarField(lambda p: c * self(p), f"{c}*{self.name}")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    @classmethod
    def constant(cls, c):
        return cls(lambda p: np.full(p.shape[:-1], c, dtype=complex), f"constant({c})")

    @classmethod
    def gaussian(cls, center, width, amplitude=1.0):
        """``amplitude * exp(-|x - center|^2 / (2 width^2))``."""
        c = np.asarray(center, dtype=float)

        def f(p):
            r2 = np.sum((p - c) ** 2, axis=-1)
            return amplitude * np.exp(-r2 / (2.0 * width**2))

        return cls(f, f"gaussian({tuple(c)},{width},{amplitude})")

    @classmethod
    def grid(cls, xs, ys, values):
        """Bilinear interpolation of node values ``values[i, j]`` at ``(xs[i], ys[j])``."""
        vals = np.asarray(values, dtype=complex)
        ev = _bilinear(xs, ys, vals)
        out = cls(ev, "grid")
        out.nodes = (np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), vals)
        return out

    @classmethod
    def from_csv(cls, path):
        xs, ys, vals = _read_grid_csv(path, [("value_re", "value_im")])
        return cls.grid(xs, ys, vals[..., 0])


# -- gauge functions --------------------------------------------------------

def _fd_gradient(phi, step):
    def grad(p):
        ex = np.array([step, 0.0])
        ey = np.array([0.0, step])
        gx = (phi(p + ex) - phi(p - ex)) / (2 * step)
        gy = (phi(p + ey) - phi(p - ey)) / (2 * step)
        return np.stack([gx, gy], axis=-1)

    return grad


class GaugeFunction:
    """Real gauge phase ``phi`` with its gradient.

    ``gradient_kind`` records whether the gradient is analytic or obtained by
    central finite differences.
    """

    def __init__(self, phi: Callable, gradient: Callable | None = None, name: str = "custom", fd_step: float = 1e-6):
        self._phi = phi
        if gradient is None:
            self._grad = _fd_gradient(lambda p: np.asarray(phi(p), dtype=float), fd_step)
            self.gradient_kind = "finite-difference"
        else:
            self._grad = gradient
            self.gradient_kind = "analytic"
        self.name = name

    def __call__(self, points):
        p = _pts(points)
        return np.asarray(self._phi(p), dtype=float) * np.ones(p.shape[:-1])

    def gradient(self, points):
        p = _pts(points)
        return np.asarray(self._grad(p), dtype=float) * np.ones(p.shape[:-1] + (2,))

    def boundary_trace(self, scene: Scene, s):
        p, _, _ = scene.outer.point(np.asarray(s, dtype=float))
        return self(p)

    def __repr__(self):
        return f"GaugeFunction({self.name})"

    def __add__(self, other: "GaugeFunction"):
        return GaugeFunction(
            lambda p: self(p) + other(p),
            lambda p: self.gradient(p) + other.gradient(p),
            f"({self.name}+{other.name})",
        )

    def __mul__(self, other):
        if not isinstance(other, GaugeFunction):
            c = float(other)
            return GaugeFunction(lambda p: c * self(p), lambda p: c * self.gradient(p), f"{c}*{self.name}")
        return GaugeFunction(
            lambda p: self(p) * other(p),
            lambda p: self.gradient(p) * other(p)[..., None] + self(p)[..., None] * other.gradient(p),
            f"({self.name}*{other.name})",
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @classmethod
    def constant(cls, c: float):
        return cls(lambda p: np.full(p.shape[:-1], float(c)), lambda p: np.zeros(p.shape), f"constant({c})")

    @classmethod
    def polynomial(cls, coeffs: dict[tuple[int, int], float]):
        """``sum c_ij x^i y^j`` for a mapping ``{(i, j): c_ij}``."""
        terms = [(int(i), int(j), float(c)) for (i, j), c in coeffs.items()]

        def phi(p):
            x, y = p[..., 0], p[..., 1]
            return sum(c * x**i * y**j for i, j, c in terms) + np.zeros(p.shape[:-1])

        def grad(p):
            x, y = p[..., 0], p[..., 1]
            gx = sum(c * i * x ** max(i - 1, 0) * y**j for i, j, c in terms if i > 0)
            gy = sum(c * j * x**i * y ** max(j - 1, 0) for i, j, c in terms if j > 0)
            return np.stack([gx + np.zeros(p.shape[:-1]), gy + np.zeros(p.shape[:-1])], axis=-1)

        return cls(phi, grad, f"polynomial({terms})")

    @classmethod
    def plane_wave(cls, wavevector, phase=0.0, amplitude=1.0):
        """``amplitude * sin(k . x + phase)``."""
        k = np.asarray(wavevector, dtype=float)
        return cls(
            lambda p: amplitude * np.sin(p @ k + phase),
            lambda p: amplitude * np.cos(p @ k + phase)[..., None] * k,
            f"plane_wave({tuple(k)},{phase},{amplitude})",
        )

    @classmethod
    def bump(cls, center, radius, amplitude=1.0):
        """Smooth bump ``amplitude * exp(1 - 1/(1 - rho^2))`` supported in a disk."""
        c = np.asarray(center, dtype=float)

        def phi(p):
            rho2 = np.sum((p - c) ** 2, axis=-1) / radius**2
            out = np.zeros(p.shape[:-1])
            inside = rho2 < 1.0
            out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
            return out

        def grad(p):
            d = p - c
            rho2 = np.sum(d**2, axis=-1) / radius**2
            g = np.zeros(p.shape)
            inside = rho2 < 1.0
            val = amplitude * np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
            fac = -2.0 * val / (1.0 - rho2[inside]) ** 2 / radius**2
            g[inside] = fac[..., None] * d[inside]
            return g

        return cls(phi, grad, f"bump({tuple(c)},{radius},{amplitude})")

    @classmethod
    def disk_factor(cls, center, radius):
        """``radius^2 - |x - center|^2``; vanishes on the circle."""
        c = np.asarray(center, dtype=float)
        return cls(
            lambda p: radius**2 - np.sum((p - c) ** 2, axis=-1),
            lambda p: -2.0 * (p - c),
            f"disk_factor({tuple(c)},{radius})",
        )

    @classmethod
    def rect_factor(cls, a, b):
        """``x (a - x) y (b - y)``; vanishes on the boundary of ``[0,a]x[0,b]``."""

        def phi(p):
            x, y = p[..., 0], p[..., 1]
            return x * (a - x) * y * (b - y)

        def grad(p):
            x, y = p[..., 0], p[..., 1]
            return np.stack([(a - 2 * x) * y * (b - y), x * (a - x) * (b - 2 * y)], axis=-1)

        return cls(phi, grad, f"rect_factor({a},{b})")


# -- vector fields ----------------------------------------------------------

class VectorField:
    """Vector potential ``A = (A1, A2)``.

    ``line_integral(p, q)``, when supplied, returns exact segment integrals of
    ``A . dx`` for arrays of endpoints; otherwise :meth:`link_integral` falls
    back to the midpoint rule.
    """

    def __init__(
        self,
        func: Callable,
        name: str = "custom",
        line_integral: Callable | None = None,
        exact_curl: Callable | None = None,
    ):
        self._func = func
        self.name = name
        self._line = line_integral
        self.exact_curl = exact_curl

    def __call__(self, points):
        p = _pts(points)
        v = np.asarray(self._func(p))
        return v * np.ones(p.shape[:-1] + (2,))

    def __repr__(self):
        return f"VectorField({self.name})"

    @property
    def has_exact_links(self) -> bool:
        return self._line is not None

    def link_integral(self, p, q):
        """Segment integrals of ``A . dx`` from ``p`` to ``q`` (arrays of shape ``(n, 2)``)."""
        p = _pts(p)
        q = _pts(q)
        if self._line is not None:
            return np.asarray(self._line(p, q))
        return np.sum(self(0.5 * (p + q)) * (q - p), axis=-1)

    def __add__(self, other: "VectorField"):
        curl = None
        if self.exact_curl is not None and other.exact_curl is not None:
            curl = lambda p: self.exact_curl(p) + other.exact_curl(p)  # noqa: E731
        return VectorField(
            lambda p: self(p) + other(p),
            f"({self.name}+{other.name})",
            line_integral=lambda p, q: self.link_integral(p, q) + other.link_integral(p, q),
            exact_curl=curl,
        )

    def __mul__(self, c):
        line = None if self._line is None else (lambda p, q: c * self._line(p, q))
        curl = None if self.exact_curl is None else (lambda p: c * self.exact_curl(p))
        return VectorField(lambda p: c * self(p), f"{c}*{self.name}", line, curl)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    @classmethod
    def zero(cls):
        return cls(
            lambda p: np.zeros(p.shape),
            "zero",
            line_integral=lambda p, q: np.zeros(p.shape[:-1]),
            exact_curl=lambda p: np.zeros(p.shape[:-1]),
        )

    @classmethod
    def constant(cls, a):
        a = np.asarray(a)
        return cls(
            lambda p: np.broadcast_to(a, p.shape).copy(),
            f"constant({tuple(a)})",
            line_integral=lambda p, q: (q - p) @ a,
            exact_curl=lambda p: np.zeros(p.shape[:-1]),
        )

    @classmethod
    def uniform_field(cls, strength=1.0, center=(0.0, 0.0)):
        """Symmetric gauge ``strength/2 * (-(y-cy), x-cx)`` with constant curl ``strength``."""
        c = np.asarray(center, dtype=float)

        def f(p):
            d = p - c
            return 0.5 * strength * np.stack([-d[..., 1], d[..., 0]], axis=-1)

        def line(p, q):
            # integrand is affine along a segment, so the midpoint rule is exact
            return np.sum(f(0.5 * (p + q)) * (q - p), axis=-1)

        return cls(f, f"uniform_field({strength})", line, lambda p: np.full(p.shape[:-1], float(strength)))

    @classmethod
    def gradient_of(cls, phi: GaugeFunction):
        return cls(
            phi.gradient,
            f"grad({phi.name})",
            line_integral=lambda p, q: phi(q) - phi(p),
            exact_curl=lambda p: np.zeros(p.shape[:-1]),
        )

    @classmethod
    def ab_flux(cls, center, alpha):
        """Aharonov-Bohm potential ``alpha * (-(y-cy), x-cx) / |x-c|^2``.

        Curl-free away from ``center`` with circulation ``2 pi alpha``.  The
        center must lie inside an obstacle.
        """
        c = np.asarray(center, dtype=float)

        def f(p):
            d = p - c
            r2 = np.sum(d**2, axis=-1)
            return alpha * np.stack([-d[..., 1], d[..., 0]], axis=-1) / r2[..., None]

        def line(p, q):
            dp = p - c
            dq = q - c
            cross = dp[..., 0] * dq[..., 1] - dp[..., 1] * dq[..., 0]
            dot = np.sum(dp * dq, axis=-1)
            return alpha * np.arctan2(cross, dot)

        return cls(f, f"ab_flux({tuple(c)},{alpha})", line, lambda p: np.zeros(p.shape[:-1]))

    @classmethod
    def grid(cls, xs, ys, a1, a2):
        vals = np.stack([np.asarray(a1), np.asarray(a2)], axis=-1)
        return cls(_bilinear(xs, ys, vals), "grid")

    @classmethod
    def from_csv(cls, path):
        xs, ys, vals = _read_grid_csv(path, [("ax_re", "ax_im"), ("ay_re", "ay_im")])
        if np.all(vals.imag == 0):
            vals = vals.real
        return cls.grid(xs, ys, vals[..., 0], vals[..., 1])


def apply_gauge(A: VectorField, phi: GaugeFunction) -> VectorField:
    """Gauge-transformed potential ``A + grad(phi)``."""
    return A + VectorField.gradient_of(phi)


# -- calculus ---------------------------------------------------------------

def curl(A: VectorField, point, h: float = 1e-4, scene: Scene | None = None, order: int = 2):
    """Finite-difference ``d A2/dx - d A1/dy`` at ``point`` (or an array of points).

    ``order=2`` uses the 3-point central difference, ``order=4`` the 5-point one.
    When ``scene`` is given the stencil must stay inside the domain.
    """
    p = _pts(point)
    reach = h * (2 if order == 4 else 1)
    if scene is not None and np.any(scene.clearance(p) < reach):
        raise SceneError("curl stencil leaves the domain")
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    if order == 2:
        dA2dx = (A(p + ex)[..., 1] - A(p - ex)[..., 1]) / (2 * h)
        dA1dy = (A(p + ey)[..., 0] - A(p - ey)[..., 0]) / (2 * h)
    elif order == 4:
        def d(comp, e):
            return (
                -A(p + 2 * e)[..., comp] + 8 * A(p + e)[..., comp] - 8 * A(p - e)[..., comp] + A(p - 2 * e)[..., comp]
            ) / (12 * h)

        dA2dx = d(1, ex)
        dA1dy = d(0, ey)
    else:
        raise ValueError("order must be 2 or 4")
    return dA2dx - dA1dy


def _winding_number(loop: np.ndarray, point) -> int:
    d = loop - np.asarray(point)
    ang = np.arctan2(d[:, 1], d[:, 0])
    dang = np.diff(ang)
    dang = (dang + math.pi) % TWO_PI - math.pi
    return int(round(dang.sum() / TWO_PI))


def _close(loop) -> np.ndarray:
    pts = _pts(loop)
    if not np.array_equal(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    return pts


def _component_gap(scene: Scene, j: int) -> float:
    """Smallest clearance between component ``j`` and every other component."""
    ob = scene.shape(j)
    dense = ob.point(np.linspace(0.0, ob.arclength, 720, endpoint=False))[0]
    if not isinstance(ob, Circle):
        dense = np.vstack([dense, ob._v])
    gaps = []
    for k, c in enumerate(scene.components):
        if k == j:
            continue
        sd = np.asarray(c.signed_distance(dense))
        gaps.append(np.min(-sd if k == 0 else sd))
    return float(min(gaps))


def obstacle_loop(scene: Scene, j: int, n: int = 512) -> np.ndarray:
    """Closed counterclockwise polyline around obstacle ``j`` (1-based), inside the domain.

    The loop sits halfway across the gap separating the obstacle from the
    nearest other component.
    """
    if j == 0:
        raise SceneError("component 0 is the outer boundary, not an obstacle")
    ob = scene.shape(j)
    gap = _component_gap(scene, j)
    if isinstance(ob, Circle):
        r = ob.radius + 0.5 * gap
        ang = np.linspace(0.0, TWO_PI, n, endpoint=False)
        loop = np.array(ob.center) + r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        ref = ob.reference_point
        maxdist = float(np.max(np.hypot(*(ob._v - ref).T)))
        grown = ob.scaled(1.0 + 0.5 * gap / maxdist, ref)
        per = max(4, n // len(ob.vertices))
        s = np.concatenate([np.linspace(a, b, per, endpoint=False) for a, b in grown.pieces()])
        loop = grown.point(s)[0]
    return _close(loop)


def _check_loop(scene: Scene, loop: np.ndarray) -> int:
    fine = np.concatenate(
        [a + np.linspace(0.0, 1.0, 9)[:-1, None] * (b - a) for a, b in zip(loop[:-1], loop[1:])]
    )
    if np.any(scene.clearance(fine) <= 0.0):
        raise SceneError("loop leaves the domain")
    winds = [_winding_number(loop, ob.reference_point) for ob in scene.obstacles]
    enclosed = [k for k, w in enumerate(winds, start=1) if w != 0]
    if len(enclosed) != 1 or winds[enclosed[0] - 1] != 1:
        raise SceneError("loop must wind once counterclockwise around exactly one obstacle")
    return enclosed[0]


def holonomy(A: VectorField, loop, scene: Scene | None = None, step: float | None = None) -> float:
    """Circulation of ``A`` around a closed polyline (Richardson-corrected Simpson).

    Parameters
    ----------
    A : VectorField
    loop : array_like, shape (m, 2)
        Polyline vertices; closed automatically.
    scene : Scene, optional
        When given, the loop is validated against the domain and the default
        step is ``1e-3`` times the scene diameter.
    step : float, optional
        Quadrature step.
    """
    pts = _close(loop)
    if scene is not None:
        _check_loop(scene, pts)
    if step is None:
        span = np.ptp(pts, axis=0).max()
        step = 1e-3 * (scene.diameter if scene is not None else span)
    value, _ = polyline_line_integral(A, pts, step, richardson=True)
    return float(np.real(value))


# -- gauge equivalence ------------------------------------------------------

@dataclass
class GaugeDecision:
    verdict: str
    reason: str | None = None
    witness: GaugeFunction | None = None
    details: dict = field(default_factory=dict)

    @property
    def equivalent(self) -> bool:
        return self.verdict == "equivalent"


def _boundary_line_integral(D: VectorField, scene: Scene, s_samples, step: float):
    """Cumulative ``int_0^s D . t ds`` along the outer boundary at sorted ``s_samples``."""
    shp = scene.outer
    cuts = sorted(set([a for a, _ in shp.pieces()] + [shp.arclength] + list(map(float, s_samples))))
    seg_vals = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            seg_vals.append(0.0)
            continue
        t, w = simpson_nodes(b - a, step)
        p, _, tan = shp.point(a + t)
        if not isinstance(shp, Circle):
            # constant along a polygon edge; the midpoint avoids vertex ambiguity
            tan = np.broadcast_to(shp.point(0.5 * (a + b))[2], p.shape)
        seg_vals.append(complex(np.dot(w, np.sum(D(p) * tan, axis=-1))))
    cum = np.concatenate([[0.0], np.cumsum(seg_vals)])
    lookup = dict(zip(cuts, cum))
    return np.array([lookup[float(s)] for s in s_samples])


class _PathWitness:
    """``phi(x)`` by integrating ``D`` along an obstacle-avoiding path from the basepoint."""

    def __init__(self, D: VectorField, scene: Scene, step: float, n_dirs: int = 64):
        self.D = D
        self.scene = scene
        self.step = step
        ang = np.linspace(0.0, TWO_PI, n_dirs, endpoint=False) + 0.5 * TWO_PI / n_dirs
        self.dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)

    def _boundary_value(self, s):
        return _boundary_line_integral(self.D, self.scene, [s], self.step)[0]

    def _visible_exit(self, x):
        best = None
        for d in self.dirs:
            hit = first_hit(self.scene, x, d)
            if hit is not None and hit.component == 0 and (best is None or hit.distance < best.distance):
                best = hit
        return best

    def _segment(self, a, b):
        return polyline_line_integral(self.D, np.array([a, b]), self.step)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        hit = self._visible_exit(x)
        via = None
        if hit is None:
            # one-hop visibility detour through an intermediate point
            for d in self.dirs:
                h0 = first_hit(self.scene, x, d)
                y = x + 0.5 * h0.distance * d
                hit = self._visible_exit(y)
                if hit is not None:
                    via = y
                    break
            if hit is None:
                raise SceneError("no obstacle-free path from the boundary to the point")
        s_b = self.scene.outer.project(hit.point)
        val = self._boundary_value(s_b)
        if via is None:
            val -= self._segment(x, hit.point)
        else:
            val -= self._segment(via, hit.point) + self._segment(x, via)
        return float(np.real(val))

    def __call__(self, p):
        flat = np.asarray(p, dtype=float).reshape(-1, 2)
        return np.array([self.value(q) for q in flat]).reshape(np.shape(p)[:-1])


def _resolved_curl(D: VectorField, pts: np.ndarray, h0: float, scene: Scene, tol: float, levels: int = 6):
    """Fourth-order curl, halving the step at points where successive
    estimates still differ by more than ``tol``; Richardson-corrected."""
    c_prev = np.asarray(curl(D, pts, h=h0, scene=scene, order=4))
    out = c_prev.copy()
    todo = np.arange(len(pts))
    h = h0
    for _ in range(levels):
        h *= 0.5
        c = np.asarray(curl(D, pts[todo], h=h, scene=scene, order=4))
        delta = c - c_prev
        out[todo] = c + delta / 15.0
        keep = np.abs(delta) > 0.5 * tol
        todo, c_prev = todo[keep], c[keep]
        if todo.size == 0:
            break
    return out


def domain_test_points(scene: Scene, n: int = 24, margin: float = 0.02) -> np.ndarray:
    lo, hi = scene.bounding_box()
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n), indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    return pts[scene.clearance(pts) > margin * scene.diameter]


def gauge_equivalent(
    A1: VectorField,
    A2: VectorField,
    scene: Scene,
    tol: float = 1e-6,
    n_grid: int = 24,
    n_boundary: int = 64,
) -> GaugeDecision:
    """Decide whether ``A2 - A1 = grad(phi)`` with ``exp(i phi) = 1`` on the outer boundary.

    Three checks run in order: vanishing curl of the difference on a test
    grid, holonomy around every obstacle in ``2 pi Z``, and the path-integrated
    phase vanishing modulo ``2 pi`` along the outer boundary.  The first
    failing check names the reason.
    """
    D = A2 - A1
    step = 1e-3 * scene.diameter
    details: dict = {}
    try:
        pts = domain_test_points(scene, n_grid)
        c = _resolved_curl(D, pts, 1e-3 * scene.diameter, scene, tol)
    except (FloatingPointError, ValueError) as exc:
        raise SceneError(f"field evaluation failed on test points: {exc}") from exc
    if not np.all(np.isfinite(c)):
        raise SceneError("field evaluation failed on test points")
    details["max_curl"] = float(np.max(np.abs(c))) if c.size else 0.0
    if details["max_curl"] > tol:
        return GaugeDecision("inequivalent", "curvature mismatch", details=details)

    hol = [holonomy(D, obstacle_loop(scene, j), scene, step) for j in range(1, len(scene.obstacles) + 1)]
    details["holonomies"] = hol
    if any(dist_to_2pi_multiple(h) > tol for h in hol):
        return GaugeDecision("inequivalent", "holonomy not in 2πZ", details=details)

    s = np.linspace(0.0, scene.outer.arclength, n_boundary, endpoint=False)
    trace_vals = np.real(_boundary_line_integral(D, scene, s, step))
    details["max_boundary_trace"] = float(max(dist_to_2pi_multiple(v) for v in trace_vals))
    if details["max_boundary_trace"] > tol:
        return GaugeDecision("inequivalent", "boundary trace nonzero mod 2π", details=details)

    witness_phi = _PathWitness(D, scene, step)
    witness = GaugeFunction(witness_phi, lambda p: np.real(D(p)), "path_integral_witness")
    witness.gradient_kind = "path-integral"
    return GaugeDecision("equivalent", None, witness, details)
