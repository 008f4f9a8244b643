"""Planar domains with convex obstacles and exact ray/boundary queries.

The domain is the region inside a convex outer shape with a finite number
of disjoint convex obstacles removed.  Shapes are circles or strictly
convex polygons (counterclockwise vertices).  Component ``0`` always denotes
the outer boundary, components ``1..r`` the obstacles.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_TANGENCY_TOL = 1e-6
DEPARTURE_FACTOR = 1e-9


class SceneError(ValueError):
    """Raised for invalid geometry queries."""


class ConvexShape:
    """Base class for convex boundary curves parametrized by arclength."""

    kind: str = "shape"

    @property
    def arclength(self) -> float:
        raise NotImplementedError

    def point(self, s):
        """Return ``(point, outward_normal, tangent)`` at arclength ``s``."""
        raise NotImplementedError

    def project(self, p) -> float:
        """Arclength of the boundary point closest to ``p``."""
        raise NotImplementedError

    def signed_distance(self, p):
        raise NotImplementedError

    def intersect(self, origin, direction):
        """All ray parameters ``t`` where ``origin + t*direction`` meets the boundary.

        Returns a list of ``(t, outward_normal, at_vertex)``.
        """
        raise NotImplementedError

    def pieces(self):
        """Smooth arclength intervals ``(s_a, s_b)`` covering the boundary."""
        return [(0.0, self.arclength)]

    def scaled(self, factor: float, about) -> "ConvexShape":
        raise NotImplementedError

    @property
    def reference_point(self) -> np.ndarray:
        """A point strictly inside the shape."""
        raise NotImplementedError

    def extent(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Circle(ConvexShape):
    center: tuple[float, float]
    radius: float
    kind = "circle"

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def arclength(self) -> float:
        return 2.0 * math.pi * self.radius

    @property
    def reference_point(self):
        return np.array(self.center)

    def point(self, s):
        a = np.asarray(s, dtype=float) / self.radius
        c, sn = np.cos(a), np.sin(a)
        normal = np.stack([c, sn], axis=-1)
        p = np.array(self.center) + self.radius * normal
        tangent = np.stack([-sn, c], axis=-1)
        return p, normal, tangent

    def project(self, p) -> float:
        d = np.asarray(p, dtype=float) - self.center
        a = math.atan2(d[1], d[0]) % (2.0 * math.pi)
        return (a * self.radius) % self.arclength

    def signed_distance(self, p):
        d = np.asarray(p, dtype=float) - self.center
        return np.hypot(d[..., 0], d[..., 1]) - self.radius

    def intersect(self, origin, direction):
        oc = np.asarray(origin, dtype=float) - self.center
        b = float(np.dot(oc, direction))
        c = float(np.dot(oc, oc)) - self.radius**2
        disc = b * b - c
        if disc < 0.0:
            return []
        sq = math.sqrt(disc)
        # numerically stable pair of roots
        q = -b - sq if b >= 0 else -b + sq
        roots = {q}
        if q != 0.0:
            roots.add(c / q)
        else:
            roots.add(-b + sq if b >= 0 else -b - sq)
        out = []
        center = np.array(self.center)
        for t in sorted(roots):
            p = np.asarray(origin) + t * np.asarray(direction)
            n = (p - center) / self.radius
            out.append((t, n / np.linalg.norm(n), False))
        return out

    def scaled(self, factor, about=None):
        about = self.center if about is None else about
        c = np.asarray(about) + factor * (np.asarray(self.center) - about)
        return Circle(tuple(c), self.radius * factor)

    def extent(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def to_dict(self):
        return {"type": "circle", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Polygon(ConvexShape):
    vertices: tuple[tuple[float, float], ...]
    kind = "polygon"

    def __post_init__(self):
        v = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", v)
        V = self._v
        e = np.roll(V, -1, axis=0) - V
        object.__setattr__(self, "_edges", e)
        lengths = np.hypot(e[:, 0], e[:, 1])
        object.__setattr__(self, "_lengths", lengths)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(lengths)]))

    @property
    def _v(self) -> np.ndarray:
        return np.array(self.vertices, dtype=float)

    @property
    def arclength(self) -> float:
        return float(self._cum[-1])

    @property
    def reference_point(self):
        return self._v.mean(axis=0)

    def is_strictly_convex(self) -> bool:
        V = self._v
        if len(V) < 3:
            return False
        e = self._edges
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cross > 0.0))

    def _edge_frame(self, k):
        t = self._edges[k] / self._lengths[k]
        return t, np.array([t[1], -t[0]])

    def point(self, s):
        s_arr = np.asarray(s, dtype=float) % self.arclength
        scalar = s_arr.ndim == 0
        s_arr = np.atleast_1d(s_arr)
        k = np.clip(np.searchsorted(self._cum, s_arr, side="right") - 1, 0, len(self.vertices) - 1)
        t = self._edges[k] / self._lengths[k][:, None]
        n = np.stack([t[:, 1], -t[:, 0]], axis=-1)
        p = self._v[k] + (s_arr - self._cum[k])[:, None] * t
        if scalar:
            return p[0], n[0], t[0]
        return p, n, t

    def _closest_on_edges(self, p):
        V = self._v
        e = self._edges
        u = np.clip(np.einsum("ij,ij->i", p - V, e) / self._lengths**2, 0.0, 1.0)
        q = V + u[:, None] * e
        d = np.hypot(*(q - p).T)
        return u, d

    def project(self, p) -> float:
        u, d = self._closest_on_edges(np.asarray(p, dtype=float))
        k = int(np.argmin(d))
        return float((self._cum[k] + u[k] * self._lengths[k]) % self.arclength)

    def signed_distance(self, p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 2)
        out = np.empty(len(flat))
        for i, q in enumerate(flat):
            _, d = self._closest_on_edges(q)
            dist = d.min()
            inside = all(
                np.dot(q - self._v[k], self._edge_frame(k)[1]) < 0.0 for k in range(len(self.vertices))
            )
            out[i] = -dist if inside else dist
        return out.reshape(p.shape[:-1]) if p.ndim > 1 else out[0]

    def intersect(self, origin, direction, vertex_tol=DEFAULT_TANGENCY_TOL):
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        out = []
        for k in range(len(self.vertices)):
            a = self._v[k]
            e = self._edges[k]
            den = d[0] * (-e[1]) - d[1] * (-e[0])
            if den == 0.0:
                continue
            r = a - o
            t = (r[0] * (-e[1]) - r[1] * (-e[0])) / den
            u = (d[0] * r[1] - d[1] * r[0]) / den
            if -vertex_tol <= u <= 1.0 + vertex_tol:
                at_vertex = u <= vertex_tol or u >= 1.0 - vertex_tol
                out.append((t, self._edge_frame(k)[1], at_vertex))
        out.sort(key=lambda item: item[0])
        return out

    def pieces(self):
        return [(float(self._cum[k]), float(self._cum[k + 1])) for k in range(len(self.vertices))]

    def scaled(self, factor, about=None):
        about = self.reference_point if about is None else np.asarray(about)
        return Polygon(tuple(map(tuple, about + factor * (self._v - about))))

    def extent(self):
        return self._v.min(axis=0), self._v.max(axis=0)

    def to_dict(self):
        return {"type": "polygon", "vertices": [list(v) for v in self.vertices]}


def shape_from_dict(spec: dict) -> ConvexShape:
    kind = spec.get("type")
    if kind == "circle":
        return Circle(tuple(spec.get("center", (0.0, 0.0))), spec["radius"])
    if kind == "polygon":
        return Polygon(tuple(tuple(v) for v in spec["vertices"]))
    raise SceneError(f"unknown shape type {kind!r}")


@dataclass(frozen=True)
class Hit:
    component: int
    point: np.ndarray
    inward_normal: np.ndarray
    distance: float
    grazing_angle: float
    at_vertex: bool = False


@dataclass(frozen=True)
class Scene:
    """Outer convex boundary plus disjoint convex obstacles."""

    outer: ConvexShape
    obstacles: tuple[ConvexShape, ...] = ()
    tangency_tol: float = DEFAULT_TANGENCY_TOL
    _diameter: float = field(init=False, repr=False, compare=False, default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        lo, hi = self.outer.extent()
        if isinstance(self.outer, Circle):
            diam = 2.0 * self.outer.radius
        else:
            V = self.outer._v
            diam = float(np.max(np.hypot(*(V[:, None, :] - V[None, :, :]).transpose(2, 0, 1))))
        object.__setattr__(self, "_diameter", diam)

    @property
    def components(self) -> tuple[ConvexShape, ...]:
        return (self.outer,) + self.obstacles

    @property
    def diameter(self) -> float:
        return self._diameter

    @property
    def departure_tol(self) -> float:
        return DEPARTURE_FACTOR * self._diameter

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.outer.extent()

    def shape(self, component: int) -> ConvexShape:
        if not 0 <= component < len(self.components):
            raise SceneError(f"unknown component index {component}")
        return self.components[component]

    def clearance(self, p):
        """Signed distance to the nearest boundary, positive inside the domain."""
        p = np.asarray(p, dtype=float)
        c = -np.asarray(self.outer.signed_distance(p))
        for ob in self.obstacles:
            c = np.minimum(c, ob.signed_distance(p))
        return c

    def contains(self, p, tol: float = 0.0):
        return self.clearance(p) >= -tol

    def to_dict(self) -> dict:
        return {
            "outer": self.outer.to_dict(),
            "obstacles": [ob.to_dict() for ob in self.obstacles],
            "tangency_tol": self.tangency_tol,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, spec: dict) -> "Scene":
        return cls(
            outer=shape_from_dict(spec["outer"]),
            obstacles=tuple(shape_from_dict(o) for o in spec.get("obstacles", [])),
            tangency_tol=float(spec.get("tangency_tol", DEFAULT_TANGENCY_TOL)),
        )


def concentric_scene(outer_radius: float = 2.0, obstacle_radius: float = 1.0) -> Scene:
    """The annulus used throughout the tests and examples."""
    obs = (Circle((0.0, 0.0), obstacle_radius),) if obstacle_radius > 0 else ()
    return Scene(Circle((0.0, 0.0), outer_radius), obs)


def _shape_gap(a: ConvexShape, b: ConvexShape, n: int = 720) -> float:
    """Distance between two disjoint convex shapes (negative when they overlap)."""
    if isinstance(a, Circle) and isinstance(b, Circle):
        return math.dist(a.center, b.center) - a.radius - b.radius
    pa, _, _ = a.point(np.linspace(0.0, a.arclength, n, endpoint=False))
    pb, _, _ = b.point(np.linspace(0.0, b.arclength, n, endpoint=False))
    if np.any(np.asarray(b.signed_distance(pa)) <= 0) or np.any(np.asarray(a.signed_distance(pb)) <= 0):
        return -1.0
    return float(np.min(b.signed_distance(pa)))


def _inner_gap(outer: ConvexShape, inner: ConvexShape, n: int = 720) -> float:
    """Clearance of ``inner`` inside ``outer`` (negative when it pokes out)."""
    if isinstance(outer, Circle) and isinstance(inner, Circle):
        return outer.radius - math.dist(outer.center, inner.center) - inner.radius
    pts, _, _ = inner.point(np.linspace(0.0, inner.arclength, n, endpoint=False))
    if isinstance(inner, Polygon):
        pts = np.vstack([pts, inner._v])
    return float(np.min(-np.asarray(outer.signed_distance(pts))))


def validate(scene: Scene) -> list[str]:
    """Return every violated scene invariant; an empty list means valid."""
    problems = []
    for idx, shp in enumerate(scene.components):
        if isinstance(shp, Circle) and not shp.radius > 0:
            problems.append(f"component {idx}: circle radius must be positive")
        if isinstance(shp, Polygon) and not shp.is_strictly_convex():
            problems.append(f"component {idx}: polygon is not strictly convex with >= 3 ccw vertices")
    if problems:
        return problems
    for j, ob in enumerate(scene.obstacles, start=1):
        if _inner_gap(scene.outer, ob) <= 0.0:
            problems.append(f"component {j}: obstacle touches/exits outer boundary")
    for i in range(len(scene.obstacles)):
        for j in range(i + 1, len(scene.obstacles)):
            if _shape_gap(scene.obstacles[i], scene.obstacles[j]) <= 0.0:
                problems.append(f"components {i + 1},{j + 1}: obstacles overlap")
    return problems


def boundary_point(scene: Scene, component: int, s: float):
    """Return ``(point, inward_normal, tangent)`` at arclength ``s``.

    Arclength runs counterclockwise.  The inward normal points into the
    domain, so it is the negated outward normal on the outer boundary and
    the outward normal of the obstacle itself on obstacle boundaries.
    """
    shp = scene.shape(component)
    p, n_out, t = shp.point(float(s) % shp.arclength)
    return p, (-n_out if component == 0 else n_out), t


def project_to_arclength(scene: Scene, component: int, p) -> float:
    return scene.shape(component).project(p)


def first_hit(scene: Scene, origin: Sequence[float], direction: Sequence[float]) -> Hit | None:
    """Nearest boundary intersection of the ray ``origin + t*direction``, t > departure tol."""
    d = np.asarray(direction, dtype=float)
    o = np.asarray(origin, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise SceneError("direction must have unit norm")
    if not scene.contains(o, tol=scene.departure_tol):
        raise SceneError("ray origin lies outside the closed domain")
    tmin = scene.departure_tol
    best = None
    for comp, shp in enumerate(scene.components):
        if isinstance(shp, Polygon):
            roots = shp.intersect(o, d, vertex_tol=scene.tangency_tol)
        else:
            roots = shp.intersect(o, d)
        for t, n_out, at_vertex in roots:
            if t > tmin and (best is None or t < best[0]):
                best = (t, comp, n_out, at_vertex)
    if best is None:
        return None
    t, comp, n_out, at_vertex = best
    inward = -n_out if comp == 0 else n_out
    grazing = math.asin(min(1.0, abs(float(np.dot(d, inward)))))
    return Hit(comp, o + t * d, inward, float(t), grazing, at_vertex)
