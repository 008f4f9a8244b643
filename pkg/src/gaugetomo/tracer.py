"""Broken rays: straight legs with specular reflections at obstacles.

A broken ray starts on the outer boundary, reflects (non-tangentially) off
obstacles only, and ends the first time it returns to the outer boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .scene import Hit, Scene, SceneError, boundary_point, first_hit, project_to_arclength

DEFAULT_MAX_REFLECTIONS = 64


@dataclass(frozen=True)
class Leg:
    start: np.ndarray
    end: np.ndarray
    direction: np.ndarray
    length: float

    def reversed(self) -> "Leg":
        return Leg(self.end, self.start, -self.direction, self.length)


@dataclass(frozen=True)
class BrokenRay:
    legs: tuple[Leg, ...]
    s_start: float
    s_end: float
    total_length: float

    @property
    def start(self) -> np.ndarray:
        return self.legs[0].start

    @property
    def end(self) -> np.ndarray:
        return self.legs[-1].end

    @property
    def end_direction(self) -> np.ndarray:
        return self.legs[-1].direction

    @property
    def n_reflections(self) -> int:
        return len(self.legs) - 1

    def vertices(self) -> np.ndarray:
        return np.array([leg.start for leg in self.legs] + [self.legs[-1].end])

    def __eq__(self, other):
        if not isinstance(other, BrokenRay) or len(self.legs) != len(other.legs):
            return False
        same_legs = all(
            np.array_equal(a.start, b.start)
            and np.array_equal(a.end, b.end)
            and np.array_equal(a.direction, b.direction)
            and a.length == b.length
            for a, b in zip(self.legs, other.legs)
        )
        return (
            same_legs
            and self.s_start == other.s_start
            and self.s_end == other.s_end
            and self.total_length == other.total_length
        )

    __hash__ = None


@dataclass(frozen=True)
class Trapped:
    reflections: int


@dataclass(frozen=True)
class Grazing:
    hit: Hit


TraceOutcome = Union[BrokenRay, Trapped, Grazing]


def reflect(direction, normal) -> np.ndarray:
    """Specular reflection ``d - 2 (d.n) n``."""
    d = np.asarray(direction, dtype=float)
    n = np.asarray(normal, dtype=float)
    return d - 2.0 * np.dot(d, n) * n


def _leg(a, b) -> Leg:
    diff = b - a
    length = float(np.linalg.norm(diff))
    return Leg(a, b, diff / length, length)


def trace(
    scene: Scene,
    s0: float,
    direction,
    max_reflections: int = DEFAULT_MAX_REFLECTIONS,
) -> TraceOutcome:
    """Trace a broken ray launched inward from arclength ``s0`` on the outer boundary.

    Parameters
    ----------
    scene : Scene
        Validated scene.
    s0 : float
        Launch arclength on the outer boundary.
    direction : array_like
        Unit launch direction; must point strictly into the domain.
    max_reflections : int
        Reflection budget.  A ray needing more bounces is reported as
        :class:`Trapped`.

    Returns
    -------
    BrokenRay, Trapped or Grazing
    """
    x0, nu, _ = boundary_point(scene, 0, s0)
    d = np.asarray(direction, dtype=float)
    if float(np.dot(nu, d)) <= math.sin(scene.tangency_tol):
        raise SceneError("launch direction is not strictly inward")
    legs = []
    x = x0
    reflections = 0
    while True:
        hit = first_hit(scene, x, d)
        if hit is None:
            raise SceneError("ray escaped the domain")
        if hit.grazing_angle < scene.tangency_tol or hit.at_vertex:
            return Grazing(hit)
        if hit.component == 0:
            legs.append(_leg(x, hit.point))
            break
        if reflections >= max_reflections:
            return Trapped(reflections)
        legs.append(_leg(x, hit.point))
        d = reflect(d, hit.inward_normal)
        d = d / np.linalg.norm(d)
        x = hit.point
        reflections += 1
    s_end = project_to_arclength(scene, 0, legs[-1].end)
    total = math.fsum(leg.length for leg in legs)
    return BrokenRay(tuple(legs), float(s0) % scene.outer.arclength, s_end, total)


def reverse(ray: BrokenRay) -> BrokenRay:
    """Same geometric ray traversed backwards; an exact involution."""
    legs = tuple(leg.reversed() for leg in reversed(ray.legs))
    return BrokenRay(legs, ray.s_end, ray.s_start, ray.total_length)


def outward_direction_ok(scene: Scene, s: float, theta: float) -> float:
    """Cosine between ``theta`` and the outward normal at ``s``."""
    _, nu, _ = boundary_point(scene, 0, s)
    return -(nu[0] * math.cos(theta) + nu[1] * math.sin(theta))


def trace_to_endpoint(
    scene: Scene,
    s: float,
    theta: float,
    max_reflections: int = DEFAULT_MAX_REFLECTIONS,
) -> TraceOutcome:
    """Broken ray that *ends* at ``x(s)`` travelling in direction angle ``theta``.

    The ray is traced backwards from the endpoint and then reversed, so the
    returned ray's ``end_direction`` equals ``(cos theta, sin theta)`` up to
    rounding.
    """
    d = -np.array([math.cos(theta), math.sin(theta)])
    out = trace(scene, s, d, max_reflections)
    if isinstance(out, BrokenRay):
        return reverse(out)
    return out
