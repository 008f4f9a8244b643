"""Reference computations that share no code with the package.

Circle geometry is done by marching the ray and bisecting sign changes of
the signed distance; line integrals use adaptive Gauss-Kronrod quadrature
from scipy.  These are slow and only meant for tests.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

MARCH_STEP = 1e-4


def _signed(p, center, radius):
    return np.hypot(p[..., 0] - center[0], p[..., 1] - center[1]) - radius


def bisect_hit(x, d, circles, t_max=10.0, t_min=1e-7):
    """First boundary crossing of ``x + t d`` for a list of ``(center, radius, is_outer)``.

    Returns ``(t, index)``.  The ray is marched with ``MARCH_STEP`` and each
    sign change of a signed distance is refined by bisection.
    """
    x = np.asarray(x, float)
    d = np.asarray(d, float)
    t = np.arange(t_min, t_max, MARCH_STEP)
    pts = x[None, :] + t[:, None] * d[None, :]
    best = (math.inf, -1)
    for k, (c, r, outer) in enumerate(circles):
        g = _signed(pts, c, r)
        g = g if not outer else -g  # positive inside the domain for both kinds
        idx = np.flatnonzero((g[:-1] > 0) & (g[1:] <= 0))
        if idx.size == 0:
            continue
        lo, hi = t[idx[0]], t[idx[0] + 1]
        f = lambda s: (1 if not outer else -1) * _signed(x + s * d, c, r)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f(mid) > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15:
                break
        if hi < best[0]:
            best = (0.5 * (lo + hi), k)
    return best


def trace_circles(x0, d, circles, max_reflections=64, t_max=10.0):
    """Vertex list of a broken ray in a scene made of circles.

    ``circles[0]`` is the outer boundary.  Returns ``None`` when the budget
    is exhausted.
    """
    x = np.asarray(x0, float)
    d = np.asarray(d, float) / np.linalg.norm(d)
    verts = [x.copy()]
    for _ in range(max_reflections + 1):
        t, k = bisect_hit(x, d, circles, t_max=t_max)
        p = x + t * d
        verts.append(p)
        if k == 0:
            return np.array(verts)
        c, r, _ = circles[k]
        n = (p - np.asarray(c)) / r
        d = d - 2.0 * np.dot(d, n) * n
        x = p
    return None


def line_integral_scalar(f, verts):
    """Sum over legs of the integral of ``f`` along each straight segment."""
    total = 0.0
    for a, b in zip(verts[:-1], verts[1:]):
        a, b = np.asarray(a, float), np.asarray(b, float)
        L = float(np.linalg.norm(b - a))
        g = lambda t: f(a + t * (b - a))
        total += L * quad(g, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return total


def line_integral_vector(A, verts):
    """Work integral of a vector field along the polyline."""
    total = 0.0
    for a, b in zip(verts[:-1], verts[1:]):
        a, b = np.asarray(a, float), np.asarray(b, float)
        g = lambda t: float(np.dot(A(a + t * (b - a)), b - a))
        total += quad(g, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return total


def gaussian(center, width, amplitude=1.0):
    c = np.asarray(center, float)
    return lambda p: amplitude * math.exp(-float(np.sum((np.asarray(p) - c) ** 2)) / (2 * width**2))


def ab_vector(center, alpha):
    c = np.asarray(center, float)

    def A(p):
        x, y = np.asarray(p, float) - c
        r2 = x * x + y * y
        return alpha * np.array([-y / r2, x / r2])

    return A


def disk_chord(R, s, theta):
    """Chord length of the straight ray ending at arclength ``s`` of a circle of
    radius ``R`` (centered at the origin) with direction angle ``theta``."""
    psi = theta - s / R
    return 2.0 * R * max(0.0, math.cos(psi))


def disk_stability_rhs(R):
    """Closed-form rhs integrals for f = 1 on the disk of radius R.

    With psi = theta - s/R, w = 2R cos(psi) on |psi| < pi/2, so
    |dw/ds| = 2|sin psi| and |dw/dtheta| = 2R|sin psi|.
    """
    perim = 2.0 * math.pi * R
    printed = perim * (4.0 + 4.0 * R * R * math.pi / 2.0)
    squared = perim * (4.0 * math.pi / 2.0 + 4.0 * R * R * math.pi / 2.0)
    return printed, squared


def discrete_dirichlet_eigenvalue(h, m=1, n=1):
    """Eigenvalue of the 5-point Dirichlet Laplacian on the unit square."""
    return 4.0 / h**2 * (math.sin(m * math.pi * h / 2) ** 2 + math.sin(n * math.pi * h / 2) ** 2)


def square_bottom_mode(x, y):
    """Harmonic function equal to sin(pi x) on y=0 and 0 on the other sides."""
    return np.sin(np.pi * x) * np.sinh(np.pi * (1.0 - y)) / np.sinh(np.pi)


def square_bottom_flux(x):
    """Outward normal derivative of square_bottom_mode on y=0."""
    return np.pi / np.tanh(np.pi) * np.sin(np.pi * x)
