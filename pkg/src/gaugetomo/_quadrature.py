import math

import numpy as np


def simpson_nodes(length: float, step: float):
    """Composite Simpson nodes in ``[0, length]`` and their weights.

    The panel count is ``ceil(length / step)``, so the panel width is
    ``length / ceil(length / step)``.
    """
    n = max(1, math.ceil(length / step - 1e-12))
    h = length / n
    t = np.linspace(0.0, length, 2 * n + 1)
    w = np.empty(2 * n + 1)
    w[0::2] = 2.0
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return t, w * (h / 6.0)


def segment_line_integral(A, a, b, step: float) -> complex:
    """Integral of ``A . dx`` along the segment from ``a`` to ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = b - a
    length = float(np.hypot(diff[0], diff[1]))
    if length == 0.0:
        return 0.0
    d = diff / length
    t, w = simpson_nodes(length, step)
    pts = a + t[:, None] * d
    vals = A(pts) @ d
    return np.dot(w, vals)


def polyline_line_integral(A, points, step: float, richardson: bool = False):
    pts = np.asarray(points, dtype=float)
    total = [segment_line_integral(A, p, q, step) for p, q in zip(pts[:-1], pts[1:])]
    coarse = math.fsum(np.real(total)) + 1j * math.fsum(np.imag(total))
    if not richardson:
        return coarse
    fine = [segment_line_integral(A, p, q, step / 2.0) for p, q in zip(pts[:-1], pts[1:])]
    fine = math.fsum(np.real(fine)) + 1j * math.fsum(np.imag(fine))
    return fine + (fine - coarse) / 15.0, abs(fine - coarse)
