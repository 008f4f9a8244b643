"""Inverse side: pixel reconstruction of the scalar potential, gauge-class
detection from phase data, and the empirical stability probe."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .brt import RayTable, Sinogram
from .fields import ScalarField
from .scene import Scene, SceneError
from .tracer import DEFAULT_MAX_REFLECTIONS, BrokenRay, trace_to_endpoint

log = logging.getLogger(__name__)

SUBSAMPLES = 4  # per axis, i.e. 16 points per cell


@dataclass
class PixelGrid:
    """Uniform ``nx x ny`` cell grid over the bounding box of the outer shape."""

    scene: Scene
    nx: int
    ny: int
    subsamples: int = SUBSAMPLES
    lo: np.ndarray = field(init=False)
    hi: np.ndarray = field(init=False)
    area_fraction: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per axis")
        self.lo, self.hi = (np.asarray(v, dtype=float) for v in self.scene.bounding_box())
        pts = self.subsample_points()
        inside = self.scene.contains(pts.reshape(-1, 2)).reshape(pts.shape[:-1])
        self.area_fraction = inside.mean(axis=(2, 3))

    @property
    def cell_size(self) -> tuple[float, float]:
        return (self.hi[0] - self.lo[0]) / self.nx, (self.hi[1] - self.lo[1]) / self.ny

    @property
    def cell_area(self) -> float:
        dx, dy = self.cell_size
        return dx * dy

    @property
    def mask(self) -> np.ndarray:
        return self.area_fraction > 0.0

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        dx, dy = self.cell_size
        return self.lo[0] + (np.arange(self.nx) + 0.5) * dx, self.lo[1] + (np.arange(self.ny) + 0.5) * dy

    def subsample_points(self) -> np.ndarray:
        """Array ``(nx, ny, m, m, 2)`` of sub-cell sample points."""
        dx, dy = self.cell_size
        m = self.subsamples
        u = (np.arange(m) + 0.5) / m
        ix = self.lo[0] + (np.arange(self.nx)[:, None] + u[None, :]) * dx
        iy = self.lo[1] + (np.arange(self.ny)[:, None] + u[None, :]) * dy
        X = np.broadcast_to(ix[:, None, :, None], (self.nx, self.ny, m, m))
        Y = np.broadcast_to(iy[None, :, None, :], (self.nx, self.ny, m, m))
        return np.stack([X, Y], axis=-1)

    def integrate(self, values_at_subsamples: np.ndarray) -> float:
        """Quadrature over the domain of a function sampled at :meth:`subsample_points`."""
        pts = self.subsample_points()
        inside = self.scene.contains(pts.reshape(-1, 2)).reshape(pts.shape[:-1])
        w = self.cell_area / self.subsamples**2
        return float(np.sum(np.where(inside, values_at_subsamples, 0.0)) * w)

    def cell_means(self, f: ScalarField) -> np.ndarray:
        """Mean of ``f`` over the in-domain part of each cell (NaN for empty cells)."""
        pts = self.subsample_points()
        inside = self.scene.contains(pts.reshape(-1, 2)).reshape(pts.shape[:-1])
        vals = f(pts)
        cnt = inside.sum(axis=(2, 3))
        tot = np.where(inside, vals, 0.0).sum(axis=(2, 3))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan)

    def traverse(self, a, b) -> tuple[np.ndarray, np.ndarray]:
        """Flat cell indices and chord lengths of the segment ``a -> b`` (Siddon)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        diff = b - a
        length = float(np.hypot(diff[0], diff[1]))
        if length == 0.0:
            return np.zeros(0, dtype=int), np.zeros(0)
        dx, dy = self.cell_size
        ts = [np.array([0.0, 1.0])]
        for axis, h, n in ((0, dx, self.nx), (1, dy, self.ny)):
            if diff[axis] != 0.0:
                lines = self.lo[axis] + np.arange(n + 1) * h
                t = (lines - a[axis]) / diff[axis]
                ts.append(t[(t > 0.0) & (t < 1.0)])
        t = np.unique(np.concatenate(ts))
        mid = a + 0.5 * (t[:-1] + t[1:])[:, None] * diff
        seg = np.diff(t) * length
        ix = np.clip(np.floor((mid[:, 0] - self.lo[0]) / dx).astype(int), 0, self.nx - 1)
        iy = np.clip(np.floor((mid[:, 1] - self.lo[1]) / dy).astype(int), 0, self.ny - 1)
        keep = seg > 0.0
        return (ix * self.ny + iy)[keep], seg[keep]

    def ray_cells(self, ray: BrokenRay) -> tuple[np.ndarray, np.ndarray]:
        cells, lengths = [], []
        for leg in ray.legs:
            c, L = self.traverse(leg.start, leg.end)
            cells.append(c)
            lengths.append(L)
        c = np.concatenate(cells)
        L = np.concatenate(lengths)
        uniq, inv = np.unique(c, return_inverse=True)
        return uniq, np.bincount(inv, weights=L)


@dataclass
class RaySystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    grid: PixelGrid
    cells: np.ndarray  # flat cell index of each column
    row_index: np.ndarray  # sinogram row of each matrix row
    total_length: np.ndarray
    flagged_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def coverage(self) -> np.ndarray:
        """Number of rays crossing each column."""
        return np.diff(self.matrix.tocsc().indptr)


def _rays_for(scene: Scene, sinogram: Sinogram, rays: RayTable | None, max_reflections: int):
    if rays is not None:
        if len(rays.outcomes) != len(sinogram):
            raise ValueError("ray table does not match the sinogram")
        return rays.outcomes
    out = []
    for s, th, oc, L in zip(sinogram.s, sinogram.theta, sinogram.outcome, sinogram.total_length):
        # zero-length rows are inward directions of a full-circle sampling
        out.append(trace_to_endpoint(scene, s, th, max_reflections) if oc == "ok" and L > 0 else None)
    return out


def _assemble(grid: PixelGrid, rays: list, columns: np.ndarray | None = None):
    """Sparse chord-length matrix; returns ``(matrix, columns, kept_rows, flagged)``."""
    data, rows, cols_flat, kept = [], [], [], []
    for k, ray in enumerate(rays):
        if not isinstance(ray, BrokenRay):
            continue
        c, L = grid.ray_cells(ray)
        rows.append(np.full(len(c), len(kept)))
        cols_flat.append(c)
        data.append(L)
        kept.append(k)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    cols_flat = np.concatenate(cols_flat) if cols_flat else np.zeros(0, dtype=int)
    data = np.concatenate(data) if data else np.zeros(0)
    flagged = np.zeros(0, dtype=int)
    if columns is None:
        traversed = np.unique(cols_flat)
        masked = np.flatnonzero(grid.mask.ravel())
        columns = np.union1d(masked, traversed)
        flagged = np.setdiff1d(traversed, masked)
    lookup = -np.ones(grid.nx * grid.ny, dtype=int)
    lookup[columns] = np.arange(len(columns))
    col_idx = lookup[cols_flat]
    if np.any(col_idx < 0):
        keep = col_idx >= 0
        rows, col_idx, data = rows[keep], col_idx[keep], data[keep]
    M = sp.csr_matrix((data, (rows, col_idx)), shape=(len(kept), len(columns)))
    return M, columns, np.array(kept, dtype=int), flagged


def build_system(
    scene: Scene,
    grid: PixelGrid,
    sinogram: Sinogram,
    rays: RayTable | None = None,
    max_reflections: int = DEFAULT_MAX_REFLECTIONS,
) -> RaySystem:
    """Chord-length system ``M v = b`` for a ``scalar_integral`` sinogram.

    Rays are re-traced from the ``(s, theta)`` rows unless a matching
    :class:`RayTable` is supplied.  Cells crossed by rays but containing no
    in-domain subsample are kept as unknowns and reported in
    ``flagged_cells``.
    """
    if sinogram.kind != "scalar_integral":
        raise ValueError("build_system needs a scalar_integral sinogram")
    outcomes = _rays_for(scene, sinogram, rays, max_reflections)
    usable = [
        o if (isinstance(o, BrokenRay) and sinogram.outcome[k] == "ok") else None for k, o in enumerate(outcomes)
    ]
    M, columns, kept, flagged = _assemble(grid, usable)
    if len(flagged):
        log.warning("%d cells crossed by rays lie outside the sampled mask", len(flagged))
    lengths = np.array([usable[k].total_length for k in kept])
    return RaySystem(M.tocsr(), sinogram.value[kept].astype(complex), grid, columns, kept, lengths, flagged)


def cgls(M, b, lam: float = 0.0, rtol: float = 1e-8, max_iter: int | None = None, stagnation_window: int = 200):
    """Conjugate gradients on ``(M^H M + lam I) x = M^H b``.

    Returns ``(x, info)`` with the relative normal-equation residual history.
    """
    n = M.shape[1]
    max_iter = 10 * n if max_iter is None else max_iter
    dtype = np.result_type(M.dtype, b.dtype, np.complex128)
    x = np.zeros(n, dtype=dtype)
    r = b.astype(dtype).copy()
    s = M.conj().T @ r
    norm0 = float(np.linalg.norm(s))
    history = [1.0 if norm0 > 0 else 0.0]
    info = {"iterations": 0, "converged": True, "stagnated": False, "history": history}
    if norm0 == 0.0:
        return x, info
    p = s.copy()
    gamma = float(np.vdot(s, s).real)
    best = 1.0
    since_best = 0
    for it in range(1, max_iter + 1):
        q = M @ p
        delta = float(np.vdot(q, q).real) + lam * float(np.vdot(p, p).real)
        alpha = gamma / delta
        x += alpha * p
        r -= alpha * q
        s = M.conj().T @ r - lam * x
        gamma_new = float(np.vdot(s, s).real)
        rel = math.sqrt(gamma_new) / norm0
        history.append(rel)
        info["iterations"] = it
        if rel <= rtol:
            return x, info
        if rel < 0.999 * best:
            best, since_best = rel, 0
        else:
            since_best += 1
            if since_best >= stagnation_window:
                info["stagnated"] = True
                break
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    info["converged"] = False
    log.warning("CGLS stopped after %d iterations at relative residual %.3e", info["iterations"], history[-1])
    return x, info


def cell_image(grid: PixelGrid, columns, values) -> np.ndarray:
    """Scatter column values into an ``(nx, ny)`` image; inactive cells are 0."""
    img = np.zeros(grid.nx * grid.ny, dtype=complex)
    img[columns] = values
    return img.reshape(grid.nx, grid.ny)


def reconstruct_scalar(system: RaySystem, lam: float = 1e-6, rtol: float = 1e-8, max_iter: int | None = None):
    """Regularized least-squares pixel reconstruction.

    Returns
    -------
    field : ScalarField
        Grid preset on cell centers; inactive cells are 0.
    report : dict
        ``iterations``, ``converged``, ``stagnated``, ``history`` (relative
        normal-equation residuals), ``data_residual`` and ``cell_values``.
    """
    if system.matrix.shape[0] == 0:
        raise ValueError("empty ray system")
    if lam < 0:
        raise ValueError("regularization must be nonnegative")
    x, info = cgls(system.matrix, system.rhs, lam, rtol, max_iter)
    bn = float(np.linalg.norm(system.rhs))
    res = float(np.linalg.norm(system.matrix @ x - system.rhs))
    info["data_residual"] = res / bn if bn > 0 else res
    info["cell_values"] = x
    xs, ys = system.grid.centers()
    fld = ScalarField.grid(xs, ys, cell_image(system.grid, system.cells, x))
    return fld, info


def relative_error(grid: PixelGrid, columns, estimate, truth_field: ScalarField, select=None) -> float:
    """Area-weighted relative L2 error of cell values against in-cell means of the truth."""
    truth = grid.cell_means(truth_field).ravel()[columns]
    w = grid.area_fraction.ravel()[columns]
    sel = np.ones(len(columns), dtype=bool) if select is None else np.asarray(select)
    sel = sel & np.isfinite(truth)
    num = np.sum(w[sel] * np.abs(estimate[sel] - truth[sel]) ** 2)
    den = np.sum(w[sel] * np.abs(truth[sel]) ** 2)
    return float(math.sqrt(num / den)) if den > 0 else float(math.sqrt(num))


# -- gauge classes from phase data ------------------------------------------

@dataclass
class GaugeClassResult:
    verdict: str
    max_gap: float
    witness: tuple[float, float] | None = None

    @property
    def same(self) -> bool:
        return self.verdict == "same"


def detect_gauge_class(w1: Sinogram, w2: Sinogram, tol: float = 1e-7) -> GaugeClassResult:
    """Compare two phase-factor sinograms; different iff the largest gap exceeds ``tol``."""
    if w1.spec != w2.spec or len(w1) != len(w2):
        raise ValueError("sinograms have different sampling specs")
    if w1.kind != "phase_factor" or w2.kind != "phase_factor":
        raise ValueError("gauge-class detection needs phase_factor sinograms")
    both = np.flatnonzero(w1.ok & w2.ok)
    if both.size == 0:
        return GaugeClassResult("same", 0.0)
    gap = np.abs(w1.value[both] - w2.value[both])
    k = both[int(np.argmax(gap))]
    g = float(gap.max())
    witness = (float(w1.s[k]), float(w1.theta[k]))
    return GaugeClassResult("different" if g > tol else "same", g, witness)


# -- stability probe --------------------------------------------------------

@dataclass
class StabilityReport:
    lhs: float
    rhs: float
    rhs_squared: float
    ratio: float | None
    ratio_squared: float | None
    dw_ds: np.ndarray = field(repr=False)
    dw_dtheta: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)

    @property
    def n_excluded(self) -> int:
        return int((~self.valid).sum())

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rhs_squared": self.rhs_squared,
            "ratio": self.ratio if self.ratio is not None else "undefined",
            "ratio_squared": self.ratio_squared if self.ratio_squared is not None else "undefined",
            "n_excluded": self.n_excluded,
        }


def _ratio(num: float, den: float) -> float | None:
    if den == 0.0:
        return None if num == 0.0 else math.inf
    return num / den


def stability_report(sinogram: Sinogram, f: ScalarField, grid: PixelGrid) -> StabilityReport:
    """Both sides of the broken-ray stability estimate for a known ``f``.

    The right-hand side integrates ``|dw/ds| + |dw/dtheta|^2`` (and the
    all-squared variant ``|dw/ds|^2 + |dw/dtheta|^2``) with central periodic
    differences over a full-circle sampling.  Grid points whose stencil
    touches a flagged row are excluded.
    """
    spec = sinogram.spec
    if spec.sector != "full":
        raise ValueError("stability probe needs a full-circle direction sampling")
    ns, nt = spec.ns, spec.ntheta
    w = sinogram.value.reshape(ns, nt)
    ok = sinogram.ok.reshape(ns, nt)
    ds = grid.scene.outer.arclength / ns
    dth = 2.0 * math.pi / nt
    roll = np.roll
    w0 = np.where(ok, w, 0.0)
    dws = (roll(w0, -1, 0) - roll(w0, 1, 0)) / (2 * ds)
    dwt = (roll(w0, -1, 1) - roll(w0, 1, 1)) / (2 * dth)
    valid = ok & roll(ok, -1, 0) & roll(ok, 1, 0) & roll(ok, -1, 1) & roll(ok, 1, 1)
    aws, awt = np.abs(dws), np.abs(dwt)
    rhs = float(np.sum(np.where(valid, aws + awt**2, 0.0)) * ds * dth)
    rhs_sq = float(np.sum(np.where(valid, aws**2 + awt**2, 0.0)) * ds * dth)
    lhs = grid.integrate(np.abs(f(grid.subsample_points())) ** 2)
    return StabilityReport(lhs, rhs, rhs_sq, _ratio(lhs, rhs), _ratio(lhs, rhs_sq), dws, dwt, valid)


# -- estimator interface ----------------------------------------------------

class BrokenRayReconstructor(BaseEstimator, RegressorMixin):
    """Pixel reconstruction of ``V`` from broken-ray integrals, sklearn style.

    ``X`` holds ``(s, theta)`` endpoint coordinates, one row per ray, and
    ``y`` the measured integrals.  Rows whose ray is trapped or grazing, or
    whose ``y`` is not finite, are ignored in ``fit`` and predicted as NaN.

    Parameters
    ----------
    scene : Scene
    nx, ny : int
        Pixel grid resolution over the outer bounding box.
    regularization : float
        Tikhonov weight ``lam``.
    rtol : float
        CGLS stopping tolerance on the relative normal residual.
    max_iter : int, optional
        Defaults to ten times the number of unknowns.
    max_reflections : int
        Reflection budget for re-tracing.

    Attributes
    ----------
    coef_ : ndarray
        Cell values of the active columns.
    columns_ : ndarray
        Flat indices of active cells.
    image_ : ndarray of shape (nx, ny)
    field_ : ScalarField
    n_iter_ : int
    residual_history_ : list of float
    flagged_cells_ : ndarray
    """

    def __init__(self, scene=None, nx=32, ny=32, regularization=1e-6, rtol=1e-8, max_iter=None,
                 max_reflections=DEFAULT_MAX_REFLECTIONS):
        self.scene = scene
        self.nx = nx
        self.ny = ny
        self.regularization = regularization
        self.rtol = rtol
        self.max_iter = max_iter
        self.max_reflections = max_reflections

    def _rays(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError("X must have shape (n_rays, 2) holding (s, theta)")
        out = []
        for s, th in X:
            try:
                out.append(trace_to_endpoint(self.scene, s, th, self.max_reflections))
            except SceneError:  # inward endpoint direction: no ray ends there
                out.append(None)
        return out

    def fit(self, X, y):
        if self.scene is None:
            raise ValueError("a scene is required")
        y = np.asarray(y, dtype=complex)
        rays = self._rays(X)
        if len(rays) != len(y):
            raise ValueError("X and y have different lengths")
        usable = [r if isinstance(r, BrokenRay) and np.isfinite(v) else None for r, v in zip(rays, y)]
        self.grid_ = PixelGrid(self.scene, self.nx, self.ny)
        M, columns, kept, flagged = _assemble(self.grid_, usable)
        if M.shape[0] == 0:
            raise ValueError("no usable rays")
        system = RaySystem(M.tocsr(), y[kept], self.grid_, columns, kept,
                           np.array([usable[k].total_length for k in kept]), flagged)
        self.field_, info = reconstruct_scalar(system, self.regularization, self.rtol, self.max_iter)
        self.coef_ = info["cell_values"]
        self.columns_ = columns
        self.flagged_cells_ = flagged
        self.image_ = cell_image(self.grid_, columns, self.coef_)
        self.n_iter_ = info["iterations"]
        self.converged_ = info["converged"]
        self.residual_history_ = info["history"]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        rays = self._rays(X)
        img = self.image_.ravel()
        out = np.full(len(rays), complex(np.nan, np.nan))
        for k, r in enumerate(rays):
            if isinstance(r, BrokenRay):
                c, L = self.grid_.ray_cells(r)
                out[k] = np.sum(img[c] * L)
        return out

    def score(self, X, y, sample_weight=None):
        """Coefficient of determination on finite rows, complex-safe."""
        y = np.asarray(y, dtype=complex)
        p = self.predict(X)
        sel = np.isfinite(y) & np.isfinite(p)
        w = np.ones(sel.sum()) if sample_weight is None else np.asarray(sample_weight, dtype=float)[sel]
        yt, yp = y[sel], p[sel]
        ss_res = np.sum(w * np.abs(yt - yp) ** 2)
        ss_tot = np.sum(w * np.abs(yt - np.average(yt, weights=w)) ** 2)
        return float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 0.0
