"""Discrete Dirichlet-to-Neumann matrices of the magnetic Schroedinger operator.

The operator ``(-i grad + A)^2 + V - k^2`` is discretized on a uniform grid
of a rectangle with axis-aligned rectangular obstacles, using link phases
``U_pq = exp(i int_p^q A . dx)`` on every grid edge so that gauge
transformations act exactly on the discrete system::

    (L w)_p = h^-2 sum_{q ~ p} (w_p - U_pq w_q) + (V_p - k^2) w_p

Dirichlet data is imposed on the outer boundary and zero on obstacles.  The
Neumann trace at a boundary node ``p`` with inward neighbour ``q`` is the
one-sided covariant difference ``(w_p - U_pq w_q) / h``.  The frequency is
passed as ``k2 = k^2`` throughout.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import ScalarField, VectorField

SOLVE_RTOL = 1e-10


class NearSingularError(RuntimeError):
    """``k^2`` is (numerically) a Dirichlet eigenvalue of the discrete operator."""


def _is_multiple(x: float, h: float) -> bool:
    r = x / h
    return abs(r - round(r)) < 1e-9


@dataclass(frozen=True)
class RectScene:
    """``[0, a] x [0, b]`` with rectangular obstacles ``(x0, y0, x1, y1)``."""

    a: float
    b: float
    h: float
    obstacles: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(tuple(map(float, o)) for o in self.obstacles))
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(problems))

    def validate(self) -> list[str]:
        h = self.h
        out = []
        if not (_is_multiple(self.a, h) and _is_multiple(self.b, h)):
            out.append("outer rectangle is not aligned with the grid spacing")
        for k, (x0, y0, x1, y1) in enumerate(self.obstacles):
            if not all(_is_multiple(v, h) for v in (x0, y0, x1, y1)):
                out.append(f"obstacle {k}: edges are not grid multiples")
            if not (x1 > x0 and y1 > y0):
                out.append(f"obstacle {k}: empty rectangle")
            if min(x0, y0, self.a - x1, self.b - y1) < 2 * h - 1e-12:
                out.append(f"obstacle {k}: clearance to the outer boundary below 2h")
        for i in range(len(self.obstacles)):
            for j in range(i + 1, len(self.obstacles)):
                p, q = self.obstacles[i], self.obstacles[j]
                gap = max(q[0] - p[2], p[0] - q[2], q[1] - p[3], p[1] - q[3])
                if gap < 2 * h - 1e-12:
                    out.append(f"obstacles {i},{j}: overlap or clearance below 2h")
        return out

    @property
    def nx(self) -> int:
        return int(round(self.a / self.h))

    @property
    def ny(self) -> int:
        return int(round(self.b / self.h))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "h": self.h, "obstacles": [list(o) for o in self.obstacles]}

    @classmethod
    def from_dict(cls, spec: dict) -> "RectScene":
        return cls(spec["a"], spec["b"], spec["h"], tuple(tuple(o) for o in spec.get("obstacles", [])))

    @cached_property
    def node_kind(self) -> np.ndarray:
        """``(nx+1, ny+1)`` array: 0 interior, 1 outer boundary, 2 obstacle."""
        nx, ny, h = self.nx, self.ny, self.h
        kind = np.zeros((nx + 1, ny + 1), dtype=np.int8)
        kind[0, :] = kind[-1, :] = kind[:, 0] = kind[:, -1] = 1
        for x0, y0, x1, y1 in self.obstacles:
            i0, i1 = int(round(x0 / h)), int(round(x1 / h))
            j0, j1 = int(round(y0 / h)), int(round(y1 / h))
            kind[i0 : i1 + 1, j0 : j1 + 1] = 2
        return kind

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Outer boundary nodes (corners excluded), counterclockwise from the origin corner."""
        nx, ny = self.nx, self.ny
        bottom = [(i, 0) for i in range(1, nx)]
        right = [(nx, j) for j in range(1, ny)]
        top = [(i, ny) for i in range(nx - 1, 0, -1)]
        left = [(0, j) for j in range(ny - 1, 0, -1)]
        return np.array(bottom + right + top + left, dtype=int)

    def inward_neighbour(self, node) -> tuple[int, int]:
        i, j = node
        if j == 0:
            return i, 1
        if i == self.nx:
            return i - 1, j
        if j == self.ny:
            return i, j - 1
        return 1, j

    def coords(self, ij) -> np.ndarray:
        return np.asarray(ij, dtype=float) * self.h


def link_integrals(scene: RectScene, A: VectorField) -> tuple[np.ndarray, np.ndarray]:
    """Edge integrals of ``A . dx`` oriented in the +x and +y directions.

    Returns ``(horizontal, vertical)`` of shapes ``(nx, ny+1)`` and
    ``(nx+1, ny)``; the integral from ``(i,j)`` to ``(i+1,j)`` is
    ``horizontal[i, j]``.
    """
    nx, ny, h = scene.nx, scene.ny, scene.h
    I, J = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
    p = np.stack([I, J], axis=-1) * h
    hor = A.link_integral(p.reshape(-1, 2), (p + [h, 0.0]).reshape(-1, 2)).reshape(nx, ny + 1)
    I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
    p = np.stack([I, J], axis=-1) * h
    ver = A.link_integral(p.reshape(-1, 2), (p + [0.0, h]).reshape(-1, 2)).reshape(nx + 1, ny)
    return hor, ver


def _link(links, p, q) -> complex:
    """Integral from node ``p`` to its grid neighbour ``q``."""
    hor, ver = links
    (i, j), (k, l) = p, q
    if k == i + 1:
        return hor[i, j]
    if k == i - 1:
        return -hor[k, j]
    if l == j + 1:
        return ver[i, j]
    return -ver[i, l]


class DiscreteOperator:
    """Assembled interior system with its boundary couplings.

    Attributes
    ----------
    interior : ndarray
        ``(n, 2)`` grid indices of the unknowns.
    L : csc_matrix
        Interior-interior block.
    coupling : csc_matrix
        Interior rows, boundary-node columns; ``L w_I + coupling f = 0``.
    trace : csr_matrix
        Boundary rows, interior columns, holding ``U_pq`` for the inward neighbour.
    """

    def __init__(self, scene: RectScene, k2: complex, L, coupling, trace, interior, index, links, V_nodes):
        self.scene = scene
        self.k2 = complex(k2)
        self.L = L
        self.coupling = coupling
        self.trace = trace
        self.interior = interior
        self.index = index
        self.links = links
        self.V_nodes = V_nodes

    @cached_property
    def lu(self):
        try:
            return spla.splu(self.L.tocsc())
        except RuntimeError as exc:
            raise NearSingularError(f"interior system is singular at k^2={self.k2}") from exc

    @property
    def n_boundary(self) -> int:
        return len(self.scene.boundary_nodes)

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``L x = rhs`` with iterative refinement to relative residual 1e-10."""
        rhs = np.asarray(rhs, dtype=complex)
        x = self.lu.solve(rhs)
        scale = np.linalg.norm(rhs, axis=0)
        scale = np.where(scale == 0, 1.0, scale)
        for _ in range(3):
            r = rhs - self.L @ x
            rel = np.max(np.linalg.norm(r, axis=0) / scale)
            if rel <= SOLVE_RTOL:
                return x
            x = x + self.lu.solve(r)
        r = rhs - self.L @ x
        rel = np.max(np.linalg.norm(r, axis=0) / scale)
        if not np.all(np.isfinite(x)) or rel > SOLVE_RTOL:
            raise NearSingularError(f"solve did not reach relative residual {SOLVE_RTOL} (got {rel:.2e})")
        return x


def assemble(
    scene: RectScene,
    A: VectorField,
    V: ScalarField,
    k2: complex,
    links: tuple[np.ndarray, np.ndarray] | None = None,
) -> DiscreteOperator:
    """Link-phase discretization of ``(-i grad + A)^2 + V - k^2``.

    ``links`` overrides the edge integrals computed from ``A`` by
    :func:`link_integrals`.
    """
    if links is None:
        links = link_integrals(scene, A)
    h2 = scene.h**2
    kind = scene.node_kind
    interior = np.argwhere(kind == 0)
    index = -np.ones(kind.shape, dtype=int)
    index[tuple(interior.T)] = np.arange(len(interior))
    bnodes = scene.boundary_nodes
    bindex = -np.ones(kind.shape, dtype=int)
    bindex[tuple(bnodes.T)] = np.arange(len(bnodes))
    V_nodes = V(scene.coords(interior))

    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    diag = 4.0 / h2 + V_nodes - k2
    for n, (i, j) in enumerate(interior):
        for q in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            u = np.exp(1j * _link(links, (i, j), q))
            if kind[q] == 0:
                rows.append(n)
                cols.append(index[q])
                vals.append(-u / h2)
            elif kind[q] == 1:
                brows.append(n)
                bcols.append(bindex[q])
                bvals.append(-u / h2)
    rows += list(range(len(interior)))
    cols += list(range(len(interior)))
    vals += list(diag)
    n = len(interior)
    L = sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n, n))
    coupling = sp.csc_matrix((np.array(bvals, dtype=complex), (brows, bcols)), shape=(n, len(bnodes)))
    trows, tcols, tvals = [], [], []
    for m, p in enumerate(bnodes):
        q = scene.inward_neighbour(p)
        trows.append(m)
        tcols.append(index[q])
        tvals.append(np.exp(1j * _link(links, tuple(p), q)))
    trace = sp.csr_matrix((np.array(tvals, dtype=complex), (trows, tcols)), shape=(len(bnodes), n))
    return DiscreteOperator(scene, k2, L, coupling, trace, interior, index, links, V_nodes)


def solve_dirichlet(op: DiscreteOperator, data) -> np.ndarray:
    """Grid solution with ``data`` on the outer boundary nodes and 0 on obstacles.

    Corner nodes do not enter the 5-point stencil and are set to 0.
    """
    data = np.asarray(data, dtype=complex)
    if data.shape[0] != op.n_boundary:
        raise ValueError(f"expected {op.n_boundary} boundary values, got {data.shape[0]}")
    wI = op.solve_interior(-(op.coupling @ data))
    w = np.zeros(op.scene.node_kind.shape + data.shape[1:], dtype=complex)
    w[tuple(op.interior.T)] = wI
    w[tuple(op.scene.boundary_nodes.T)] = data
    return w


@dataclass
class NearSingular:
    flag: bool
    sigma_min: float
    threshold: float
    nearest_eigenvalue: complex | None


def _sigma_min(op: DiscreteOperator, iterations: int = 30) -> float:
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.L.shape[0]) + 0j
    x /= np.linalg.norm(x)
    mu = 0.0
    for _ in range(iterations):
        z = op.lu.solve(op.lu.solve(x, trans="H"))
        mu = np.linalg.norm(z)
        if not np.isfinite(mu) or mu == 0.0:
            return 0.0
        x = z / mu
    return float(1.0 / math.sqrt(mu))


def _nearest_eigenvalue(op: DiscreteOperator, iterations: int = 60) -> complex:
    rng = np.random.default_rng(1)
    x = rng.standard_normal(op.L.shape[0]) + 0j
    x /= np.linalg.norm(x)
    for _ in range(iterations):
        y = op.lu.solve(x)
        x = y / np.linalg.norm(y)
    mu = np.vdot(x, op.L @ x)
    return complex(op.k2 + mu)


def near_singular(
    scene: RectScene,
    A: VectorField,
    V: ScalarField,
    k2: complex,
    margin: float = 1e-4,
    op: DiscreteOperator | None = None,
) -> NearSingular:
    """Flag ``k2`` when the smallest singular value of the interior system is
    below ``margin`` times its median diagonal magnitude.

    The nearest Dirichlet eigenvalue is estimated with inverse iteration.
    """
    op = assemble(scene, A, V, k2) if op is None else op
    thr = margin * float(np.median(np.abs(op.L.diagonal())))
    try:
        smin = _sigma_min(op)
        nearest = _nearest_eigenvalue(op)
    except NearSingularError:
        return NearSingular(True, 0.0, thr, complex(k2))
    return NearSingular(smin < thr, smin, thr, nearest)


@dataclass
class DtnMatrix:
    k2: complex
    nodes: np.ndarray
    entries: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, DtnMatrix)
            and self.k2 == other.k2
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.entries, other.entries)
        )

    def to_dict(self) -> dict:
        return {
            "kind": "dtn",
            "k2": [self.k2.real, self.k2.imag],
            "nodes": self.nodes.tolist(),
            "entries": [[[float(v.real), float(v.imag)] for v in row] for row in self.entries],
        }

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()) + "\n")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "DtnMatrix":
        if d.get("kind") != "dtn":
            raise ValueError("not a D-to-N artifact")
        ent = np.array(d["entries"], dtype=float)
        return cls(complex(*d["k2"]), np.array(d["nodes"], dtype=float), ent[..., 0] + 1j * ent[..., 1])

    @classmethod
    def from_json(cls, path) -> "DtnMatrix":
        return cls.from_dict(json.loads(Path(path).read_text()))


def dtn_from_operator(op: DiscreteOperator, margin: float | None = 1e-10) -> DtnMatrix:
    """D-to-N matrix of an assembled operator; ``margin=None`` skips the singularity guard."""
    ns = None if margin is None else near_singular(op.scene, None, None, op.k2, margin, op=op)
    if ns is not None and ns.flag:
        raise NearSingularError(
            f"k^2={op.k2} is within {ns.sigma_min:.3e} of the discrete spectrum "
            f"(nearest eigenvalue ~ {ns.nearest_eigenvalue})"
        )
    nb = op.n_boundary
    W = op.solve_interior(-(op.coupling @ np.eye(nb, dtype=complex)))
    entries = (np.eye(nb) - op.trace @ W) / op.scene.h
    return DtnMatrix(op.k2, op.scene.coords(op.scene.boundary_nodes), np.asarray(entries))


def dtn_matrix(scene: RectScene, A: VectorField, V: ScalarField, k2: complex, margin: float = 1e-10, links=None) -> DtnMatrix:
    """Column ``j`` is the covariant Neumann trace of the solution with unit data at boundary node ``j``."""
    return dtn_from_operator(assemble(scene, A, V, k2, links), margin)


def conjugate_vector(A: VectorField) -> VectorField:
    return VectorField(
        lambda p: np.conj(A(p)),
        f"conj({A.name})",
        line_integral=lambda p, q: np.conj(A.link_integral(p, q)),
    )


def conjugate_scalar(V: ScalarField) -> ScalarField:
    return ScalarField(lambda p: np.conj(V(p)), f"conj({V.name})")


def hermiticity_residual(lam: DtnMatrix) -> float:
    M = lam.entries
    return float(np.linalg.norm(M - M.conj().T) / np.linalg.norm(M))


def adjoint_residual(scene: RectScene, A: VectorField, V: ScalarField, k2: float) -> float:
    """``||Lambda[conj A, conj V] - Lambda[A, V]^H||_F / ||Lambda[A, V]||_F`` for real ``k2``."""
    if complex(k2).imag != 0.0:
        raise ValueError("adjoint identity is checked at real k^2")
    lam = dtn_matrix(scene, A, V, k2)
    lam_star = dtn_matrix(scene, conjugate_vector(A), conjugate_scalar(V), k2)
    return float(np.linalg.norm(lam_star.entries - lam.entries.conj().T) / np.linalg.norm(lam.entries))


def relative_gap(l1: DtnMatrix, l2: DtnMatrix) -> dict:
    if l1.entries.shape != l2.entries.shape:
        raise ValueError("D-to-N matrices have different shapes")
    d = l1.entries - l2.entries
    return {
        "frobenius": float(np.linalg.norm(d)),
        "relative_frobenius": float(np.linalg.norm(d) / np.linalg.norm(l1.entries)),
        "max_entry": float(np.max(np.abs(d))),
    }


@dataclass
class ProbeResult:
    k2: np.ndarray
    entries: list[tuple[int, int]]
    table: np.ndarray
    score: float


def divided_differences(t, f, order: int = 3) -> np.ndarray:
    """Divided differences of ``f`` (samples along axis 0) at nodes ``t``."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(f, dtype=complex)
    for k in range(1, order + 1):
        denom = (t[k:] - t[:-k]).reshape((-1,) + (1,) * (d.ndim - 1))
        d = (d[1:] - d[:-1]) / denom
    return d


def analyticity_probe(
    scene: RectScene,
    A: VectorField,
    V: ScalarField,
    k2_samples,
    entries: list[tuple[int, int]] | None = None,
    margin: float = 1e-6,
) -> ProbeResult:
    """Tabulate selected D-to-N entries over real ``k2`` samples.

    The score is the largest third divided difference over all entries; it
    stays bounded under sample refinement on intervals free of the discrete
    spectrum.
    """
    k2 = np.asarray(k2_samples, dtype=float)
    nb = len(scene.boundary_nodes)
    if entries is None:
        mid = (scene.nx - 1) // 2
        entries = [(mid, mid), (mid, (mid + 1) % nb), (0, nb // 2)]
    table = np.empty((len(k2), len(entries)), dtype=complex)
    for n, kk in enumerate(k2):
        op = assemble(scene, A, V, kk)
        ns = near_singular(scene, A, V, kk, margin, op=op)
        if ns.flag:
            raise NearSingularError(f"sample k^2={kk} is near the discrete spectrum")
        lam = dtn_from_operator(op, margin=None)
        table[n] = [lam.entries[i, j] for i, j in entries]
    score = float(np.max(np.abs(divided_differences(k2, table)))) if len(k2) >= 4 else 0.0
    return ProbeResult(k2, entries, table, score)
