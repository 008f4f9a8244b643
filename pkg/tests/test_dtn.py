import math

import numpy as np
import pytest

import oracles as O
from gaugetomo.dtn import (
    DtnMatrix,
    NearSingularError,
    RectScene,
    adjoint_residual,
    analyticity_probe,
    assemble,
    divided_differences,
    dtn_matrix,
    hermiticity_residual,
    link_integrals,
    near_singular,
    relative_gap,
    solve_dirichlet,
)
from gaugetomo.fields import GaugeFunction, ScalarField, VectorField, apply_gauge

ZERO_V = ScalarField.constant(0.0)


@pytest.fixture(scope="module")
def holed():
    return RectScene(1.0, 1.0, 1 / 32, ((0.375, 0.375, 0.625, 0.625),))


def test_scene_validation():
    with pytest.raises(ValueError):
        RectScene(1.0, 1.0, 0.3)
    with pytest.raises(ValueError):
        RectScene(1.0, 1.0, 0.125, ((0.125, 0.25, 0.5, 0.5),))  # clearance h < 2h
    with pytest.raises(ValueError):
        RectScene(1.0, 1.0, 0.0625, ((0.25, 0.25, 0.5, 0.5), (0.5, 0.25, 0.75, 0.5)))
    sc = RectScene(2.0, 1.0, 0.25)
    assert RectScene.from_dict(sc.to_dict()) == sc


def test_boundary_node_order():
    sc = RectScene(1.0, 0.5, 0.25)
    nodes = sc.boundary_nodes.tolist()
    assert nodes == [[1, 0], [2, 0], [3, 0], [4, 1], [3, 2], [2, 2], [1, 2], [0, 1]]


def test_exact_discrete_gauge_covariance(holed):
    A = VectorField.uniform_field(1.7, (0.5, 0.5)) + VectorField.ab_flux((0.5, 0.5), 0.3)
    V = ScalarField.gaussian((0.2, 0.3), 0.1, 2.0)
    phi = GaugeFunction.plane_wave((2.0, -3.0), 0.4, 5.0)  # arbitrary, not boundary-vanishing
    op = assemble(holed, A, V, 1.0)
    hor, ver = op.links
    nodes = np.stack(np.meshgrid(np.arange(holed.nx + 1), np.arange(holed.ny + 1), indexing="ij"), -1) * holed.h
    ph = phi(nodes)
    gauged = (hor + ph[1:, :] - ph[:-1, :], ver + ph[:, 1:] - ph[:, :-1])
    op2 = assemble(holed, A, V, 1.0, links=gauged)
    D = np.exp(1j * ph[tuple(op.interior.T)])
    conj = (op.L.toarray() * np.conj(D)[:, None]) * D[None, :]
    assert np.max(np.abs(op2.L.toarray() - conj)) < 1e-12 * np.max(np.abs(conj))


def test_dtn_gauge_invariance_exact_links(holed):
    A = VectorField.uniform_field(2.0, (0.5, 0.5))
    V = ScalarField.gaussian((0.2, 0.2), 0.1, 3.0)
    phi = GaugeFunction.rect_factor(1.0, 1.0) * GaugeFunction.plane_wave((3.0, 2.0), 0.1, 40.0)
    l1 = dtn_matrix(holed, A, V, 1.0)
    l2 = dtn_matrix(holed, apply_gauge(A, phi), V, 1.0)
    assert relative_gap(l1, l2)["relative_frobenius"] < 1e-9


def test_dtn_gauge_invariance_midpoint_links_is_second_order():
    A = VectorField.uniform_field(2.0, (0.5, 0.5))
    phi = GaugeFunction.rect_factor(1.0, 1.0) * GaugeFunction.plane_wave((3.0, 2.0), 0.1, 10.0)
    sampled = VectorField(apply_gauge(A, phi))  # point samples only: midpoint-rule links
    gaps = []
    for h in (1 / 16, 1 / 32):
        sc = RectScene(1.0, 1.0, h)
        gaps.append(relative_gap(dtn_matrix(sc, A, ZERO_V, 1.0), dtn_matrix(sc, sampled, ZERO_V, 1.0))["relative_frobenius"])
    assert gaps[1] > 0 and gaps[0] / gaps[1] > 3.0


def test_hermitian_in_real_case(holed):
    lam = dtn_matrix(holed, VectorField.ab_flux((0.5, 0.5), 0.3), ScalarField.gaussian((0.2, 0.8), 0.1, 1.0), 2.0)
    assert hermiticity_residual(lam) < 1e-9


def test_complex_potential_breaks_hermiticity_but_not_adjoint_identity(holed):
    V = ScalarField.gaussian((0.2, 0.5), 0.15, 5j)
    A = VectorField.uniform_field(1.0, (0.5, 0.5))
    lam = dtn_matrix(holed, A, V, 1.0)
    assert hermiticity_residual(lam) > 1e-4
    assert adjoint_residual(holed, A, V, 1.0) < 1e-9


def test_adjoint_rejects_complex_k2(holed):
    with pytest.raises(ValueError):
        adjoint_residual(holed, VectorField.zero(), ZERO_V, 1.0 + 0.5j)


def _bottom_mode(h):
    sc = RectScene(1.0, 1.0, h)
    nodes = sc.coords(sc.boundary_nodes)
    data = np.where(np.abs(nodes[:, 1]) < 1e-12, np.sin(np.pi * nodes[:, 0]), 0.0)
    return sc, nodes, data


def test_dirichlet_solution_converges_second_order():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        sc, _, data = _bottom_mode(h)
        w = solve_dirichlet(assemble(sc, VectorField.zero(), ZERO_V, 0.0), data)
        X, Y = np.meshgrid(np.arange(sc.nx + 1) * h, np.arange(sc.ny + 1) * h, indexing="ij")
        inner = sc.node_kind == 0
        errs.append(np.max(np.abs(w[inner] - O.square_bottom_mode(X, Y)[inner])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)


def test_dtn_column_converges_first_order():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        sc, nodes, data = _bottom_mode(h)
        lam = dtn_matrix(sc, VectorField.zero(), ZERO_V, 0.0)
        bottom = np.abs(nodes[:, 1]) < 1e-12
        got = (lam.entries @ data)[bottom].real
        errs.append(np.max(np.abs(got - O.square_bottom_flux(nodes[bottom, 0]))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.8)


def test_near_singular_at_discrete_eigenvalue():
    h = 1 / 16
    sc = RectScene(1.0, 1.0, h)
    lam1 = O.discrete_dirichlet_eigenvalue(h)
    ns = near_singular(sc, VectorField.zero(), ZERO_V, lam1)
    assert ns.flag
    assert ns.nearest_eigenvalue.real == pytest.approx(lam1, rel=1e-8)
    assert not near_singular(sc, VectorField.zero(), ZERO_V, -1.0).flag
    with pytest.raises(NearSingularError):
        dtn_matrix(sc, VectorField.zero(), ZERO_V, lam1)


def test_json_round_trip(tmp_path, holed):
    lam = dtn_matrix(holed, VectorField.ab_flux((0.5, 0.5), 0.5), ScalarField.constant(0.5 + 0.25j), 1.0)
    path = lam.to_json(tmp_path / "l.json")
    again = DtnMatrix.from_json(path)
    assert again.k2 == lam.k2
    assert np.array_equal(again.nodes, lam.nodes) and np.array_equal(again.entries, lam.entries)
    again.to_json(tmp_path / "l2.json")
    assert (tmp_path / "l2.json").read_bytes() == path.read_bytes()


def test_ab_flux_changes_dtn(holed):
    l0, lh = (dtn_matrix(holed, VectorField.ab_flux((0.5, 0.5), a), ZERO_V, 1.0) for a in (0.0, 0.5))
    assert relative_gap(l0, lh)["relative_frobenius"] > 1e-3


def test_link_integrals_shapes(holed):
    hor, ver = link_integrals(holed, VectorField.constant((1.0, 2.0)))
    assert hor.shape == (holed.nx, holed.ny + 1) and ver.shape == (holed.nx + 1, holed.ny)
    np.testing.assert_allclose(hor, holed.h, atol=1e-15)
    np.testing.assert_allclose(ver, 2 * holed.h, atol=1e-15)


def test_divided_differences_of_cubic():
    t = np.linspace(0, 1, 7)
    d = divided_differences(t, 2 * t**3 - t, order=3)
    np.testing.assert_allclose(d.real, 2.0, atol=1e-10)


def test_analyticity_probe_bounded_away_from_spectrum():
    sc = RectScene(1.0, 1.0, 1 / 16)
    far = analyticity_probe(sc, VectorField.zero(), ZERO_V, np.linspace(-5, 5, 11))
    near = analyticity_probe(sc, VectorField.zero(), ZERO_V, np.linspace(15, 19.5, 11))
    assert np.isfinite(far.score) and near.score > 10 * far.score
