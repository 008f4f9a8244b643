import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from gaugetomo.brt import (
    SamplingSpec,
    Sinogram,
    data_distance,
    generate_sinogram,
    integrate_scalar,
    magnetic_phase,
    phase_factor,
    trace_grid,
)
from gaugetomo.fields import GaugeFunction, ScalarField, VectorField, apply_gauge
from gaugetomo.scene import Circle, Scene, boundary_point, concentric_scene
from gaugetomo.tracer import BrokenRay, reverse, trace


@pytest.fixture(scope="module")
def diametral(annulus):
    return trace(annulus, 0.0, (-1.0, 0.0))


@pytest.fixture(scope="module")
def chord(annulus):
    return trace(annulus, 0.0, np.array([-2.0, 2.0]) / math.sqrt(8))


def _random_rays(sc, n, seed=0):
    rng = np.random.default_rng(seed)
    rays = []
    while len(rays) < n:
        s0 = rng.uniform(0, sc.outer.arclength)
        _, nu, _ = boundary_point(sc, 0, s0)
        ang = math.atan2(nu[1], nu[0]) + rng.uniform(-1.5, 1.5)
        r = trace(sc, s0, (math.cos(ang), math.sin(ang)))
        if isinstance(r, BrokenRay):
            rays.append(r)
    return rays


def test_constant_potential_gives_length(annulus, diametral):
    for r in _random_rays(annulus, 10):
        assert integrate_scalar(r, ScalarField.constant(1.0)).real == pytest.approx(r.total_length, abs=1e-12)
    assert integrate_scalar(diametral, ScalarField.constant(2.5 - 1j)) == pytest.approx(5.0 - 2j, abs=1e-12)


def test_gaussian_chord_matches_gauss_kronrod(chord, frozen):
    V = ScalarField.gaussian((0.0, 1.5), 0.3, 1.0)
    assert abs(integrate_scalar(chord, V) - frozen["gaussian_chord_2_0_to_0_2"]) < 1e-8


def test_frozen_broken_ray_integrals(annulus, frozen):
    g = frozen["gaussian"]
    V = ScalarField.gaussian(g["center"], g["width"], g["amplitude"])
    A = VectorField.ab_flux((0, 0), frozen["ab_alpha"])
    for row in frozen["launches"]:
        ray = trace(annulus, row["s0"], (math.cos(row["angle"]), math.sin(row["angle"])))
        assert abs(integrate_scalar(ray, V, step=0.005) - row["gaussian_integral"]) < 1e-9
        assert abs(magnetic_phase(ray, A, step=0.005) - row["ab_phase"]) < 1e-9


def test_quadrature_is_fourth_order(chord):
    V = ScalarField.gaussian((0.0, 1.5), 0.5, 1.0)
    ref = O.line_integral_scalar(O.gaussian((0.0, 1.5), 0.5), chord.vertices())
    errs = [abs(integrate_scalar(chord, V, step) - ref) for step in (0.2, 0.1, 0.05)]
    assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8


def test_phase_examples(annulus, diametral):
    r = _random_rays(annulus, 5)
    for ray in r:
        assert magnetic_phase(ray, VectorField.zero()) == 0.0
        assert phase_factor(ray, VectorField.zero()) == 1.0
    assert abs(magnetic_phase(diametral, VectorField.ab_flux((0, 0), 0.5))) < 1e-12


def test_boundary_vanishing_gradient_has_zero_phase(annulus):
    phi = GaugeFunction.disk_factor((0, 0), 2.0) * GaugeFunction.plane_wave((1.3, -0.7), 0.4, 1.5)
    A = VectorField.gradient_of(phi)
    for ray in _random_rays(annulus, 40, seed=5):
        assert abs(magnetic_phase(ray, A)) < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 12.5), st.floats(-1.5, 1.5))
def test_linearity_and_reversal(a, b, s0, off):
    sc = concentric_scene()
    _, nu, _ = boundary_point(sc, 0, s0)
    ang = math.atan2(nu[1], nu[0]) + off
    ray = trace(sc, s0, (math.cos(ang), math.sin(ang)))
    if not isinstance(ray, BrokenRay):
        return
    V1 = ScalarField.gaussian((0.3, 1.4), 0.4, 1.0)
    V2 = ScalarField.gaussian((-1.2, -0.5), 0.6, 1j)
    combo = integrate_scalar(ray, a * V1 + b * V2)
    sep = a * integrate_scalar(ray, V1) + b * integrate_scalar(ray, V2)
    assert abs(combo - sep) < 1e-12 * max(1.0, abs(sep))
    back = reverse(ray)
    assert integrate_scalar(back, V1) == integrate_scalar(ray, V1)
    A = VectorField.ab_flux((0, 0), 0.3) + VectorField.uniform_field(0.5)
    assert abs(magnetic_phase(back, A) + magnetic_phase(ray, A)) < 1e-12


def test_chord_sinogram_without_obstacles():
    disk = Scene(Circle((0, 0), 2.0))
    w = generate_sinogram(disk, ScalarField.constant(1.0), "scalar_integral", SamplingSpec(4, 4))
    expected = [O.disk_chord(2.0, s, th) for s, th in zip(w.s, w.theta)]
    np.testing.assert_allclose(w.value.real, expected, atol=1e-12)
    assert np.all(w.outcome == "ok")


def test_zero_field_phase_sinogram_is_one(annulus):
    w = generate_sinogram(annulus, VectorField.zero(), "phase_factor", SamplingSpec(16, 16))
    assert np.all(w.value[w.ok] == 1.0)


def test_no_trapped_rays_in_annulus(annulus):
    rays = trace_grid(annulus, SamplingSpec(64, 64), 64)
    w = generate_sinogram(annulus, VectorField.zero(), "phase_factor", rays=rays)
    assert w.metadata["trapped_fraction"] == 0.0
    assert np.all(np.abs(np.abs(w.value[w.ok]) - 1) < 1e-12)


def test_full_sector_inward_rows(annulus):
    w = generate_sinogram(annulus, ScalarField.constant(1.0), "scalar_integral", SamplingSpec(8, 16, "full"))
    inward = (w.total_length == 0) & w.ok
    assert inward.any()
    assert np.all(w.value[inward] == 0)


def test_data_distance_examples(annulus):
    spec = SamplingSpec(16, 16)
    rays = trace_grid(annulus, spec)
    V = ScalarField.gaussian((0, 1.5), 0.4)
    w = generate_sinogram(annulus, V, "scalar_integral", rays=rays)
    d = data_distance(w, w)
    assert d["max_abs"] == 0.0 and d["l2_mean"] == 0.0 and d["outcome_mismatches"] == 0
    eps = 1e-3
    w2 = generate_sinogram(annulus, V + ScalarField.constant(eps), "scalar_integral", rays=rays)
    assert data_distance(w, w2)["max_abs"] == pytest.approx(eps * w.total_length.max(), rel=1e-9)
    # gauge invariance with a boundary-vanishing gauge
    A = VectorField.ab_flux((0, 0), 0.3)
    phi = GaugeFunction.disk_factor((0, 0), 2.0) * GaugeFunction.polynomial({(1, 0): 0.7, (0, 2): -0.4})
    p1 = generate_sinogram(annulus, A, "phase_factor", rays=rays)
    p2 = generate_sinogram(annulus, apply_gauge(A, phi), "phase_factor", rays=rays)
    assert data_distance(p1, p2)["max_abs"] < 1e-7
    with pytest.raises(ValueError):
        data_distance(w, generate_sinogram(annulus, V, "scalar_integral", SamplingSpec(8, 8)))


def test_csv_round_trip(tmp_path, annulus):
    spec = SamplingSpec(8, 12, "full")
    w = generate_sinogram(annulus, ScalarField.gaussian((0.5, 1.2), 0.3, 1 - 2j), "scalar_integral", spec)
    path = w.to_csv(tmp_path / "w.csv")
    again = Sinogram.from_csv(path)
    assert again == w
    again.to_csv(tmp_path / "w2.csv")
    assert (tmp_path / "w2.csv").read_bytes() == path.read_bytes()


def test_threads_do_not_change_results(annulus):
    spec = SamplingSpec(12, 12)
    V = ScalarField.gaussian((0, -1.5), 0.5)
    a = generate_sinogram(annulus, V, "scalar_integral", spec, threads=1)
    b = generate_sinogram(annulus, V, "scalar_integral", spec, threads=3)
    assert a == b
