from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from pcs_phases.config import ModeConfig, Tolerances
from pcs_phases.errors import OpenPathError, PoleContactError, UnderSamplingError
from pcs_phases.fock import MINUS, enumerate_basis
from pcs_phases.phase import (
    METHOD_CLOSED,
    METHOD_OVERLAPS,
    berry_connection,
    compare_hannay,
    connection_profile,
    gauge_potential_glauber,
    geometric_phase,
    hannay_closed,
    hannay_numeric,
    overlap_glauber_closed,
    overlap_pcs_closed,
    pcs_family,
    phase_by_connection,
    phase_by_overlaps,
    phase_closed_family,
    phase_closed_glauber,
    phase_closed_pcs,
)
from pcs_phases.sphere import (
    SpherePoint,
    angle_polygon,
    geodesic_polygon,
    latitude_loop,
    solid_angle,
)
from pcs_phases.states import ReferenceSpec, displace, glauber_cutoff, make_reference

GLAUBER_ALPHAS = ((1.0, 0.5j), (-0.3, 0.8))


def _fock_family(basis_for, p, helicity="+"):
    n = int(round(2 * p))
    return pcs_family(ReferenceSpec.fock(p, helicity), basis_for(1, n))


def _glauber_family(basis_for, alphas=GLAUBER_ALPHAS):
    return pcs_family(ReferenceSpec.glauber(alphas), basis_for(len(alphas), glauber_cutoff(alphas)))


def _octant(samples=None):
    return geodesic_polygon(
        [SpherePoint(math.pi / 2, 0.0), SpherePoint(math.pi / 2, math.pi / 2), SpherePoint(0.0, 0.0)],
        samples,
    )


def _tilted_octant(samples=None):
    axes = Rotation.from_rotvec([0.3, -0.2, 0.1]).as_matrix()
    vertices = [SpherePoint.from_vector(axes[:, k]) for k in range(3)]
    return geodesic_polygon(vertices, samples)


def test_spin_half_equator_gives_half_the_solid_angle(basis_for):
    family = _fock_family(basis_for, 0.5)
    gamma = phase_by_connection(family, latitude_loop(math.pi / 2, samples=200))
    assert gamma == pytest.approx(math.pi, abs=1e-6)


def test_phase_is_reported_unwrapped(basis_for):
    family = _fock_family(basis_for, 2.0)
    path = latitude_loop(math.pi / 3, samples=200)
    assert solid_angle(path) == pytest.approx(math.pi)
    gamma = phase_by_connection(family, path)
    assert gamma == pytest.approx(2 * math.pi, abs=1e-6)
    assert phase_closed_pcs(path, 2.0) == pytest.approx(2 * math.pi, abs=1e-12)


def test_negative_helicity_reverses_the_phase(basis_for):
    family = _fock_family(basis_for, 0.5, MINUS)
    path = latitude_loop(math.pi / 2, samples=200)
    assert phase_by_connection(family, path) == pytest.approx(-math.pi, abs=1e-6)
    assert phase_closed_pcs(path, 0.5, MINUS) == pytest.approx(-math.pi, abs=1e-12)


def test_octant_triangle_by_overlaps_and_closed_form(basis_for):
    family = _fock_family(basis_for, 1.0)
    result = geometric_phase(family, _octant(), (METHOD_OVERLAPS, METHOD_CLOSED))
    assert result.omega == pytest.approx(math.pi / 2, abs=1e-12)
    assert result.gamma_closed == pytest.approx(math.pi / 2, abs=1e-4)
    assert result.gamma_overlap == pytest.approx(math.pi / 2, abs=1e-4)
    assert result.gamma_connection is None


def test_connection_refuses_paths_through_a_pole(basis_for):
    with pytest.raises(PoleContactError):
        phase_by_connection(_fock_family(basis_for, 1.0), _octant(samples=32))


def test_tilted_octant_agrees_across_methods(basis_for):
    family = _fock_family(basis_for, 1.0)
    path = _tilted_octant()
    result = geometric_phase(family, path)
    assert result.omega == pytest.approx(math.pi / 2, abs=1e-4)
    for value in result.values().values():
        assert value == pytest.approx(math.pi / 2, abs=1e-4)
    assert result.max_discrepancy < 1e-4
    assert len(result.per_segment) == 3
    assert math.fsum(result.per_segment) == pytest.approx(result.gamma_connection)


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5, 2.0, 3.0])
def test_closed_overlap_matches_fock_inner_product(basis_for, p):
    rng = np.random.default_rng(int(10 * p))
    basis = basis_for(1, int(round(2 * p)))
    reference = make_reference(ReferenceSpec.fock(p), basis)
    worst = 0.0
    for _ in range(20):
        theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
        u, v = rng.uniform(0, 1), rng.uniform(0, 2)
        left = displace(reference, theta, phi)
        right = displace(reference, u * theta, v * phi)
        worst = max(worst, abs(overlap_pcs_closed(theta, phi, u, v, p) - left.inner(right)))
    assert worst < 1e-10


def test_closed_overlap_for_negative_helicity(basis_for):
    basis = basis_for(1, 2)
    reference = make_reference(ReferenceSpec.fock(1.0, MINUS), basis)
    left = displace(reference, 1.2, 0.7)
    right = displace(reference, 0.6, 2.1)
    expected = left.inner(right)
    assert overlap_pcs_closed(1.2, 0.7, 0.5, 3.0, 1.0, MINUS) == pytest.approx(expected, abs=1e-10)


def test_glauber_closed_overlap_matches_truncated_states(basis_for):
    family = _glauber_family(basis_for)
    left = family.amplitudes(0.9, 1.4)
    right = family.amplitudes(0.45, 2.8)
    expected = complex(np.vdot(left, right))
    assert overlap_glauber_closed(GLAUBER_ALPHAS, 0.9, 1.4, 0.5, 2.0) == pytest.approx(
        expected, abs=1e-10
    )


def test_glauber_connection_matches_gauge_potential(basis_for):
    family = _glauber_family(basis_for)
    for theta, phi in [(0.4, 0.3), (1.3, 2.2), (2.5, 5.0)]:
        a_theta, a_phi = gauge_potential_glauber(GLAUBER_ALPHAS, theta, phi)
        at = SpherePoint(theta, phi)
        assert berry_connection(family, at, (1.0, 0.0)) == pytest.approx(a_theta, abs=1e-7)
        assert berry_connection(family, at, (0.0, 1.0)) == pytest.approx(a_phi, abs=1e-7)


@pytest.mark.parametrize(
    "path_factory",
    [lambda: latitude_loop(1.1, samples=400), lambda: _tilted_octant(200)],
    ids=["latitude", "triangle"],
)
def test_glauber_phase_matches_closed_components(basis_for, path_factory):
    family = _glauber_family(basis_for)
    path = path_factory()
    components = phase_closed_glauber(path, GLAUBER_ALPHAS)
    gamma = phase_by_connection(family, path)
    assert abs(gamma - components.total) < 1e-6
    assert phase_closed_family(family, path).total == pytest.approx(components.total, abs=1e-12)


def test_glauber_without_minus_amplitudes_has_no_dipole_terms():
    components = phase_closed_glauber(_tilted_octant(samples=64), ((0.7 - 0.2j, 0.0), (1.1, 0.0)))
    assert components.gamma1 == pytest.approx(0.0, abs=1e-10)
    assert components.gamma2 == pytest.approx(0.0, abs=1e-10)
    intensity = 0.49 + 0.04 + 1.21
    assert components.expectation.p0 == pytest.approx(0.5 * intensity)


def test_two_mode_family_follows_its_quasispin(basis_for):
    family = pcs_family(ReferenceSpec.two_mode(1.0, 2, 0.0), basis_for(2, 2))
    path = latitude_loop(0.9, samples=300)
    assert phase_by_connection(family, path) == pytest.approx(
        phase_closed_pcs(path, 1.0), abs=1e-6
    )


@pytest.mark.parametrize("p", [0.5, 1.0, 3.0])
def test_hannay_angle_is_minus_half_the_solid_angle(p):
    path = latitude_loop(1.0)
    assert hannay_numeric(path, p) == pytest.approx(-0.5 * solid_angle(path), abs=1e-10)


def test_hannay_forms_disagree_visibly(caplog):
    path = latitude_loop(math.pi / 2)
    assert hannay_closed(path, 0.0, 0.0) == pytest.approx(2 * math.pi, abs=1e-12)
    with caplog.at_level(logging.WARNING, logger="pcs_phases.phase"):
        report = compare_hannay(path, 1.0)
    assert report.numeric == pytest.approx(-math.pi, abs=1e-10)
    assert report.discrepancy == pytest.approx(3 * math.pi, abs=1e-10)
    assert "differs" in caplog.text
    assert report.as_dict()["omega"] == pytest.approx(2 * math.pi)


def test_hannay_requires_a_photon():
    with pytest.raises(ValueError):
        hannay_numeric(latitude_loop(1.0), 0.0)


def test_overlaps_converge_under_refinement(basis_for):
    family = _fock_family(basis_for, 0.5)
    errors = []
    for samples in (125, 500, 2000):
        path = latitude_loop(1.4, samples=samples)
        errors.append(abs(phase_by_overlaps(family, path) - phase_closed_pcs(path, 0.5)))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-6


def test_overlaps_converge_on_a_triangle(basis_for):
    family = _fock_family(basis_for, 0.5)
    errors = []
    for samples in (25, 100, 400):
        path = _tilted_octant(samples)
        errors.append(abs(phase_by_overlaps(family, path) - phase_by_connection(family, path)))
    assert errors[0] > errors[1] > errors[2]


def test_equator_overlaps_are_exact(basis_for):
    family = _fock_family(basis_for, 1.5)
    path = latitude_loop(math.pi / 2, samples=16)
    assert phase_by_overlaps(family, path) == pytest.approx(3 * math.pi, abs=1e-12)


def test_coarse_overlaps_are_flagged(basis_for):
    with pytest.raises(UnderSamplingError):
        phase_by_overlaps(_fock_family(basis_for, 0.5), latitude_loop(math.pi / 2, samples=2))


def test_open_paths_are_rejected(basis_for):
    family = _fock_family(basis_for, 0.5)
    path = angle_polygon([SpherePoint(1.0, 0.0), SpherePoint(1.0, 1.0)], closed=False, samples=8)
    with pytest.raises(OpenPathError):
        geometric_phase(family, path)
    with pytest.raises(OpenPathError):
        phase_by_overlaps(family, path)


def test_unknown_method_is_rejected(basis_for):
    with pytest.raises(ValueError):
        geometric_phase(_fock_family(basis_for, 0.5), latitude_loop(1.0), ("stokes",))


def test_connection_profile_accumulates_to_the_phase(basis_for):
    family = _fock_family(basis_for, 1.0)
    profile = connection_profile(family, latitude_loop(1.0, samples=64), workers=2)
    assert profile.running_gamma[0] == 0.0
    assert profile.running_gamma[-1] == pytest.approx(profile.gamma, abs=1e-12)
    expected_a_s = -2.0 * math.sin(0.5) ** 2 / math.sin(1.0)
    np.testing.assert_allclose(profile.a_s, expected_a_s, atol=1e-7)
    rows = list(profile.rows())
    assert len(rows) == 65
    assert rows[-1][0] == pytest.approx(2 * math.pi * math.sin(1.0))


def test_richardson_extrapolation_is_recorded():
    tol = Tolerances(richardson=True, fd_step=1e-3)
    basis = enumerate_basis(ModeConfig(m=1, n_max=1, tol=tol))
    family = pcs_family(ReferenceSpec.fock(0.5), basis)
    path = latitude_loop(1.0, samples=64)
    result = geometric_phase(family, path, workers=3)
    assert result.diagnostics["richardson"] is True
    assert result.gamma_connection == pytest.approx(phase_closed_pcs(path, 0.5), abs=1e-9)
    assert result.as_dict()["gamma_closed_mod_2pi"] == pytest.approx(
        result.gamma_closed % (2 * math.pi)
    )


@pytest.mark.parametrize(
    "spec,m,n_max",
    [(ReferenceSpec.fock(1.5), 1, 3), (ReferenceSpec.two_mode(1.0, 4, 0.0), 2, 4)],
    ids=["fock", "two_mode"],
)
def test_reversing_the_path_negates_every_method(basis_for, spec, m, n_max):
    family = pcs_family(spec, basis_for(m, n_max))
    path = _tilted_octant(200)
    forward = geometric_phase(family, path)
    backward = geometric_phase(family, path.reversed())
    assert backward.omega == pytest.approx(-forward.omega, abs=1e-12)
    assert set(backward.values()) == set(forward.values()) == {
        "connection",
        "overlaps",
        "closed_form",
    }
    for method, value in forward.values().items():
        assert abs(value) > 1.0
        assert backward.values()[method] == pytest.approx(-value, abs=1e-9)


def test_winding_multiplies_every_method(basis_for):
    family = _fock_family(basis_for, 1.0)
    once = geometric_phase(family, latitude_loop(1.1, samples=400))
    twice = geometric_phase(family, latitude_loop(1.1, winding=2, samples=800))
    assert twice.omega == pytest.approx(2 * once.omega, abs=1e-12)
    for method, value in once.values().items():
        assert twice.values()[method] == pytest.approx(2 * value, abs=1e-9)


def test_equal_solid_angles_give_equal_phases(basis_for):
    family = _fock_family(basis_for, 1.0)
    cap = latitude_loop(math.acos(0.75), samples=2000)
    triangle = _tilted_octant()
    assert solid_angle(cap) == pytest.approx(math.pi / 2, abs=1e-12)
    assert solid_angle(triangle) == pytest.approx(math.pi / 2, abs=1e-4)

    on_cap = geometric_phase(family, cap, (METHOD_OVERLAPS, METHOD_CLOSED))
    on_triangle = geometric_phase(family, triangle, (METHOD_OVERLAPS, METHOD_CLOSED))
    for method in (METHOD_OVERLAPS, METHOD_CLOSED):
        assert on_cap.values()[method] == pytest.approx(on_triangle.values()[method], abs=1e-4)
        assert on_cap.values()[method] == pytest.approx(math.pi / 2, abs=1e-4)
