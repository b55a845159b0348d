from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from scipy.stats import poisson

from pcs_phases.errors import CutoffError, InvalidStateError
from pcs_phases.fock import DENSE_BLOCK_LIMIT, MINUS, PLUS, StateVector, basis_state
from pcs_phases.quasiprob import DensityMatrix
from pcs_phases.quasispin import build_quasispin, stokes_vector
from pcs_phases.states import (
    ReferenceSpec,
    RotationSpec,
    coherent_amplitudes,
    displace,
    displacement_matrix,
    glauber_cutoff,
    make_pcs,
    make_reference,
    rotate_state,
    transform_glauber_params,
)


def _eigen_triple(state, basis):
    q = build_quasispin(basis)
    return tuple(state.expectation(op).real for op in (q.casimir, q.p0, q.number))


@pytest.mark.parametrize("p", [0.0, 0.5, 1.0, 1.5, 3.0])
@pytest.mark.parametrize("helicity,sign", [(PLUS, 1.0), (MINUS, -1.0)])
def test_fock_reference_quantum_numbers(basis_for, p, helicity, sign):
    basis = basis_for(1, 6)
    state = make_reference(ReferenceSpec.fock(p, helicity), basis)
    casimir, p0, number = _eigen_triple(state, basis)
    assert casimir == pytest.approx(p * (p + 1), abs=1e-10)
    assert p0 == pytest.approx(sign * p, abs=1e-12)
    assert number == pytest.approx(2 * p, abs=1e-12)


@pytest.mark.parametrize(
    "p,n,t", [(1.0, 2, 0.0), (0.0, 2, 0.0), (0.5, 3, 0.5), (1.0, 4, -1.0), (1.5, 5, 0.5)]
)
def test_two_mode_reference_is_normalized_by_its_prefactor(basis_for, caplog, p, n, t):
    basis = basis_for(2, n)
    with caplog.at_level(logging.WARNING, logger="pcs_phases.states"):
        state = make_reference(ReferenceSpec.two_mode(p, n, t), basis)
    assert not caplog.records
    assert state.norm() == pytest.approx(1.0, abs=1e-12)
    casimir, p0, number = _eigen_triple(state, basis)
    assert casimir == pytest.approx(p * (p + 1), abs=1e-10)
    assert p0 == pytest.approx(p, abs=1e-10)
    assert number == pytest.approx(n, abs=1e-10)


def test_independent_reference_places_photons_per_mode(basis_for):
    basis = basis_for(2, 3)
    state = make_reference(ReferenceSpec.independent([1, 2], MINUS), basis)
    assert state.amp[basis.index_of((0, 1, 0, 2))] == 1.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "fock_m1", "p": 0.3, "n": 1},
        {"kind": "fock_m1", "p": 1.0, "n": 3},
        {"kind": "two_mode", "p": 1.0, "n": 2, "t": 1.5},
        {"kind": "two_mode", "p": 1.0, "n": 3, "t": 0.0},
        {"kind": "two_mode", "p": 1.0, "n": 2, "t": 0.5},
        {"kind": "independent", "n_list": ()},
        {"kind": "independent", "n_list": (1, -1)},
        {"kind": "glauber", "alphas": ()},
        {"kind": "glauber", "alphas": ((complex("nan"), 0j),)},
        {"kind": "squeezed"},
        {"kind": "fock_m1", "p": 0.5, "n": 1, "helicity": "x"},
    ],
)
def test_invalid_reference_specs_are_rejected(kwargs):
    with pytest.raises(InvalidStateError):
        ReferenceSpec(**kwargs)


def test_cutoff_below_reference_photons(basis_for):
    with pytest.raises(CutoffError):
        make_reference(ReferenceSpec.fock(2.0), basis_for(1, 3))


def test_reference_needs_enough_modes(basis_for):
    with pytest.raises(InvalidStateError):
        make_reference(ReferenceSpec.two_mode(1.0, 2, 0.0), basis_for(1, 2))
    with pytest.raises(InvalidStateError):
        make_reference(ReferenceSpec.independent([1]), basis_for(2, 2))


def test_rotation_spec_ranges():
    with pytest.raises(InvalidStateError):
        RotationSpec(3.5, 0.0)
    with pytest.raises(InvalidStateError):
        RotationSpec(1.0, 2 * math.pi)
    wrapped = RotationSpec.wrapped(1.0, -0.5 * math.pi)
    assert wrapped.phi == pytest.approx(1.5 * math.pi)
    with pytest.raises(InvalidStateError):
        RotationSpec.per_mode_uniform(1.0, 0.0, 2).mode_angles(3)


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5, 3.0])
@pytest.mark.parametrize("helicity", [PLUS, MINUS])
def test_single_mode_routes_agree(basis_for, p, helicity):
    basis = basis_for(1, int(2 * p))
    spec = ReferenceSpec.fock(p, helicity)
    rot = RotationSpec(1.1, 2.3)
    by_displacement = make_pcs(spec, rot, basis, "displacement")
    by_operators = make_pcs(spec, rot, basis, "operators")
    np.testing.assert_allclose(by_displacement.amp, by_operators.amp, atol=1e-10)


def test_two_mode_routes_agree(basis_for):
    basis = basis_for(2, 4)
    spec = ReferenceSpec.two_mode(1.0, 4, 0.0)
    rot = RotationSpec(0.7, 4.0)
    np.testing.assert_allclose(
        make_pcs(spec, rot, basis, "displacement").amp,
        make_pcs(spec, rot, basis, "operators").amp,
        atol=1e-10,
    )


def test_independent_routes_agree(basis_for):
    basis = basis_for(2, 3)
    spec = ReferenceSpec.independent([1, 2])
    rot = RotationSpec(0.0, 0.0, ((0.4, 1.0), (2.0, 5.0)))
    np.testing.assert_allclose(
        make_pcs(spec, rot, basis, "displacement").amp,
        make_pcs(spec, rot, basis, "operators").amp,
        atol=1e-10,
    )
    with pytest.raises(InvalidStateError):
        make_pcs(spec, RotationSpec(0.4, 1.0), basis)


def test_collective_reference_rejects_per_mode_angles(basis_for):
    rot = RotationSpec.per_mode_uniform(0.5, 0.5, 1)
    with pytest.raises(InvalidStateError):
        make_pcs(ReferenceSpec.fock(0.5), rot, basis_for(1, 1))


def test_unknown_route_is_rejected(basis_for):
    with pytest.raises(InvalidStateError):
        make_pcs(ReferenceSpec.fock(0.5), RotationSpec(0.1, 0.1), basis_for(1, 1), "matrix")


def test_glauber_routes_agree(basis_for):
    alphas = ((0.6 + 0.2j, -0.3j),)
    basis = basis_for(1, glauber_cutoff(alphas))
    spec = ReferenceSpec.glauber(alphas)
    rot = RotationSpec(1.3, 0.9)
    np.testing.assert_allclose(
        make_pcs(spec, rot, basis, "displacement").amp,
        make_pcs(spec, rot, basis, "operators").amp,
        atol=1e-10,
    )


def test_glauber_cutoff_is_smallest_safe_value():
    alphas = ((1.0, 0.5j), (0.0, 0.3))
    mu = 1.0 + 0.25 + 0.09
    n_max = glauber_cutoff(alphas)
    assert poisson.sf(n_max, mu) < 1e-12
    assert poisson.sf(n_max - 1, mu) >= 1e-12
    assert glauber_cutoff(((0j, 0j),)) == 0


def test_coherent_amplitudes_match_product_formula(basis_for):
    basis = basis_for(1, 4)
    a, b = 0.5 + 0.1j, -0.2
    amp = coherent_amplitudes(basis, [(a, b)])
    expected = (
        math.exp(-0.5 * (abs(a) ** 2 + abs(b) ** 2))
        * a**2
        * b
        / math.sqrt(math.factorial(2) * math.factorial(1))
    )
    assert amp[basis.index_of((2, 1))] == pytest.approx(expected, abs=1e-14)


def test_glauber_reference_with_short_cutoff_fails(basis_for):
    with pytest.raises(CutoffError, match="use n_max >="):
        make_reference(ReferenceSpec.glauber([(1.5, 0.0)]), basis_for(1, 4))


def test_glauber_transform_preserves_intensity_and_is_identity_at_north_pole():
    alphas = ((0.3 - 0.1j, 0.8j), (0.2, -0.4))
    unchanged = transform_glauber_params(alphas, 0.0, 1.7)
    np.testing.assert_allclose(np.array(unchanged), np.array(alphas), atol=1e-15)
    rotated = transform_glauber_params(alphas, 2.1, 0.6)
    before = sum(abs(a) ** 2 + abs(b) ** 2 for a, b in alphas)
    after = sum(abs(a) ** 2 + abs(b) ** 2 for a, b in rotated)
    assert after == pytest.approx(before, abs=1e-14)


def test_rotate_state_requires_normalized_input(basis_for):
    basis = basis_for(1, 1)
    with pytest.raises(InvalidStateError):
        rotate_state(basis_state(basis, (1, 0)) * 3.0, RotationSpec(0.5, 0.5))


def test_displacement_matrix_is_unitary_and_matches_displace(basis_for):
    basis = basis_for(2, 2)
    unitary = displacement_matrix(basis, 0.8, 2.2).dense()
    np.testing.assert_allclose(unitary.conj().T @ unitary, np.eye(basis.dimension), atol=1e-12)
    state = basis_state(basis, (1, 0, 0, 1))
    np.testing.assert_allclose(unitary @ state.amp, displace(state, 0.8, 2.2).amp, atol=1e-12)


def test_pcs_stokes_vector_points_along_rotation(basis_for):
    basis = basis_for(1, 3)
    state = make_pcs(ReferenceSpec.fock(1.5), RotationSpec(0.9, 4.0), basis)
    stokes = stokes_vector(state)
    expected = 1.5 * np.array(
        [math.cos(0.9), math.sin(0.9) * math.cos(4.0), math.sin(0.9) * math.sin(4.0)]
    )
    np.testing.assert_allclose(stokes.as_array(), expected, atol=1e-10)


def test_displacement_preserves_the_norm(basis_for):
    basis = basis_for(2, 3)
    rng = np.random.default_rng(2024)
    amp = rng.normal(size=basis.dimension) + 1j * rng.normal(size=basis.dimension)
    state = StateVector(basis, amp / np.linalg.norm(amp))
    drift = max(
        abs(displace(state, rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi)).norm() - 1.0)
        for _ in range(100)
    )
    assert drift < 1e-12


def test_glauber_transform_agrees_with_displacement(basis_for):
    rng = np.random.default_rng(19)
    draws = []
    for _ in range(10):
        raw = rng.normal(scale=0.4, size=(2, 2)) + 1j * rng.normal(scale=0.4, size=(2, 2))
        alphas = tuple((complex(a), complex(b)) for a, b in raw)
        draws.append((alphas, rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)))
    basis = basis_for(2, max(glauber_cutoff(alphas) for alphas, _, _ in draws))
    assert max(sl.stop - sl.start for sl in basis.block_slices) > DENSE_BLOCK_LIMIT

    worst = 0.0
    for alphas, theta, phi in draws:
        spec = ReferenceSpec.glauber(alphas)
        by_displacement = displace(make_reference(spec, basis), theta, phi)
        by_transform = make_reference(
            ReferenceSpec.glauber(transform_glauber_params(alphas, theta, phi)), basis
        )
        worst = max(worst, float(np.abs(by_displacement.amp - by_transform.amp).max()))
    assert worst < 1e-9


TWO_MODE_LABELS = [
    (float(p), n, float(t))
    for n in range(7)
    for p in np.arange(n / 2, -0.25, -1.0)
    for t in np.arange(-p, p + 0.25, 1.0)
]


def test_two_mode_labels_cover_every_irrep_up_to_six_photons():
    assert len(TWO_MODE_LABELS) == 50
    assert max(p for p, _, _ in TWO_MODE_LABELS) == 3.0


@pytest.mark.parametrize("p,n,t", TWO_MODE_LABELS)
def test_two_mode_triples_and_routes_up_to_p_three(basis_for, p, n, t):
    basis = basis_for(2, n)
    spec = ReferenceSpec.two_mode(p, n, t)
    casimir, p0, number = _eigen_triple(make_reference(spec, basis), basis)
    assert casimir == pytest.approx(p * (p + 1), abs=1e-10)
    assert p0 == pytest.approx(p, abs=1e-10)
    assert number == pytest.approx(n, abs=1e-10)

    rot = RotationSpec(0.9, 5.1)
    np.testing.assert_allclose(
        make_pcs(spec, rot, basis, "displacement").amp,
        make_pcs(spec, rot, basis, "operators").amp,
        atol=1e-10,
    )


@pytest.mark.parametrize(
    "spec",
    [ReferenceSpec.independent([2, 1]), ReferenceSpec.glauber(((0.4j, 0.3), (-0.2, 0.5 + 0.1j)))],
    ids=["independent", "glauber"],
)
def test_equal_per_mode_angles_match_the_collective_rotation(basis_for, spec):
    n_max = 3 if spec.kind == "independent" else glauber_cutoff(spec.alphas)
    basis = basis_for(2, n_max)
    theta, phi = 1.2, 0.8
    per_mode = make_pcs(spec, RotationSpec.per_mode_uniform(theta, phi, 2), basis)
    collective = displace(make_reference(spec, basis), theta, phi)
    np.testing.assert_allclose(per_mode.amp, collective.amp, atol=1e-10)


def test_rotated_density_matrix_uses_large_blocks(basis_for):
    alphas = ((0.9, 0.4j), (0.3, -0.6))
    basis = basis_for(2, glauber_cutoff(alphas))
    state = make_reference(ReferenceSpec.glauber(alphas), basis)
    rotated = DensityMatrix.from_state(state).rotated(0.7, 2.0)
    expected = make_reference(ReferenceSpec.glauber(transform_glauber_params(alphas, 0.7, 2.0)), basis)
    assert rotated.expectation(expected.amp) == pytest.approx(1.0, abs=1e-9)
