from __future__ import annotations

import math

import numpy as np
import pytest

from pcs_phases.errors import DensityMatrixError, GridError, InvalidStateError
from pcs_phases.phase import pcs_family
from pcs_phases.quasiprob import (
    DensityMatrix,
    QField,
    SphereGrid,
    identity_resolution,
    irrep_basis,
    irrep_projector,
    q_function,
    q_normalization,
    reduced_q,
    write_q_csv,
)
from pcs_phases.states import ReferenceSpec


def _fock_family(basis_for, p):
    return pcs_family(ReferenceSpec.fock(p), basis_for(1, int(round(2 * p))))


def _reference_rho(family) -> DensityMatrix:
    return DensityMatrix(family.basis, np.ones(1), family.amplitudes(0.0, 0.0))


def test_grid_weights_cover_the_sphere():
    grid = SphereGrid.gauss_legendre(5, 7)
    assert grid.size == 35
    assert grid.weight.sum() == pytest.approx(4 * math.pi, abs=1e-12)
    assert np.all(np.diff(grid.theta.reshape(5, 7)[:, 0]) > 0)
    padded = grid.with_poles()
    assert padded.size == 37
    assert padded.theta[0] == 0.0 and padded.theta[-1] == math.pi
    assert padded.integrate(np.ones(padded.size)) == pytest.approx(4 * math.pi, abs=1e-12)


def test_grid_rejects_empty_axes():
    with pytest.raises(GridError):
        SphereGrid.gauss_legendre(0, 4)


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5, 2.0, 3.0])
def test_q_of_the_reference_is_a_power_of_cosine(basis_for, p):
    family = _fock_family(basis_for, p)
    grid = SphereGrid.for_spin(p).with_poles()
    field = q_function(_reference_rho(family), family, grid)
    np.testing.assert_allclose(field.values, np.cos(0.5 * grid.theta) ** (4 * p), atol=1e-10)
    assert field.normalization(p) == pytest.approx(1.0, abs=1e-10)
    assert field.max == pytest.approx(1.0, abs=1e-12)
    assert field.argmax()[0] == 0.0


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0])
def test_maximally_mixed_irrep_state_is_flat(basis_for, p):
    family = _fock_family(basis_for, p)
    span = irrep_basis(family)
    assert span.shape[1] == int(round(2 * p)) + 1
    rho = DensityMatrix(family.basis, np.full(span.shape[1], 1.0 / span.shape[1]), span)
    field = q_function(rho, family, SphereGrid.for_spin(p), workers=2)
    np.testing.assert_allclose(field.values, 1.0 / (2 * p + 1), atol=1e-10)


@pytest.mark.parametrize("p", [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
def test_identity_resolution_on_single_mode_irreps(basis_for, p):
    family = _fock_family(basis_for, p)
    resolution = identity_resolution(family, SphereGrid.for_spin(p)).dense()
    np.testing.assert_allclose(resolution, irrep_projector(family).dense(), atol=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_identity_resolution_on_two_mode_irreps(basis_for, p):
    family = pcs_family(ReferenceSpec.two_mode(p, 2, 0.0), basis_for(2, 2))
    resolution = identity_resolution(family, SphereGrid.for_spin(p)).dense()
    np.testing.assert_allclose(resolution, irrep_projector(family).dense(), atol=1e-10)


def test_identity_resolution_needs_a_fine_enough_grid(basis_for):
    family = _fock_family(basis_for, 2.0)
    with pytest.raises(GridError, match="too coarse"):
        identity_resolution(family, SphereGrid.gauss_legendre(2, 9))


def test_glauber_families_have_no_single_irrep(basis_for):
    family = pcs_family(ReferenceSpec.glauber([(0.3, 0.1j)]), basis_for(1, 12))
    with pytest.raises(InvalidStateError):
        identity_resolution(family, SphereGrid.gauss_legendre(4, 8))


def test_rotated_reference_peaks_where_it_was_moved(basis_for):
    family = _fock_family(basis_for, 1.0)
    rho = _reference_rho(family).rotated(1.2, 0.4)
    sparse_grid = SphereGrid(
        theta=np.array([1.2, 0.3]),
        phi=np.array([0.4, 2.0]),
        weight=np.ones(2),
        n_theta=2,
        n_phi=1,
    )
    field = q_function(rho, family, sparse_grid)
    assert field.values[0] == pytest.approx(1.0, abs=1e-10)
    expected = abs(np.vdot(family.amplitudes(1.2, 0.4), family.amplitudes(0.3, 2.0))) ** 2
    assert field.values[1] == pytest.approx(expected, abs=1e-10)


def test_reduced_q_sums_over_pairs(basis_for):
    first = _fock_family(basis_for, 0.5)
    second = _fock_family(basis_for, 1.0)
    grid = SphereGrid.for_spin(1.0)
    pairs = [(_reference_rho(first), first), (_reference_rho(second), second)]
    total = reduced_q(pairs, grid)
    expected = np.cos(0.5 * grid.theta) ** 2 + np.cos(0.5 * grid.theta) ** 4
    np.testing.assert_allclose(total.values, expected, atol=1e-10)
    assert q_normalization(pairs, grid) == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(ValueError):
        reduced_q([], grid)
    with pytest.raises(GridError):
        total + QField(SphereGrid.gauss_legendre(2, 2), np.zeros(4))


def test_density_matrix_validation(basis_for):
    basis = basis_for(1, 1)
    with pytest.raises(DensityMatrixError, match="Hermitian"):
        DensityMatrix.from_matrix(basis, np.diag([1.0, 0.0, 0.0]) + np.triu(np.ones((3, 3)), 1))
    with pytest.raises(DensityMatrixError, match="trace"):
        DensityMatrix.from_matrix(basis, np.diag([0.5, 0.2, 0.2]))
    with pytest.raises(DensityMatrixError, match="eigenvalue"):
        DensityMatrix.from_matrix(basis, np.diag([1.2, -0.2, 0.0]))
    with pytest.raises(DensityMatrixError):
        DensityMatrix.from_matrix(basis, np.eye(2))


def test_density_matrix_round_trip_and_mixtures(basis_for):
    basis = basis_for(1, 1)
    matrix = np.diag([0.25, 0.75, 0.0]).astype(complex)
    rho = DensityMatrix.from_matrix(basis, matrix)
    np.testing.assert_allclose(rho.matrix(), matrix, atol=1e-12)
    vacuum_rho = DensityMatrix.from_matrix(basis, np.diag([1.0, 0.0, 0.0]))
    mixed = DensityMatrix.mixture([(0.5, rho), (0.5, vacuum_rho)])
    assert mixed.trace() == pytest.approx(1.0)
    np.testing.assert_allclose(np.diag(mixed.matrix()).real, [0.625, 0.375, 0.0], atol=1e-12)
    with pytest.raises(DensityMatrixError):
        DensityMatrix.maximally_mixed([])


def test_restricted_trace_on_the_irrep(basis_for):
    family = _fock_family(basis_for, 1.0)
    rho = _reference_rho(family).rotated(0.7, 1.9)
    assert rho.restricted_trace(irrep_projector(family)) == pytest.approx(1.0, abs=1e-10)


def test_q_grid_csv(tmp_path, basis_for):
    family = _fock_family(basis_for, 0.5)
    field = q_function(_reference_rho(family), family, SphereGrid.for_spin(0.5))
    target = tmp_path / "out" / "q.csv"
    assert write_q_csv(field, target) == field.grid.size
    raw = target.read_bytes().decode("utf-8")
    lines = raw.split("\r\n")
    assert lines[0] == "theta,phi,q,weight"
    assert len([line for line in lines[1:] if line]) == field.grid.size
