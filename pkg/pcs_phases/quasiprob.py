from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eigh, orth

from .artifacts import write_csv
from .errors import DensityMatrixError, GridError, InvalidStateError
from .fock import Basis, OperatorMatrix, StateVector
from .phase import StateFamily, ordered_map
from .quasispin import build_quasispin
from .states import displace_columns

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density operator kept as an eigen-ensemble sum_k w_k |v_k><v_k|."""

    basis: Basis
    weights: np.ndarray
    vectors: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        vectors = np.asarray(self.vectors, dtype=np.complex128).reshape(self.basis.dimension, -1)
        if vectors.shape[1] != weights.shape[0]:
            raise DensityMatrixError("one weight per ensemble vector is required")
        if np.any(weights < 0):
            raise DensityMatrixError(f"ensemble weights must be non-negative, got {weights.min():.3e}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "vectors", vectors)
        trace = self.trace()
        if abs(trace - 1.0) > self.basis.config.tol.atol_linalg:
            raise DensityMatrixError(f"density matrix trace is {trace:.15g}, expected 1")

    @classmethod
    def from_matrix(cls, basis: Basis, matrix: np.ndarray) -> "DensityMatrix":
        tol = basis.config.tol.atol_linalg
        rho = np.asarray(matrix, dtype=np.complex128)
        if rho.shape != (basis.dimension, basis.dimension):
            raise DensityMatrixError(
                f"density matrix shape {rho.shape} does not match basis dimension {basis.dimension}"
            )
        asymmetry = float(np.abs(rho - rho.conj().T).max()) if rho.size else 0.0
        if asymmetry > tol:
            raise DensityMatrixError(f"density matrix is not Hermitian (residual {asymmetry:.3e})")
        trace = np.trace(rho)
        if abs(trace - 1.0) > tol:
            raise DensityMatrixError(f"density matrix trace is {trace.real:.15g}, expected 1")
        values, vectors = eigh(0.5 * (rho + rho.conj().T))
        if values.min() < -tol:
            raise DensityMatrixError(f"density matrix has eigenvalue {values.min():.3e} < 0")
        keep = values > tol
        weights = values[keep]
        return cls(basis, weights / weights.sum(), vectors[:, keep])

    @classmethod
    def from_state(cls, s: StateVector) -> "DensityMatrix":
        if not s.is_normalized():
            raise DensityMatrixError(f"pure state must be normalized (norm {s.norm():.15g})")
        return cls(s.basis, np.ones(1), s.amp.reshape(-1, 1))

    @classmethod
    def mixture(cls, parts: Sequence[tuple[float, "DensityMatrix"]]) -> "DensityMatrix":
        if not parts:
            raise DensityMatrixError("a mixture needs at least one component")
        basis = parts[0][1].basis
        for _, rho in parts:
            basis.require_same(rho.basis)
        weights = np.concatenate([w * rho.weights for w, rho in parts])
        vectors = np.concatenate([rho.vectors for _, rho in parts], axis=1)
        return cls(basis, weights, vectors)

    @classmethod
    def maximally_mixed(cls, states: Sequence[StateVector]) -> "DensityMatrix":
        if not states:
            raise DensityMatrixError("maximally mixed state needs at least one vector")
        basis = states[0].basis
        vectors = np.column_stack([s.amp for s in states])
        gram = vectors.conj().T @ vectors
        if not np.allclose(gram, np.eye(len(states)), atol=basis.config.tol.atol_linalg * 100):
            raise DensityMatrixError("maximally mixed state needs orthonormal vectors")
        return cls(basis, np.full(len(states), 1.0 / len(states)), vectors)

    def trace(self) -> float:
        return float(np.sum(self.weights * np.sum(np.abs(self.vectors) ** 2, axis=0)))

    def matrix(self) -> np.ndarray:
        return (self.vectors * self.weights) @ self.vectors.conj().T

    def rotated(self, theta: float, phi: float) -> "DensityMatrix":
        """D rho D^dagger for the collective rotation exp(xi P+ - xi* P-)."""
        rotated = displace_columns(self.basis, self.vectors, theta, phi)
        return DensityMatrix(self.basis, self.weights, rotated)

    def expectation(self, state: np.ndarray) -> float:
        overlaps = self.vectors.conj().T @ state
        return float(np.sum(self.weights * np.abs(overlaps) ** 2))

    def restricted_trace(self, projector: OperatorMatrix) -> float:
        projected = projector.matrix @ self.vectors
        return float(np.sum(self.weights * np.sum(np.abs(projected) ** 2, axis=0)))


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre nodes in cos(theta) times uniform phi; weights sum to 4 pi."""

    theta: np.ndarray
    phi: np.ndarray
    weight: np.ndarray
    n_theta: int
    n_phi: int

    @classmethod
    def gauss_legendre(cls, n_theta: int, n_phi: int) -> "SphereGrid":
        if n_theta < 1 or n_phi < 1:
            raise GridError(f"grid needs positive node counts, got ({n_theta}, {n_phi})")
        x, w = leggauss(n_theta)
        theta = np.arccos(x)[::-1]
        w = w[::-1]
        phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        weight = np.repeat(w * (2.0 * math.pi / n_phi), n_phi)
        return cls(tt.ravel(), pp.ravel(), weight, n_theta, n_phi)

    @classmethod
    def for_spin(cls, p: float) -> "SphereGrid":
        degree = int(round(2 * p))
        return cls.gauss_legendre(degree + 2, 2 * degree + 4)

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    def with_poles(self) -> "SphereGrid":
        """Adds zero-weight nodes at both poles so exported fields include them."""
        return SphereGrid(
            np.concatenate(([0.0], self.theta, [math.pi])),
            np.concatenate(([0.0], self.phi, [0.0])),
            np.concatenate(([0.0], self.weight, [0.0])),
            self.n_theta,
            self.n_phi,
        )

    def supports_spin(self, p: float) -> bool:
        return self.n_theta >= math.ceil(p) + 1 and self.n_phi >= int(round(4 * p)) + 1

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weight, values))


@dataclass(frozen=True, eq=False)
class QField:
    grid: SphereGrid
    values: np.ndarray

    @property
    def max(self) -> float:
        return float(self.values.max())

    def argmax(self) -> tuple[float, float]:
        idx = int(np.argmax(self.values))
        return float(self.grid.theta[idx]), float(self.grid.phi[idx])

    def normalization(self, p: float) -> float:
        return (2.0 * p + 1.0) / FOUR_PI * self.grid.integrate(self.values)

    def __add__(self, other: "QField") -> "QField":
        if self.values.shape != other.values.shape:
            raise GridError("Q fields live on different grids")
        return QField(self.grid, self.values + other.values)


def _family_states(family: StateFamily, grid: SphereGrid, workers: int | None) -> np.ndarray:
    points = list(zip(grid.theta.tolist(), grid.phi.tolist()))
    return np.column_stack(ordered_map(lambda pt: family.amplitudes(*pt), points, workers))


def q_function(
    rho: DensityMatrix, family: StateFamily, grid: SphereGrid, *, workers: int | None = None
) -> QField:
    rho.basis.require_same(family.basis)
    states = _family_states(family, grid, workers)
    overlaps = rho.vectors.conj().T @ states
    values = rho.weights @ (np.abs(overlaps) ** 2)
    floor = -family.tol.atol_linalg
    if values.min() < floor:
        raise DensityMatrixError(f"Q function dips to {values.min():.3e}")
    return QField(grid, values)


def _family_spin(family: StateFamily) -> float:
    p = family.reference.spin
    if p is None:
        raise InvalidStateError(
            f"{family.reference.kind} families do not span a single quasispin irrep"
        )
    return p


def identity_resolution(family: StateFamily, grid: SphereGrid) -> OperatorMatrix:
    """(2p+1)/4pi * sum_w |theta, phi><theta, phi| over the grid."""
    p = _family_spin(family)
    if not grid.supports_spin(p):
        raise GridError(
            f"grid ({grid.n_theta} x {grid.n_phi}) is too coarse for p={p}: need "
            f"n_theta >= {math.ceil(p) + 1} and n_phi >= {int(round(4 * p)) + 1}"
        )
    states = _family_states(family, grid, None)
    weighted = states * ((2.0 * p + 1.0) / FOUR_PI * grid.weight)
    resolution = weighted @ states.conj().T
    return OperatorMatrix(family.basis, sp.csr_matrix(resolution))


def irrep_basis(family: StateFamily) -> np.ndarray:
    """Orthonormal columns spanning the reference under repeated P+ and P-."""
    p = _family_spin(family)
    q = build_quasispin(family.basis)
    tol = family.tol.atol_linalg
    reference = family.amplitudes(0.0, 0.0)
    columns = [reference]
    for ladder_op in (q.plus.matrix, q.minus.matrix):
        current = reference
        for _ in range(int(round(2 * p))):
            current = ladder_op @ current
            if np.linalg.norm(current) <= tol:
                break
            columns.append(current)
    span = orth(np.column_stack(columns), rcond=1e-10)
    if span.shape[1] != int(round(2 * p)) + 1:
        logger.warning(
            "Irrep span has dimension %d, expected %d for p=%s.",
            span.shape[1],
            int(round(2 * p)) + 1,
            p,
        )
    return span


def irrep_projector(family: StateFamily) -> OperatorMatrix:
    span = irrep_basis(family)
    return OperatorMatrix(family.basis, sp.csr_matrix(span @ span.conj().T))


def reduced_q(
    pairs: Sequence[tuple[DensityMatrix, StateFamily]],
    grid: SphereGrid,
    *,
    workers: int | None = None,
) -> QField:
    """Pointwise sum of Q over the supplied (density matrix, family) pairs."""
    if not pairs:
        raise ValueError("reduced_q needs at least one (density matrix, family) pair")
    fields = [q_function(rho, family, grid, workers=workers) for rho, family in pairs]
    total = fields[0]
    for item in fields[1:]:
        total = total + item
    return total


def q_normalization(
    pairs: Sequence[tuple[DensityMatrix, StateFamily]], grid: SphereGrid
) -> float:
    """Sum over pairs of (2p+1)/4pi * integral of Q, each with its own family's p."""
    if not pairs:
        raise ValueError("q_normalization needs at least one (density matrix, family) pair")
    return math.fsum(
        q_function(rho, family, grid).normalization(_family_spin(family)) for rho, family in pairs
    )


def write_q_csv(field: QField, path: Path) -> int:
    rows = zip(
        field.grid.theta.tolist(),
        field.grid.phi.tolist(),
        field.values.tolist(),
        field.grid.weight.tolist(),
    )
    return write_csv(path, ("theta", "phi", "q", "weight"), (tuple(row) for row in rows))


__all__ = [
    "DensityMatrix",
    "SphereGrid",
    "QField",
    "q_function",
    "identity_resolution",
    "irrep_basis",
    "irrep_projector",
    "reduced_q",
    "q_normalization",
    "write_q_csv",
]
