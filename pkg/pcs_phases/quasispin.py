from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .config import ModeConfig
from .errors import BasisError, InvalidStateError
from .fock import MINUS, PLUS, Basis, OperatorMatrix, StateVector, enumerate_basis, ladder, mode_slot

logger = logging.getLogger(__name__)


def displacement_parameter(theta: float, phi: float) -> complex:
    """xi = -(theta/2) exp(-i phi), the rotation parameter of exp(xi P+ - xi* P-)."""
    return -0.5 * theta * cmath.exp(-1j * phi)


@dataclass(frozen=True, eq=False)
class QuasispinSet:
    plus: OperatorMatrix
    minus: OperatorMatrix
    p0: OperatorMatrix
    p1: OperatorMatrix
    p2: OperatorMatrix
    casimir: OperatorMatrix
    number: OperatorMatrix

    @property
    def basis(self) -> Basis:
        return self.plus.basis

    @property
    def cartesian(self) -> tuple[OperatorMatrix, OperatorMatrix, OperatorMatrix]:
        return self.p0, self.p1, self.p2

    @cached_property
    def plus_blocks(self) -> tuple[sp.csr_matrix, ...]:
        return self.plus.blocks

    def generator_block(self, total: int, theta: float, phi: float) -> sp.csr_matrix:
        xi = displacement_parameter(theta, phi)
        block = self.plus_blocks[total]
        return xi * block - xi.conjugate() * block.conj().T

    def generator(self, theta: float, phi: float) -> OperatorMatrix:
        xi = displacement_parameter(theta, phi)
        return self.plus * xi - self.minus * np.conj(xi)


def _assemble(basis: Basis, modes: Sequence[int]) -> QuasispinSet:
    plus = OperatorMatrix.zeros(basis)
    diag_p0 = np.zeros(basis.dimension)
    diag_n = np.zeros(basis.dimension)
    occ = basis.occupation_array
    for j in modes:
        plus = plus + ladder(basis, j, PLUS, "create") @ ladder(basis, j, MINUS, "annihilate")
        n_plus = occ[:, mode_slot(basis.m, j, PLUS)]
        n_minus = occ[:, mode_slot(basis.m, j, MINUS)]
        diag_p0 += 0.5 * (n_plus - n_minus)
        diag_n += n_plus + n_minus

    minus = plus.adjoint()
    p0 = OperatorMatrix(basis, _diagonal(diag_p0))
    number = OperatorMatrix(basis, _diagonal(diag_n))
    p1 = (plus + minus) * 0.5
    p2 = (plus - minus) * (-0.5j)
    casimir = (plus @ minus + minus @ plus) * 0.5 + p0 @ p0
    return QuasispinSet(plus, minus, p0, p1, p2, casimir, number)


def _diagonal(values: np.ndarray) -> sp.csr_matrix:
    return sp.diags(values.astype(np.complex128), format="csr")


@lru_cache(maxsize=32)
def build_quasispin(basis: Basis) -> QuasispinSet:
    logger.debug("Building collective P-quasispin for m=%d n_max=%d.", basis.m, basis.n_max)
    return _assemble(basis, range(1, basis.m + 1))


@lru_cache(maxsize=64)
def mode_quasispin(basis: Basis, j: int) -> QuasispinSet:
    mode_slot(basis.m, j, PLUS)
    return _assemble(basis, (j,))


def cluster_op(basis: Basis, i: int, j: int) -> OperatorMatrix:
    """X+_ij = a+_+(i) a+_-(j) - a+_-(i) a+_+(j), the SU(2)-invariant biphoton creator."""
    if not 1 <= i < j <= basis.m:
        raise BasisError(f"cluster indices must satisfy 1 <= i < j <= {basis.m}, got ({i}, {j})")
    return ladder(basis, i, PLUS, "create") @ ladder(basis, j, MINUS, "create") - ladder(
        basis, i, MINUS, "create"
    ) @ ladder(basis, j, PLUS, "create")


@dataclass(frozen=True, slots=True)
class QuasispinExpectation:
    p0: float
    p1: float
    p2: float
    radius: float

    @classmethod
    def from_components(cls, p0: float, p1: float, p2: float) -> "QuasispinExpectation":
        return cls(p0, p1, p2, math.sqrt(p0 * p0 + p1 * p1 + p2 * p2))

    def as_array(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2])

    def as_dict(self) -> dict[str, float]:
        return {"p0": self.p0, "p1": self.p1, "p2": self.p2, "radius": self.radius}


def stokes_vector(s: StateVector, *, normalize: bool = False) -> QuasispinExpectation:
    tol = s.basis.config.tol.atol_linalg
    if not s.is_normalized():
        if not normalize:
            raise InvalidStateError(
                f"stokes_vector expects a normalized state (norm {s.norm():.15g})"
            )
        s = s.normalized()

    q = build_quasispin(s.basis)
    values = []
    for op in q.cartesian:
        value = s.expectation(op)
        if abs(value.imag) > tol * max(1.0, abs(value.real)):
            raise InvalidStateError(
                f"quasispin expectation has imaginary part {value.imag:.3e}; operator not Hermitian?"
            )
        values.append(value.real)
    return QuasispinExpectation.from_components(*values)


@lru_cache(maxsize=1)
def _spin_half_quasispin() -> QuasispinSet:
    return build_quasispin(enumerate_basis(ModeConfig(m=1, n_max=1)))


def wigner_d1(theta: float, phi: float) -> np.ndarray:
    """Rotation acting on (<P0>, <P1>, <P2>) under exp(xi P+ - xi* P-).

    Obtained by conjugating the quasispin triple on the one-photon block, so
    <xi|P_a|xi> = sum_b D[a, b] <P_b> holds for any reference state.
    """
    q = _spin_half_quasispin()
    sl = q.basis.block(1)
    generator = q.generator_block(1, theta, phi).toarray()
    unitary = expm(generator)
    triple = [op.matrix[sl, sl].toarray() for op in q.cartesian]
    d1 = np.empty((3, 3))
    for a, pa in enumerate(triple):
        rotated = unitary.conj().T @ pa @ unitary
        for b, pb in enumerate(triple):
            d1[a, b] = 2.0 * np.trace(rotated @ pb).real
    return d1


__all__ = [
    "QuasispinSet",
    "QuasispinExpectation",
    "displacement_parameter",
    "build_quasispin",
    "mode_quasispin",
    "cluster_op",
    "stokes_vector",
    "wigner_d1",
]
