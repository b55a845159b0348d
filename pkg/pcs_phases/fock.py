from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Final, Iterator, Literal, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

from .config import ModeConfig, max_basis_dimension
from .errors import BasisError, GeneratorError

logger = logging.getLogger(__name__)

Helicity = Literal["+", "-"]
LadderKind = Literal["create", "annihilate"]

PLUS: Final[str] = "+"
MINUS: Final[str] = "-"
HELICITIES: Final[tuple[str, ...]] = (PLUS, MINUS)
LADDER_KINDS: Final[tuple[str, ...]] = ("create", "annihilate")
DENSE_BLOCK_LIMIT: Final[int] = 64


def mode_slot(m: int, j: int, helicity: str) -> int:
    """Position of mode (j, helicity) in the occupation tuple (n+_1, n-_1, ..., n+_m, n-_m)."""
    if not 1 <= j <= m:
        raise BasisError(f"mode index j must lie in 1..{m}, got {j!r}")
    if helicity not in HELICITIES:
        raise BasisError(f"helicity must be '+' or '-', got {helicity!r}")
    return 2 * (j - 1) + (0 if helicity == PLUS else 1)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # Descending lexicographic order: (1, 0) comes before (0, 1).
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


@dataclass(frozen=True, eq=False)
class Basis:
    config: ModeConfig
    occupations: tuple[tuple[int, ...], ...]
    index: Mapping[tuple[int, ...], int]
    block_slices: tuple[slice, ...]

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def n_max(self) -> int:
        return self.config.n_max

    @property
    def dimension(self) -> int:
        return len(self.occupations)

    @cached_property
    def occupation_array(self) -> np.ndarray:
        arr = np.array(self.occupations, dtype=np.int64).reshape(
            self.dimension, self.config.mode_count
        )
        arr.setflags(write=False)
        return arr

    @cached_property
    def totals(self) -> np.ndarray:
        totals = self.occupation_array.sum(axis=1)
        totals.setflags(write=False)
        return totals

    @cached_property
    def inv_sqrt_factorials(self) -> np.ndarray:
        values = np.exp(-0.5 * gammaln(self.occupation_array + 1).sum(axis=1))
        values.setflags(write=False)
        return values

    def index_of(self, occ: Sequence[int]) -> int:
        key = tuple(int(n) for n in occ)
        try:
            return self.index[key]
        except KeyError:
            raise BasisError(
                f"occupation {key} is not part of the basis (m={self.m}, n_max={self.n_max})"
            ) from None

    def block(self, total: int) -> slice:
        if not 0 <= total <= self.n_max:
            raise BasisError(f"photon number {total} outside 0..{self.n_max}")
        return self.block_slices[total]

    def interior_indices(self, depth: int = 1) -> np.ndarray:
        return np.flatnonzero(self.totals <= self.n_max - depth)

    def same_space(self, other: "Basis") -> bool:
        return self is other or (self.m == other.m and self.n_max == other.n_max)

    def require_same(self, other: "Basis") -> None:
        if not self.same_space(other):
            raise BasisError(
                f"basis mismatch: (m={self.m}, n_max={self.n_max}) vs "
                f"(m={other.m}, n_max={other.n_max})"
            )


def enumerate_basis(config: ModeConfig) -> Basis:
    # The ceiling is read on every call; only the construction is cached.
    ceiling = max_basis_dimension()
    if config.dimension > ceiling:
        raise BasisError(
            f"basis dimension {config.dimension} for m={config.m}, n_max={config.n_max} "
            f"exceeds the configured maximum {ceiling}"
        )
    return _build_basis(config)


@lru_cache(maxsize=32)
def _build_basis(config: ModeConfig) -> Basis:
    dimension = config.dimension
    occupations: list[tuple[int, ...]] = []
    slices: list[slice] = []
    for total in range(config.n_max + 1):
        start = len(occupations)
        occupations.extend(_compositions(total, config.mode_count))
        slices.append(slice(start, len(occupations)))

    logger.debug(
        "Enumerated Fock basis m=%d n_max=%d (dimension %d).",
        config.m,
        config.n_max,
        dimension,
    )
    return Basis(
        config=config,
        occupations=tuple(occupations),
        index={occ: idx for idx, occ in enumerate(occupations)},
        block_slices=tuple(slices),
    )


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: Basis
    amp: np.ndarray
    leakage: float = 0.0

    def __post_init__(self) -> None:
        arr = np.array(self.amp, dtype=np.complex128).reshape(-1)
        if arr.shape != (self.basis.dimension,):
            raise BasisError(
                f"amplitude vector has length {arr.shape[0]}, basis dimension is {self.basis.dimension}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("state amplitudes must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "amp", arr)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amp))

    def normalized(self) -> "StateVector":
        norm = self.norm()
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amp / norm, self.leakage)

    def is_normalized(self, atol: float | None = None) -> bool:
        tol = self.basis.config.tol.atol_linalg if atol is None else atol
        return abs(self.norm() - 1.0) <= tol

    def inner(self, other: "StateVector") -> complex:
        self.basis.require_same(other.basis)
        return complex(np.vdot(self.amp, other.amp))

    def expectation(self, op: "OperatorMatrix") -> complex:
        return self.inner(op.apply(self))

    def block_weights(self) -> np.ndarray:
        probs = np.abs(self.amp) ** 2
        return np.array([probs[sl].sum() for sl in self.basis.block_slices])

    def __add__(self, other: "StateVector") -> "StateVector":
        self.basis.require_same(other.basis)
        return StateVector(self.basis, self.amp + other.amp, self.leakage + other.leakage)

    def __sub__(self, other: "StateVector") -> "StateVector":
        self.basis.require_same(other.basis)
        return StateVector(self.basis, self.amp - other.amp, self.leakage + other.leakage)

    def __mul__(self, scalar: complex) -> "StateVector":
        return StateVector(self.basis, self.amp * scalar, self.leakage * abs(scalar) ** 2)

    __rmul__ = __mul__


def vacuum(basis: Basis) -> StateVector:
    amp = np.zeros(basis.dimension, dtype=np.complex128)
    amp[0] = 1.0
    return StateVector(basis, amp)


def basis_state(basis: Basis, occ: Sequence[int]) -> StateVector:
    amp = np.zeros(basis.dimension, dtype=np.complex128)
    amp[basis.index_of(occ)] = 1.0
    return StateVector(basis, amp)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    basis: Basis
    matrix: sp.csr_matrix
    # Squared norm each column loses to the cutoff; None when not tracked.
    spill: np.ndarray | None = None

    def __post_init__(self) -> None:
        mat = sp.csr_matrix(self.matrix, dtype=np.complex128)
        dim = self.basis.dimension
        if mat.shape != (dim, dim):
            raise BasisError(f"operator shape {mat.shape} does not match basis dimension {dim}")
        mat.eliminate_zeros()
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def zeros(cls, basis: Basis) -> "OperatorMatrix":
        return cls(basis, sp.csr_matrix((basis.dimension, basis.dimension), dtype=np.complex128))

    @classmethod
    def identity(cls, basis: Basis) -> "OperatorMatrix":
        return cls(basis, sp.identity(basis.dimension, dtype=np.complex128, format="csr"))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.basis, self.matrix.conj().T.tocsr())

    def _coerce(self, other: "OperatorMatrix") -> sp.csr_matrix:
        self.basis.require_same(other.basis)
        return other.matrix

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.basis, self.matrix + self._coerce(other))

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.basis, self.matrix - self._coerce(other))

    def __neg__(self) -> "OperatorMatrix":
        return OperatorMatrix(self.basis, -self.matrix)

    def __mul__(self, scalar: complex) -> "OperatorMatrix":
        spill = None if self.spill is None else self.spill * abs(scalar) ** 2
        return OperatorMatrix(self.basis, self.matrix * scalar, spill)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return self.apply(other)
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.basis, self.matrix @ self._coerce(other))
        return NotImplemented

    def commutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return self @ other - other @ self

    def apply(self, s: StateVector) -> StateVector:
        self.basis.require_same(s.basis)
        leakage = s.leakage
        if self.spill is not None:
            leakage += float(np.dot(self.spill, np.abs(s.amp) ** 2))
        return StateVector(s.basis, self.matrix @ s.amp, leakage)

    def is_antihermitian(self, atol: float | None = None) -> bool:
        tol = self.basis.config.tol.atol_linalg if atol is None else atol
        residual = self.matrix + self.matrix.conj().T
        return residual.nnz == 0 or float(np.abs(residual.data).max()) <= tol

    def max_block_jump(self) -> int:
        coo = self.matrix.tocoo()
        if coo.nnz == 0:
            return 0
        totals = self.basis.totals
        return int(np.abs(totals[coo.row] - totals[coo.col]).max())

    @cached_property
    def blocks(self) -> tuple[sp.csr_matrix, ...]:
        if self.max_block_jump() != 0:
            raise GeneratorError(
                "generator connects blocks of different photon number; "
                "block-wise exponentiation requires a number-conserving generator"
            )
        return tuple(self.matrix[sl, sl].tocsr() for sl in self.basis.block_slices)


def apply(op: OperatorMatrix, s: StateVector) -> StateVector:
    return op.apply(s)


def inner(a: StateVector, b: StateVector) -> complex:
    return a.inner(b)


def ladder(basis: Basis, j: int, helicity: str, kind: str) -> OperatorMatrix:
    if kind not in LADDER_KINDS:
        raise BasisError(f"ladder kind must be one of {LADDER_KINDS}, got {kind!r}")
    slot = mode_slot(basis.m, j, helicity)
    occ = basis.occupation_array
    n = occ[:, slot]
    shift = np.zeros(basis.config.mode_count, dtype=np.int64)

    if kind == "create":
        shift[slot] = 1
        cols = np.flatnonzero(basis.totals < basis.n_max)
        values = np.sqrt(n[cols] + 1.0)
        spill = np.where(basis.totals == basis.n_max, n + 1.0, 0.0)
    else:
        shift[slot] = -1
        cols = np.flatnonzero(n > 0)
        values = np.sqrt(n[cols].astype(float))
        spill = np.zeros(basis.dimension)

    rows = np.fromiter(
        (basis.index[tuple(occ[c] + shift)] for c in cols), dtype=np.int64, count=len(cols)
    )
    matrix = sp.csr_matrix(
        (values.astype(np.complex128), (rows, cols)),
        shape=(basis.dimension, basis.dimension),
    )
    return OperatorMatrix(basis, matrix, spill)


def number_operator(basis: Basis, j: int | None = None, helicity: str | None = None) -> OperatorMatrix:
    if j is None:
        diag = basis.totals.astype(float)
    else:
        helicities = HELICITIES if helicity is None else (helicity,)
        diag = sum(
            basis.occupation_array[:, mode_slot(basis.m, j, h)].astype(float) for h in helicities
        )
    return OperatorMatrix(basis, sp.diags(diag.astype(np.complex128), format="csr"))


def block_exp_action(block: sp.spmatrix, values: np.ndarray) -> np.ndarray:
    """exp(block) @ values for a vector or a stack of column vectors.

    Small blocks go through dense Pade; larger ones stay sparse and use the
    truncated Taylor action of expm_multiply.
    """
    if block.shape[0] <= DENSE_BLOCK_LIMIT:
        return expm(block.toarray()) @ values
    return expm_multiply(sp.csc_matrix(block), np.array(values, dtype=np.complex128))


def expm_blocks_apply(block_for: Callable[[int], sp.spmatrix], s: StateVector) -> StateVector:
    """Apply exp(G) block by block; block_for(N) returns the sparse N-photon block of G.

    Blocks on which the state has no support are never built.
    """
    out = np.zeros(s.basis.dimension, dtype=np.complex128)
    for total, sl in enumerate(s.basis.block_slices):
        segment = s.amp[sl]
        if not segment.any():
            continue
        out[sl] = block_exp_action(block_for(total), segment)
    return StateVector(s.basis, out, s.leakage)


def exp_antihermitian_apply(gen: OperatorMatrix, s: StateVector) -> StateVector:
    gen.basis.require_same(s.basis)
    tol = s.basis.config.tol.atol_linalg
    if not gen.is_antihermitian(tol):
        raise GeneratorError("generator is not anti-Hermitian within atol_linalg")
    result = expm_blocks_apply(gen.blocks.__getitem__, s)
    drift = abs(result.norm() - s.norm())
    if drift > tol:
        logger.warning("Block exponential changed the norm by %.3e (atol %.1e).", drift, tol)
    return result


__all__ = [
    "Helicity",
    "PLUS",
    "MINUS",
    "HELICITIES",
    "Basis",
    "StateVector",
    "OperatorMatrix",
    "mode_slot",
    "enumerate_basis",
    "vacuum",
    "basis_state",
    "apply",
    "inner",
    "ladder",
    "number_operator",
    "DENSE_BLOCK_LIMIT",
    "block_exp_action",
    "expm_blocks_apply",
    "exp_antihermitian_apply",
]
