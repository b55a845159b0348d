from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Any, Final, Literal, Protocol, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .config import GLAUBER_TAIL, NORMALIZATION_WARN
from .errors import CutoffError, InvalidStateError
from .fock import (
    HELICITIES,
    MINUS,
    PLUS,
    Basis,
    OperatorMatrix,
    StateVector,
    basis_state,
    block_exp_action,
    expm_blocks_apply,
    ladder,
    mode_slot,
    vacuum,
)
from .quasispin import QuasispinSet, build_quasispin, cluster_op, mode_quasispin

logger = logging.getLogger(__name__)

ReferenceKind = Literal["fock_m1", "two_mode", "independent", "glauber"]
Route = Literal["displacement", "operators"]

REFERENCE_KINDS: Final[tuple[str, ...]] = ("fock_m1", "two_mode", "independent", "glauber")
ROUTES: Final[tuple[str, ...]] = ("displacement", "operators")

AlphaPair = tuple[complex, complex]


def _is_integer(value: float) -> bool:
    return abs(value - round(value)) < 1e-9


def _is_half_integer(value: float) -> bool:
    return _is_integer(2.0 * value)


@dataclass(frozen=True, slots=True)
class ReferenceSpec:
    kind: str
    helicity: str = PLUS
    p: float = 0.0
    n: int = 0
    t: float = 0.0
    n_list: tuple[int, ...] = ()
    alphas: tuple[AlphaPair, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in REFERENCE_KINDS:
            raise InvalidStateError(
                f"unknown reference kind {self.kind!r}; expected one of {REFERENCE_KINDS}"
            )
        if self.helicity not in HELICITIES:
            raise InvalidStateError(f"helicity must be '+' or '-', got {self.helicity!r}")
        check = _VALIDATORS[self.kind]
        check(self)

    @classmethod
    def fock(cls, p: float, helicity: str = PLUS) -> "ReferenceSpec":
        return cls(kind="fock_m1", helicity=helicity, p=p, n=int(round(2 * p)))

    @classmethod
    def two_mode(cls, p: float, n: int, t: float, helicity: str = PLUS) -> "ReferenceSpec":
        return cls(kind="two_mode", helicity=helicity, p=p, n=n, t=t)

    @classmethod
    def independent(cls, n_list: Sequence[int], helicity: str = PLUS) -> "ReferenceSpec":
        return cls(kind="independent", helicity=helicity, n_list=tuple(int(n) for n in n_list))

    @classmethod
    def glauber(cls, alphas: Sequence[Sequence[complex]]) -> "ReferenceSpec":
        pairs = tuple((complex(a[0]), complex(a[1])) for a in alphas)
        return cls(kind="glauber", alphas=pairs)

    @property
    def modes_required(self) -> int:
        if self.kind == "fock_m1":
            return 1
        if self.kind == "two_mode":
            return 2
        if self.kind == "independent":
            return len(self.n_list)
        return len(self.alphas)

    @property
    def photon_number(self) -> int | None:
        if self.kind in ("fock_m1", "two_mode"):
            return self.n
        if self.kind == "independent":
            return sum(self.n_list)
        return None

    @property
    def spin(self) -> float | None:
        """Quasispin p of the irrep the family lives in; None for Glauber references."""
        if self.kind in ("fock_m1", "two_mode"):
            return self.p
        if self.kind == "independent":
            return 0.5 * sum(self.n_list)
        return None

    @property
    def mean_photon_number(self) -> float:
        if self.kind == "glauber":
            return float(sum(abs(a) ** 2 + abs(b) ** 2 for a, b in self.alphas))
        return float(self.photon_number)

    def as_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"kind": self.kind}
        if self.kind == "glauber":
            data["alphas"] = [
                {"plus": [a.real, a.imag], "minus": [b.real, b.imag]} for a, b in self.alphas
            ]
            return data
        data["helicity"] = self.helicity
        if self.kind == "independent":
            data["n_list"] = list(self.n_list)
        else:
            data.update({"p": self.p, "n": self.n})
            if self.kind == "two_mode":
                data["t"] = self.t
        return data


def _validate_fock_m1(spec: ReferenceSpec) -> None:
    if spec.p < 0 or not _is_half_integer(spec.p):
        raise InvalidStateError(f"p must be a non-negative half-integer, got {spec.p!r}")
    if spec.n != int(round(2 * spec.p)):
        raise InvalidStateError(f"fock_m1 reference requires n = 2p, got n={spec.n}, p={spec.p}")


def _validate_two_mode(spec: ReferenceSpec) -> None:
    if spec.p < 0 or not _is_half_integer(spec.p):
        raise InvalidStateError(f"p must be a non-negative half-integer, got {spec.p!r}")
    if not _is_half_integer(spec.t) or abs(spec.t) > spec.p + 1e-9:
        raise InvalidStateError(f"t must be a half-integer with |t| <= p, got t={spec.t}, p={spec.p}")
    if not _is_integer(spec.p + spec.t):
        raise InvalidStateError(f"p + t must be an integer, got p={spec.p}, t={spec.t}")
    clusters = spec.n / 2 - spec.p
    if clusters < -1e-9 or not _is_integer(clusters):
        raise InvalidStateError(
            f"n/2 - p must be a non-negative integer, got n={spec.n}, p={spec.p}"
        )


def _validate_independent(spec: ReferenceSpec) -> None:
    if not spec.n_list or any(n < 0 for n in spec.n_list):
        raise InvalidStateError(f"n_list must be non-empty with non-negative entries, got {spec.n_list}")


def _validate_glauber(spec: ReferenceSpec) -> None:
    if not spec.alphas:
        raise InvalidStateError("glauber reference needs one (alpha+, alpha-) pair per mode")
    for pair in spec.alphas:
        if not all(cmath.isfinite(value) for value in pair):
            raise InvalidStateError(f"alpha amplitudes must be finite, got {pair}")


_VALIDATORS: Final[dict[str, Any]] = {
    "fock_m1": _validate_fock_m1,
    "two_mode": _validate_two_mode,
    "independent": _validate_independent,
    "glauber": _validate_glauber,
}


@dataclass(frozen=True, slots=True)
class RotationSpec:
    theta: float
    phi: float
    per_mode: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        _check_angles(self.theta, self.phi)
        for theta_j, phi_j in self.per_mode or ():
            _check_angles(theta_j, phi_j)

    @classmethod
    def wrapped(cls, theta: float, phi: float) -> "RotationSpec":
        return cls(theta, _wrap_phi(phi))

    @classmethod
    def per_mode_uniform(cls, theta: float, phi: float, m: int) -> "RotationSpec":
        phi = _wrap_phi(phi)
        return cls(theta, phi, tuple((theta, phi) for _ in range(m)))

    def mode_angles(self, m: int) -> tuple[tuple[float, float], ...]:
        if self.per_mode is None:
            return tuple((self.theta, self.phi) for _ in range(m))
        if len(self.per_mode) != m:
            raise InvalidStateError(f"per_mode needs {m} angle pairs, got {len(self.per_mode)}")
        return self.per_mode


def _wrap_phi(phi: float) -> float:
    wrapped = math.fmod(phi, 2 * math.pi)
    if wrapped < 0:
        wrapped += 2 * math.pi
    return 0.0 if wrapped >= 2 * math.pi else wrapped


def _check_angles(theta: float, phi: float) -> None:
    if not (math.isfinite(theta) and -1e-12 <= theta <= math.pi + 1e-12):
        raise InvalidStateError(f"theta must lie in [0, pi], got {theta!r}")
    if not (math.isfinite(phi) and 0.0 <= phi < 2 * math.pi):
        raise InvalidStateError(f"phi must lie in [0, 2pi), got {phi!r}")


def glauber_cutoff(alphas: Sequence[AlphaPair], tail: float = GLAUBER_TAIL) -> int:
    """Smallest n_max whose Poisson tail P(N > n_max) stays below `tail`."""
    mu = float(sum(abs(a) ** 2 + abs(b) ** 2 for a, b in alphas))
    if mu == 0.0:
        return 0
    n_max = int(math.ceil(mu))
    while poisson.sf(n_max, mu) >= tail:
        n_max += 1
    return n_max


def _require_cutoff(basis: Basis, photons: int) -> None:
    if basis.n_max < photons:
        raise CutoffError(
            f"cutoff n_max={basis.n_max} is below the {photons} photons of the reference state"
        )


def _require_modes(basis: Basis, spec: ReferenceSpec, exact: bool = False) -> None:
    needed = spec.modes_required
    if basis.m < needed or (exact and basis.m != needed):
        relation = "exactly" if exact else "at least"
        raise InvalidStateError(
            f"{spec.kind} reference needs {relation} {needed} ST modes, basis has m={basis.m}"
        )


class ReferenceBuilder(Protocol):
    def __call__(self, spec: ReferenceSpec, basis: Basis) -> StateVector: ...


def _build_fock_m1(spec: ReferenceSpec, basis: Basis) -> StateVector:
    _require_modes(basis, spec)
    _require_cutoff(basis, spec.n)
    occ = [0] * basis.config.mode_count
    occ[mode_slot(basis.m, 1, spec.helicity)] = spec.n
    return basis_state(basis, occ)


def _two_mode_prefactor(spec: ReferenceSpec) -> float:
    p, n, t = spec.p, spec.n, spec.t
    numerator = (
        math.factorial(int(round(n / 2 + p + 1)))
        * math.factorial(int(round(n / 2 - p)))
        * math.factorial(int(round(p + t)))
        * math.factorial(int(round(p - t)))
    )
    return (numerator / math.factorial(int(round(2 * p + 1)))) ** -0.5


def _normalize_two_mode(state: StateVector, spec: ReferenceSpec) -> StateVector:
    norm = state.norm()
    if abs(norm - 1.0) > NORMALIZATION_WARN:
        logger.warning(
            "Two-mode reference prefactor leaves norm %.12g for p=%s n=%s t=%s; renormalizing.",
            norm,
            spec.p,
            spec.n,
            spec.t,
        )
    return state.normalized()


def _two_mode_state(
    spec: ReferenceSpec, basis: Basis, first: OperatorMatrix, second: OperatorMatrix
) -> StateVector:
    state = vacuum(basis)
    cluster = cluster_op(basis, 1, 2)
    for _ in range(int(round(spec.n / 2 - spec.p))):
        state = cluster.apply(state)
    for _ in range(int(round(spec.p - spec.t))):
        state = second.apply(state)
    for _ in range(int(round(spec.p + spec.t))):
        state = first.apply(state)
    return _normalize_two_mode(state * _two_mode_prefactor(spec), spec)


def _build_two_mode(spec: ReferenceSpec, basis: Basis) -> StateVector:
    _require_modes(basis, spec)
    _require_cutoff(basis, spec.n)
    first = ladder(basis, 1, spec.helicity, "create")
    second = ladder(basis, 2, spec.helicity, "create")
    return _two_mode_state(spec, basis, first, second)


def _build_independent(spec: ReferenceSpec, basis: Basis) -> StateVector:
    _require_modes(basis, spec, exact=True)
    _require_cutoff(basis, sum(spec.n_list))
    occ = [0] * basis.config.mode_count
    for j, n_j in enumerate(spec.n_list, 1):
        occ[mode_slot(basis.m, j, spec.helicity)] = n_j
    return basis_state(basis, occ)


def coherent_amplitudes(basis: Basis, alphas: Sequence[AlphaPair]) -> np.ndarray:
    flat = np.array([value for pair in alphas for value in pair], dtype=np.complex128)
    mu = float(np.sum(np.abs(flat) ** 2))
    occ = basis.occupation_array
    powers = np.ones(basis.dimension, dtype=np.complex128)
    for slot, value in enumerate(flat):
        table = np.cumprod(np.concatenate(([1.0 + 0j], np.full(basis.n_max, value))))
        powers *= table[occ[:, slot]]
    return math.exp(-0.5 * mu) * powers * basis.inv_sqrt_factorials


def _build_glauber(spec: ReferenceSpec, basis: Basis) -> StateVector:
    _require_modes(basis, spec, exact=True)
    amp = coherent_amplitudes(basis, spec.alphas)
    deficiency = max(0.0, 1.0 - float(np.sum(np.abs(amp) ** 2)))
    if deficiency >= GLAUBER_TAIL:
        raise CutoffError(
            f"Glauber tail {deficiency:.3e} above n_max={basis.n_max} exceeds {GLAUBER_TAIL:.0e}; "
            f"use n_max >= {glauber_cutoff(spec.alphas)}"
        )
    return StateVector(basis, amp, deficiency).normalized()


REFERENCE_BUILDERS: Final[dict[str, ReferenceBuilder]] = {
    "fock_m1": _build_fock_m1,
    "two_mode": _build_two_mode,
    "independent": _build_independent,
    "glauber": _build_glauber,
}


def make_reference(spec: ReferenceSpec, basis: Basis) -> StateVector:
    return REFERENCE_BUILDERS[spec.kind](spec, basis)


def _displace_with(q: QuasispinSet, s: StateVector, theta: float, phi: float) -> StateVector:
    if theta == 0.0:
        return s
    return expm_blocks_apply(lambda total: q.generator_block(total, theta, phi), s)


def displace(s: StateVector, theta: float, phi: float) -> StateVector:
    """exp(xi P+ - xi* P-) s for any real (theta, phi); no range checks."""
    return _displace_with(build_quasispin(s.basis), s, theta, phi)


def rotate_state(s: StateVector, rot: RotationSpec) -> StateVector:
    if not s.is_normalized():
        raise InvalidStateError(f"rotate_state expects a normalized state (norm {s.norm():.15g})")
    return displace(s, rot.theta, rot.phi)


def displace_columns(basis: Basis, vectors: np.ndarray, theta: float, phi: float) -> np.ndarray:
    """exp(xi P+ - xi* P-) applied to every column of a (dimension, k) array."""
    q = build_quasispin(basis)
    out = np.zeros((basis.dimension, vectors.shape[1]), dtype=np.complex128)
    for total, sl in enumerate(basis.block_slices):
        segment = vectors[sl]
        if not segment.any():
            continue
        out[sl] = block_exp_action(q.generator_block(total, theta, phi), segment)
    return out


def displacement_matrix(basis: Basis, theta: float, phi: float) -> OperatorMatrix:
    q = build_quasispin(basis)
    blocks = []
    for total, sl in enumerate(basis.block_slices):
        size = sl.stop - sl.start
        blocks.append(block_exp_action(q.generator_block(total, theta, phi), np.eye(size)))
    return OperatorMatrix(basis, sp.block_diag(blocks, format="csr"))


def rotated_creation(basis: Basis, j: int, helicity: str, theta: float, phi: float) -> OperatorMatrix:
    """Creation operator of the elliptically polarized photon a+_(+-)(j; theta, phi)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    plus = ladder(basis, j, PLUS, "create")
    minus = ladder(basis, j, MINUS, "create")
    if helicity == PLUS:
        return plus * c + minus * (cmath.exp(1j * phi) * s)
    if helicity == MINUS:
        return minus * c - plus * (cmath.exp(-1j * phi) * s)
    raise InvalidStateError(f"helicity must be '+' or '-', got {helicity!r}")


def transform_glauber_params(
    alphas: Sequence[AlphaPair], theta: float, phi: float
) -> tuple[AlphaPair, ...]:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    forward, backward = cmath.exp(1j * phi), cmath.exp(-1j * phi)
    return tuple(
        (complex(a) * c - backward * complex(b) * s, complex(b) * c + forward * complex(a) * s)
        for a, b in alphas
    )


def _pcs_independent(spec: ReferenceSpec, rot: RotationSpec, basis: Basis, route: str) -> StateVector:
    if rot.per_mode is None:
        raise InvalidStateError("independent reference needs per_mode rotation angles")
    angles = rot.mode_angles(basis.m)
    if route == "displacement":
        state = make_reference(spec, basis)
        for j, (theta_j, phi_j) in enumerate(angles, 1):
            state = _displace_with(mode_quasispin(basis, j), state, theta_j, phi_j)
        return state

    _require_modes(basis, spec, exact=True)
    _require_cutoff(basis, sum(spec.n_list))
    state = vacuum(basis)
    for j, ((theta_j, phi_j), n_j) in enumerate(zip(angles, spec.n_list), 1):
        creator = rotated_creation(basis, j, spec.helicity, theta_j, phi_j)
        for _ in range(n_j):
            state = creator.apply(state)
        state = state * (1.0 / math.sqrt(math.factorial(n_j)))
    return state


def _pcs_glauber(spec: ReferenceSpec, rot: RotationSpec, basis: Basis, route: str) -> StateVector:
    if route == "displacement":
        state = make_reference(spec, basis)
        if rot.per_mode is None:
            return displace(state, rot.theta, rot.phi)
        for j, (theta_j, phi_j) in enumerate(rot.mode_angles(basis.m), 1):
            state = _displace_with(mode_quasispin(basis, j), state, theta_j, phi_j)
        return state

    angles = rot.mode_angles(len(spec.alphas))
    rotated = tuple(
        transform_glauber_params([pair], theta_j, phi_j)[0]
        for pair, (theta_j, phi_j) in zip(spec.alphas, angles)
    )
    return make_reference(ReferenceSpec.glauber(rotated), basis)


def _pcs_collective(spec: ReferenceSpec, rot: RotationSpec, basis: Basis, route: str) -> StateVector:
    if rot.per_mode is not None:
        raise InvalidStateError(f"per_mode rotations do not apply to {spec.kind} references")
    if route == "displacement":
        return rotate_state(make_reference(spec, basis), rot)

    _require_modes(basis, spec)
    _require_cutoff(basis, spec.n)
    first = rotated_creation(basis, 1, spec.helicity, rot.theta, rot.phi)
    if spec.kind == "fock_m1":
        state = vacuum(basis)
        for _ in range(spec.n):
            state = first.apply(state)
        return state * (1.0 / math.sqrt(math.factorial(spec.n)))
    second = rotated_creation(basis, 2, spec.helicity, rot.theta, rot.phi)
    return _two_mode_state(spec, basis, first, second)


def make_pcs(
    spec: ReferenceSpec, rot: RotationSpec, basis: Basis, route: str = "displacement"
) -> StateVector:
    """Polarization coherent state built along one of two equivalent routes.

    `displacement` applies exp(xi P+ - xi* P-) block by block to the reference;
    `operators` rebuilds it from rotated creation operators (or, for Glauber
    references, from the rotated amplitudes alpha~).
    """
    if route not in ROUTES:
        raise InvalidStateError(f"route must be one of {ROUTES}, got {route!r}")
    if spec.kind == "independent":
        return _pcs_independent(spec, rot, basis, route)
    if spec.kind == "glauber":
        return _pcs_glauber(spec, rot, basis, route)
    return _pcs_collective(spec, rot, basis, route)


__all__ = [
    "ReferenceKind",
    "REFERENCE_KINDS",
    "ROUTES",
    "ReferenceSpec",
    "RotationSpec",
    "REFERENCE_BUILDERS",
    "glauber_cutoff",
    "coherent_amplitudes",
    "make_reference",
    "displace",
    "rotate_state",
    "displace_columns",
    "displacement_matrix",
    "rotated_creation",
    "transform_glauber_params",
    "make_pcs",
]
