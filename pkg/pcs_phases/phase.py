from __future__ import annotations

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Final, Iterable, Sequence, TypeVar

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .config import Tolerances
from .errors import InvalidStateError, NumericalError, PoleContactError, UnderSamplingError
from .fock import PLUS, Basis, StateVector
from .quasispin import QuasispinExpectation, stokes_vector
from .sphere import ContourIntegrals, SegmentSamples, SpherePath, SpherePoint, contour_integrals
from .states import (
    AlphaPair,
    ReferenceSpec,
    coherent_amplitudes,
    displace,
    make_reference,
    transform_glauber_params,
)

logger = logging.getLogger(__name__)

METHOD_CONNECTION: Final[str] = "connection"
METHOD_OVERLAPS: Final[str] = "overlaps"
METHOD_CLOSED: Final[str] = "closed_form"
METHODS: Final[tuple[str, ...]] = (METHOD_CONNECTION, METHOD_OVERLAPS, METHOD_CLOSED)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int | None) -> list[R]:
    if not workers or workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class StateFamily:
    """The single-valued family theta, phi -> |xi(theta, phi); psi0> of a reference state."""

    reference: ReferenceSpec
    basis: Basis
    evaluator: Callable[[float, float], np.ndarray]
    stokes: QuasispinExpectation

    @property
    def tol(self) -> Tolerances:
        return self.basis.config.tol

    def amplitudes(self, theta: float, phi: float) -> np.ndarray:
        return self.evaluator(theta, phi)

    def __call__(self, at: SpherePoint) -> StateVector:
        return StateVector(self.basis, self.evaluator(at.theta, at.phi))


def _glauber_stokes(alphas: Sequence[AlphaPair]) -> QuasispinExpectation:
    imbalance = sum(abs(a) ** 2 - abs(b) ** 2 for a, b in alphas)
    raising = sum(b * a.conjugate() for a, b in alphas)
    return QuasispinExpectation.from_components(0.5 * imbalance, raising.real, raising.imag)


def pcs_family(spec: ReferenceSpec, basis: Basis) -> StateFamily:
    """Family of the reference under collective rotations.

    Fock references are displaced block by block; Glauber references go through
    the rotated amplitudes, so no matrix exponential of the large tail blocks is needed.
    """
    reference = make_reference(spec, basis)
    if spec.kind == "glauber":
        alphas = spec.alphas

        def evaluate(theta: float, phi: float) -> np.ndarray:
            amp = coherent_amplitudes(basis, transform_glauber_params(alphas, theta, phi))
            return amp / np.linalg.norm(amp)

        return StateFamily(spec, basis, evaluate, _glauber_stokes(alphas))

    def evaluate(theta: float, phi: float) -> np.ndarray:
        return displace(reference, theta, phi).amp

    return StateFamily(spec, basis, evaluate, stokes_vector(reference))


def _check_pole(theta: float, guard: float) -> None:
    distance = min(theta, math.pi - theta)
    if distance < guard:
        raise PoleContactError(
            f"Berry connection requested {distance:.3e} rad from a pole (pole_guard {guard:.1e})"
        )


def _im_derivative(
    family: StateFamily, center: np.ndarray, theta: float, phi: float, axis: int
) -> float:
    tol = family.tol

    def central(step: float) -> float:
        if axis == 0:
            ahead, behind = family.amplitudes(theta + step, phi), family.amplitudes(theta - step, phi)
        else:
            ahead, behind = family.amplitudes(theta, phi + step), family.amplitudes(theta, phi - step)
        return float(np.vdot(center, ahead - behind).imag) / (2.0 * step)

    estimate = central(tol.fd_step)
    if tol.richardson:
        estimate = (4.0 * central(0.5 * tol.fd_step) - estimate) / 3.0
    return estimate


def _connection_at(
    family: StateFamily, theta: float, phi: float, dtheta: float, dphi: float
) -> float:
    _check_pole(theta, family.tol.pole_guard)
    if dtheta == 0.0 and dphi == 0.0:
        return 0.0
    center = family.amplitudes(theta, phi)
    norm = float(np.linalg.norm(center))
    if abs(norm - 1.0) > family.tol.atol_linalg:
        raise NumericalError(f"family state at ({theta}, {phi}) has norm {norm:.15g}")
    value = 0.0
    if dtheta != 0.0:
        value += dtheta * _im_derivative(family, center, theta, phi, 0)
    if dphi != 0.0:
        value += dphi * _im_derivative(family, center, theta, phi, 1)
    return -value


def berry_connection(
    family: StateFamily, at: SpherePoint, tangent: tuple[float, float]
) -> float:
    """A_s = -Im<psi|d psi/ds> along the tangent (d theta/ds, d phi/ds)."""
    dtheta, dphi = tangent
    return _connection_at(family, at.theta, at.phi, float(dtheta), float(dphi))


def gauge_potential_glauber(
    alphas: Sequence[AlphaPair], theta: float, phi: float
) -> tuple[float, float]:
    """Closed-form (A_theta, A_phi) for a family built on Glauber coherent states."""
    stokes = _glauber_stokes(alphas)
    raising = complex(stokes.p1, stokes.p2) * cmath.exp(-1j * phi)
    a_theta = raising.imag
    a_phi = -(math.sin(0.5 * theta) ** 2 * 2.0 * stokes.p0 + math.sin(theta) * raising.real)
    return a_theta, a_phi


def _segment_connection(
    family: StateFamily, samples: SegmentSamples, workers: int | None
) -> np.ndarray:
    points = list(zip(samples.theta, samples.phi, samples.dtheta, samples.dphi))
    values = ordered_map(lambda args: _connection_at(family, *args), points, workers)
    return np.asarray(values, dtype=float)


@dataclass(frozen=True, slots=True)
class ConnectionProfile:
    """Sampled gauge potential along a path; columns of the per-sample CSV."""

    s: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    a_s: np.ndarray
    running_gamma: np.ndarray
    per_segment: tuple[float, ...]
    max_abs_connection: float

    @property
    def gamma(self) -> float:
        return math.fsum(self.per_segment)

    def rows(self) -> Iterable[tuple[float, float, float, float, float]]:
        return zip(
            self.s.tolist(),
            self.theta.tolist(),
            self.phi.tolist(),
            self.a_s.tolist(),
            self.running_gamma.tolist(),
        )


def connection_profile(
    family: StateFamily, path: SpherePath, *, workers: int | None = None
) -> ConnectionProfile:
    path.require_closed()
    path.check_pole_clearance(family.tol.pole_guard)
    sampled = path.sampled
    a_s_parts, running_parts, per_segment = [], [], []
    offset = 0.0
    max_abs = 0.0
    for seg in sampled.segments:
        a_t = _segment_connection(family, seg, workers)
        speed = seg.speed
        a_s_parts.append(np.divide(a_t, speed, out=np.zeros_like(a_t), where=speed > 0))
        running = offset - cumulative_trapezoid(a_t, seg.t, initial=0.0)
        running_parts.append(running)
        per_segment.append(-float(trapezoid(a_t, seg.t)))
        offset = float(running[-1])
        max_abs = max(max_abs, float(np.max(np.abs(a_s_parts[-1]))))

    return ConnectionProfile(
        s=sampled.arc_coordinate(),
        theta=sampled.theta,
        phi=sampled.phi,
        a_s=np.concatenate(a_s_parts),
        running_gamma=np.concatenate(running_parts),
        per_segment=tuple(per_segment),
        max_abs_connection=max_abs,
    )


def phase_by_connection(
    family: StateFamily, path: SpherePath, *, workers: int | None = None
) -> float:
    return connection_profile(family, path, workers=workers).gamma


def _loop_points(path: SpherePath) -> list[tuple[float, float]]:
    points: list[tuple[float, float]] = []
    for seg in path.sampled.segments:
        # Each segment starts where the previous one ended.
        points.extend(zip(seg.theta[:-1].tolist(), seg.phi[:-1].tolist()))
    return points


def phase_by_overlaps(
    family: StateFamily, path: SpherePath, *, workers: int | None = None
) -> float:
    """Discrete Bargmann phase: sum of arg<psi_k|psi_k+1> around the sampled loop."""
    path.require_closed()
    points = _loop_points(path)
    states = ordered_map(lambda pt: family.amplitudes(*pt), points, workers)
    min_overlap = family.tol.min_overlap
    total = 0.0
    for k, current in enumerate(states):
        following = states[(k + 1) % len(states)]
        overlap = complex(np.vdot(current, following))
        if abs(overlap) < min_overlap:
            raise UnderSamplingError(
                f"overlap {abs(overlap):.3e} between samples {k} and {k + 1} is below "
                f"min_overlap {min_overlap:.1e}; increase samples"
            )
        total += cmath.phase(overlap)
    return total


def overlap_pcs_closed(
    theta: float, phi: float, u: float, v: float, p: float, helicity: str = PLUS
) -> complex:
    """<theta, phi; p| u theta, v phi; p> for the one-mode Fock family."""
    sign = 1.0 if helicity == PLUS else -1.0
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    cu, su = math.cos(0.5 * u * theta), math.sin(0.5 * u * theta)
    base = c * cu + s * su * cmath.exp(sign * 1j * phi * (v - 1.0))
    return base ** int(round(2 * p))


def overlap_glauber_closed(
    alphas: Sequence[AlphaPair], theta: float, phi: float, u: float, v: float
) -> complex:
    left = transform_glauber_params(alphas, theta, phi)
    right = transform_glauber_params(alphas, u * theta, v * phi)
    exponent = 0j
    for (a_plus, a_minus), (b_plus, b_minus) in zip(left, right):
        for a, b in ((a_plus, b_plus), (a_minus, b_minus)):
            exponent += -0.5 * (abs(a) ** 2 + abs(b) ** 2) + a.conjugate() * b
    return cmath.exp(exponent)


@dataclass(frozen=True, slots=True)
class PhaseComponents:
    """Phase split as <P0> * 2 I_half + <P1> * I_1 + <P2> * I_2."""

    gamma0: float
    gamma1: float
    gamma2: float
    expectation: QuasispinExpectation
    integrals: ContourIntegrals

    @property
    def total(self) -> float:
        return self.gamma0 + self.gamma1 + self.gamma2

    def as_dict(self) -> dict[str, Any]:
        return {
            "gamma0": self.gamma0,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "total": self.total,
            "expectation": self.expectation.as_dict(),
            "contour_integrals": self.integrals.as_dict(),
        }


def phase_components(
    expectation: QuasispinExpectation, integrals: ContourIntegrals
) -> PhaseComponents:
    return PhaseComponents(
        gamma0=2.0 * expectation.p0 * integrals.half_area,
        gamma1=expectation.p1 * integrals.cos_term,
        gamma2=expectation.p2 * integrals.sin_term,
        expectation=expectation,
        integrals=integrals,
    )


def _check_spin(p: float) -> None:
    if p < 0 or abs(2 * p - round(2 * p)) > 1e-9:
        raise InvalidStateError(f"p must be a non-negative half-integer, got {p!r}")


def phase_closed_pcs(path: SpherePath, p: float, helicity: str = PLUS) -> float:
    _check_spin(p)
    sign = 1.0 if helicity == PLUS else -1.0
    return sign * 2.0 * p * contour_integrals(path).half_area


def phase_closed_glauber(path: SpherePath, alphas: Sequence[AlphaPair]) -> PhaseComponents:
    return phase_components(_glauber_stokes(alphas), contour_integrals(path))


def phase_closed_family(family: StateFamily, path: SpherePath) -> PhaseComponents:
    """Closed form for any reference: only its quasispin expectation enters."""
    return phase_components(family.stokes, contour_integrals(path))


def hannay_numeric(
    path: SpherePath, p: float, delta_n: int = 1, helicity: str = PLUS
) -> float:
    """-d gamma/dn by a forward difference in the photon number n = 2p."""
    _check_spin(p)
    if p < 0.5:
        raise InvalidStateError(f"Hannay angle needs p >= 1/2, got {p!r}")
    if delta_n < 1:
        raise ValueError(f"delta_n must be a positive integer, got {delta_n!r}")
    n = round(2 * p)
    upper = phase_closed_pcs(path, 0.5 * (n + delta_n), helicity)
    lower = phase_closed_pcs(path, 0.5 * n, helicity)
    return -(upper - lower) / delta_n


def hannay_closed(path: SpherePath, theta0: float, phi0: float) -> float:
    integrals = contour_integrals(path)
    return (
        2.0 * math.cos(theta0) * integrals.half_area
        - math.sin(theta0) * math.cos(phi0) * integrals.cos_term
        + math.sin(theta0) * math.sin(phi0) * integrals.sin_term
    )


@dataclass(frozen=True, slots=True)
class HannayReport:
    numeric: float
    closed: float
    omega: float
    theta0: float
    phi0: float

    @property
    def discrepancy(self) -> float:
        return self.closed - self.numeric

    def as_dict(self) -> dict[str, float]:
        return {
            "hannay_numeric": self.numeric,
            "hannay_closed": self.closed,
            "discrepancy": self.discrepancy,
            "omega": self.omega,
            "theta0": self.theta0,
            "phi0": self.phi0,
        }


def compare_hannay(
    path: SpherePath,
    p: float,
    theta0: float = 0.0,
    phi0: float = 0.0,
    *,
    helicity: str = PLUS,
    atol: float = 1e-6,
) -> HannayReport:
    report = HannayReport(
        numeric=hannay_numeric(path, p, helicity=helicity),
        closed=hannay_closed(path, theta0, phi0),
        omega=contour_integrals(path).solid_angle,
        theta0=theta0,
        phi0=phi0,
    )
    if abs(report.discrepancy) > atol:
        logger.warning(
            "Hannay angle from -d gamma/dn (%.12g) differs from the direct contour form (%.12g) "
            "by %.6g; both are reported.",
            report.numeric,
            report.closed,
            report.discrepancy,
        )
    return report


def _mod_2pi(value: float | None) -> float | None:
    if value is None:
        return None
    return value % (2.0 * math.pi)


@dataclass(frozen=True)
class GeometricPhaseResult:
    omega: float
    gamma_connection: float | None = None
    gamma_overlap: float | None = None
    gamma_closed: float | None = None
    components: PhaseComponents | None = None
    per_segment: tuple[float, ...] = ()
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        named = {
            METHOD_CONNECTION: self.gamma_connection,
            METHOD_OVERLAPS: self.gamma_overlap,
            METHOD_CLOSED: self.gamma_closed,
        }
        return {name: value for name, value in named.items() if value is not None}

    @property
    def max_discrepancy(self) -> float:
        found = list(self.values().values())
        if len(found) < 2:
            return 0.0
        return max(found) - min(found)

    def as_dict(self) -> dict[str, Any]:
        return {
            "gamma_connection": self.gamma_connection,
            "gamma_overlap": self.gamma_overlap,
            "gamma_closed": self.gamma_closed,
            "gamma_connection_mod_2pi": _mod_2pi(self.gamma_connection),
            "gamma_overlap_mod_2pi": _mod_2pi(self.gamma_overlap),
            "gamma_closed_mod_2pi": _mod_2pi(self.gamma_closed),
            "components": None if self.components is None else self.components.as_dict(),
            "omega": self.omega,
            "per_segment": list(self.per_segment),
            "max_discrepancy": self.max_discrepancy,
            "diagnostics": dict(self.diagnostics),
        }


def geometric_phase(
    family: StateFamily,
    path: SpherePath,
    methods: Sequence[str] = METHODS,
    *,
    workers: int | None = None,
    profile: ConnectionProfile | None = None,
) -> GeometricPhaseResult:
    unknown = [name for name in methods if name not in METHODS]
    if unknown or not methods:
        raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {list(methods)}")
    path.require_closed()
    tol = family.tol
    integrals = contour_integrals(path)
    diagnostics: dict[str, Any] = {
        "fd_step": tol.fd_step,
        "richardson": tol.richardson,
        "samples": path.total_samples,
        "winding": path.winding,
        "atol_phase": tol.atol_phase,
    }
    gamma_connection = gamma_overlap = gamma_closed = None
    components = None
    per_segment: tuple[float, ...] = ()

    if METHOD_CLOSED in methods:
        components = phase_components(family.stokes, integrals)
        gamma_closed = components.total
        logger.info("Closed-form phase %.12g (Omega %.12g).", gamma_closed, integrals.solid_angle)
    if METHOD_CONNECTION in methods:
        profile = profile or connection_profile(family, path, workers=workers)
        gamma_connection = profile.gamma
        per_segment = profile.per_segment
        diagnostics["max_abs_connection"] = profile.max_abs_connection
        logger.info("Connection-integral phase %.12g.", gamma_connection)
    if METHOD_OVERLAPS in methods:
        gamma_overlap = phase_by_overlaps(family, path, workers=workers)
        logger.info("Discrete overlap phase %.12g.", gamma_overlap)

    result = GeometricPhaseResult(
        omega=integrals.solid_angle,
        gamma_connection=gamma_connection,
        gamma_overlap=gamma_overlap,
        gamma_closed=gamma_closed,
        components=components,
        per_segment=per_segment,
        diagnostics=diagnostics,
    )
    diagnostics["agreement"] = result.max_discrepancy <= tol.atol_phase
    if not diagnostics["agreement"]:
        logger.warning(
            "Phase methods disagree by %.3e (atol_phase %.1e): %s",
            result.max_discrepancy,
            tol.atol_phase,
            result.values(),
        )
    return result


__all__ = [
    "METHODS",
    "METHOD_CONNECTION",
    "METHOD_OVERLAPS",
    "METHOD_CLOSED",
    "ordered_map",
    "StateFamily",
    "ConnectionProfile",
    "PhaseComponents",
    "HannayReport",
    "GeometricPhaseResult",
    "pcs_family",
    "berry_connection",
    "gauge_potential_glauber",
    "connection_profile",
    "phase_by_connection",
    "phase_by_overlaps",
    "overlap_pcs_closed",
    "overlap_glauber_closed",
    "phase_components",
    "phase_closed_pcs",
    "phase_closed_glauber",
    "phase_closed_family",
    "hannay_numeric",
    "hannay_closed",
    "compare_hannay",
    "geometric_phase",
]
