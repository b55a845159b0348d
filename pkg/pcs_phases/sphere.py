from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Final, Literal, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .config import DEFAULT_SEGMENTS_PER_UNIT
from .errors import OpenPathError, PoleContactError

SegmentKind = Literal["latitude", "geodesic", "linear_in_angles"]
SEGMENT_KINDS: Final[tuple[str, ...]] = ("latitude", "geodesic", "linear_in_angles")

MIN_SAMPLES: Final[int] = 16
TWO_PI: Final[float] = 2.0 * math.pi
_POLE_EPS: Final[float] = 1e-14
_CLOSURE_TOL: Final[float] = 1e-9


@dataclass(frozen=True, slots=True)
class SpherePoint:
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.theta) and -1e-12 <= self.theta <= math.pi + 1e-12):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta!r}")
        if not math.isfinite(self.phi):
            raise ValueError(f"phi must be finite, got {self.phi!r}")
        object.__setattr__(self, "theta", min(max(float(self.theta), 0.0), math.pi))

    @classmethod
    def from_vector(cls, vec: Sequence[float], phi_hint: float = 0.0) -> "SpherePoint":
        x, y, z = (float(c) for c in vec)
        rho = math.hypot(x, y)
        theta = math.atan2(rho, z)
        if rho < _POLE_EPS:
            return cls(theta, phi_hint)
        return cls(theta, phi_hint + _wrap_pi(math.atan2(y, x) - phi_hint))

    @property
    def at_pole(self) -> bool:
        return min(self.theta, math.pi - self.theta) < _POLE_EPS

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    def with_phi(self, phi: float) -> "SpherePoint":
        return SpherePoint(self.theta, phi)


def _wrap_pi(angle: float) -> float:
    """Reduce to (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True, slots=True)
class SegmentSamples:
    """Samples at t in [0, 1] with the exact tangent (d theta/dt, d phi/dt)."""

    t: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    dtheta: np.ndarray
    dphi: np.ndarray

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.dtheta, np.sin(self.theta) * self.dphi)


@dataclass(frozen=True, slots=True)
class Segment:
    kind: str
    start: SpherePoint
    end: SpherePoint
    samples: int

    def __post_init__(self) -> None:
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"segment kind must be one of {SEGMENT_KINDS}, got {self.kind!r}")
        if self.samples < 1:
            raise ValueError(f"samples must be a positive integer, got {self.samples!r}")
        if self.kind == "latitude" and abs(self.start.theta - self.end.theta) > _CLOSURE_TOL:
            raise ValueError("latitude segment endpoints must share theta")
        if self.kind == "geodesic":
            _check_geodesic(self.start, self.end)

    @property
    def arc_length(self) -> float:
        if self.kind == "latitude":
            return math.sin(self.start.theta) * abs(self.end.phi - self.start.phi)
        if self.kind == "geodesic":
            return _central_angle(self.start, self.end)
        dtheta = self.end.theta - self.start.theta
        mid = 0.5 * (self.start.theta + self.end.theta)
        return math.hypot(dtheta, math.sin(mid) * (self.end.phi - self.start.phi))

    def reversed(self) -> "Segment":
        return replace(self, start=self.end, end=self.start)

    def sample(self) -> SegmentSamples:
        t = np.linspace(0.0, 1.0, self.samples + 1)
        if self.kind == "geodesic":
            return _sample_geodesic(self.start, self.end, t)
        dtheta = self.end.theta - self.start.theta
        dphi = self.end.phi - self.start.phi
        return SegmentSamples(
            t=t,
            theta=self.start.theta + dtheta * t,
            phi=self.start.phi + dphi * t,
            dtheta=np.full_like(t, dtheta),
            dphi=np.full_like(t, dphi),
        )


def _central_angle(a: SpherePoint, b: SpherePoint) -> float:
    u, v = a.unit_vector(), b.unit_vector()
    return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v)))


def _check_geodesic(a: SpherePoint, b: SpherePoint) -> None:
    angle = _central_angle(a, b)
    if angle < 1e-12:
        raise ValueError(f"geodesic endpoints coincide at (theta={a.theta}, phi={a.phi})")
    if math.pi - angle < 1e-9:
        raise ValueError("geodesic endpoints are antipodal; the great circle is not unique")
    if a.at_pole and b.at_pole:
        raise ValueError("geodesic between the two poles is not unique")
    if not a.at_pole and not b.at_pole:
        for pole in (SpherePoint(0.0, a.phi), SpherePoint(math.pi, a.phi)):
            detour = _central_angle(a, pole) + _central_angle(pole, b) - angle
            if detour < 1e-12:
                raise ValueError("geodesic passes through a pole; split it at the pole")


def _sample_geodesic(a: SpherePoint, b: SpherePoint, t: np.ndarray) -> SegmentSamples:
    u, v = a.unit_vector(), b.unit_vector()
    omega = _central_angle(a, b)
    sin_omega = math.sin(omega)
    wa = np.sin((1.0 - t) * omega) / sin_omega
    wb = np.sin(t * omega) / sin_omega
    da = -omega * np.cos((1.0 - t) * omega) / sin_omega
    db = omega * np.cos(t * omega) / sin_omega
    pos = wa[:, None] * u + wb[:, None] * v
    vel = da[:, None] * u + db[:, None] * v
    x, y, z = pos.T
    vx, vy, vz = vel.T

    rho = np.hypot(x, y)
    pole = rho < _POLE_EPS
    safe_rho = np.where(pole, 1.0, rho)
    horizontal = np.hypot(vx, vy)
    drho = np.where(pole, 0.0, (x * vx + y * vy) / safe_rho)
    # A pole can only be an endpoint: the arc leaves it (t=0) or reaches it (t=1).
    drho[0] = horizontal[0] if pole[0] else drho[0]
    drho[-1] = -horizontal[-1] if pole[-1] else drho[-1]

    theta = np.arctan2(rho, z)
    dtheta = z * drho - rho * vz
    dphi = np.where(pole, 0.0, (x * vy - y * vx) / safe_rho**2)

    raw = np.arctan2(y, x)
    if pole[0]:
        raw[0] = raw[1]
    if pole[-1]:
        raw[-1] = raw[-2]
    phi = np.unwrap(raw)
    anchor = b.phi - phi[-1] if a.at_pole else a.phi - phi[0]
    phi = phi + TWO_PI * round(anchor / TWO_PI)
    return SegmentSamples(t=t, theta=theta, phi=phi, dtheta=dtheta, dphi=dphi)


@dataclass(frozen=True, slots=True)
class PathSamples:
    """Per-segment samples of a path in path order."""

    segments: tuple[SegmentSamples, ...]

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([seg.theta for seg in self.segments])

    @property
    def phi(self) -> np.ndarray:
        return np.concatenate([seg.phi for seg in self.segments])

    def arc_coordinate(self) -> np.ndarray:
        pieces = []
        offset = 0.0
        for seg in self.segments:
            s = offset + cumulative_trapezoid(seg.speed, seg.t, initial=0.0)
            pieces.append(s)
            offset = float(s[-1])
        return np.concatenate(pieces)


@dataclass(frozen=True, slots=True)
class ContourIntegrals:
    half_area: float
    cos_term: float
    sin_term: float
    per_segment: tuple[tuple[float, float, float], ...]

    @property
    def solid_angle(self) -> float:
        return 2.0 * self.half_area

    def as_dict(self) -> dict[str, float]:
        return {
            "half_area": self.half_area,
            "cos_term": self.cos_term,
            "sin_term": self.sin_term,
            "solid_angle": self.solid_angle,
        }


@dataclass(frozen=True)
class SpherePath:
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("a path needs at least one segment")
        for prev, nxt in zip(self.segments, self.segments[1:]):
            if not _same_point(prev.end, nxt.start, match_phi=True):
                raise ValueError(
                    f"segments do not join: ({prev.end.theta}, {prev.end.phi}) -> "
                    f"({nxt.start.theta}, {nxt.start.phi})"
                )

    @property
    def start(self) -> SpherePoint:
        return self.segments[0].start

    @property
    def end(self) -> SpherePoint:
        return self.segments[-1].end

    @property
    def closed(self) -> bool:
        return _same_point(self.end, self.start, match_phi=False)

    @property
    def winding(self) -> int:
        return round((self.end.phi - self.start.phi) / TWO_PI)

    @property
    def total_samples(self) -> int:
        return sum(seg.samples for seg in self.segments)

    @property
    def arc_length(self) -> float:
        return sum(seg.arc_length for seg in self.segments)

    def require_closed(self) -> None:
        if not self.closed:
            raise OpenPathError()

    def reversed(self) -> "SpherePath":
        return SpherePath(tuple(seg.reversed() for seg in reversed(self.segments)))

    def with_samples(self, samples: int) -> "SpherePath":
        return SpherePath(tuple(replace(seg, samples=samples) for seg in self.segments))

    def refined(self, factor: int) -> "SpherePath":
        return SpherePath(
            tuple(replace(seg, samples=seg.samples * factor) for seg in self.segments)
        )

    @cached_property
    def sampled(self) -> PathSamples:
        return PathSamples(tuple(seg.sample() for seg in self.segments))

    def check_pole_clearance(self, guard: float) -> None:
        theta = self.sampled.theta
        distance = np.minimum(theta, math.pi - theta)
        worst = int(np.argmin(distance))
        if distance[worst] < guard:
            raise PoleContactError(
                f"path passes within {distance[worst]:.3e} rad of a pole at sample {worst} "
                f"(pole_guard {guard:.1e})"
            )

    def describe(self) -> dict[str, object]:
        return {
            "segments": [
                {
                    "kind": seg.kind,
                    "start": [seg.start.theta, seg.start.phi],
                    "end": [seg.end.theta, seg.end.phi],
                    "samples": seg.samples,
                }
                for seg in self.segments
            ],
            "closed": self.closed,
            "winding": self.winding,
            "total_samples": self.total_samples,
        }


def _same_point(a: SpherePoint, b: SpherePoint, *, match_phi: bool) -> bool:
    if abs(a.theta - b.theta) > _CLOSURE_TOL:
        return False
    if a.at_pole:
        return True
    if match_phi:
        return abs(a.phi - b.phi) <= _CLOSURE_TOL
    turns = (a.phi - b.phi) / TWO_PI
    return abs(turns - round(turns)) * TWO_PI <= _CLOSURE_TOL


def default_samples(arc_length: float, segments_per_unit: int = DEFAULT_SEGMENTS_PER_UNIT) -> int:
    return max(MIN_SAMPLES, math.ceil(segments_per_unit * arc_length))


def _resolve_samples(
    samples: int | None, arc_length: float, segments_per_unit: int
) -> int:
    if samples is not None:
        if samples < 1:
            raise ValueError(f"samples must be a positive integer, got {samples!r}")
        return samples
    return default_samples(arc_length, segments_per_unit)


def latitude_loop(
    theta0: float,
    winding: int = 1,
    samples: int | None = None,
    *,
    phi0: float = 0.0,
    segments_per_unit: int = DEFAULT_SEGMENTS_PER_UNIT,
) -> SpherePath:
    if not 0.0 < theta0 < math.pi:
        raise ValueError(f"latitude loop needs 0 < theta0 < pi, got {theta0!r}")
    if winding == 0:
        raise ValueError("winding must be a non-zero integer")
    start = SpherePoint(theta0, phi0)
    end = SpherePoint(theta0, phi0 + TWO_PI * winding)
    arc = math.sin(theta0) * TWO_PI * abs(winding)
    return SpherePath(
        (Segment("latitude", start, end, _resolve_samples(samples, arc, segments_per_unit)),)
    )


def geodesic_polygon(
    vertices: Sequence[SpherePoint],
    samples: int | None = None,
    *,
    segments_per_unit: int = DEFAULT_SEGMENTS_PER_UNIT,
) -> SpherePath:
    """Closed path of great-circle arcs through `vertices`, back to the first one."""
    if len(vertices) < 3:
        raise ValueError(f"a geodesic polygon needs at least 3 vertices, got {len(vertices)}")
    ring = list(vertices) + [vertices[0]]
    segments: list[Segment] = []
    running = ring[0].phi
    for a, b in zip(ring, ring[1:]):
        start, end = _geodesic_endpoints(a, b, running)
        arc = _central_angle(start, end)
        segments.append(
            Segment("geodesic", start, end, _resolve_samples(samples, arc, segments_per_unit))
        )
        running = end.phi
    return SpherePath(tuple(segments))


def _geodesic_endpoints(a: SpherePoint, b: SpherePoint, running: float) -> tuple[SpherePoint, SpherePoint]:
    _check_geodesic(a, b)
    if a.at_pole:
        phi = running + _wrap_pi(b.phi - running)
        return a.with_phi(running), b.with_phi(phi)
    start = a.with_phi(running)
    if b.at_pole:
        return start, b.with_phi(running)
    return start, b.with_phi(running + _wrap_pi(b.phi - running))


def angle_polygon(
    vertices: Sequence[SpherePoint],
    closed: bool = True,
    samples: int | None = None,
    *,
    segments_per_unit: int = DEFAULT_SEGMENTS_PER_UNIT,
) -> SpherePath:
    """Path linear in (theta, phi) between vertices, phi taken exactly as given."""
    if len(vertices) < 2:
        raise ValueError("an angle polygon needs at least 2 vertices")
    ring = list(vertices) + ([vertices[0]] if closed else [])
    segments = []
    for a, b in zip(ring, ring[1:]):
        draft = Segment("linear_in_angles", a, b, 1)
        n = _resolve_samples(samples, draft.arc_length, segments_per_unit)
        segments.append(replace(draft, samples=n))
    return SpherePath(tuple(segments))


def _integrands(s: SegmentSamples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sin_t = np.sin(s.theta)
    half = np.sin(0.5 * s.theta) ** 2 * s.dphi
    cos_term = sin_t * np.cos(s.phi) * s.dphi + np.sin(s.phi) * s.dtheta
    sin_term = sin_t * np.sin(s.phi) * s.dphi - np.cos(s.phi) * s.dtheta
    return half, cos_term, sin_term


def _segment_integrals(seg: Segment, sampled: SegmentSamples) -> tuple[float, float, float]:
    if seg.kind == "latitude":
        st = math.sin(seg.start.theta)
        pa, pb = seg.start.phi, seg.end.phi
        return (
            math.sin(0.5 * seg.start.theta) ** 2 * (pb - pa),
            st * (math.sin(pb) - math.sin(pa)),
            st * (math.cos(pa) - math.cos(pb)),
        )
    return tuple(float(trapezoid(f, sampled.t)) for f in _integrands(sampled))


def contour_integrals(path: SpherePath) -> ContourIntegrals:
    """Oriented integrals of sin^2(theta/2) dphi and of the two dipole one-forms."""
    path.require_closed()
    per_segment = tuple(
        _segment_integrals(seg, sampled)
        for seg, sampled in zip(path.segments, path.sampled.segments)
    )
    half, cos_term, sin_term = (math.fsum(values) for values in zip(*per_segment))
    return ContourIntegrals(half, cos_term, sin_term, per_segment)


def solid_angle(path: SpherePath) -> float:
    return contour_integrals(path).solid_angle


__all__ = [
    "SEGMENT_KINDS",
    "SpherePoint",
    "Segment",
    "SegmentSamples",
    "PathSamples",
    "SpherePath",
    "ContourIntegrals",
    "default_samples",
    "latitude_loop",
    "geodesic_polygon",
    "angle_polygon",
    "contour_integrals",
    "solid_angle",
]
