from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Final, Mapping

logger = logging.getLogger(__name__)

DEFAULT_ATOL_LINALG: Final[float] = 1e-12
DEFAULT_ATOL_PHASE: Final[float] = 1e-6
DEFAULT_FD_STEP: Final[float] = 1e-5
DEFAULT_SEGMENTS_PER_UNIT: Final[int] = 1000
DEFAULT_POLE_GUARD: Final[float] = 1e-9
DEFAULT_MIN_OVERLAP: Final[float] = 1e-2
GLAUBER_TAIL: Final[float] = 1e-12
NORMALIZATION_WARN: Final[float] = 1e-9

DEFAULT_MAX_BASIS_DIMENSION: Final[int] = 250_000
MAX_DIMENSION_ENV: Final[str] = "PCS_MAX_BASIS_DIMENSION"


@dataclass(frozen=True, slots=True)
class Tolerances:
    atol_linalg: float = DEFAULT_ATOL_LINALG
    atol_phase: float = DEFAULT_ATOL_PHASE
    fd_step: float = DEFAULT_FD_STEP
    segments_per_unit: int = DEFAULT_SEGMENTS_PER_UNIT
    pole_guard: float = DEFAULT_POLE_GUARD
    min_overlap: float = DEFAULT_MIN_OVERLAP
    richardson: bool = False

    def __post_init__(self) -> None:
        for name in ("atol_linalg", "atol_phase", "fd_step", "pole_guard", "min_overlap"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"tolerance '{name}' must be a number, got {value!r}")
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"tolerance '{name}' must be positive, got {value!r}")
        segments = self.segments_per_unit
        if isinstance(segments, bool) or not isinstance(segments, int) or segments < 1:
            raise ValueError(f"'segments_per_unit' must be a positive integer, got {segments!r}")
        if not isinstance(self.richardson, bool):
            raise ValueError(f"'richardson' must be a boolean, got {self.richardson!r}")

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Tolerances":
        return replace(self, **dict(overrides))

    def as_dict(self) -> dict[str, Any]:
        return {
            "atol_linalg": self.atol_linalg,
            "atol_phase": self.atol_phase,
            "fd_step": self.fd_step,
            "segments_per_unit": self.segments_per_unit,
            "pole_guard": self.pole_guard,
            "min_overlap": self.min_overlap,
            "richardson": self.richardson,
        }


@dataclass(frozen=True, slots=True)
class ModeConfig:
    m: int
    n_max: int
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"mode count m must be >= 1, got {self.m!r}")
        if self.n_max < 0:
            raise ValueError(f"photon cutoff n_max must be >= 0, got {self.n_max!r}")

    @property
    def mode_count(self) -> int:
        return 2 * self.m

    @property
    def dimension(self) -> int:
        return math.comb(self.n_max + 2 * self.m, 2 * self.m)

    def as_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "n_max": self.n_max,
            "dimension": self.dimension,
            "tol": self.tol.as_dict(),
        }


def max_basis_dimension() -> int:
    raw = os.getenv(MAX_DIMENSION_ENV)
    if not raw:
        return DEFAULT_MAX_BASIS_DIMENSION
    try:
        value = int(raw)
    except ValueError:
        logger.warning(
            "Ignoring non-integer %s=%r; using %d.",
            MAX_DIMENSION_ENV,
            raw,
            DEFAULT_MAX_BASIS_DIMENSION,
        )
        return DEFAULT_MAX_BASIS_DIMENSION
    return max(value, 1)


__all__ = [
    "ModeConfig",
    "DEFAULT_SEGMENTS_PER_UNIT",
    "Tolerances",
    "GLAUBER_TAIL",
    "NORMALIZATION_WARN",
    "max_basis_dimension",
]
