from __future__ import annotations

import cmath
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Final, Mapping

from .config import ModeConfig, Tolerances
from .errors import InvalidStateError, ScenarioError
from .phase import METHODS
from .sphere import SpherePath, SpherePoint, angle_polygon, geodesic_polygon, latitude_loop
from .states import ReferenceSpec, glauber_cutoff

logger = logging.getLogger(__name__)

SCHEMA_VERSION: Final[str] = "pcs-scenario/1"
PATH_KINDS: Final[tuple[str, ...]] = ("latitude", "geodesic_polygon", "angle_polygon")
RHO_KINDS: Final[tuple[str, ...]] = ("reference", "maximally_mixed")
DEG_SUFFIX: Final[str] = "_deg"

_TOP_KEYS: Final[frozenset[str]] = frozenset(
    {"schema", "modes", "numerics", "state", "path", "methods", "hannay", "qfunc", "outputs"}
)
_MODE_KEYS: Final[frozenset[str]] = frozenset({"m", "n_max"})
_STATE_KEYS: Final[frozenset[str]] = frozenset({"kind", "helicity", "p", "n", "t", "n_list", "alphas"})
_PATH_KEYS: Final[frozenset[str]] = frozenset(
    {"kind", "theta0", "phi0", "winding", "vertices", "closed", "samples"}
)
_HANNAY_KEYS: Final[frozenset[str]] = frozenset({"theta0", "phi0"})
_QFUNC_KEYS: Final[frozenset[str]] = frozenset({"n_theta", "n_phi", "rho", "poles"})
_OUTPUT_KEYS: Final[frozenset[str]] = frozenset({"summary_json", "samples_csv", "qgrid_csv"})
_ALPHA_KEYS: Final[frozenset[str]] = frozenset({"plus", "minus"})
_NUMERIC_KEYS: Final[frozenset[str]] = frozenset(Tolerances().as_dict())

_ALPHA_PARAM = re.compile(r"^alpha\.(\d+)\.(plus|minus)\.(abs|arg)$")
SWEEP_PARAMS_HELP: Final[str] = "theta0 | p | alpha.<j>.<plus|minus>.<abs|arg>"


def _convert_degrees(value: Any, where: str) -> Any:
    if isinstance(value, bool):
        raise ScenarioError(f"'{where}' must be numeric")
    if isinstance(value, (int, float)):
        return math.radians(value)
    if isinstance(value, list):
        return [_convert_degrees(item, where) for item in value]
    raise ScenarioError(f"'{where}' must be a number or a list of numbers")


def _normalize_angles(data: Any, where: str = "") -> Any:
    """Recursively replaces `<key>_deg` entries with `<key>` in radians."""
    if isinstance(data, list):
        return [_normalize_angles(item, f"{where}[{idx}]") for idx, item in enumerate(data)]
    if not isinstance(data, dict):
        return data
    out: dict[str, Any] = {}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        if key.endswith(DEG_SUFFIX):
            target = key[: -len(DEG_SUFFIX)]
            if target in data:
                raise ScenarioError(f"'{path}' conflicts with '{target}'; give one unit only")
            out[target] = _convert_degrees(value, path)
        else:
            out[key] = _normalize_angles(value, path)
    return out


def _require_mapping(data: Any, where: str, allowed: frozenset[str]) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ScenarioError(f"'{where}' must be a JSON object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ScenarioError(f"unknown key(s) in '{where}': {', '.join(unknown)}")
    return data


def _number(data: Mapping[str, Any], key: str, where: str, default: Any = None) -> float:
    value = data.get(key, default)
    if value is None:
        raise ScenarioError(f"'{where}.{key}' is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"'{where}.{key}' must be a finite number, got {value!r}")
    return float(value)


def _integer(data: Mapping[str, Any], key: str, where: str, default: Any = None) -> int | None:
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"'{where}.{key}' must be an integer, got {value!r}")
    return value


def _complex_pair(value: Any, where: str) -> complex:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ScenarioError(f"'{where}' must be a [re, im] pair of numbers")
    return complex(value[0], value[1])


@dataclass(frozen=True, slots=True)
class PathSpec:
    kind: str
    theta0: float | None = None
    phi0: float = 0.0
    winding: int = 1
    vertices: tuple[tuple[float, float], ...] = ()
    closed: bool = True
    samples: int | None = None

    def build(self, segments_per_unit: int) -> SpherePath:
        try:
            if self.kind == "latitude":
                return latitude_loop(
                    self.theta0,
                    self.winding,
                    self.samples,
                    phi0=self.phi0,
                    segments_per_unit=segments_per_unit,
                )
            points = [SpherePoint(theta, phi) for theta, phi in self.vertices]
            if self.kind == "geodesic_polygon":
                return geodesic_polygon(points, self.samples, segments_per_unit=segments_per_unit)
            return angle_polygon(
                points, self.closed, self.samples, segments_per_unit=segments_per_unit
            )
        except ValueError as exc:
            raise ScenarioError(f"invalid path: {exc}") from exc

    def as_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"kind": self.kind, "samples": self.samples}
        if self.kind == "latitude":
            data.update({"theta0": self.theta0, "phi0": self.phi0, "winding": self.winding})
        else:
            data["vertices"] = [list(v) for v in self.vertices]
            if self.kind == "angle_polygon":
                data["closed"] = self.closed
        return data


@dataclass(frozen=True, slots=True)
class HannaySpec:
    theta0: float = 0.0
    phi0: float = 0.0


@dataclass(frozen=True, slots=True)
class QfuncSpec:
    n_theta: int | None = None
    n_phi: int | None = None
    rho: str = "reference"
    poles: bool = True


@dataclass(frozen=True, slots=True)
class OutputSpec:
    summary_json: Path | None = None
    samples_csv: Path | None = None
    qgrid_csv: Path | None = None


@dataclass(frozen=True)
class Scenario:
    source: Path
    modes: ModeConfig
    n_max_auto: bool
    state: ReferenceSpec
    path: PathSpec | None
    methods: tuple[str, ...]
    hannay: HannaySpec | None = None
    qfunc: QfuncSpec | None = None
    outputs: OutputSpec = field(default_factory=OutputSpec)

    @property
    def tol(self) -> Tolerances:
        return self.modes.tol

    def build_path(self) -> SpherePath:
        if self.path is None:
            raise ScenarioError("scenario has no 'path' section")
        return self.path.build(self.tol.segments_per_unit)

    def as_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "modes": self.modes.as_dict(),
            "state": self.state.as_dict(),
            "path": None if self.path is None else self.path.as_dict(),
            "methods": list(self.methods),
            "hannay": None
            if self.hannay is None
            else {"theta0": self.hannay.theta0, "phi0": self.hannay.phi0},
            "qfunc": None
            if self.qfunc is None
            else {
                "n_theta": self.qfunc.n_theta,
                "n_phi": self.qfunc.n_phi,
                "rho": self.qfunc.rho,
                "poles": self.qfunc.poles,
            },
        }

    def with_parameter(self, name: str, value: float) -> "Scenario":
        """Copy of the scenario with one sweep parameter replaced."""
        if name == "theta0":
            if self.path is None or self.path.kind != "latitude":
                raise ScenarioError("sweeping 'theta0' requires a latitude path")
            return replace(self, path=replace(self.path, theta0=value))
        if name == "p":
            return self._with_state(_state_with_spin(self.state, value))
        match = _ALPHA_PARAM.match(name)
        if match:
            return self._with_state(_state_with_alpha(self.state, match, value))
        raise ScenarioError(f"unknown sweep parameter {name!r}; expected {SWEEP_PARAMS_HELP}")

    def _with_state(self, state: ReferenceSpec) -> "Scenario":
        n_max = auto_cutoff(state) if self.n_max_auto else self.modes.n_max
        return replace(self, state=state, modes=replace(self.modes, n_max=n_max))


def _state_with_spin(state: ReferenceSpec, p: float) -> ReferenceSpec:
    try:
        if state.kind == "fock_m1":
            return ReferenceSpec.fock(p, state.helicity)
        if state.kind == "two_mode":
            return ReferenceSpec.two_mode(p, state.n, state.t, state.helicity)
    except InvalidStateError as exc:
        raise ScenarioError(f"sweep value p={p} is invalid: {exc}") from exc
    raise ScenarioError(f"sweeping 'p' is not supported for {state.kind} references")


def _state_with_alpha(state: ReferenceSpec, match: re.Match[str], value: float) -> ReferenceSpec:
    if state.kind != "glauber":
        raise ScenarioError("alpha sweeps require a glauber reference")
    j, component, part = int(match.group(1)), match.group(2), match.group(3)
    if not 1 <= j <= len(state.alphas):
        raise ScenarioError(f"alpha index {j} outside 1..{len(state.alphas)}")
    alphas = [list(pair) for pair in state.alphas]
    slot = 0 if component == "plus" else 1
    current = alphas[j - 1][slot]
    if part == "abs":
        alphas[j - 1][slot] = cmath.rect(value, cmath.phase(current))
    else:
        alphas[j - 1][slot] = cmath.rect(abs(current), value)
    return ReferenceSpec.glauber(alphas)


def auto_cutoff(state: ReferenceSpec) -> int:
    if state.kind == "glauber":
        return glauber_cutoff(state.alphas)
    return int(state.photon_number)


def _parse_state(data: Any) -> ReferenceSpec:
    data = _require_mapping(data, "state", _STATE_KEYS)
    kind = data.get("kind")
    helicity = data.get("helicity", "+")
    try:
        if kind == "fock_m1":
            return ReferenceSpec.fock(_number(data, "p", "state"), helicity)
        if kind == "two_mode":
            n = _integer(data, "n", "state")
            if n is None:
                raise ScenarioError("'state.n' is required for two_mode references")
            return ReferenceSpec.two_mode(
                _number(data, "p", "state"),
                n,
                _number(data, "t", "state"),
                helicity,
            )
        if kind == "independent":
            n_list = data.get("n_list")
            if not isinstance(n_list, list) or not all(
                isinstance(n, int) and not isinstance(n, bool) for n in n_list
            ):
                raise ScenarioError("'state.n_list' must be a list of integers")
            return ReferenceSpec.independent(n_list, helicity)
        if kind == "glauber":
            return ReferenceSpec.glauber(_parse_alphas(data.get("alphas")))
    except InvalidStateError as exc:
        raise ScenarioError(f"invalid state: {exc}") from exc
    raise ScenarioError(
        f"'state.kind' must be one of fock_m1, two_mode, independent, glauber; got {kind!r}"
    )


def _parse_alphas(raw: Any) -> list[tuple[complex, complex]]:
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("'state.alphas' must be a non-empty list")
    pairs = []
    for idx, entry in enumerate(raw):
        where = f"state.alphas[{idx}]"
        entry = _require_mapping(entry, where, _ALPHA_KEYS)
        pairs.append(
            (
                _complex_pair(entry.get("plus", [0, 0]), f"{where}.plus"),
                _complex_pair(entry.get("minus", [0, 0]), f"{where}.minus"),
            )
        )
    return pairs


def _parse_path(data: Any) -> PathSpec:
    data = _require_mapping(data, "path", _PATH_KEYS)
    kind = data.get("kind")
    if kind not in PATH_KINDS:
        raise ScenarioError(f"'path.kind' must be one of {PATH_KINDS}, got {kind!r}")
    samples = _integer(data, "samples", "path")
    if samples is not None and samples < 1:
        raise ScenarioError("'path.samples' must be positive")
    if kind == "latitude":
        winding = _integer(data, "winding", "path", 1)
        return PathSpec(
            kind,
            theta0=_number(data, "theta0", "path"),
            phi0=_number(data, "phi0", "path", 0.0),
            winding=winding,
            samples=samples,
        )
    raw = data.get("vertices")
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("'path.vertices' must be a non-empty list of [theta, phi] pairs")
    vertices = []
    for idx, vertex in enumerate(raw):
        if (
            not isinstance(vertex, list)
            or len(vertex) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in vertex)
        ):
            raise ScenarioError(f"'path.vertices[{idx}]' must be a [theta, phi] pair")
        vertices.append((float(vertex[0]), float(vertex[1])))
    closed = data.get("closed", True)
    if not isinstance(closed, bool):
        raise ScenarioError("'path.closed' must be a boolean")
    if kind == "geodesic_polygon" and not closed:
        raise ScenarioError("geodesic polygons are always closed")
    return PathSpec(kind, vertices=tuple(vertices), closed=closed, samples=samples)


def _parse_methods(data: Any) -> tuple[str, ...]:
    if data is None:
        return METHODS
    if not isinstance(data, list) or not data:
        raise ScenarioError("'methods' must be a non-empty list")
    unknown = [m for m in data if m not in METHODS]
    if unknown:
        raise ScenarioError(f"unknown method(s) {unknown}; expected a subset of {list(METHODS)}")
    return tuple(dict.fromkeys(data))


def _parse_numerics(data: Any) -> Tolerances:
    if data is None:
        return Tolerances()
    data = _require_mapping(data, "numerics", _NUMERIC_KEYS)
    try:
        return Tolerances().with_overrides(data)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid numerics: {exc}") from exc


def _parse_qfunc(data: Any) -> QfuncSpec | None:
    if data is None:
        return None
    data = _require_mapping(data, "qfunc", _QFUNC_KEYS)
    rho = data.get("rho", "reference")
    if rho not in RHO_KINDS:
        raise ScenarioError(f"'qfunc.rho' must be one of {RHO_KINDS}, got {rho!r}")
    poles = data.get("poles", True)
    if not isinstance(poles, bool):
        raise ScenarioError("'qfunc.poles' must be a boolean")
    return QfuncSpec(
        n_theta=_integer(data, "n_theta", "qfunc"),
        n_phi=_integer(data, "n_phi", "qfunc"),
        rho=rho,
        poles=poles,
    )


def _parse_outputs(data: Any, base: Path) -> OutputSpec:
    if data is None:
        return OutputSpec()
    data = _require_mapping(data, "outputs", _OUTPUT_KEYS)
    resolved: dict[str, Path] = {}
    for key, value in data.items():
        if not isinstance(value, str) or not value.strip():
            raise ScenarioError(f"'outputs.{key}' must be a file path")
        target = Path(value).expanduser()
        resolved[key] = target if target.is_absolute() else base / target
    return OutputSpec(**resolved)


def _parse_modes(data: Any, state: ReferenceSpec, tol: Tolerances) -> tuple[ModeConfig, bool]:
    data = _require_mapping(data or {}, "modes", _MODE_KEYS)
    m = _integer(data, "m", "modes", state.modes_required)
    n_max = _integer(data, "n_max", "modes")
    auto = n_max is None
    if auto:
        n_max = auto_cutoff(state)
        logger.info("Using automatic cutoff n_max=%d.", n_max)
    try:
        return ModeConfig(m=m, n_max=n_max, tol=tol), auto
    except ValueError as exc:
        raise ScenarioError(f"invalid modes: {exc}") from exc


def parse_scenario(raw: Any, source: Path) -> Scenario:
    data = _require_mapping(_normalize_angles(raw), "scenario", _TOP_KEYS)
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise ScenarioError(f"'schema' must be {SCHEMA_VERSION!r}, got {schema!r}")
    if "state" not in data:
        raise ScenarioError("scenario must include a 'state' section")

    state = _parse_state(data["state"])
    tol = _parse_numerics(data.get("numerics"))
    modes, auto = _parse_modes(data.get("modes"), state, tol)
    hannay = None
    if data.get("hannay") is not None:
        section = _require_mapping(data["hannay"], "hannay", _HANNAY_KEYS)
        hannay = HannaySpec(
            _number(section, "theta0", "hannay", 0.0), _number(section, "phi0", "hannay", 0.0)
        )

    return Scenario(
        source=source,
        modes=modes,
        n_max_auto=auto,
        state=state,
        path=_parse_path(data["path"]) if data.get("path") is not None else None,
        methods=_parse_methods(data.get("methods")),
        hannay=hannay,
        qfunc=_parse_qfunc(data.get("qfunc")),
        outputs=_parse_outputs(data.get("outputs"), source.parent),
    )


def load_scenario(path: Path) -> Scenario:
    if not path.exists():
        raise ScenarioError(f"Missing scenario file: {path}")
    logger.info("Loading scenario from %s", path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"Invalid JSON inside {path}: {exc}") from exc
    return parse_scenario(raw, path.resolve())


__all__ = [
    "SCHEMA_VERSION",
    "PATH_KINDS",
    "SWEEP_PARAMS_HELP",
    "PathSpec",
    "HannaySpec",
    "QfuncSpec",
    "OutputSpec",
    "Scenario",
    "auto_cutoff",
    "parse_scenario",
    "load_scenario",
]
