"""Run configuration: strict TOML parsing into typed section objects.

Unknown sections or keys are rejected with the full key path so typos fail
loudly instead of silently running defaults.  Relative paths in the file
resolve against the directory containing the config file.  ``RunConfig``
carries builder methods that turn the declarative sections into the solver
objects (material, mesh, incident wave, correction settings).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from .core import MaterialParams, Mesh, build_mesh, mesh_from_centers
from .corrections import CorrectionConfig
from .errors import ConfigError
from .quadrature import BruteForceResolution, FAST_RESOLUTION, TABLE_RESOLUTION
from .system import DEFAULT_DENSE_LIMIT, IncidentWave

_RESOLUTIONS = {"table": TABLE_RESOLUTION, "fast": FAST_RESOLUTION}


def _require(section: dict, path: str, key: str):
    if key not in section:
        raise ConfigError(f"missing required key {path}.{key}")
    return section[key]


def _check_known(section: dict, path: str, known) -> None:
    for key in section:
        if key not in known:
            raise ConfigError(
                f"unknown key {path}.{key} (known keys: {', '.join(sorted(known))})")


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer, got {value!r}")
    return value


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path} must be true or false, got {value!r}")
    return value


def _as_str(value, path: str, choices=None) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path} must be a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{path} must be one of {sorted(choices)}, got {value!r}")
    return value


def _as_vec3(value, path: str) -> tuple:
    if (not isinstance(value, list) or len(value) != 3
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
        raise ConfigError(f"{path} must be a list of 3 numbers, got {value!r}")
    return tuple(float(v) for v in value)


def _as_float_list(value, path: str) -> tuple:
    if (not isinstance(value, list) or not value
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
        raise ConfigError(f"{path} must be a non-empty list of numbers, got {value!r}")
    return tuple(float(v) for v in value)


def _as_int_list(value, path: str) -> tuple:
    if (not isinstance(value, list) or not value
            or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
        raise ConfigError(f"{path} must be a non-empty list of integers, got {value!r}")
    return tuple(value)


def _as_complex(value, path: str) -> complex:
    """A real number, or a [real, imag] pair."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (isinstance(value, list) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        return complex(value[0], value[1])
    raise ConfigError(f"{path} must be a number or a [real, imag] pair, got {value!r}")


# --------------------------------------------------------------------------
# sections


@dataclass(frozen=True)
class MaterialSection:
    omega: float = 1.0
    mu: float = 1.0
    eps_background: float = 1.0


@dataclass(frozen=True)
class MeshSection:
    """Either a uniform grid over a box (domain_min/domain_max/n_per_axis) or
    explicit element centers with a common edge length."""

    m: int
    domain_min: tuple | None = None
    domain_max: tuple | None = None
    n_per_axis: tuple | None = None
    centers: tuple | None = None
    edge: float | None = None

    @property
    def is_grid(self) -> bool:
        return self.domain_min is not None


@dataclass(frozen=True)
class ContrastSection:
    value: complex


@dataclass(frozen=True)
class SingularSection:
    delta: float
    corrections: bool = True
    table_resolution: str = "table"
    table_dir: Path = Path(".cache/tables")
    build_missing: bool = False

    @property
    def resolution(self) -> BruteForceResolution:
        return _RESOLUTIONS[self.table_resolution]


@dataclass(frozen=True)
class IncidentSection:
    component: str = "x"
    phase_vector: tuple = (0.0, 0.0, 1.0)
    amplitude: complex = 1.0 + 0.0j


@dataclass(frozen=True)
class SolverSection:
    method: str = "direct"
    tol: float = 1e-10
    restart: int = 50
    max_iter: int = 1000
    dense_limit: int = DEFAULT_DENSE_LIMIT
    preconditioner: str = "none"


@dataclass(frozen=True)
class ExportSection:
    plane_axis: str = "z"
    plane_value: float = 0.0
    grid_n: int = 41


@dataclass(frozen=True)
class ExperimentSection:
    deltas: tuple = (0.1, 0.05, 0.025, 0.0125)
    reference_delta: float = 1e-3
    m_values: tuple = (3, 4, 5, 6)
    m_reference: int = 7
    grid_n: int = 21


@dataclass(frozen=True)
class RunConfig:
    material: MaterialSection = field(default_factory=MaterialSection)
    mesh: MeshSection | None = None
    contrast: ContrastSection | None = None
    singular: SingularSection | None = None
    incident: IncidentSection = field(default_factory=IncidentSection)
    solver: SolverSection = field(default_factory=SolverSection)
    export: ExportSection | None = None
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    # -- builders ----------------------------------------------------------

    def build_material(self) -> MaterialParams:
        m = self.material
        return MaterialParams(omega=m.omega, mu=m.mu,
                              eps_background=m.eps_background)

    def build_mesh(self, m: int | None = None) -> Mesh:
        if self.mesh is None:
            raise ConfigError("this command needs a [mesh] section")
        if self.contrast is None:
            raise ConfigError("this command needs a [contrast] section")
        value = self.contrast.value
        contrast_fn = lambda pts: value  # noqa: E731 - broadcast by the mesh builder
        sec = self.mesh
        m = sec.m if m is None else m
        if sec.is_grid:
            return build_mesh(sec.domain_min, sec.domain_max, sec.n_per_axis,
                              m, contrast_fn)
        return mesh_from_centers(sec.centers, sec.edge, m, contrast_fn)

    def build_wave(self) -> IncidentWave:
        inc = self.incident
        return IncidentWave(component=inc.component,
                            phase_vector=inc.phase_vector,
                            amplitude=inc.amplitude)

    def build_corrections(self, delta: float | None = None,
                          enabled: bool | None = None) -> CorrectionConfig:
        if self.singular is None:
            raise ConfigError("this command needs a [singular] section")
        sec = self.singular
        return CorrectionConfig(
            delta=sec.delta if delta is None else delta,
            enabled=sec.corrections if enabled is None else enabled)

    # -- serialization ----------------------------------------------------

    def to_blob(self) -> dict:
        """JSON-serializable resolved configuration (for hashing and the
        resolved-config file written next to outputs)."""

        def enc(value):
            if isinstance(value, complex):
                return [value.real, value.imag] if value.imag else value.real
            if isinstance(value, Path):
                return str(value)
            if isinstance(value, tuple):
                return [enc(v) for v in value]
            return value

        blob = {}
        for name in ("material", "mesh", "contrast", "singular", "incident",
                     "solver", "export", "experiment"):
            sec = getattr(self, name)
            if sec is None:
                continue
            blob[name] = {k: enc(v) for k, v in vars(sec).items()
                          if v is not None}
        return blob

    def resolved_json(self) -> str:
        return json.dumps(self.to_blob(), sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# parsing


def _parse_material(sec: dict) -> MaterialSection:
    _check_known(sec, "material", {"omega", "mu", "eps_background"})
    return MaterialSection(
        omega=_as_float(sec.get("omega", 1.0), "material.omega"),
        mu=_as_float(sec.get("mu", 1.0), "material.mu"),
        eps_background=_as_float(sec.get("eps_background", 1.0),
                                 "material.eps_background"))


def _parse_mesh(sec: dict) -> MeshSection:
    _check_known(sec, "mesh", {"domain_min", "domain_max", "n_per_axis",
                               "centers", "edge", "m"})
    m = _as_int(_require(sec, "mesh", "m"), "mesh.m")
    grid_keys = {"domain_min", "domain_max", "n_per_axis"} & sec.keys()
    center_keys = {"centers", "edge"} & sec.keys()
    if grid_keys and center_keys:
        raise ConfigError(
            "mesh: give either domain_min/domain_max/n_per_axis or "
            "centers/edge, not both")
    if center_keys:
        if center_keys != {"centers", "edge"}:
            raise ConfigError("mesh: centers and edge must be given together")
        raw = sec["centers"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("mesh.centers must be a non-empty list of 3-vectors")
        centers = tuple(_as_vec3(c, f"mesh.centers[{i}]")
                        for i, c in enumerate(raw))
        return MeshSection(m=m, centers=centers,
                           edge=_as_float(sec["edge"], "mesh.edge"))
    if grid_keys != {"domain_min", "domain_max", "n_per_axis"}:
        raise ConfigError(
            "mesh: domain_min, domain_max and n_per_axis must be given together")
    n = sec["n_per_axis"]
    if (not isinstance(n, list) or len(n) != 3
            or any(isinstance(v, bool) or not isinstance(v, int) for v in n)):
        raise ConfigError(f"mesh.n_per_axis must be a list of 3 integers, got {n!r}")
    return MeshSection(
        m=m,
        domain_min=_as_vec3(sec["domain_min"], "mesh.domain_min"),
        domain_max=_as_vec3(sec["domain_max"], "mesh.domain_max"),
        n_per_axis=tuple(n))


def _parse_contrast(sec: dict) -> ContrastSection:
    _check_known(sec, "contrast", {"value"})
    return ContrastSection(value=_as_complex(_require(sec, "contrast", "value"),
                                             "contrast.value"))


def _parse_singular(sec: dict, base_dir: Path) -> SingularSection:
    _check_known(sec, "singular", {"delta", "corrections", "table_resolution",
                                   "table_dir", "build_missing"})
    delta = _as_float(_require(sec, "singular", "delta"), "singular.delta")
    if not delta > 0:
        raise ConfigError(f"singular.delta must be positive, got {delta!r}")
    table_dir = Path(_as_str(sec.get("table_dir", ".cache/tables"),
                             "singular.table_dir"))
    if not table_dir.is_absolute():
        table_dir = base_dir / table_dir
    return SingularSection(
        delta=delta,
        corrections=_as_bool(sec.get("corrections", True), "singular.corrections"),
        table_resolution=_as_str(sec.get("table_resolution", "table"),
                                 "singular.table_resolution",
                                 choices=set(_RESOLUTIONS)),
        table_dir=table_dir,
        build_missing=_as_bool(sec.get("build_missing", False),
                               "singular.build_missing"))


def _parse_incident(sec: dict) -> IncidentSection:
    _check_known(sec, "incident", {"component", "phase_vector", "amplitude"})
    return IncidentSection(
        component=_as_str(sec.get("component", "x"), "incident.component",
                          choices={"x", "y", "z"}),
        phase_vector=_as_vec3(sec.get("phase_vector", [0.0, 0.0, 1.0]),
                              "incident.phase_vector"),
        amplitude=_as_complex(sec.get("amplitude", 1.0), "incident.amplitude"))


def _parse_solver(sec: dict) -> SolverSection:
    _check_known(sec, "solver", {"method", "tol", "restart", "max_iter",
                                 "dense_limit", "preconditioner"})
    return SolverSection(
        method=_as_str(sec.get("method", "direct"), "solver.method",
                       choices={"direct", "gmres"}),
        tol=_as_float(sec.get("tol", 1e-10), "solver.tol"),
        restart=_as_int(sec.get("restart", 50), "solver.restart"),
        max_iter=_as_int(sec.get("max_iter", 1000), "solver.max_iter"),
        dense_limit=_as_int(sec.get("dense_limit", DEFAULT_DENSE_LIMIT),
                            "solver.dense_limit"),
        preconditioner=_as_str(sec.get("preconditioner", "none"),
                               "solver.preconditioner",
                               choices={"none", "diagonal"}))


def _parse_export(sec: dict) -> ExportSection:
    _check_known(sec, "export", {"plane_axis", "plane_value", "grid_n"})
    return ExportSection(
        plane_axis=_as_str(sec.get("plane_axis", "z"), "export.plane_axis",
                           choices={"x", "y", "z"}),
        plane_value=_as_float(sec.get("plane_value", 0.0), "export.plane_value"),
        grid_n=_as_int(sec.get("grid_n", 41), "export.grid_n"))


def _parse_experiment(sec: dict) -> ExperimentSection:
    _check_known(sec, "experiment", {"deltas", "reference_delta", "m_values",
                                     "m_reference", "grid_n"})
    out = ExperimentSection(
        deltas=_as_float_list(sec.get("deltas", [0.1, 0.05, 0.025, 0.0125]),
                              "experiment.deltas"),
        reference_delta=_as_float(sec.get("reference_delta", 1e-3),
                                  "experiment.reference_delta"),
        m_values=_as_int_list(sec.get("m_values", [3, 4, 5, 6]),
                              "experiment.m_values"),
        m_reference=_as_int(sec.get("m_reference", 7), "experiment.m_reference"),
        grid_n=_as_int(sec.get("grid_n", 21), "experiment.grid_n"))
    if out.reference_delta in out.deltas:
        raise ConfigError(
            "experiment.reference_delta must not appear in experiment.deltas")
    return out


_SECTION_PARSERS = {
    "material": _parse_material,
    "mesh": _parse_mesh,
    "contrast": _parse_contrast,
    "singular": _parse_singular,
    "incident": _parse_incident,
    "solver": _parse_solver,
    "export": _parse_export,
    "experiment": _parse_experiment,
}


def parse_config(data: dict, base_dir: Path | str = ".") -> RunConfig:
    """Validate a parsed TOML document and build a RunConfig."""
    base_dir = Path(base_dir)
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table of sections")
    _check_known(data, "config", set(_SECTION_PARSERS))
    kwargs = {}
    for name, parser in _SECTION_PARSERS.items():
        if name not in data:
            continue
        sec = data[name]
        if not isinstance(sec, dict):
            raise ConfigError(f"{name} must be a section (a TOML table)")
        if name == "singular":
            kwargs[name] = parser(sec, base_dir)
        else:
            kwargs[name] = parser(sec)
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    """Read and validate a TOML config file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = tomli.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return parse_config(data, base_dir=path.resolve().parent)
