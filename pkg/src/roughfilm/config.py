"""Run configuration: parsing, validation and canonical serialization.

A configuration is a JSON object with the sections ``geometry``, ``rules``,
``mesh``, ``params`` and ``output``.  Missing sections and fields take
their defaults; unknown fields are rejected.  ``to_dict`` produces the
canonical form, and ``Config.from_dict(c.to_dict()) == c``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .anisotropy import SplitRule
from .cell_solver import MeshParams
from .gamma_validator import ValidatorResolution
from .profiles import FilmGeometry, GeometryError, profile_from_spec
from .quadrature import CellRule, PlaneRule


class ConfigError(ValueError):
    """Invalid configuration file or contents."""


_PROFILE_KEYS = {"kind", "value", "grid", "grid_path", "amplitude", "offset"}
_DEFAULT_GEOMETRY = {
    "f1": {"kind": "constant", "value": 0.0},
    "f2": {"kind": "constant", "value": 1.0},
    "omega": [0.0, 1.0, 0.0, 1.0],
    "parallel_offset": None,
}


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _canonical_profile(spec, where):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{where} must be an object with a 'kind' field")
    unknown = set(spec) - _PROFILE_KEYS
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")
    out = {"kind": spec["kind"]}
    for key in ("value", "amplitude", "offset"):
        if key in spec:
            out[key] = float(spec[key])
    if "grid_path" in spec:
        out["grid_path"] = str(spec["grid_path"])
    if "grid" in spec:
        out["grid"] = [[float(v) for v in row] for row in spec["grid"]]
    return out


@dataclass(frozen=True)
class Rules:
    cell_rule: CellRule = field(default_factory=CellRule)
    plane_rule: PlaneRule = field(default_factory=PlaneRule)
    split_rule: SplitRule = field(default_factory=SplitRule)
    validator: ValidatorResolution = field(default_factory=ValidatorResolution)

    @classmethod
    def from_dict(cls, data) -> "Rules":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("rules must be an object")
        unknown = set(data) - {"cell_rule", "plane_rule", "split_rule", "validator"}
        if unknown:
            raise ConfigError(f"unknown field(s) in rules: {', '.join(sorted(unknown))}")
        return cls(_build(CellRule, data.get("cell_rule"), "rules.cell_rule"),
                   _build(PlaneRule, data.get("plane_rule"), "rules.plane_rule"),
                   _build(SplitRule, data.get("split_rule"), "rules.split_rule"),
                   _build(ValidatorResolution, data.get("validator"), "rules.validator"))

    def to_dict(self) -> dict:
        out = {k: asdict(getattr(self, k)) for k in ("cell_rule", "plane_rule", "split_rule", "validator")}
        out["validator"]["radial_edges"] = list(out["validator"]["radial_edges"])
        return out


@dataclass(frozen=True, eq=False)
class Config:
    geometry: dict
    rules: Rules
    mesh: MeshParams
    d: float = 1.0
    output_format: str = "json"
    output_path: str | None = None
    base_dir: Path | None = None

    def __eq__(self, other):
        return isinstance(other, Config) and self.to_dict() == other.to_dict()

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "Config":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(data) - {"geometry", "rules", "mesh", "params", "output"}
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        geo = dict(_DEFAULT_GEOMETRY)
        given = data.get("geometry") or {}
        if not isinstance(given, dict):
            raise ConfigError("geometry must be an object")
        unknown = set(given) - set(_DEFAULT_GEOMETRY)
        if unknown:
            raise ConfigError(f"unknown field(s) in geometry: {', '.join(sorted(unknown))}")
        geo.update(given)
        geo["f1"] = _canonical_profile(geo["f1"], "geometry.f1")
        geo["f2"] = _canonical_profile(geo["f2"], "geometry.f2")
        try:
            geo["omega"] = [float(v) for v in geo["omega"]]
        except (TypeError, ValueError) as exc:
            raise ConfigError("geometry.omega must be four numbers") from exc
        if len(geo["omega"]) != 4:
            raise ConfigError("geometry.omega must be [x_min, x_max, y_min, y_max]")
        if geo["parallel_offset"] is not None:
            geo["parallel_offset"] = float(geo["parallel_offset"])

        params = data.get("params") or {}
        if not isinstance(params, dict) or set(params) - {"d"}:
            raise ConfigError("params accepts only 'd'")
        d = float(params.get("d", 1.0))
        if not d > 0:
            raise ConfigError("params.d must be positive")

        out = data.get("output") or {}
        if not isinstance(out, dict) or set(out) - {"format", "path"}:
            raise ConfigError("output accepts only 'format' and 'path'")
        fmt = out.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError("output.format must be 'json' or 'csv'")

        cfg = cls(geometry=geo, rules=Rules.from_dict(data.get("rules")),
                  mesh=_build(MeshParams, data.get("mesh"), "mesh"), d=d,
                  output_format=fmt, output_path=out.get("path"), base_dir=base_dir)
        cfg.build_geometry()
        return cfg

    def to_dict(self) -> dict:
        return {
            "geometry": json.loads(json.dumps(self.geometry)),
            "rules": self.rules.to_dict(),
            "mesh": asdict(self.mesh),
            "params": {"d": self.d},
            "output": {"format": self.output_format, "path": self.output_path},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def build_geometry(self) -> FilmGeometry:
        geo = self.geometry
        try:
            f1 = profile_from_spec(geo["f1"], self.base_dir)
            f2 = profile_from_spec(geo["f2"], self.base_dir)
            return FilmGeometry(f1, f2, tuple(geo["omega"]), geo["parallel_offset"])
        except GeometryError:
            raise
        except (OSError, ValueError) as exc:
            raise ConfigError(f"geometry: {exc}") from exc


def default_config() -> Config:
    return Config.from_dict({})


def load_config(path) -> Config:
    """Read and validate a configuration file; geometry errors surface here."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return Config.from_dict(data, base_dir=path.parent)
