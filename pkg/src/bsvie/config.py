"""Run configuration: JSON schema, validation, typed accessors, hashing.

A run is described by one JSON document. Validation is strict: unknown keys
are rejected everywhere (additionalProperties: false) and range violations
report the dotted path of the offending field, e.g. problem.generator.delta.
Only catalog entries are expressible here; user-callback drivers and free
terms exist at the library level only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .errors import ConfigurationError
from .grids import make_grid, build_tree, simulate_paths
from .mc_solver import BasisSpec, McSolveConfig
from .problems import FreeTermSpec, GeneratorSpec, Problem
from .tree_solver import TreeSolveConfig
from .volterra import PicardConfig

__all__ = ["CONFIG_SCHEMA", "RunConfig", "validate_config", "load_config"]

_NONNEG = {"type": "number", "minimum": 0}
_POS = {"type": "number", "exclusiveMinimum": 0}

_GENERATOR_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {
            "enum": [
                "linear",
                "entropic_diag",
                "subquad_diag",
                "diag_strict_quad_example",
                "mixed_lin_quad",
                "superquad",
            ]
        },
        "dim": {"type": "integer", "minimum": 1},
        "alpha": _NONNEG,
        "beta": _NONNEG,
        "gamma": _POS,
        "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "kappa": _POS,
        "p": {"type": "number", "exclusiveMinimum": 2},
        "split": {"type": "integer", "minimum": 0},
        "coef_y": {"type": "number"},
        "coef_z": {"type": "number"},
    },
}

_FREE_TERM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["functional"],
    "properties": {
        "kind": {"enum": ["terminal", "process"]},
        "functional": {"enum": ["constant", "terminal_value", "bounded_sin", "tanh_scaled"]},
        "scale": {
            "oneOf": [
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}, "minItems": 1},
            ]
        },
        "dim": {"type": "integer", "minimum": 1},
        "time_profile": {"enum": ["none", "linear_decay", "affine_decay"]},
    },
}

_BASIS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["polynomial_in_W", "indicator_bins"]},
        "degree": {"type": "integer", "minimum": 0, "maximum": 12},
        "bins": {"type": "integer", "minimum": 2, "maximum": 256},
        "ridge": _NONNEG,
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["run"],
    "properties": {
        "run": {
            "type": "object",
            "additionalProperties": False,
            "required": ["horizon", "steps"],
            "properties": {
                "label": {"type": "string"},
                "horizon": _POS,
                "steps": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "backend": {"enum": ["tree", "mc"]},
            },
        },
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["generator", "free_term"],
            "properties": {
                "generator": _GENERATOR_SCHEMA,
                "free_term": _FREE_TERM_SCHEMA,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scheme": {"enum": ["implicit", "explicit"]},
                "eps_inner": _POS,
                "max_inner": {"type": "integer", "minimum": 1},
                "z_max": {"oneOf": [{"type": "null"}, _POS]},
                "mc": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n_paths": {"type": "integer", "minimum": 1},
                        "basis": _BASIS_SCHEMA,
                    },
                },
                "picard": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "max_outer": {"type": "integer", "minimum": 1},
                        "eps_outer": {"oneOf": [{"type": "null"}, _POS]},
                        "k_w": _NONNEG,
                        "divergence_window": {"type": "integer", "minimum": 2},
                    },
                },
            },
        },
        "risk": {
            "type": "object",
            "additionalProperties": False,
            "required": ["method"],
            "properties": {
                "method": {
                    "enum": [
                        "closed_form",
                        "bsde",
                        "extended_bsde",
                        "naive_odd_power",
                        "equilibrium_bsvie",
                    ]
                },
                "gamma": _POS,
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "kappa": {"type": "number", "exclusiveMinimum": 1},
                "position": _FREE_TERM_SCHEMA,
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "checks": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "enum": [
                            "assumptions",
                            "exp_moment_bound",
                            "bmo",
                            "reduction",
                            "axioms",
                            "subadditivity",
                        ]
                    },
                },
                "hypotheses": {
                    "type": "array",
                    "items": {
                        "enum": [
                            "diagonally_quadratic",
                            "mixed_growth",
                            "diagonal_subquadratic_convex",
                            "superquadratic_growth",
                        ]
                    },
                },
                "alpha0": _NONNEG,
                "beta": _NONNEG,
                "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "one_sided": {"type": "boolean"},
                "crosscheck": {"type": "boolean"},
                "k_w": _NONNEG,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["steps_ladder"],
            "properties": {
                "steps_ladder": {
                    "type": "array",
                    "minItems": 2,
                    "items": {"type": "integer", "minimum": 2},
                },
            },
        },
        "demo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p": {"type": "number", "exclusiveMinimum": 2},
                "terminal_scale": _NONNEG,
                "scale": _POS,
                "steps_ladder": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "integer", "minimum": 2},
                },
                "growth_threshold": _POS,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "prefix": {"type": "string", "minLength": 1},
                "formats": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"enum": ["csv", "png"]},
                },
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


def _error_path(err: jsonschema.exceptions.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_config(raw: dict) -> None:
    """Strict schema validation; raises ConfigurationError with the dotted
    path of the first (most relevant) offending field."""
    errors = sorted(_VALIDATOR.iter_errors(raw), key=jsonschema.exceptions.relevance)
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ConfigurationError(best.message, path=_error_path(best))


@dataclass(frozen=True)
class RunConfig:
    """Validated run description with typed accessors into solver objects."""

    raw: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        validate_config(raw)
        return cls(raw=raw)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config: {exc}", path=str(p)) from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON: {exc}", path=str(p)) from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be a JSON object", path=str(p))
        return cls.from_dict(raw)

    # -- plumbing ----------------------------------------------------------

    def _section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def _get(self, section: str, key: str, default):
        return self._section(section).get(key, default)

    def require(self, section: str) -> dict:
        if section not in self.raw:
            raise ConfigurationError(
                f"this command requires a {section!r} section", path=section
            )
        return self.raw[section]

    def to_json(self) -> str:
        """Canonical serialization (sorted keys, tight separators)."""
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def with_overrides(self, seed: int | None = None) -> "RunConfig":
        if seed is None:
            return self
        raw = json.loads(self.to_json())
        raw.setdefault("run", {})["seed"] = int(seed)
        return RunConfig.from_dict(raw)

    # -- run section -------------------------------------------------------

    @property
    def label(self) -> str:
        return self._get("run", "label", "run")

    @property
    def horizon(self) -> float:
        return float(self.raw["run"]["horizon"])

    @property
    def steps(self) -> int:
        return int(self.raw["run"]["steps"])

    @property
    def seed(self) -> int:
        return int(self._get("run", "seed", 0))

    @property
    def backend(self) -> str:
        return self._get("run", "backend", "tree")

    def grid(self):
        return make_grid(self.horizon, self.steps)

    def tree(self):
        return build_tree(self.grid())

    def ensemble(self):
        return simulate_paths(self.grid(), self.n_paths, self.seed)

    @property
    def n_paths(self) -> int:
        return int(self._section("solver").get("mc", {}).get("n_paths", 10_000))

    # -- problem section ---------------------------------------------------

    def generator_spec(self) -> GeneratorSpec:
        g = dict(self.require("problem")["generator"])
        try:
            return GeneratorSpec(**g)
        except ValueError as exc:
            raise ConfigurationError(str(exc), path="problem.generator") from exc

    def free_term_spec(self, section: dict | None = None, path: str = "problem.free_term") -> FreeTermSpec:
        f = dict(section if section is not None else self.require("problem")["free_term"])
        try:
            return FreeTermSpec(**f)
        except ValueError as exc:
            raise ConfigurationError(str(exc), path=path) from exc

    def problem(self) -> Problem:
        try:
            return Problem(self.generator_spec(), self.free_term_spec(), self.horizon)
        except ValueError as exc:
            raise ConfigurationError(str(exc), path="problem") from exc

    # -- solver section ----------------------------------------------------

    def tree_config(self) -> TreeSolveConfig:
        s = self._section("solver")
        return TreeSolveConfig(
            scheme=s.get("scheme", "implicit"),
            eps_inner=s.get("eps_inner", 1e-12),
            max_inner=s.get("max_inner", 50),
            z_max=s.get("z_max", None),
        )

    def mc_config(self) -> McSolveConfig:
        s = self._section("solver")
        return McSolveConfig(
            scheme=s.get("scheme", "implicit"),
            eps_inner=s.get("eps_inner", 1e-12),
            max_inner=s.get("max_inner", 50),
            z_max=s.get("z_max", 50.0) or 50.0,
        )

    def basis_spec(self) -> BasisSpec:
        b = self._section("solver").get("mc", {}).get("basis", {})
        return BasisSpec(
            family=b.get("family", "polynomial_in_W"),
            degree=b.get("degree", 2),
            bins=b.get("bins", 8),
            ridge=b.get("ridge", 1e-10),
        )

    def picard_config(self) -> PicardConfig:
        p = self._section("solver").get("picard", {})
        return PicardConfig(
            max_outer=p.get("max_outer", 30),
            eps_outer=p.get("eps_outer", None),
            k_w=p.get("k_w", 0.0),
            divergence_window=p.get("divergence_window", 5),
        )

    # -- output section ----------------------------------------------------

    @property
    def output_prefix(self) -> str:
        return self._get("output", "prefix", self.label)

    @property
    def output_formats(self) -> tuple:
        return tuple(self._get("output", "formats", ["csv", "png"]))


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.load(path)
