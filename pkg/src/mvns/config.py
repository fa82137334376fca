"""Experiment configuration: a versioned JSON document validated by a schema."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .attractor import SamplingPlan, default_k_ref
from .dissipativity import CalibrationPlan
from .euler import DEFAULT_STARTS, NewtonOptions, POLICIES, START_RECIPES, StepConfig
from .io import canonical_json, sha256_bytes
from .spectral import SpectralVelocity, single_mode, space

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_mode_list = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["mode", "amplitude"],
        "additionalProperties": False,
        "properties": {
            "mode": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
            "amplitude": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            "phase": {"enum": ["sin", "cos"]},
        },
    },
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "physical", "discretization"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "physical": {
            "type": "object", "required": ["nu", "forcing"], "additionalProperties": False,
            "properties": {"nu": _pos, "forcing": _mode_list},
        },
        "discretization": {
            "type": "object", "required": ["N"], "additionalProperties": False,
            "properties": {
                "N": {"enum": [8, 16, 32, 64]},
                "k": _pos,
                "ladder": {"type": "array", "items": _pos, "minItems": 1},
                "k_ref": _pos,
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "starts": {"type": "array", "items": {"enum": list(START_RECIPES)}, "minItems": 1},
                "study_starts": {"type": "array", "items": {"enum": list(START_RECIPES)}, "minItems": 1},
                "policy": {"enum": list(POLICIES)},
                "max_iters": {"type": "integer", "minimum": 1},
                "residual_tol": _pos,
                "dedup_tol": _pos,
                "perturbation": _pos,
            },
        },
        "study": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "ensemble_size": {"type": "integer", "minimum": 1},
                "T_star": _pos,
                "window": {"type": "number", "minimum": 0},
                "sample_dt": _pos,
                "transient_factor": {"type": "number", "minimum": 1},
                "cloud_cap": {"type": "integer", "minimum": 1},
                "h2_points": {"type": "integer", "minimum": 1},
                "h2_T_star": _pos,
                "seed": {"type": "integer", "minimum": 0},
                "u0_h_norm": _pos,
                "u0_v_fraction": _pos,
            },
        },
        "calibration": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "radii": {"type": "array", "items": _pos, "minItems": 1},
                "runs_per_radius": {"type": "integer", "minimum": 1},
                "horizon": _pos,
                "q_factors": {"type": "array", "items": _pos, "minItems": 1},
                "q_runs": {"type": "integer", "minimum": 1},
                "q_horizon": _pos,
                "safety": {"type": "number", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "fit_trajectory_constant": {"type": "boolean"},
            },
        },
        "initial": _mode_list,
        "constants": {"type": ["string", "null"]},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: dict
    path: Path | None = None

    @classmethod
    def from_dict(cls, data: dict, path=None) -> "RunConfig":
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        cfg = cls(copy.deepcopy(data), Path(path) if path else None)
        lad = cfg.ladder
        if any(b >= a for a, b in zip(lad, lad[1:])):
            raise ConfigError("k-ladder must be strictly decreasing")
        cfg.forcing()            # surfaces invalid modes early
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data, path)

    def _section(self, name):
        return self.data.get(name) or {}

    @property
    def N(self) -> int:
        return self.data["discretization"]["N"]

    @property
    def nu(self) -> float:
        return float(self.data["physical"]["nu"])

    @property
    def k(self) -> float:
        d = self.data["discretization"]
        if "k" in d:
            return float(d["k"])
        return float(self.ladder[-1])

    @property
    def ladder(self) -> tuple:
        return tuple(float(k) for k in self.data["discretization"].get("ladder", (0.2, 0.1, 0.05, 0.025)))

    @property
    def k_ref(self) -> float:
        return float(self.data["discretization"].get("k_ref", default_k_ref(self.ladder)))

    def _field(self, entries) -> SpectralVelocity:
        sp = space(self.N)
        u = sp.zeros()
        for e in entries:
            try:
                u = u + single_mode(sp, tuple(e["mode"]), tuple(e["amplitude"]), e.get("phase", "sin"))
            except ValueError as exc:
                raise ConfigError(f"mode {e['mode']}: {exc}") from None
        return u

    def forcing(self) -> SpectralVelocity:
        return self._field(self.data["physical"]["forcing"])

    def initial(self) -> SpectralVelocity | None:
        return self._field(self.data["initial"]) if "initial" in self.data else None

    def step_config(self, k: float | None = None) -> StepConfig:
        s = self._section("solver")
        newton = NewtonOptions(max_iters=s.get("max_iters", 50),
                               residual_tol=s.get("residual_tol", 1e-12))
        return StepConfig(self.k if k is None else k, self.nu, newton=newton,
                          starts=tuple(s.get("starts", DEFAULT_STARTS)),
                          dedup_tol=s.get("dedup_tol", 1e-8),
                          perturbation=s.get("perturbation", 0.05),
                          seed=self.seed)

    @property
    def policy(self) -> str:
        return self._section("solver").get("policy", "nearest")

    @property
    def study_starts(self) -> tuple:
        return tuple(self._section("solver").get("study_starts", ("semi_implicit",)))

    @property
    def seed(self) -> int:
        return int(self._section("study").get("seed", 0))

    def sampling_plan(self) -> SamplingPlan:
        s = self._section("study")
        return SamplingPlan(ensemble_size=s.get("ensemble_size", 4), window=s.get("window", 10.0),
                            sample_dt=s.get("sample_dt", 0.2),
                            transient_factor=s.get("transient_factor", 1.5),
                            cloud_cap=s.get("cloud_cap", 2000), seed=self.seed,
                            starts=self.study_starts)

    def study_value(self, key, default):
        return self._section("study").get(key, default)

    def calibration_plan(self, jobs: int = 1) -> CalibrationPlan:
        c = self._section("calibration")
        base = CalibrationPlan()
        return CalibrationPlan(radii=tuple(c.get("radii", base.radii)),
                               ladder=self.ladder,
                               runs_per_radius=c.get("runs_per_radius", base.runs_per_radius),
                               horizon=c.get("horizon", base.horizon),
                               q_factors=tuple(c.get("q_factors", base.q_factors)),
                               q_runs=c.get("q_runs", base.q_runs),
                               q_horizon=c.get("q_horizon", base.q_horizon),
                               safety=c.get("safety", base.safety),
                               seed=c.get("seed", 0), jobs=jobs)

    @property
    def fit_trajectory_constant(self) -> bool:
        return bool(self._section("calibration").get("fit_trajectory_constant", True))

    def constants_path(self) -> Path | None:
        p = self.data.get("constants")
        if not p:
            return None
        p = Path(p)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p

    def with_overrides(self, seed=None, ladder=None) -> "RunConfig":
        data = copy.deepcopy(self.data)
        if seed is not None:
            data.setdefault("study", {})["seed"] = int(seed)
            data.setdefault("calibration", {})["seed"] = int(seed)
        if ladder is not None:
            data["discretization"]["ladder"] = [float(k) for k in ladder]
        return RunConfig.from_dict(data, self.path)

    def sha256(self) -> str:
        return sha256_bytes(canonical_json(self.data).encode())
