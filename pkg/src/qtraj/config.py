"""Experiment configuration: JSON in, validated model/run parameters out.

Physical parameters are stored as the dimensionless products of rate (or
frequency) and measurement step that define an experiment, with the step as
the internal time unit (dt = 1 unless overridden): ``dt_omega0``, ``dt_g1``,
``dt_over_tau``, ``dt_over_T`` and so on.  The loader echoes every derived
quantity for audit, and ``to_dict`` returns the exact structure that was
loaded so configs round-trip unchanged.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

from . import model as model_mod
from .model import LindbladModel, Schedule
from .trajectory import basis_state_sampler, random_two_level_sampler

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]

SCHEMA_VERSION = 1

_MODEL_FIELDS = {
    "two_level_direct": {"dt_omega0", "dt_g1", "dt_g2", "dt_over_tau",
                         "dt_over_tau1", "dt_over_tau2"},
    "two_level_homodyne": {"dt_omega0", "dt_g1", "dt_g2", "dt_over_tau",
                           "dt_over_tau1", "dt_over_tau2", "beta"},
    "two_level_thermal": {"dt_omega0", "dt_over_tau", "dt_c", "n_mean"},
    "eigenstate_jump": {"dt_energies", "dt_downward", "dt_upward"},
}

_SWEEP_COORDS = {
    "two_level_direct": {"k"},
    "two_level_homodyne": {"beta_scale"},
    "two_level_thermal": {"n_mean"},
    "eigenstate_jump": set(),
}


class ConfigError(ValueError):
    """Malformed experiment config; the message names the offending field."""


def _need(section: dict, field: str, where: str):
    if field not in section:
        raise ConfigError(f"{where}: missing required field {field!r}")
    return section[field]


def _number(section: dict, field: str, where: str, *, minimum=None) -> float:
    val = _need(section, field, where)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
        raise ConfigError(f"{where}.{field}: expected a finite number, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{where}.{field}: must be >= {minimum}, got {val}")
    return float(val)


@dataclass(eq=False)
class ExperimentConfig:
    """Validated view over a raw config dict (kept verbatim for round-trips)."""

    raw: dict
    path: str = "<dict>"

    def __post_init__(self):
        self._validate()

    # -- validation ------------------------------------------------------------

    def _validate(self):
        raw = self.raw
        if not isinstance(raw, dict):
            raise ConfigError(f"{self.path}: config must be a JSON object")
        schema = raw.get("schema")
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"{self.path}: schema must be {SCHEMA_VERSION}, got {schema!r}")
        mspec = _need(raw, "model", self.path)
        kind = _need(mspec, "kind", "model")
        if kind not in _MODEL_FIELDS:
            raise ConfigError(f"model.kind: unknown kind {kind!r}; "
                              f"expected one of {sorted(_MODEL_FIELDS)}")
        missing = _MODEL_FIELDS[kind] - set(mspec)
        if missing:
            raise ConfigError(f"model: kind {kind!r} is missing fields {sorted(missing)}")
        run = _need(raw, "run", self.path)
        _number(run, "n_trajectories", "run", minimum=1)
        if "master_seed" not in run or not isinstance(run["master_seed"], int):
            raise ConfigError("run.master_seed: required integer")
        if ("dt_over_T" in run) == ("T" in run):
            raise ConfigError("run: exactly one of dt_over_T or T is required")
        if "dt_over_T" in run:
            _number(run, "dt_over_T", "run", minimum=1e-12)
        else:
            _number(run, "T", "run", minimum=1e-12)
        sweep = raw.get("sweep")
        if sweep is not None:
            coord = _need(sweep, "coordinate", "sweep")
            allowed = _SWEEP_COORDS[kind]
            if coord not in allowed:
                raise ConfigError(f"sweep.coordinate: {coord!r} not supported for "
                                  f"model kind {kind!r} (allowed: {sorted(allowed)})")
            values = _need(sweep, "values", "sweep")
            if not isinstance(values, list) or not values:
                raise ConfigError("sweep.values: need a nonempty list")
        init = raw.get("initial_state", {"kind": "random_two_level"})
        ikind = init.get("kind")
        if ikind not in ("random_two_level", "basis"):
            raise ConfigError(f"initial_state.kind: unknown kind {ikind!r}")
        if ikind == "basis" and not isinstance(init.get("index"), int):
            raise ConfigError("initial_state.index: required integer for basis kind")
        # builders do the deep model-parameter validation
        self.build_model()

    # -- derived views ---------------------------------------------------------

    @property
    def kind(self) -> str:
        return self.raw["model"]["kind"]

    @property
    def dt(self) -> float:
        return float(self.raw["run"].get("dt", 1.0))

    @property
    def horizon(self) -> float:
        run = self.raw["run"]
        if "T" in run:
            return float(run["T"])
        return round(1.0 / float(run["dt_over_T"])) * self.dt

    @property
    def n_trajectories(self) -> int:
        return int(self.raw["run"]["n_trajectories"])

    @property
    def master_seed(self) -> int:
        return int(self.raw["run"]["master_seed"])

    @property
    def sweep_spec(self) -> tuple | None:
        sweep = self.raw.get("sweep")
        if sweep is None:
            return None
        return str(sweep["coordinate"]), [float(v) for v in sweep["values"]]

    @property
    def outputs(self) -> dict:
        out = dict(self.raw.get("outputs", {}))
        out.setdefault("dir", ".")
        out.setdefault("prefix", "run")
        out.setdefault("dump_trajectories", False)
        return out

    @property
    def validation(self) -> dict:
        val = dict(self.raw.get("validate", {}))
        val.setdefault("trace_threshold", 0.05)
        val.setdefault("n_sample_times", 17)
        return val

    def initial_sampler(self):
        init = self.raw.get("initial_state", {"kind": "random_two_level"})
        if init.get("kind") == "basis":
            return basis_state_sampler(int(init["index"]))
        return random_two_level_sampler

    def build_model(self, coordinate: str | None = None,
                    value: float | None = None) -> LindbladModel:
        """Model for the base point, or for one sweep coordinate value."""
        m = self.raw["model"]
        kind = m["kind"]
        dt = self.dt
        try:
            if kind == "two_level_direct":
                scale = float(value) if coordinate == "k" else 1.0
                return model_mod.build_two_level_direct(
                    omega0=scale * float(m["dt_omega0"]) / dt,
                    tau=dt / float(m["dt_over_tau"]),
                    g1=scale * float(m["dt_g1"]) / dt,
                    tau1=dt / float(m["dt_over_tau1"]),
                    g2=scale * float(m["dt_g2"]) / dt,
                    tau2=dt / float(m["dt_over_tau2"]))
            if kind == "two_level_homodyne":
                beta = complex(float(m["beta"][0]), float(m["beta"][1]))
                if coordinate == "beta_scale":
                    beta = float(value) * beta
                return model_mod.build_two_level_homodyne(
                    omega0=float(m["dt_omega0"]) / dt,
                    tau=dt / float(m["dt_over_tau"]),
                    g1=float(m["dt_g1"]) / dt,
                    tau1=dt / float(m["dt_over_tau1"]),
                    g2=float(m["dt_g2"]) / dt,
                    tau2=dt / float(m["dt_over_tau2"]),
                    beta=beta)
            if kind == "two_level_thermal":
                n_mean = float(value) if coordinate == "n_mean" else float(m["n_mean"])
                return model_mod.build_two_level_thermal(
                    omega0=float(m["dt_omega0"]) / dt,
                    tau=dt / float(m["dt_over_tau"]),
                    n_mean=n_mean,
                    c=float(m["dt_c"]) / dt)
            if kind == "eigenstate_jump":
                energies = [float(e) / dt for e in m["dt_energies"]]
                down = {(int(i), int(j)): Schedule.constant(float(r) / dt)
                        for i, j, r in m["dt_downward"]}
                up = {(int(i), int(j)): Schedule.constant(float(r) / dt)
                      for i, j, r in m["dt_upward"]}
                return model_mod.build_eigenstate_jump_model(energies, down, up)
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"model ({kind}): malformed parameters: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"model ({kind}): {exc}") from exc
        raise ConfigError(f"model.kind: unknown kind {kind!r}")

    def echo(self) -> dict:
        """Derived quantities for audit: absolute parameters and dt products."""
        dt = self.dt
        n_steps = int(round(self.horizon / dt))
        info = {
            "kind": self.kind,
            "dt": dt,
            "T": self.horizon,
            "n_steps": n_steps,
            "dt_over_T": dt / self.horizon,
            "n_trajectories": self.n_trajectories,
            "master_seed": self.master_seed,
        }
        m = self.raw["model"]
        for key, val in m.items():
            if key in ("kind",):
                continue
            info[f"model.{key}"] = val
        sweep = self.sweep_spec
        if sweep is not None:
            info["sweep.coordinate"] = sweep[0]
            info["sweep.values"] = sweep[1]
        return info

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return ExperimentConfig(raw=raw, path=str(path))
