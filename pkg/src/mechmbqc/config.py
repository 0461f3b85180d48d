"""Experiment configuration: JSON files with explicit units in key names.

Rates quoted as ordinary frequencies carry ``_hz`` suffixes and are
multiplied by 2 pi on conversion; the drive-enhanced coupling is quoted as an
angular rate directly (``alpha_g_rad_per_s``), so no hidden 2 pi factors
survive into the physics.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .mbqc import GateProgram, named_program
from .optomech import MonitoringSchedule, PhysicalParams, default_mech_frequencies


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# The two named parameter sets, in config units.
PRESETS = {
    "set1": {
        "eta": 0.99,
        "gamma_hz": 8.0,
        "kappa_hz": 0.33e6,
        "tau_over_kappa": 0.01,
        "alpha_g_rad_per_s": 0.35e6,
        "temperature_k": 1e-3,
        "r_post_meas_db": 10.0,
        "r_cluster_db": 3.0,
    },
    "set2": {
        "eta": 1.0,
        "gamma_hz": 0.0,
        "kappa_hz": 0.1e6,
        "tau_over_kappa": 0.0,
        "alpha_g_rad_per_s": 0.35e6,
        "temperature_k": 0.0,
        "r_post_meas_db": 20.0,
        "r_cluster_db": 3.0,
    },
}

PARAM_KEYS = tuple(PRESETS["set1"].keys())

_SCHEDULE_MODES = ("equal", "optimized", "explicit")


def params_from_dict(values: dict, n_mech: int) -> PhysicalParams:
    """Convert a config-units parameter mapping to PhysicalParams."""
    unknown = set(values) - set(PARAM_KEYS)
    if unknown:
        raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
    missing = set(PARAM_KEYS) - set(values)
    if missing:
        raise ConfigError(f"missing parameter keys: {sorted(missing)}")
    kappa = 2.0 * np.pi * float(values["kappa_hz"])
    try:
        return PhysicalParams(
            eta=float(values["eta"]),
            gamma=2.0 * np.pi * float(values["gamma_hz"]),
            kappa=kappa,
            tau=float(values["tau_over_kappa"]) * kappa,
            alpha_g=float(values["alpha_g_rad_per_s"]),
            temperature_k=float(values["temperature_k"]),
            r_post_meas_db=float(values["r_post_meas_db"]),
            r_cluster_db=float(values["r_cluster_db"]),
            mech_frequencies=default_mech_frequencies(n_mech),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: parameter set, gate program, schedule and sweep axes."""

    param_values: dict
    gate: str = "shear:1"
    schedule_mode: str = "equal"
    t_mon_us: float = 60.0
    time_resolution_us: float = 2.0
    max_step_us: float = 200.0
    explicit_durations_us: tuple = ()
    sweep_axes: tuple = ()
    samples_per_step: int = 60

    def __post_init__(self):
        if self.schedule_mode not in _SCHEDULE_MODES:
            raise ConfigError(
                f"schedule mode must be one of {_SCHEDULE_MODES}, "
                f"got '{self.schedule_mode}'"
            )
        try:
            self.program()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for axis_name, values in self.sweep_axes:
            if axis_name not in PARAM_KEYS:
                raise ConfigError(f"sweep axis '{axis_name}' is not a parameter")
            if len(values) < 1:
                raise ConfigError(f"sweep axis '{axis_name}' has no points")

    def program(self) -> GateProgram:
        return named_program(self.gate)

    def n_steps(self) -> int:
        return 2 if self.program().is_two_mode else 4

    def n_mech(self) -> int:
        return 4 if self.program().is_two_mode else 5

    def physical_params(self, overrides: dict = None) -> PhysicalParams:
        values = dict(self.param_values)
        if overrides:
            values.update(overrides)
        return params_from_dict(values, self.n_mech())

    def schedule(self) -> MonitoringSchedule:
        if self.schedule_mode == "equal":
            return MonitoringSchedule.equal(self.t_mon_us * 1e-6, self.n_steps())
        if self.schedule_mode == "explicit":
            if len(self.explicit_durations_us) != self.n_steps():
                raise ConfigError(
                    f"explicit schedule needs {self.n_steps()} durations"
                )
            return MonitoringSchedule(
                tuple(t * 1e-6 for t in self.explicit_durations_us)
            )
        raise ConfigError("an optimized schedule is produced by the optimizer")

    def canonical_dict(self) -> dict:
        return {
            "params": {k: self.param_values[k] for k in sorted(self.param_values)},
            "gate": self.gate,
            "schedule_mode": self.schedule_mode,
            "t_mon_us": self.t_mon_us,
            "time_resolution_us": self.time_resolution_us,
            "max_step_us": self.max_step_us,
            "explicit_durations_us": list(self.explicit_durations_us),
            "sweep_axes": [[name, list(vals)] for name, vals in self.sweep_axes],
            "samples_per_step": self.samples_per_step,
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _axis_values(spec: dict) -> list:
    if "values" in spec:
        return [float(v) for v in spec["values"]]
    try:
        start, stop, count = spec["start"], spec["stop"], int(spec["count"])
    except KeyError as exc:
        raise ConfigError(f"sweep axis needs 'values' or start/stop/count: {exc}")
    if count < 1:
        raise ConfigError("sweep axis count must be positive")
    return [float(v) for v in np.linspace(start, stop, count)]


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    known = {"preset", "params", "gate", "schedule", "sweep", "samples_per_step"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    preset = raw.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset '{preset}'; have {sorted(PRESETS)}")
    values = dict(PRESETS[preset]) if preset else {}
    overrides = raw.get("params", {})
    if not isinstance(overrides, dict):
        raise ConfigError("'params' must be an object")
    values.update(overrides)

    schedule = raw.get("schedule", {})
    if not isinstance(schedule, dict):
        raise ConfigError("'schedule' must be an object")
    sched_known = {"mode", "t_mon_us", "resolution_us", "max_step_us", "durations_us"}
    sched_unknown = set(schedule) - sched_known
    if sched_unknown:
        raise ConfigError(f"unknown schedule keys: {sorted(sched_unknown)}")

    sweep = raw.get("sweep", {})
    axes = []
    if sweep:
        if not isinstance(sweep, dict) or "axes" not in sweep:
            raise ConfigError("'sweep' must be an object with an 'axes' list")
        for axis in sweep["axes"]:
            axes.append((axis.get("param", ""), tuple(_axis_values(axis))))
        if not 1 <= len(axes) <= 2:
            raise ConfigError("sweeps support one or two axes")

    config = ExperimentConfig(
        param_values=values,
        gate=raw.get("gate", "shear:1"),
        schedule_mode=schedule.get("mode", "equal"),
        t_mon_us=float(schedule.get("t_mon_us", 60.0)),
        time_resolution_us=float(schedule.get("resolution_us", 2.0)),
        max_step_us=float(schedule.get("max_step_us", 200.0)),
        explicit_durations_us=tuple(schedule.get("durations_us", ())),
        sweep_axes=tuple(axes),
        samples_per_step=int(raw.get("samples_per_step", 60)),
    )
    config.physical_params()  # validate completeness and ranges up front
    return config


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
