"""Plain-text experiment configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, keys are
dotted (scenario.*, observer.*, noise.*, filter.*, check.*). Every key has
a default, so an empty file is a valid configuration. Values are plain
numbers, booleans, comma-separated vectors, or named presets; no
expressions.
"""

from __future__ import annotations

from functools import partial
from typing import Callable

import numpy as np

from .filter import FilterConfig
from .quaternion import XI_ORIGIN, AttitudeScenario, NoiseModel, Quaternion, quat_product
from .simulation import RunConfig

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "NUMERIC_KEYS",
    "KEY_DOC",
    "parse_config_text",
    "load_config_file",
    "apply_overrides",
    "merge_with_defaults",
    "build_run_config",
    "get_float",
    "get_int",
    "get_bool",
    "get_vec3",
]


class ConfigError(ValueError):
    """Malformed configuration file, key, or value."""


# Defaults are stored as strings so file values, --set overrides, and
# defaults all flow through the same parsing path.
DEFAULTS: dict[str, str] = {
    "seed": "0",
    "scenario.omega": "canonical",
    "scenario.reference": "canonical",
    "scenario.q0": "1,0,0,0",
    "scenario.duration": "100.0",
    "scenario.sensor_dt": "0.1",
    "observer.initial_error_rad": "0.0",
    "observer.initial_error_axis": "1,0,0",
    "observer.hessian_scale": "1.0",
    "noise.inject": "false",
    "noise.gyro_sigma": "0.01",
    "noise.vector_sigma": "1.0",
    "filter.delta_step_cap": "0.01",
    "filter.dt_max": "0.1",
    "filter.p_solve_tolerance": "1e-8",
    "filter.hessian_regularization": "0.0",
    "check.duration": "1.0",
    "check.sensor_dt": "0.1",
    "check.dt": "1e-3",
    "check.hessian_scale": "30.0",
    "check.gyro_sigma_true": "0.02",
    "check.vector_sigma_true": "0.03",
}

# One-line meaning per key, used by the CLI help text.
KEY_DOC: dict[str, str] = {
    "seed": "integer seed; all randomness in a run derives from it",
    "scenario.omega": "body rate: 'canonical' (0.1cos(0.1t),0,0.2), 'zero', or 'const:x,y,z'",
    "scenario.reference": "inertial reference vector: 'canonical' (sin t,0,cos t) or unit 'const:x,y,z'",
    "scenario.q0": "true initial attitude quaternion 'w,x,y,z' (unit)",
    "scenario.duration": "run length in seconds; integer multiple of sensor_dt, or 0 for an empty run",
    "scenario.sensor_dt": "sensor epoch length in seconds",
    "observer.initial_error_rad": "initial attitude error of the estimate, radians",
    "observer.initial_error_axis": "axis 'x,y,z' the initial error rotates about",
    "observer.hessian_scale": "scale of the rank-3 initial value-function Hessian",
    "noise.inject": "true to corrupt measurements; gains are built from the sigmas either way",
    "noise.gyro_sigma": "gyro noise standard deviation per axis, rad/s",
    "noise.vector_sigma": "reference-vector measurement noise standard deviation per axis",
    "filter.delta_step_cap": "bound on ||correction|| * dt per integrator substep",
    "filter.dt_max": "largest integrator substep, seconds",
    "filter.p_solve_tolerance": "relative residual bound for the correction solve",
    "filter.hessian_regularization": "epsilon added to the correction-solve matrix",
    "check.duration": "verification horizon, seconds",
    "check.sensor_dt": "sensor epoch length used by the verification run",
    "check.dt": "fixed integration step of the verification run (see --dt)",
    "check.hessian_scale": "initial Hessian scale of the verification run",
    "check.gyro_sigma_true": "gyro noise injected in the verification run",
    "check.vector_sigma_true": "vector noise injected in the verification run",
}

# Keys sweep may vary: plain scalars only.
NUMERIC_KEYS = {
    "seed",
    "scenario.duration",
    "scenario.sensor_dt",
    "observer.initial_error_rad",
    "observer.hessian_scale",
    "noise.gyro_sigma",
    "noise.vector_sigma",
    "filter.delta_step_cap",
    "filter.dt_max",
    "filter.p_solve_tolerance",
    "filter.hessian_regularization",
    "check.duration",
    "check.sensor_dt",
    "check.dt",
    "check.hessian_scale",
    "check.gyro_sigma_true",
    "check.vector_sigma_true",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Key/value pairs from config text. Unknown or repeated keys fail."""
    out: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        out[key] = value
    return out


def load_config_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def apply_overrides(cfg: dict[str, str], overrides: list[str]) -> dict[str, str]:
    """Apply repeatable 'key=value' overrides on top of file values."""
    out = dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"override names unknown key {key!r}")
        if not value:
            raise ConfigError(f"override for {key!r} has an empty value")
        out[key] = value
    return out


def merge_with_defaults(cfg: dict[str, str]) -> dict[str, str]:
    merged = dict(DEFAULTS)
    merged.update(cfg)
    return merged


def get_float(cfg: dict[str, str], key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from exc


def get_int(cfg: dict[str, str], key: str) -> int:
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}") from exc


def get_bool(cfg: dict[str, str], key: str) -> bool:
    value = cfg[key].strip().lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {cfg[key]!r}")


def _parse_floats(key: str, value: str, count: int) -> np.ndarray:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != count:
        raise ConfigError(f"{key}: expected {count} comma-separated numbers, got {value!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got {value!r}") from exc


def get_vec3(cfg: dict[str, str], key: str) -> np.ndarray:
    return _parse_floats(key, cfg[key], 3)


# Scenario presets. Module-level functions so configurations remain
# picklable for parallel sweeps.


def omega_canonical(t: float) -> np.ndarray:
    return np.array([0.1 * np.cos(0.1 * t), 0.0, 0.2])


def omega_zero(t: float) -> np.ndarray:
    return np.zeros(3)


def reference_canonical(t: float) -> np.ndarray:
    return np.array([np.sin(t), 0.0, np.cos(t)])


def constant_vector(values: tuple, t: float) -> np.ndarray:
    return np.array(values)


def _vector_signal(key: str, value: str) -> Callable[[float], np.ndarray]:
    if value == "canonical":
        return omega_canonical if key == "scenario.omega" else reference_canonical
    if value == "zero" and key == "scenario.omega":
        return omega_zero
    if value.startswith("const:"):
        vec = _parse_floats(key, value[len("const:"):], 3)
        if key == "scenario.reference":
            if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-12:
                raise ConfigError(f"{key}: constant reference vector must be unit length")
        return partial(constant_vector, tuple(vec))
    raise ConfigError(f"{key}: unknown signal {value!r}")


def _initial_estimate(cfg: dict[str, str], q0: Quaternion) -> Quaternion:
    angle = get_float(cfg, "observer.initial_error_rad")
    if angle == 0.0:
        return q0
    axis = get_vec3(cfg, "observer.initial_error_axis")
    norm = float(np.linalg.norm(axis))
    if norm == 0.0:
        raise ConfigError("observer.initial_error_axis: axis must be nonzero")
    axis = axis / norm
    offset = Quaternion(np.cos(angle / 2.0), np.sin(angle / 2.0) * axis)
    return quat_product(q0, offset)


def build_run_config(cfg: dict[str, str]) -> RunConfig:
    """Materialize a RunConfig from merged key/value strings.

    Raises ConfigError for any out-of-range or malformed value.
    """
    cfg = merge_with_defaults(cfg)
    seed = get_int(cfg, "seed")
    q0_vec = _parse_floats("scenario.q0", cfg["scenario.q0"], 4)
    try:
        q0 = Quaternion.from_vector(q0_vec)
        scenario = AttitudeScenario(
            omega_fn=_vector_signal("scenario.omega", cfg["scenario.omega"]),
            ref_fn=_vector_signal("scenario.reference", cfg["scenario.reference"]),
            q0=q0,
            duration=get_float(cfg, "scenario.duration"),
            sensor_dt=get_float(cfg, "scenario.sensor_dt"),
        )
        scenario.epochs()
        gyro_sigma = get_float(cfg, "noise.gyro_sigma")
        vector_sigma = get_float(cfg, "noise.vector_sigma")
        gains = NoiseModel(
            gyro_cov=gyro_sigma ** 2 * np.eye(3),
            vector_cov=vector_sigma ** 2 * np.eye(3),
            seed=seed,
        )
        filter_cfg = FilterConfig(
            origin_xi=XI_ORIGIN,
            delta_step_cap=get_float(cfg, "filter.delta_step_cap"),
            dt_max=get_float(cfg, "filter.dt_max"),
            p_solve_tolerance=get_float(cfg, "filter.p_solve_tolerance"),
            hessian_regularization=get_float(cfg, "filter.hessian_regularization"),
        )
        initial_estimate = _initial_estimate(cfg, q0)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        scenario=scenario,
        gains=gains,
        filter=filter_cfg,
        initial_estimate=initial_estimate,
        initial_hessian_scale=get_float(cfg, "observer.hessian_scale"),
        noise=gains if get_bool(cfg, "noise.inject") else None,
    )
