"""YAML run configuration: parsing, validation, and the packaged default.

A run file has five sections (plant, integrator, dmc, bank, schedule,
scenario); every key is checked by name so a typo fails loudly with the
section and key in the message rather than silently falling back to a
default.  Cross-section consistency (sample periods, schedule indices,
actuator limits, declared volume) is checked here too, at load time.
"""

from __future__ import annotations

import dataclasses
import warnings
from importlib import resources
from pathlib import Path

import yaml

from .dmc import DmcConfig
from .errors import ConfigurationError, InvalidParameterError
from .harness import BankConfig, DisturbanceConfig, RunConfig, ScenarioConfig
from .integrator import IntegratorConfig
from .kinetics import PlantParams, ReactorState
from .scheduler import Schedule

_SECTIONS = ("plant", "integrator", "dmc", "schedule", "scenario")


def default_config_path() -> Path:
    """Path of the packaged default run configuration."""
    return Path(resources.files("mmadmc").joinpath("params/default.yaml"))


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run file into a RunConfig."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(
            f"config {path} must be a mapping of sections, got "
            f"{type(data).__name__}")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(
            f"unknown config sections: {sorted(unknown)} "
            f"(expected {list(_SECTIONS)})")
    missing = set(_SECTIONS) - set(data)
    if missing:
        raise ConfigurationError(f"missing config sections: {sorted(missing)}")

    params = _parse_plant(data["plant"])
    integ = _parse_section("integrator", data["integrator"], IntegratorConfig)
    dmc = _parse_dmc(data["dmc"])
    schedule = _parse_schedule(data["schedule"])
    scenario, bank = _parse_scenario(data["scenario"])

    cfg = RunConfig(params=params, integrator=integ, dmc=dmc, bank=bank,
                    schedule=schedule, scenario=scenario)
    _cross_checks(cfg)
    return cfg


def _require_mapping(name: str, value) -> dict:
    if not isinstance(value, dict):
        raise ConfigurationError(
            f"section '{name}' must be a mapping, got {type(value).__name__}")
    return value


def _parse_plant(raw) -> PlantParams:
    raw = _require_mapping("plant", raw)
    try:
        return PlantParams.from_dict(raw)
    except InvalidParameterError as exc:
        raise ConfigurationError(f"section 'plant': {exc}") from exc


def _parse_section(name: str, raw, cls):
    raw = _require_mapping(name, raw)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(
            f"section '{name}': unknown keys {sorted(unknown)} "
            f"(expected a subset of {sorted(known)})")
    try:
        return cls(**raw)
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigurationError(f"section '{name}': {exc}") from exc


def _parse_dmc(raw) -> DmcConfig:
    return _parse_section("dmc", raw, DmcConfig)


def _parse_bank(raw) -> BankConfig:
    raw = _require_mapping("scenario.bank", raw)
    unknown = set(raw) - {"breakpoints", "warmup_power", "mode"}
    if unknown:
        raise ConfigurationError(
            f"scenario.bank: unknown keys {sorted(unknown)}")
    try:
        return BankConfig(
            breakpoints=tuple(float(t) for t in raw["breakpoints"]),
            warmup_power=float(raw["warmup_power"]),
            mode=str(raw.get("mode", "prerun")),
        )
    except KeyError as exc:
        raise ConfigurationError(f"scenario.bank: missing key {exc}") from exc
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"scenario.bank: {exc}") from exc


def _parse_schedule(raw) -> Schedule:
    if not isinstance(raw, list):
        raise ConfigurationError(
            "section 'schedule' must be a list of [time_s, model_index] pairs")
    try:
        return Schedule.from_pairs(raw)
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"section 'schedule': {exc}") from exc


def _parse_scenario(raw) -> tuple[ScenarioConfig, BankConfig]:
    raw = _require_mapping("scenario", raw)
    known = {
        "t_batch", "setpoint_profile", "initial_state", "noise_std",
        "seed", "disturbance", "metrics_vs_setpoint", "u_initial", "bank",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(
            f"section 'scenario': unknown keys {sorted(unknown)}")
    for key in ("t_batch", "setpoint_profile", "initial_state", "bank"):
        if key not in raw:
            raise ConfigurationError(f"section 'scenario': missing key '{key}'")
    bank = _parse_bank(raw["bank"])

    init = _require_mapping("scenario.initial_state", raw["initial_state"])
    state_keys = set(ReactorState._fields)
    if set(init) != state_keys:
        raise ConfigurationError(
            f"scenario.initial_state needs exactly {sorted(state_keys)}, "
            f"got {sorted(init)}")

    dist_raw = raw.get("disturbance")
    disturbance = None
    if dist_raw is not None:
        dist_raw = _require_mapping("scenario.disturbance", dist_raw)
        unknown = set(dist_raw) - {"time", "magnitude", "channel"}
        if unknown:
            raise ConfigurationError(
                f"scenario.disturbance: unknown keys {sorted(unknown)}")
        try:
            disturbance = DisturbanceConfig(
                time=float(dist_raw["time"]),
                magnitude=float(dist_raw["magnitude"]),
                channel=str(dist_raw.get("channel", "true")),
            )
        except KeyError as exc:
            raise ConfigurationError(
                f"scenario.disturbance: missing key {exc}") from exc

    seed = raw.get("seed")
    u_initial = raw.get("u_initial")
    try:
        scenario = ScenarioConfig(
            t_batch=float(raw["t_batch"]),
            setpoint_profile=tuple(
                (float(t), float(v)) for t, v in raw["setpoint_profile"]),
            initial_state=ReactorState(**{k: float(v) for k, v in init.items()}),
            noise_std=float(raw.get("noise_std", 0.0)),
            seed=None if seed is None else int(seed),
            disturbance=disturbance,
            metrics_vs_setpoint=bool(raw.get("metrics_vs_setpoint", False)),
            u_initial=None if u_initial is None else float(u_initial),
        )
    except (ConfigurationError, InvalidParameterError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"section 'scenario': {exc}") from exc
    return scenario, bank


def _cross_checks(cfg: RunConfig) -> None:
    if abs(cfg.integrator.sample_period - cfg.dmc.ts) > 1e-9:
        raise ConfigurationError(
            f"integrator dt*substeps = {cfg.integrator.sample_period} s must "
            f"equal dmc ts = {cfg.dmc.ts} s")
    cfg.schedule.check_bank(len(cfg.bank.breakpoints))
    horizon = max(cfg.scenario.t_batch, max(cfg.bank.breakpoints))
    if cfg.schedule.times[-1] > cfg.scenario.t_batch:
        raise ConfigurationError(
            f"last schedule switch at {cfg.schedule.times[-1]} s is beyond "
            f"the {cfg.scenario.t_batch} s batch")
    if max(cfg.bank.breakpoints) > horizon:
        raise ConfigurationError(
            f"bank breakpoints extend past the batch: {cfg.bank.breakpoints}")
    if cfg.dmc.u_max > cfg.params.p_max + 1e-9:
        warnings.warn(
            f"controller u_max {cfg.dmc.u_max} W exceeds the plant's rated "
            f"per-heater maximum {cfg.params.p_max} W", stacklevel=2)
    if cfg.bank.warmup_power > cfg.params.p_max + 1e-9:
        raise ConfigurationError(
            f"bank warm-up power {cfg.bank.warmup_power} W exceeds plant "
            f"maximum {cfg.params.p_max} W")
    try:
        state0 = cfg.scenario.initial_state
        state0.validate()
    except InvalidParameterError as exc:
        raise ConfigurationError(f"scenario.initial_state: {exc}") from exc

    # declared initial volume vs mass balance: V0 should equal the monomer
    # volume plus solvent, (m0/rho_m)(1 + beta), within loose tolerance
    p = cfg.params
    v0_ml = p.v0 * 1000.0
    v_from_mass = (p.m0 / p.rho_m) * (1.0 + p.beta)
    if abs(v0_ml - v_from_mass) > 0.01 * v_from_mass:
        warnings.warn(
            f"declared v0 = {v0_ml:.1f} cm3 differs from the feed mass "
            f"balance (m0/rho_m)(1+beta) = {v_from_mass:.1f} cm3 by more "
            f"than 1%", stacklevel=2)
