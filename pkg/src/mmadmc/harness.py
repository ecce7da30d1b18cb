"""Closed-loop batch runner: plant, controller, schedule, logging, metrics.

Per control sample the loop measures (true output plus optional output-step
disturbance and gaussian sensor noise), switches the local model if the
schedule says so, runs one DMC step, then integrates the nonlinear plant
over the sample period with the applied power held.  All noise comes from a
single seeded generator drawn up front, so a fixed seed reproduces a run
byte for byte.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dmc import DmcConfig, init_controller, control_step, make_gain
from .errors import ConfigurationError, NumericError, RangeError
from .integrator import IntegratorConfig, rk4_step
from .kinetics import PlantParams, ReactorState, derivatives
from .linmodel import (
    CELSIUS_ZERO,
    LinearModel,
    OperatingPoint,
    assemble_model,
    build_model_bank,
)
from .scheduler import Schedule, active_model, reanchor_state, switch_model

CSV_COLUMNS = (
    "t", "y_sp", "y_d", "T_true", "T_meas", "T_jacket",
    "x", "i_conc", "u", "du", "active_model", "saturated",
)


@dataclass(frozen=True)
class DisturbanceConfig:
    """Output step: magnitude degC added from onset time onward.

    channel "true" perturbs the actual plant output (the controller can and
    should reject it); "measured" biases only the sensor reading.
    """

    time: float
    magnitude: float
    channel: str = "true"

    def __post_init__(self):
        if self.channel not in ("true", "measured"):
            raise ConfigurationError(
                f"disturbance channel must be 'true' or 'measured': "
                f"{self.channel!r}")
        if self.time < 0.0:
            raise ConfigurationError(
                f"disturbance onset must be >= 0: {self.time}")


@dataclass(frozen=True)
class BankConfig:
    """How the nominal trajectory for linearization is produced.

    mode "warmup" holds warmup_power constant for the whole nominal run;
    mode "prerun" first closes the loop with a single model linearized at
    the initial state (no noise, no disturbance) and reuses its power
    profile, which keeps the breakpoint states near the trajectory the
    controlled batch will actually follow.  Either way the bank is built
    from an open-loop simulation under the resulting profile.
    """

    breakpoints: tuple[float, ...]
    warmup_power: float
    mode: str = "prerun"

    def __post_init__(self):
        if not self.breakpoints:
            raise ConfigurationError("bank needs at least one breakpoint")
        if self.warmup_power < 0.0:
            raise ConfigurationError(
                f"warm-up power must be >= 0: {self.warmup_power}")
        if self.mode not in ("warmup", "prerun"):
            raise ConfigurationError(
                f"bank mode must be 'warmup' or 'prerun': {self.mode!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Batch duration, setpoint profile and measurement model.

    setpoint_profile is a piecewise-linear (time s, degC) table; values
    beyond the last breakpoint hold.  metrics_vs_setpoint switches the error
    metrics from the filtered reference to the raw setpoint.
    """

    t_batch: float
    setpoint_profile: tuple[tuple[float, float], ...]
    initial_state: ReactorState
    noise_std: float = 0.0
    seed: int | None = None
    disturbance: DisturbanceConfig | None = None
    metrics_vs_setpoint: bool = False
    u_initial: float | None = None

    def __post_init__(self):
        if self.t_batch <= 0.0:
            raise ConfigurationError(
                f"batch duration must be positive: {self.t_batch}")
        if len(self.setpoint_profile) < 1:
            raise ConfigurationError("setpoint profile must not be empty")
        times = [t for t, _ in self.setpoint_profile]
        if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
            raise ConfigurationError(
                f"setpoint profile times must be nondecreasing: {times}")
        if self.noise_std < 0.0:
            raise ConfigurationError(
                f"noise std must be >= 0: {self.noise_std}")

    def setpoint_at(self, t) -> np.ndarray | float:
        times = np.array([p[0] for p in self.setpoint_profile])
        values = np.array([p[1] for p in self.setpoint_profile])
        return np.interp(t, times, values)


@dataclass(frozen=True)
class RunConfig:
    """Everything one closed-loop run needs."""

    params: PlantParams
    integrator: IntegratorConfig
    dmc: DmcConfig
    bank: BankConfig
    schedule: Schedule
    scenario: ScenarioConfig


@dataclass
class SimResult:
    """Per-sample log of a closed-loop run plus the terminal plant state.

    Arrays are aligned: row k describes the state at t[k] and the input
    applied over the following sample period.
    """

    t: np.ndarray
    y_sp: np.ndarray
    y_d: np.ndarray
    t_true: np.ndarray
    t_meas: np.ndarray
    t_jacket: np.ndarray
    x: np.ndarray
    i_conc: np.ndarray
    u: np.ndarray
    du: np.ndarray
    active_model: np.ndarray
    saturated: np.ndarray
    d_est: np.ndarray
    clamped: np.ndarray
    final_state: ReactorState
    metrics: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        mapping = {
            "t": self.t, "y_sp": self.y_sp, "y_d": self.y_d,
            "T_true": self.t_true, "T_meas": self.t_meas,
            "T_jacket": self.t_jacket, "x": self.x, "i_conc": self.i_conc,
            "u": self.u, "du": self.du, "active_model": self.active_model,
            "saturated": self.saturated,
        }
        return mapping[name]

    def to_csv(self, path) -> None:
        write_csv(self, path)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def write_csv(result: SimResult, path) -> None:
    """Fixed-order, fixed-format CSV; identical inputs give identical bytes."""
    lines = [",".join(CSV_COLUMNS)]
    n = len(result.t)
    for k in range(n):
        row = []
        for name in CSV_COLUMNS:
            col = result.column(name)
            if name in ("active_model", "saturated"):
                row.append(str(int(col[k])))
            else:
                row.append(_fmt(col[k]))
        lines.append(",".join(row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def compute_metrics(result: SimResult, vs_setpoint: bool = False) -> dict:
    """Tracking-error summary against the filtered reference (or setpoint)."""
    if len(result.t) == 0:
        raise RangeError("cannot compute metrics of an empty run")
    ref = result.y_sp if vs_setpoint else result.y_d
    err = ref - result.t_true
    return {
        "mae": float(np.mean(np.abs(err))),
        "max_abs_err": float(np.max(np.abs(err))),
        "rmse": float(math.sqrt(np.mean(err ** 2))),
        "mae_vs_setpoint": float(np.mean(np.abs(result.y_sp - result.t_true))),
        "n_saturated": int(np.sum(result.saturated)),
        "saturated_frac": float(np.mean(result.saturated)),
        "n_switches": int(np.sum(np.diff(result.active_model) != 0)),
        "final_conversion": float(result.final_state.x),
    }


def build_bank_for_run(cfg: RunConfig) -> list[LinearModel]:
    """Model bank from an open-loop run under the nominal power profile.

    The nominal profile is either the constant warm-up power or, in prerun
    mode, the power sequence a single-model controller produces on the
    clean scenario.  The run only needs to reach the last breakpoint; the
    controlled batch may continue far beyond it.
    """
    period = cfg.integrator.sample_period
    horizon = max(cfg.bank.breakpoints)
    n_samples = max(1, int(math.ceil(horizon / period - 1e-9)))
    min_samples = cfg.dmc.n1 + cfg.dmc.p_horizon + 1
    profile = nominal_power_profile(cfg, n_samples)
    return build_model_bank(
        cfg.scenario.initial_state, profile, cfg.bank.breakpoints,
        cfg.params, cfg.integrator, cfg.dmc.ts, min_samples=min_samples,
    )


def nominal_power_profile(cfg: RunConfig, n_samples: int) -> list[float]:
    """Power sequence defining the nominal (linearization) trajectory."""
    if cfg.bank.mode == "warmup":
        return [cfg.bank.warmup_power] * n_samples

    boot_op = OperatingPoint(
        state_s=cfg.scenario.initial_state,
        power_s=cfg.bank.warmup_power,
        time_s=0.0,
    )
    min_samples = cfg.dmc.n1 + cfg.dmc.p_horizon + 1
    boot_model = assemble_model(
        boot_op, cfg.params, cfg.dmc.ts, min_samples=min_samples)
    clean = dataclasses.replace(
        cfg.scenario,
        t_batch=n_samples * cfg.integrator.sample_period,
        noise_std=0.0, disturbance=None,
        u_initial=cfg.bank.warmup_power,
    )
    pre = run_closed_loop(
        cfg.params, cfg.integrator, cfg.dmc, [boot_model],
        Schedule(times=(0.0,), indices=(0,)), clean,
    )
    return [float(u) for u in pre.u[:n_samples]]


def run(cfg: RunConfig, bank: Sequence[LinearModel] | None = None) -> SimResult:
    """Build the model bank (unless given) and run the closed loop."""
    if bank is None:
        bank = build_bank_for_run(cfg)
    return run_closed_loop(
        cfg.params, cfg.integrator, cfg.dmc, bank, cfg.schedule, cfg.scenario,
    )


def run_closed_loop(
    params: PlantParams,
    integ_cfg: IntegratorConfig,
    dmc_cfg: DmcConfig,
    bank: Sequence[LinearModel],
    schedule: Schedule,
    scenario: ScenarioConfig,
    lti_mode: bool = False,
) -> SimResult:
    """Run one batch under DMC with scheduled model switching.

    With lti_mode the nonlinear plant is replaced by the active linear
    model itself (discrete rollout), a self-test where plant and internal
    model match exactly and tracking must converge to the reference.
    """
    if abs(integ_cfg.sample_period - dmc_cfg.ts) > 1e-9:
        raise ConfigurationError(
            f"integrator sample period {integ_cfg.sample_period} s does not "
            f"match controller ts {dmc_cfg.ts} s")
    schedule.check_bank(len(bank))
    for i, model in enumerate(bank):
        if abs(model.ts - dmc_cfg.ts) > 1e-9:
            raise ConfigurationError(
                f"bank model {i} sampled at {model.ts} s, controller at "
                f"{dmc_cfg.ts} s")

    ts = dmc_cfg.ts
    n_samples = int(round(scenario.t_batch / ts))
    if n_samples < 1:
        raise RangeError(
            f"batch {scenario.t_batch} s shorter than one sample {ts} s")

    gains = [make_gain(m, dmc_cfg, i) for i, m in enumerate(bank)]

    n_rows = n_samples + 1
    if scenario.noise_std > 0.0:
        rng = np.random.default_rng(scenario.seed)
        noise = rng.normal(0.0, scenario.noise_std, n_rows)
    else:
        noise = np.zeros(n_rows)

    dist = scenario.disturbance

    idx = active_model(schedule, 0.0)
    model = bank[idx]
    u_init = scenario.u_initial
    if u_init is None:
        u_init = model.u_offset
    ctrl = init_controller(model, u_init)

    cols = {name: np.zeros(n_rows) for name in (
        "t", "y_sp", "y_d", "t_true", "t_meas", "t_jacket", "x", "i_conc",
        "u", "du", "d_est")}
    active = np.zeros(n_rows, dtype=int)
    saturated = np.zeros(n_rows, dtype=int)
    clamped = np.zeros(n_rows, dtype=int)

    state = scenario.initial_state
    state.validate()
    dt = integ_cfg.dt
    plant_model = model
    z = np.zeros(model.n_states)  # LTI-mode plant state (deviation)

    def _plant_snapshot() -> tuple[float, float, float, float]:
        """Current (T degC, x, i_conc, T_jacket degC) of whichever plant."""
        if lti_mode:
            y = float(plant_model.c_vec @ z) + plant_model.y_offset
            if plant_model.op is not None and plant_model.n_states == 4:
                op = plant_model.op.state_s
                return (y, op.x + z[0], op.i_conc + z[1],
                        op.t_jacket + z[3] - CELSIUS_ZERO)
            return (y, 0.0, 0.0, y)
        return (state.t_reactor - CELSIUS_ZERO, state.x, state.i_conc,
                state.t_jacket - CELSIUS_ZERO)

    def _measure(k: int, t: float) -> tuple[float, float]:
        d_out = 0.0
        d_sensor = 0.0
        if dist is not None and t >= dist.time:
            if dist.channel == "true":
                d_out = dist.magnitude
            else:
                d_sensor = dist.magnitude
        y_true = _plant_snapshot()[0] + d_out
        return y_true, y_true + d_sensor + noise[k]

    for k in range(n_samples):
        t = k * ts
        y_true, y_meas = _measure(k, t)

        new_idx = active_model(schedule, t)
        if new_idx != idx:
            ctrl = switch_model(bank[idx], bank[new_idx], ctrl, y_meas)
            if lti_mode:
                z = reanchor_state(plant_model, bank[new_idx], z)
                plant_model = bank[new_idx]
            idx = new_idx
            model = bank[idx]

        yd_log = ctrl.yd_prev if ctrl.yd_prev is not None else y_meas
        future = scenario.setpoint_at(
            t + ts * np.arange(1, dmc_cfg.p_horizon + 1))
        ctrl, res = control_step(
            model, gains[idx], ctrl, y_meas, future, dmc_cfg)

        _, x_now, i_now, tj_now = _plant_snapshot()
        cols["t"][k] = t
        cols["y_sp"][k] = scenario.setpoint_at(t)
        cols["y_d"][k] = yd_log
        cols["t_true"][k] = y_true
        cols["t_meas"][k] = y_meas
        cols["t_jacket"][k] = tj_now
        cols["x"][k] = x_now
        cols["i_conc"][k] = i_now
        cols["u"][k] = res.u_applied
        cols["du"][k] = res.du_applied
        cols["d_est"][k] = res.d_est
        active[k] = idx
        saturated[k] = int(res.saturated)

        if lti_mode:
            z = plant_model.ad @ z + plant_model.bd * (
                res.u_applied - plant_model.u_offset)
            continue
        try:
            for _ in range(integ_cfg.substeps_per_sample):
                state, was_clamped = rk4_step(
                    lambda s, p: derivatives(s, p, params),
                    state, res.u_applied, dt)
                clamped[k] |= int(was_clamped)
        except NumericError as exc:
            raise NumericError(
                f"plant integration failed at t={t:.1f} s: {exc}") from exc

    # terminal boundary row: state reached at batch end, input held
    t_end = n_samples * ts
    y_true, y_meas = _measure(n_samples, t_end)
    y_end, x_end, i_end, tj_end = _plant_snapshot()
    if lti_mode:
        state = ReactorState(
            x=min(max(x_end, 0.0), 1.0), i_conc=max(i_end, 0.0),
            t_reactor=y_end + CELSIUS_ZERO, t_jacket=tj_end + CELSIUS_ZERO)
    cols["t"][n_samples] = t_end
    cols["y_sp"][n_samples] = scenario.setpoint_at(t_end)
    cols["y_d"][n_samples] = ctrl.yd_prev if ctrl.yd_prev is not None else y_meas
    cols["t_true"][n_samples] = y_true
    cols["t_meas"][n_samples] = y_meas
    cols["t_jacket"][n_samples] = tj_end
    cols["x"][n_samples] = x_end
    cols["i_conc"][n_samples] = i_end
    cols["u"][n_samples] = ctrl.u_prev
    cols["du"][n_samples] = 0.0
    cols["d_est"][n_samples] = ctrl.d_est
    active[n_samples] = active_model(schedule, t_end)
    saturated[n_samples] = 0

    result = SimResult(
        t=cols["t"], y_sp=cols["y_sp"], y_d=cols["y_d"],
        t_true=cols["t_true"], t_meas=cols["t_meas"],
        t_jacket=cols["t_jacket"], x=cols["x"], i_conc=cols["i_conc"],
        u=cols["u"], du=cols["du"], active_model=active,
        saturated=saturated, d_est=cols["d_est"], clamped=clamped,
        final_state=state,
    )
    result.metrics = compute_metrics(result, scenario.metrics_vs_setpoint)
    return result
