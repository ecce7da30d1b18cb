"""Fixed-step RK4 integration of the reactor model with zero-order-hold input.

A fixed step keeps batch runs bit-reproducible; the reactor time constants
(minutes) are far from stiff at the default 1 s step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import InvalidParameterError, NumericError
from .kinetics import PlantParams, ReactorState, derivatives

DerivFn = Callable[[ReactorState, float], tuple[float, float, float, float]]

_STATE_NAMES = ("x", "i_conc", "t_reactor", "t_jacket")


@dataclass(frozen=True)
class IntegratorConfig:
    """Inner integration step and substep count per controller sample."""

    dt: float = 1.0
    substeps_per_sample: int = 10

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidParameterError(f"dt must be positive: {self.dt}")
        if self.substeps_per_sample < 1:
            raise InvalidParameterError(
                f"substeps_per_sample must be >= 1: {self.substeps_per_sample}"
            )

    @property
    def sample_period(self) -> float:
        return self.dt * self.substeps_per_sample


def _check_finite(k: tuple[float, float, float, float], stage: str) -> None:
    for name, val in zip(_STATE_NAMES, k):
        if not math.isfinite(val):
            raise NumericError(f"non-finite derivative of {name} at RK4 stage {stage}")


def rk4_step(
    deriv: DerivFn, state: ReactorState, power: float, dt: float
) -> tuple[ReactorState, bool]:
    """One classical RK4 step under constant input.

    Returns the new state and a flag marking whether the post-step clamp of
    conversion into [0, 1] or initiator into [0, inf) actually moved a value
    (tiny overshoots near full conversion are clamped rather than fatal).
    """
    if dt <= 0.0:
        raise InvalidParameterError(f"dt must be positive: {dt}")
    s = state

    k1 = deriv(s, power)
    _check_finite(k1, "k1")
    s2 = ReactorState(*(si + 0.5 * dt * ki for si, ki in zip(s, k1)))
    k2 = deriv(s2, power)
    _check_finite(k2, "k2")
    s3 = ReactorState(*(si + 0.5 * dt * ki for si, ki in zip(s, k2)))
    k3 = deriv(s3, power)
    _check_finite(k3, "k3")
    s4 = ReactorState(*(si + dt * ki for si, ki in zip(s, k3)))
    k4 = deriv(s4, power)
    _check_finite(k4, "k4")

    new = [
        si + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for si, a, b, c, d in zip(s, k1, k2, k3, k4)
    ]
    clamped = False
    if new[0] < 0.0 or new[0] > 1.0:
        new[0] = min(max(new[0], 0.0), 1.0)
        clamped = True
    if new[1] < 0.0:
        new[1] = 0.0
        clamped = True
    return ReactorState(*new), clamped


@dataclass(frozen=True)
class OpenLoopResult:
    """States at sample boundaries (including t=0) plus per-sample clamp flags."""

    states: tuple[ReactorState, ...]
    clamped: tuple[bool, ...]

    @property
    def final(self) -> ReactorState:
        return self.states[-1]


def simulate_open_loop(
    state0: ReactorState,
    power_profile: Sequence[float],
    params: PlantParams,
    cfg: IntegratorConfig,
) -> OpenLoopResult:
    """Integrate the plant under a zero-order-hold power sequence.

    Each profile entry holds for one controller sample (substeps * dt).
    Output has len(profile) + 1 states: the initial one plus one per sample
    boundary.
    """
    if len(power_profile) == 0:
        raise InvalidParameterError("power profile must be non-empty")
    state0.validate()
    for k, p in enumerate(power_profile):
        if not 0.0 <= p <= params.p_max:
            raise InvalidParameterError(
                f"power sample {k} outside [0, p_max]: {p}"
            )

    def deriv(s: ReactorState, p: float):
        return derivatives(s, p, params)

    states = [state0]
    clamped_flags = [False]
    state = state0
    for k, power in enumerate(power_profile):
        clamped_sample = False
        try:
            for _ in range(cfg.substeps_per_sample):
                state, clamped = rk4_step(deriv, state, power, cfg.dt)
                clamped_sample = clamped_sample or clamped
        except NumericError as exc:
            raise NumericError(f"sample {k}: {exc}", residual=exc.residual) from exc
        states.append(state)
        clamped_flags.append(clamped_sample)
    return OpenLoopResult(states=tuple(states), clamped=tuple(clamped_flags))
