"""Time-scheduled switching between local models with bumpless transfer.

The batch is partitioned by switch times; the model active at time t is the
last entry at or before t (right-continuous).  On a switch the controller
state is re-seeded so the new model's current output estimate equals the old
one's, which keeps the disturbance estimate, and therefore the applied
power, continuous across the boundary.  Non-output deviations restart from
the new operating point's equilibrium: the internal state is an open-loop
estimate, and carrying its weakly observable components across operating
points was measured to track worse than discarding them.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dmc import ControllerState
from .errors import ConfigurationError, RangeError
from .linmodel import LinearModel


@dataclass(frozen=True)
class Schedule:
    """Switch times (s, strictly increasing, starting at 0) and bank indices."""

    times: tuple[float, ...]
    indices: tuple[int, ...]

    def __post_init__(self):
        if not self.times:
            raise ConfigurationError("schedule must have at least one entry")
        if len(self.times) != len(self.indices):
            raise ConfigurationError(
                f"schedule has {len(self.times)} times but "
                f"{len(self.indices)} model indices")
        if self.times[0] != 0.0:
            raise ConfigurationError(
                f"first schedule entry must be at t=0, got {self.times[0]}")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ConfigurationError(
                f"schedule times must be strictly increasing: {self.times}")
        if any(i < 0 for i in self.indices):
            raise ConfigurationError(
                f"model indices must be nonnegative: {self.indices}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "Schedule":
        times = tuple(float(t) for t, _ in pairs)
        indices = tuple(int(i) for _, i in pairs)
        return cls(times=times, indices=indices)

    def check_bank(self, n_models: int) -> None:
        bad = [i for i in self.indices if i >= n_models]
        if bad:
            raise ConfigurationError(
                f"schedule references model indices {bad} but the bank "
                f"holds {n_models} models")

    @property
    def n_entries(self) -> int:
        return len(self.times)


def active_model(schedule: Schedule, t: float) -> int:
    """Bank index of the model scheduled at time t (right-continuous)."""
    if t < schedule.times[0]:
        raise RangeError(
            f"time {t} s precedes the first schedule entry at "
            f"{schedule.times[0]} s")
    pos = bisect_right(schedule.times, t) - 1
    return schedule.indices[pos]


def reanchor_state(
    model_old: LinearModel,
    model_new: LinearModel,
    s_old: np.ndarray,
) -> np.ndarray:
    """Minimum-norm state of the new model matching the old model's output.

    Output-consistent handoff: the returned vector predicts exactly the old
    model's current output estimate, with all non-output deviations reset
    to the new operating point's equilibrium.
    """
    y_pred_old = float(model_old.c_vec @ s_old) + model_old.y_offset
    c = np.asarray(model_new.c_vec, dtype=float)
    cc = float(c @ c)
    if cc == 0.0:
        raise ConfigurationError("new model has a zero output map")
    return c * ((y_pred_old - model_new.y_offset) / cc)


def switch_model(
    model_old: LinearModel,
    model_new: LinearModel,
    state: ControllerState,
    y_meas: float | None = None,
) -> ControllerState:
    """Re-seed the controller state on the new model without an output jump.

    The new internal state is the minimum-norm vector whose output matches
    the old model's current output estimate; the last applied power and the
    filtered reference carry over untouched.  If a fresh measurement is
    supplied the disturbance estimate is recomputed against the new model,
    otherwise it is left for the next control step to refresh.
    """
    if abs(model_old.ts - model_new.ts) > 1e-9:
        raise ConfigurationError(
            f"cannot switch between models sampled at {model_old.ts} s "
            f"and {model_new.ts} s")
    y_pred_old = float(model_old.c_vec @ state.s) + model_old.y_offset
    s_new = reanchor_state(model_old, model_new, state.s)
    d_est = state.d_est if y_meas is None else y_meas - y_pred_old
    return replace(state, s=s_new, d_est=d_est)
