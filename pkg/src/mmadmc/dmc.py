"""Dynamic matrix control with a state-space free response.

The classic DMC free response is a truncated convolution over N past moves;
here it is replaced by rolling the discretized local model forward with the
input held, which removes the truncation horizon entirely (predictions do
not depend on how many step-response samples were kept).  A constant output
disturbance estimate, measured minus model output, is added across the
prediction horizon, which is what gives offset-free tracking.

Only the first computed move is applied each sample.  The applied move is
clamped to the actuator range and the internal model is advanced with the
clamped value, so saturation does not wind up the predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    ConfigurationError,
    InvalidParameterError,
    NumericError,
    RangeError,
)
from .linmodel import LinearModel


@dataclass(frozen=True)
class DmcConfig:
    """Controller tuning.

    n1 is the plant's pure delay in samples (0 = none): predictions and the
    dynamic matrix start at step-response sample n1 + 1.  u_scale is the
    actuator span (W) represented by one controller input unit;
    move-suppression weights are applied in controller units, so the same
    (q_weight, r_weight) pair keeps its meaning across plants whose gains
    differ by orders of magnitude.  u_min/u_max and du_max are in W.
    """

    ts: float
    p_horizon: int
    m_horizon: int
    alpha: float
    q_weight: float | Sequence[float] = 1.0
    r_weight: float | Sequence[float] = 0.05
    n1: int = 0
    u_min: float = 0.0
    u_max: float = float("inf")
    du_max: float | None = None
    u_scale: float = 1.0

    def __post_init__(self):
        if self.ts <= 0.0:
            raise InvalidParameterError(f"ts must be positive: {self.ts}")
        if self.p_horizon < 1:
            raise InvalidParameterError(
                f"prediction horizon must be >= 1: {self.p_horizon}")
        if not 1 <= self.m_horizon <= self.p_horizon:
            raise InvalidParameterError(
                f"control horizon must satisfy 1 <= M <= P: "
                f"M={self.m_horizon}, P={self.p_horizon}")
        if self.n1 < 0:
            raise InvalidParameterError(f"n1 must be >= 0: {self.n1}")
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidParameterError(
                f"reference filter constant must be in [0, 1): {self.alpha}")
        if not self.u_min < self.u_max:
            raise InvalidParameterError(
                f"u_min must be below u_max: [{self.u_min}, {self.u_max}]")
        if self.du_max is not None and self.du_max <= 0.0:
            raise InvalidParameterError(
                f"du_max must be positive when set: {self.du_max}")
        if self.u_scale <= 0.0:
            raise InvalidParameterError(
                f"u_scale must be positive: {self.u_scale}")
        for name, w, horizon in (("q_weight", self.q_weight, self.p_horizon),
                                 ("r_weight", self.r_weight, self.m_horizon)):
            vec = np.atleast_1d(np.asarray(w, dtype=float))
            if vec.ndim != 1 or len(vec) not in (1, horizon):
                raise InvalidParameterError(
                    f"{name} must be a scalar or length-{horizon} vector")
            if np.any(vec < 0.0):
                raise InvalidParameterError(f"{name} must be nonnegative")
        if not np.any(np.atleast_1d(np.asarray(self.q_weight, float)) > 0.0):
            raise InvalidParameterError("q_weight must not be all zero")

    def weight_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        q = np.atleast_1d(np.asarray(self.q_weight, dtype=float))
        r = np.atleast_1d(np.asarray(self.r_weight, dtype=float))
        if len(q) == 1:
            q = np.full(self.p_horizon, q[0])
        if len(r) == 1:
            r = np.full(self.m_horizon, r[0])
        return q, r


@dataclass(frozen=True)
class DmcGain:
    """Precomputed unconstrained DMC solution for one local model."""

    k_mat: np.ndarray          # (M, P)
    dyn_mat: np.ndarray        # (P, M) dynamic matrix in controller units
    model_index: int = 0

    @property
    def first_row(self) -> np.ndarray:
        return self.k_mat[0]


@dataclass(frozen=True)
class ControllerState:
    """Everything the controller carries between samples.

    s is the internal model state in deviation coordinates; u_prev the last
    applied power (W); d_est the current output disturbance estimate (degC);
    yd_prev the last filtered reference value (None until the first sample,
    where the filter is seeded from the measurement).
    """

    s: np.ndarray
    u_prev: float
    d_est: float = 0.0
    yd_prev: float | None = None


@dataclass(frozen=True)
class ControlResult:
    """Per-sample diagnostics from control_step."""

    u_applied: float
    du_applied: float
    du_requested: float
    saturated: bool
    d_est: float
    y_model: float
    y_free: np.ndarray
    y_ref: np.ndarray
    error: np.ndarray


def build_dynamic_matrix(g: Sequence[float], p_horizon: int, m_horizon: int,
                         n1: int = 0) -> np.ndarray:
    """P x M lower-banded Toeplitz matrix of step-response samples.

    Row i predicts the output at t + n1 + i + 1 (0-based i); the move j
    samples into the future contributes step sample g[n1 + i - j] (g[0]
    being the first post-step sample).  Entries for moves the predicted
    sample cannot yet see are zero.
    """
    if not 1 <= m_horizon <= p_horizon:
        raise InvalidParameterError(
            f"need 1 <= M <= P, got M={m_horizon}, P={p_horizon}")
    if n1 < 0:
        raise InvalidParameterError(f"n1 must be >= 0: {n1}")
    g = np.asarray(g, dtype=float)
    needed = n1 + p_horizon
    if len(g) < needed:
        raise RangeError(
            f"step response too short: need {needed} samples, have {len(g)}")
    mat = np.zeros((p_horizon, m_horizon))
    for i in range(p_horizon):
        for j in range(m_horizon):
            k = n1 + i - j
            if k >= 0:
                mat[i, j] = g[k]
    return mat


def compute_gain(dyn_mat: np.ndarray, q_weights, r_weights) -> np.ndarray:
    """K = (G'QG + R)^-1 G'Q solved through a Cholesky factorization.

    q_weights/r_weights are scalars or per-sample vectors forming diagonal Q
    (P x P) and R (M x M).  R may be zero as long as G'QG itself is positive
    definite (the deadbeat case).
    """
    g = np.atleast_2d(np.asarray(dyn_mat, dtype=float))
    p, m = g.shape
    q = np.atleast_1d(np.asarray(q_weights, dtype=float))
    r = np.atleast_1d(np.asarray(r_weights, dtype=float))
    if len(q) == 1:
        q = np.full(p, q[0])
    if len(r) == 1:
        r = np.full(m, r[0])
    if len(q) != p or len(r) != m:
        raise InvalidParameterError(
            f"weight lengths {len(q)}/{len(r)} do not match G shape {g.shape}")
    gtq = g.T * q
    h = gtq @ g + np.diag(r)
    try:
        factor = cho_factor(h, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "G'QG + R is not positive definite; increase r_weight or check "
            f"the step response ({exc})"
        ) from exc
    return cho_solve(factor, gtq)


def make_gain(model: LinearModel, cfg: DmcConfig, model_index: int = 0) -> DmcGain:
    """Dynamic matrix and gain for one local model under the given tuning.

    The step response is converted to controller input units (u_scale W per
    unit) before the matrix is formed.
    """
    needed = cfg.n1 + cfg.p_horizon
    g = np.asarray(model.step_resp, dtype=float)
    if len(g) < needed:
        raise RangeError(
            f"model keeps {len(g)} step-response samples but the horizons "
            f"need {needed}")
    dyn = build_dynamic_matrix(g * cfg.u_scale, cfg.p_horizon,
                               cfg.m_horizon, cfg.n1)
    q, r = cfg.weight_vectors()
    k_mat = compute_gain(dyn, q, r)
    return DmcGain(k_mat=k_mat, dyn_mat=dyn, model_index=model_index)


def reference_trajectory(yd_prev: float, setpoints: Sequence[float],
                         alpha: float) -> np.ndarray:
    """First-order filtered reference over the prediction horizon.

    yd(k+i) = alpha * yd(k+i-1) + (1 - alpha) * ysp(k+i), seeded at yd_prev.
    """
    sp = np.asarray(setpoints, dtype=float)
    out = np.empty(len(sp))
    prev = yd_prev
    for i, target in enumerate(sp):
        prev = alpha * prev + (1.0 - alpha) * target
        out[i] = prev
    return out


def predict_free_response(model: LinearModel, state: ControllerState,
                          p_horizon: int, n1: int = 0) -> np.ndarray:
    """Absolute output prediction with the input frozen at the last value.

    Rolls the internal discrete model n1 + P samples ahead from the
    controller state and returns the outputs at t + n1 + 1 .. t + n1 + P,
    each shifted by the model offset and the current disturbance estimate.
    No truncation horizon is involved: the rollout replaces the classic
    finite convolution over kept step-response samples.
    """
    if p_horizon < 1:
        raise RangeError(f"prediction horizon must be >= 1: {p_horizon}")
    du = state.u_prev - model.u_offset
    s = np.asarray(state.s, dtype=float)
    out = np.empty(p_horizon)
    for k in range(n1 + p_horizon):
        s = model.ad @ s + model.bd * du
        if k >= n1:
            out[k - n1] = model.c_vec @ s
    return out + model.y_offset + state.d_est


def init_controller(model: LinearModel, u_initial: float) -> ControllerState:
    """Controller state at batch start: model at its operating point."""
    return ControllerState(
        s=np.zeros(model.n_states), u_prev=float(u_initial),
        d_est=0.0, yd_prev=None,
    )


def control_step(
    model: LinearModel,
    gain: DmcGain,
    state: ControllerState,
    y_meas: float,
    setpoints: Sequence[float],
    cfg: DmcConfig,
) -> tuple[ControllerState, ControlResult]:
    """One DMC sample: estimate disturbance, predict, solve, clamp, advance.

    setpoints holds the next P setpoint values (absolute degC).  Returns the
    advanced controller state and the applied power with diagnostics.
    """
    if not math.isfinite(y_meas):
        raise NumericError(f"non-finite temperature measurement: {y_meas!r}")
    setpoints = np.asarray(setpoints, dtype=float)
    if len(setpoints) != cfg.p_horizon:
        raise RangeError(
            f"need {cfg.p_horizon} future setpoints, got {len(setpoints)}")
    if gain.k_mat.shape != (cfg.m_horizon, cfg.p_horizon):
        raise ConfigurationError(
            f"gain shape {gain.k_mat.shape} does not match horizons "
            f"(M={cfg.m_horizon}, P={cfg.p_horizon})")

    y_model = float(model.c_vec @ state.s) + model.y_offset
    d_est = y_meas - y_model
    state = replace(state, d_est=d_est)

    y_free = predict_free_response(model, state, cfg.p_horizon, cfg.n1)
    yd_seed = state.yd_prev if state.yd_prev is not None else y_meas
    y_ref = reference_trajectory(yd_seed, setpoints, cfg.alpha)
    error = y_ref - y_free

    du_units = float(gain.first_row @ error)
    du_requested = du_units * cfg.u_scale
    du_target = du_requested
    if cfg.du_max is not None:
        du_target = min(max(du_target, -cfg.du_max), cfg.du_max)
    u_target = state.u_prev + du_target
    u_applied = min(max(u_target, cfg.u_min), cfg.u_max)
    saturated = u_applied != state.u_prev + du_requested
    du_applied = u_applied - state.u_prev

    s_next = model.ad @ state.s + model.bd * (u_applied - model.u_offset)
    next_state = ControllerState(
        s=s_next, u_prev=u_applied, d_est=d_est, yd_prev=float(y_ref[0]),
    )
    result = ControlResult(
        u_applied=u_applied, du_applied=du_applied,
        du_requested=du_requested, saturated=saturated,
        d_est=d_est, y_model=y_model,
        y_free=y_free, y_ref=y_ref, error=error,
    )
    return next_state, result
