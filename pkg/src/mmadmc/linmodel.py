"""Local linear models of the reactor along its temperature trajectory.

Each operating point yields a 4-state Jacobian pair (A, b), the scalar
transfer function from heater power to reactor temperature, and the sampled
step response the predictive controller consumes.  The reaction rows of A
come from central finite differences through the full nonlinear model (the
implicit CCS solve makes hand-coded partials fragile); the thermal rows are
fixed by the energy balances and are assigned in closed form:

    a33 = -(UA_r + UA_inf) / mCp      a34 = UA_r / mCp
    a43 =  UA_r / moCpo               a44 = -(UA_r + UA_oinf) / moCpo

Note the closed-form a33 carries only the heat-transfer sensitivity; the
Arrhenius temperature sensitivity of the exotherm is deliberately left to
the disturbance correction of the controller rather than the model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .errors import InvalidParameterError, NumericError, RangeError
from .integrator import IntegratorConfig, simulate_open_loop
from .kinetics import PlantParams, ReactorState, derivatives

CELSIUS_ZERO = 273.15

# finite-difference perturbation: max(REL * |value|, floor); the floors
# reflect each variable's natural scale so boundary (one-sided) stencils
# keep their rounding noise well below the Jacobian entries
_FD_REL = 1e-6
_FD_FLOOR_STATE = (1e-7, 1e-8, 1e-4, 1e-4)  # x, [I], T, Tj
_FD_FLOOR_POWER = 1e-3

# settlement detection for sampled step responses
SETTLE_TOL = 1e-4
SETTLE_CAP = 2000

_STATE_LOWER = (0.0, 0.0, None, None)  # x >= 0, [I] >= 0; temperatures free
_STATE_UPPER = (1.0, None, None, None)


@dataclass(frozen=True)
class OperatingPoint:
    """A point on the nominal batch trajectory used for linearization."""

    state_s: ReactorState
    power_s: float
    time_s: float


@dataclass(frozen=True)
class LinearModel:
    """Operating point plus everything DMC needs from the local dynamics.

    step_resp holds the reactor-temperature response (degC) to a unit step
    of per-heater power (W), sampled every ts seconds starting one sample
    after the step.  dc_gain is None for integrating models.  ad/bd are the
    exact zero-order-hold discretization at ts, used for the controller's
    internal prediction.  y_offset/u_offset translate between deviation
    coordinates and absolute output (degC) / input (W).
    """

    a_mat: np.ndarray
    b_vec: np.ndarray
    c_vec: np.ndarray
    tf_num: np.ndarray
    tf_den: np.ndarray
    step_resp: np.ndarray
    dc_gain: float | None
    integrating: bool
    n_settle: int
    ts: float
    ad: np.ndarray
    bd: np.ndarray
    y_offset: float = 0.0
    u_offset: float = 0.0
    stable: bool = True
    op: OperatingPoint | None = None

    @property
    def n_states(self) -> int:
        return self.a_mat.shape[0]

    @classmethod
    def from_state_space(
        cls,
        a_mat,
        b_vec,
        c_vec,
        ts: float,
        n_samples: int = 200,
        y_offset: float = 0.0,
        u_offset: float = 0.0,
        op: OperatingPoint | None = None,
    ) -> "LinearModel":
        """Build a model directly from (A, b, c); handy for synthetic plants."""
        a = np.atleast_2d(np.asarray(a_mat, dtype=float))
        b = np.asarray(b_vec, dtype=float).reshape(-1)
        c = np.asarray(c_vec, dtype=float).reshape(-1)
        num, den = ss_to_tf(a, b, c)
        resp = step_response(a, b, c, ts, n_samples)
        ad, bd = zoh_discretize(a, b, ts)
        n_settle = settle_length(resp.g, resp.dc_gain)
        stable = bool(np.max(np.linalg.eigvals(a).real) <= 1e-9)
        return cls(
            a_mat=a, b_vec=b, c_vec=c,
            tf_num=_trim_leading(num), tf_den=den,
            step_resp=resp.g, dc_gain=resp.dc_gain, integrating=resp.integrating,
            n_settle=n_settle, ts=ts, ad=ad, bd=bd,
            y_offset=y_offset, u_offset=u_offset, stable=stable, op=op,
        )


@dataclass(frozen=True)
class StepResponse:
    g: np.ndarray
    dc_gain: float | None
    integrating: bool


def _fd_derivative(fun, base: float, h: float, lower, upper) -> np.ndarray:
    """Directional derivative of a vector function of one scalar.

    Central difference where the domain allows, otherwise a second-order
    one-sided stencil pressed against the bound.
    """
    lo_ok = lower is None or base - h >= lower
    hi_ok = upper is None or base + h <= upper
    if lo_ok and hi_ok:
        return (fun(base + h) - fun(base - h)) / (2.0 * h)
    if hi_ok:
        return (-3.0 * fun(base) + 4.0 * fun(base + h) - fun(base + 2.0 * h)) / (2.0 * h)
    return (3.0 * fun(base) - 4.0 * fun(base - h) + fun(base - 2.0 * h)) / (2.0 * h)


def linearize(
    op: OperatingPoint, params: PlantParams, fd_scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian pair (A, b) of the reactor model at an operating point.

    fd_scale multiplies the finite-difference steps (used by the step-halving
    self-check); it does not touch the closed-form thermal entries.
    """
    s0 = np.array(op.state_s, dtype=float)

    def f_at(vec: np.ndarray) -> np.ndarray:
        return np.array(derivatives(ReactorState(*vec), op.power_s, params))

    a = np.zeros((4, 4))
    for j in range(4):
        h = max(_FD_REL * abs(s0[j]), _FD_FLOOR_STATE[j]) * fd_scale

        def f_of_sj(v, j=j):
            vec = s0.copy()
            vec[j] = v
            return f_at(vec)

        try:
            a[:, j] = _fd_derivative(f_of_sj, s0[j], h, _STATE_LOWER[j], _STATE_UPPER[j])
        except (ValueError, NumericError) as exc:
            raise NumericError(
                f"derivative evaluation failed for Jacobian column {j} "
                f"(state {ReactorState._fields[j]}): {exc}"
            ) from exc

    # fixed energy-balance entries; see module docstring
    a[0, 3] = 0.0
    a[1, 3] = 0.0
    a33 = -(params.ua_r + params.ua_inf) / params.m_cp
    a34 = params.ua_r / params.m_cp
    a43 = params.ua_r / params.mo_cpo
    a44 = -(params.ua_r + params.ua_o_inf) / params.mo_cpo
    row3_scale = abs(a34)
    row4_scale = max(abs(a43), abs(a44))
    _assert_close(a[2, 3], a34, "a34", row3_scale)
    _assert_close(a[3, 2], a43, "a43", row4_scale)
    _assert_close(a[3, 3], a44, "a44", row4_scale)
    _assert_close(a[3, 0], 0.0, "a41", row4_scale)
    _assert_close(a[3, 1], 0.0, "a42", row4_scale)
    a[2, 2] = a33
    a[2, 3] = a34
    a[3, :] = (0.0, 0.0, a43, a44)

    h_p = max(_FD_REL * abs(op.power_s), _FD_FLOOR_POWER)

    def f_of_p(p):
        return np.array(derivatives(op.state_s, p, params))

    b_fd = _fd_derivative(f_of_p, op.power_s, h_p, None, None)
    b4 = 2.0 * params.alpha_heater / params.mo_cpo
    _assert_close(b_fd[3], b4, "b4", abs(b4))
    _assert_close(b_fd[0], 0.0, "b1", abs(b4))
    _assert_close(b_fd[1], 0.0, "b2", abs(b4))
    _assert_close(b_fd[2], 0.0, "b3", abs(b4))
    b = np.array([0.0, 0.0, 0.0, b4])
    return a, b


def _assert_close(fd_value: float, exact: float, name: str,
                  scale: float) -> None:
    if abs(fd_value - exact) > 1e-6 * max(abs(exact), scale):
        raise NumericError(
            f"finite-difference entry {name}={fd_value!r} disagrees with "
            f"its closed form {exact!r}"
        )


def ss_to_tf(a_mat, b_vec, c_vec) -> tuple[np.ndarray, np.ndarray]:
    """Scalar transfer function c (sI - A)^-1 b by the Faddeev-LeVerrier recurrence.

    Returns (num, den): den has length n+1 with leading 1, num length n with
    leading coefficient of s^(n-1) (structurally zero entries stay in place).
    """
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b = np.asarray(b_vec, dtype=float).reshape(-1)
    c = np.asarray(c_vec, dtype=float).reshape(-1)
    n = a.shape[0]
    den = np.zeros(n + 1)
    den[0] = 1.0
    num = np.zeros(n)
    bk = np.eye(n)
    for k in range(1, n + 1):
        num[k - 1] = c @ bk @ b
        abk = a @ bk
        den[k] = -np.trace(abk) / k
        bk = abk + den[k] * np.eye(n)
    return num, den


def _trim_leading(num: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    """Drop structurally-zero leading numerator coefficients."""
    scale = np.max(np.abs(num))
    if scale == 0.0:
        return num[-1:]
    k = 0
    while k < len(num) - 1 and abs(num[k]) <= rel * scale:
        k += 1
    return num[k:]


def zoh_discretize(a_mat, b_vec, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b = np.asarray(b_vec, dtype=float).reshape(-1)
    n = a.shape[0]
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = a * ts
    m[:n, n] = b * ts
    phi = expm(m)
    return phi[:n, :n], phi[:n, n]


def step_response(a_mat, b_vec, c_vec, ts: float, n: int) -> StepResponse:
    """First n samples of the unit-step response, plus the dc gain.

    Samples start at t = ts (one full sample after the step).  A singular
    state matrix marks the model integrating and leaves dc_gain as None.
    """
    if ts <= 0.0:
        raise InvalidParameterError(f"sampling period must be positive: {ts}")
    if n < 1:
        raise RangeError(f"sample count must be >= 1: {n}")
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b = np.asarray(b_vec, dtype=float).reshape(-1)
    c = np.asarray(c_vec, dtype=float).reshape(-1)
    ad, bd = zoh_discretize(a, b, ts)

    integrating = bool(
        not np.all(np.isfinite(a)) or np.linalg.cond(a) > 1e14)
    dc_gain = None
    if not integrating:
        dc_gain = float(-c @ np.linalg.solve(a, b))

    g = np.empty(n)
    x = np.zeros(a.shape[0])
    for k in range(n):
        x = ad @ x + bd
        g[k] = c @ x
    return StepResponse(g=g, dc_gain=dc_gain, integrating=integrating)


def settle_length(g: np.ndarray, dc_gain: float | None,
                  tol: float = SETTLE_TOL, cap: int = SETTLE_CAP) -> int:
    """First sample index (1-based) where the response has settled on dc_gain.

    Integrating models never settle and report the cap.
    """
    if dc_gain is None:
        return cap
    band = tol * abs(dc_gain)
    for k in range(len(g)):
        if abs(g[k] - dc_gain) < band:
            return k + 1
    return min(len(g), cap)


def build_model_bank(
    state0: ReactorState,
    power_profile: Sequence[float],
    breakpoints: Sequence[float],
    params: PlantParams,
    integ_cfg: IntegratorConfig,
    ts: float,
    min_samples: int = 50,
    settle_tol: float = SETTLE_TOL,
    settle_cap: int = SETTLE_CAP,
) -> list[LinearModel]:
    """Linearize along a nominal open-loop run at the given breakpoint times.

    The nominal trajectory is produced by simulating the plant under the
    declared power profile (a reproducible stand-in for the closed-loop
    trajectory); the state at each breakpoint becomes an operating point.
    Breakpoints must be strictly increasing and land on sample boundaries of
    the profile (within rounding).
    """
    bps = list(breakpoints)
    if not bps:
        raise RangeError("at least one breakpoint is required")
    if any(t2 <= t1 for t1, t2 in zip(bps, bps[1:])):
        raise RangeError(f"breakpoints must be strictly increasing: {bps}")

    period = integ_cfg.sample_period
    horizon = len(power_profile) * period
    indices = []
    for t in bps:
        if t < 0.0 or t > horizon + 1e-9:
            raise RangeError(
                f"breakpoint {t} s beyond simulated horizon {horizon} s"
            )
        idx = int(round(t / period))
        if abs(idx * period - t) > 1e-6 * max(period, 1.0):
            raise RangeError(
                f"breakpoint {t} s does not land on a {period} s sample boundary"
            )
        indices.append(idx)

    run = simulate_open_loop(state0, power_profile, params, integ_cfg)

    bank = []
    for t, idx in zip(bps, indices):
        power_idx = min(idx, len(power_profile) - 1)
        op = OperatingPoint(
            state_s=run.states[idx],
            power_s=float(power_profile[power_idx]),
            time_s=float(t),
        )
        bank.append(
            assemble_model(op, params, ts, min_samples=min_samples,
                           settle_tol=settle_tol, settle_cap=settle_cap)
        )
    return bank


def assemble_model(
    op: OperatingPoint,
    params: PlantParams,
    ts: float,
    min_samples: int = 50,
    settle_tol: float = SETTLE_TOL,
    settle_cap: int = SETTLE_CAP,
) -> LinearModel:
    """Full LinearModel (Jacobians, transfer function, step response) at one point."""
    a, b = linearize(op, params)
    c = np.array([0.0, 0.0, 1.0, 0.0])
    num, den = ss_to_tf(a, b, c)

    scale = np.max(np.abs(num))
    if scale > 0.0 and abs(num[0]) > 1e-12 * scale:
        raise NumericError(
            f"power-to-temperature numerator should be quadratic; "
            f"leading coefficient {num[0]!r} is not structurally zero"
        )

    eig_real = np.linalg.eigvals(a).real
    stable = bool(np.max(eig_real) <= 1e-9)
    if not stable:
        warnings.warn(
            f"operating point at t={op.time_s:.0f} s yields an unstable local "
            f"model (max Re(eig) = {np.max(eig_real):.3e} 1/s)",
            stacklevel=2,
        )

    resp = step_response(a, b, c, ts, max(min_samples, 2))
    g = resp.g
    if not resp.integrating and stable:
        band = settle_tol * abs(resp.dc_gain)
        while abs(g[-1] - resp.dc_gain) >= band and len(g) < settle_cap:
            g = step_response(a, b, c, ts, min(2 * len(g), settle_cap)).g
        n_settle = settle_length(g, resp.dc_gain, settle_tol, settle_cap)
        g = g[: max(n_settle, min_samples)]
    else:
        n_settle = settle_cap
        if len(g) < min_samples:
            g = step_response(a, b, c, ts, min_samples).g

    ad, bd = zoh_discretize(a, b, ts)
    return LinearModel(
        a_mat=a, b_vec=b, c_vec=c,
        tf_num=_trim_leading(num), tf_den=den,
        step_resp=g, dc_gain=resp.dc_gain, integrating=resp.integrating,
        n_settle=n_settle, ts=ts, ad=ad, bd=bd,
        y_offset=op.state_s.t_reactor - CELSIUS_ZERO,
        u_offset=op.power_s,
        stable=stable, op=op,
    )
