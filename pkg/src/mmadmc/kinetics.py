"""Nonlinear batch MMA solution-polymerization reactor model.

Free-radical polymerization of methyl methacrylate in solvent, closed by the
long-chain and quasi-steady-state approximations: the dynamic states are
conversion, initiator concentration, reactor temperature and jacket-oil
temperature.  Diffusion control of propagation and termination (glass and
gel/Trommsdorff effects) follows the Chiu-Carratt-Soong (CCS) correction,
which couples the termination constant to the total radical concentration
through an implicit scalar equation.

Everything here is a pure function of immutable parameter records, safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

from .errors import InvalidParameterError, NumericError

R_GAS = 8.314  # J/(mol K)

# CCS fixed-point iteration on the termination constant
_CCS_MAX_ITER = 100
_CCS_TOL = 1e-12
_CCS_DAMPING = 0.5


class ReactorState(NamedTuple):
    """Dynamic reactor state.

    x          -- monomer conversion (mass fraction, 0..1)
    i_conc     -- initiator concentration (mol/L)
    t_reactor  -- reactor content temperature (K)
    t_jacket   -- jacket-oil temperature (K)
    """

    x: float
    i_conc: float
    t_reactor: float
    t_jacket: float

    def validate(self) -> None:
        if not 0.0 <= self.x <= 1.0:
            raise InvalidParameterError(f"conversion out of [0, 1]: {self.x}")
        if self.i_conc < 0.0:
            raise InvalidParameterError(f"negative initiator concentration: {self.i_conc}")
        if self.t_reactor <= 0.0 or self.t_jacket <= 0.0:
            raise InvalidParameterError(
                f"temperatures must be absolute (K > 0): "
                f"T={self.t_reactor}, Tj={self.t_jacket}"
            )


class RateSet(NamedTuple):
    """Rate constants at one (T, [I], phi_p) point, after CCS correction.

    kd         -- initiator decomposition (1/s)
    kp         -- propagation, diffusion-corrected (L/(mol s))
    kt         -- termination, diffusion-corrected (L/(mol s))
    kf         -- chain transfer to monomer (L/(mol s))
    lambda0    -- total live-radical concentration (mol/L)
    d_free_vol -- free-volume diffusion factor D (dimensionless)
    """

    kd: float
    kp: float
    kt: float
    kf: float
    lambda0: float
    d_free_vol: float


@dataclass(frozen=True)
class PlantParams:
    """Kinetic and thermal constants of the reactor.

    Arrhenius constants use k = pre * exp(-E / (R_GAS * T)).  Densities are
    g/cm3, energies J/mol, heat-transfer terms W/K, thermal capacitances J/K.
    See params/default.yaml for the documented default set and its sources.
    """

    kd0: float          # initiator decomposition pre-factor (1/s)
    ed: float           # decomposition activation energy (J/mol)
    kp0_pre: float      # propagation pre-factor (L/(mol s))
    ep: float           # propagation activation energy (J/mol)
    kt0_pre: float      # termination pre-factor (L/(mol s))
    et: float           # termination activation energy (J/mol)
    kf_pre: float       # transfer-to-monomer pre-factor (L/(mol s))
    ef: float           # transfer activation energy (J/mol)
    f: float            # initiator efficiency (0 < f <= 1)
    theta_p: float      # CCS propagation diffusion parameter (s)
    theta_t: float      # CCS termination diffusion parameter (s)
    ccs_a: float        # free-volume constant A
    ccs_b: float        # free-volume constant B
    rho_m: float        # monomer density (g/cm3)
    rho_p: float        # polymer density (g/cm3)
    f_s: float          # solvent volume fraction of the feed (0 <= f_s < 1)
    m0: float           # initial monomer mass (g)
    m_cp: float         # reactor-content thermal capacitance m*Cp (J/K)
    mo_cpo: float       # jacket-oil thermal capacitance mo*Cpo (J/K)
    ua_r: float         # reactor-jacket heat transfer UA (W/K)
    ua_inf: float       # reactor-ambient loss UA (W/K)
    ua_o_inf: float     # jacket-ambient loss UA (W/K)
    alpha_heater: float # heater effectiveness (dimensionless)
    p_max: float        # per-heater maximum power (W)
    t_amb: float        # ambient temperature (K)
    delta_hp: float     # propagation exotherm magnitude -dHp (J/mol)
    m_conc0: float      # initial monomer concentration (mol/L)
    v0: float           # initial mixture volume (L)

    def __post_init__(self):
        positive = (
            "kd0", "kp0_pre", "kt0_pre", "kf_pre", "rho_m", "rho_p",
            "m0", "m_cp", "mo_cpo", "ua_r", "ua_inf", "ua_o_inf",
            "alpha_heater", "p_max", "t_amb", "delta_hp", "m_conc0", "v0",
        )
        for name in positive:
            if getattr(self, name) <= 0.0:
                raise InvalidParameterError(f"{name} must be strictly positive")
        for name in ("ed", "ep", "et", "ef", "theta_p", "theta_t"):
            if getattr(self, name) < 0.0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if not 0.0 < self.f <= 1.0:
            raise InvalidParameterError(f"initiator efficiency f out of (0, 1]: {self.f}")
        if not 0.0 <= self.f_s < 1.0:
            raise InvalidParameterError(f"solvent fraction f_s out of [0, 1): {self.f_s}")
        if self.rho_p <= self.rho_m:
            raise InvalidParameterError(
                "rho_p must exceed rho_m (polymerization shrinks the mixture)"
            )

    @property
    def eps(self) -> float:
        """Volumetric shrinkage factor."""
        return volumetric_factor(self.rho_p, self.rho_m)

    @property
    def beta(self) -> float:
        """Solvent dilution parameter f_s / (1 - f_s)."""
        return self.f_s / (1.0 - self.f_s)

    @classmethod
    def from_dict(cls, d: dict) -> "PlantParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameterError(f"unknown plant parameters: {sorted(unknown)}")
        missing = known - set(d)
        if missing:
            raise InvalidParameterError(f"missing plant parameters: {sorted(missing)}")
        return cls(**{k: float(v) for k, v in d.items()})


def volumetric_factor(rho_p: float, rho_m: float) -> float:
    """Volumetric shrinkage factor (rho_p - rho_m) / rho_p."""
    if rho_p <= 0.0 or rho_m <= 0.0:
        raise InvalidParameterError("densities must be strictly positive")
    return (rho_p - rho_m) / rho_p


def mixture_volume(x: float, params: PlantParams) -> float:
    """Instantaneous mixture volume at conversion x.

    Returned in the unit implied by m0/rho_m (cm3 for grams and g/cm3).
    Shrinks linearly with conversion; the solvent contribution enters
    through beta = f_s / (1 - f_s).
    """
    if params.f_s >= 1.0:
        raise InvalidParameterError(f"solvent fraction f_s must be < 1: {params.f_s}")
    return (params.m0 / params.rho_m) * (1.0 - params.eps * x + params.beta)


def polymer_volume_fraction(x: float, params: PlantParams) -> float:
    """Polymer volume fraction of the mixture at conversion x.

    Ratio of polymer volume m0*x/rho_p to the shrinking mixture volume,
    which reduces to x*(1 - eps) / (1 - eps*x + beta).
    """
    return x * (1.0 - params.eps) / (1.0 - params.eps * x + params.beta)


def _arrhenius(pre: float, e_act: float, temp: float) -> float:
    return pre * math.exp(-e_act / (R_GAS * temp))


def ccs_rate_constants(
    temp: float, i_conc: float, phi_p: float, params: PlantParams
) -> RateSet:
    """Rate constants with the CCS diffusion correction at one state point.

    The termination constant solves the implicit pair

        1/kt = 1/kt0 + theta_t * lambda0 / D,
        lambda0 = sqrt(2 f kd [I] / kt),

    with D = exp[(1 - phi_p) / (A + B (1 - phi_p))].  The scalar fixed
    point on kt is iterated with damping 0.5 from kt0, converging when the
    relative residual of the first equation drops below 1e-12; a bisection
    fallback covers the (rare) non-contracting cases.  Propagation then
    follows explicitly from 1/kp = 1/kp0 + theta_p * lambda0 / D.
    """
    denom = params.ccs_a + params.ccs_b * (1.0 - phi_p)
    if denom <= 0.0:
        raise InvalidParameterError(
            f"free-volume denominator A + B(1-phi_p) must be positive, got {denom}"
        )
    d_factor = math.exp((1.0 - phi_p) / denom)

    kd = _arrhenius(params.kd0, params.ed, temp)
    kp0 = _arrhenius(params.kp0_pre, params.ep, temp)
    kt0 = _arrhenius(params.kt0_pre, params.et, temp)
    kf = _arrhenius(params.kf_pre, params.ef, temp)

    # c * kt^-1/2 is the radical-concentration term of the implicit equation
    radical_sq = 2.0 * params.f * kd * max(i_conc, 0.0)
    c_t = params.theta_t * math.sqrt(radical_sq) / d_factor

    if c_t == 0.0:
        kt = kt0
    else:
        kt = _solve_kt(kt0, c_t)

    lambda0 = math.sqrt(radical_sq / kt)
    kp = 1.0 / (1.0 / kp0 + params.theta_p * lambda0 / d_factor)
    return RateSet(kd=kd, kp=kp, kt=kt, kf=kf, lambda0=lambda0, d_free_vol=d_factor)


def _solve_kt(kt0: float, c_t: float) -> float:
    """Solve 1/kt = 1/kt0 + c_t / sqrt(kt) for kt in (0, kt0]."""
    inv_kt0 = 1.0 / kt0
    kt = kt0
    residual = math.inf
    for _ in range(_CCS_MAX_ITER):
        rhs = inv_kt0 + c_t / math.sqrt(kt)
        residual = abs(1.0 - kt * rhs)  # residual relative to 1/kt
        if residual <= _CCS_TOL:
            return kt
        kt = (1.0 - _CCS_DAMPING) * kt + _CCS_DAMPING / rhs

    # Fallback: r(kt) = 1/kt - 1/kt0 - c_t/sqrt(kt) is +inf at 0+ and
    # negative at kt0, so the root brackets cleanly.
    lo, hi = kt0 * 1e-16, kt0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r_mid = 1.0 / mid - inv_kt0 - c_t / math.sqrt(mid)
        if r_mid > 0.0:
            lo = mid
        else:
            hi = mid
        rhs = inv_kt0 + c_t / math.sqrt(mid)
        if abs(1.0 - mid * rhs) <= _CCS_TOL:
            return mid
    raise NumericError(
        f"CCS termination solve failed to converge (last residual {residual:.3e})",
        residual=residual,
    )


def derivatives(
    state: ReactorState, power: float, params: PlantParams
) -> tuple[float, float, float, float]:
    """Time derivatives of the four reactor states.

    power is the electrical power per heater (W); two identical heaters feed
    the oil loop with effectiveness alpha, hence the 2*alpha*P source term.
    Returns (dx/dt, d[I]/dt, dT/dt, dTj/dt) in state units per second.
    """
    x, i_conc, temp, t_j = state
    phi_p = polymer_volume_fraction(x, params)
    rates = ccs_rate_constants(temp, i_conc, phi_p, params)

    growth = (rates.kp + rates.kf) * (1.0 - x) * rates.lambda0
    f1 = growth
    # volume shrinkage concentrates the remaining initiator
    shrink = params.eps / (1.0 - params.eps * x + params.beta)
    f2 = -rates.kd * i_conc + shrink * i_conc * growth

    q_rxn = (
        params.delta_hp * rates.kp * params.v0 * params.m_conc0
        * (1.0 - x) * rates.lambda0
    )
    f3 = (
        q_rxn
        - params.ua_r * (temp - t_j)
        - params.ua_inf * (temp - params.t_amb)
    ) / params.m_cp
    f4 = (
        2.0 * params.alpha_heater * power
        + params.ua_r * (temp - t_j)
        - params.ua_o_inf * (t_j - params.t_amb)
    ) / params.mo_cpo
    return (f1, f2, f3, f4)
