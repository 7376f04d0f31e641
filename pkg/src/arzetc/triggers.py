"""Event-timing strategies and their derived constants.

Six kinds: {r, p} x {cetc, petc, stc}.  The regular (r) kinds enforce a
strictly decreasing Lyapunov function; the performance-barrier (p) kinds
spend the residual between the Lyapunov value and a decaying barrier to
delay events.  All formulas are shared: an r-kind is the exact c = 0
specialization of its p-kind counterpart, which makes the collapse
property hold bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SimulationError
from .kernels import KernelConstants
from .model import LinearCoeffs

__all__ = [
    "TRIGGER_KINDS",
    "TriggerParams",
    "DerivedConstants",
    "MonitorState",
    "TriggerSignals",
    "kind_family",
    "kind_barrier",
    "effective_c",
    "derive_constants",
    "monitor_rhs",
    "step_monitor",
    "gamma_r",
    "gamma_p",
    "petc_gamma",
    "stc_next_dwell",
    "compute_H",
    "should_update",
]

TRIGGER_KINDS = ("r_cetc", "p_cetc", "r_petc", "p_petc", "r_stc", "p_stc")


def kind_family(kind: str) -> str:
    return kind.split("_", 1)[1]


def kind_barrier(kind: str) -> str:
    return kind.split("_", 1)[0]


@dataclass(frozen=True)
class TriggerParams:
    """Design parameters of the triggering mechanisms.

    kappa1..kappa3 default to None, meaning "derive from the solved
    kernels"; explicit values let a run pin externally chosen trigger
    gains (they are free design parameters subject to Assumption-type
    lower bounds).
    """

    kind: str = "r_cetc"
    theta: float = 1.0
    sigma: float = 0.9
    mu: float = 11.5
    C: float = 8897.4
    eta: float = 1.293
    c: float = 0.0
    m0: float = 0.1
    h: float = 4e-6
    clamp_residual: bool = False
    max_dwell: float = 0.1
    kappa1: float | None = None
    kappa2: float | None = None
    kappa3: float | None = None

    def __post_init__(self):
        if self.kind not in TRIGGER_KINDS:
            raise ConfigurationError(f"unknown trigger kind {self.kind!r}")
        if self.theta <= 0 or not 0.0 < self.sigma < 1.0:
            raise ConfigurationError("need theta > 0 and sigma in (0, 1)")
        if min(self.mu, self.C, self.eta, self.m0, self.h, self.max_dwell) <= 0:
            raise ConfigurationError("mu, C, eta, m0, h, max_dwell must be positive")
        if self.c < 0:
            raise ConfigurationError("resource-aware parameter c must be >= 0")


@dataclass(frozen=True)
class DerivedConstants:
    """All trigger constants computed from the parameter set and kernels."""

    kappa1: float
    kappa2: float
    kappa3: float
    theta_m: float
    r: float
    a: float
    tau_d: float
    b: float
    b_star: float
    rho_c: float        # varrho
    rho_star: float     # varrho*
    eps0: float
    eps1: float
    eps2: float
    eps3: float
    C_lower_bound: float
    theta: float
    mu: float
    C: float
    eta: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class MonitorState:
    """Dynamic trigger state owned by one simulation."""

    m: float
    W: float = 0.0
    V0: float = 0.0
    next_due: float = 0.0


@dataclass(frozen=True)
class TriggerSignals:
    """Per-step quantities the triggers consume."""

    d2: float
    norm_alpha2: float
    norm_beta2: float
    alpha_ell2: float
    W: float


def effective_c(params: TriggerParams) -> float:
    """Regular kinds run the shared formulas with c forced to zero."""
    return params.c if kind_barrier(params.kind) == "p" else 0.0


def derive_constants(params: TriggerParams, kconsts: KernelConstants,
                     coeffs: LinearCoeffs, ell: float) -> DerivedConstants:
    """Evaluate every derived trigger constant, rejecting invalid parameters."""
    v_s, lam2, r0, r1 = coeffs.lambda1, coeffs.lambda2, coeffs.r0, coeffs.r1
    th, sg, mu, C, eta = params.theta, params.sigma, params.mu, params.C, params.eta
    denom = th * (1.0 - sg)
    kappa1 = params.kappa1 if params.kappa1 is not None else kconsts.eps1 / denom
    kappa2 = params.kappa2 if params.kappa2 is not None else kconsts.eps2 / denom
    kappa3 = params.kappa3 if params.kappa3 is not None else kconsts.eps3 / denom

    r = 1.0 / min(math.exp(-mu * ell / v_s) / v_s, r0 ** 2 / lam2)
    c_bound = max(math.exp(mu * ell / v_s) * kappa3, max(kappa1, kappa2) * r / mu)
    if C <= c_bound:
        raise ConfigurationError(
            f"C = {C:.6g} violates the trigger-parameter lower bound "
            f"C > max(e^(mu*ell/v*) kappa3, max(kappa1,kappa2) r / mu) = {c_bound:.6g}")
    theta_m = C * r1 ** 2 * r0 ** 2 * math.exp(mu * ell / lam2)
    b = mu - max(kappa1, kappa2) * r / C
    if b <= 0.0:
        raise ConfigurationError(
            f"decay margin b = mu - max(kappa1,kappa2) r / C = {b:.6g} must be positive")
    if kind_barrier(params.kind) == "p" and kind_family(params.kind) in ("petc", "stc"):
        # the periodic/self-triggered barrier analysis needs eta <= b; allow
        # a 1% margin for externally rounded eta values
        if eta > b * (1.0 + 1e-2):
            raise ConfigurationError(
                f"{params.kind} requires eta <= b, got eta = {eta:.6g}, b = {b:.6g}")
    b_star = min(b, eta)

    a = 1.0 + kconsts.eps0 + eta
    tau_d = math.log(1.0 + sg * a / ((1.0 - sg) * (a + th * theta_m))) / a
    rho_c = (4.0 / r1 ** 2) * max(v_s * kconsts.Ltilde21 * math.exp(mu * ell / v_s),
                                  lam2 * kconsts.Ltilde22 / r0 ** 2)
    rho_star = r0 ** 2 * r1 ** 2 * math.exp(mu * ell / lam2) * rho_c
    return DerivedConstants(
        kappa1=kappa1, kappa2=kappa2, kappa3=kappa3, theta_m=theta_m, r=r,
        a=a, tau_d=tau_d, b=b, b_star=b_star, rho_c=rho_c, rho_star=rho_star,
        eps0=kconsts.eps0, eps1=kconsts.eps1, eps2=kconsts.eps2, eps3=kconsts.eps3,
        C_lower_bound=c_bound, theta=th, mu=mu, C=C, eta=eta)


def _residual_term(W: float, params: TriggerParams) -> float:
    return max(0.0, W) if params.clamp_residual else W


def monitor_rhs(m: float, signals: TriggerSignals, params: TriggerParams,
                consts: DerivedConstants) -> float:
    """Right-hand side of the monitor ODE."""
    c_eff = effective_c(params)
    return (-params.eta * m - consts.theta_m * signals.d2
            + consts.kappa1 * signals.norm_alpha2
            + consts.kappa2 * signals.norm_beta2
            + consts.kappa3 * signals.alpha_ell2
            + c_eff * _residual_term(signals.W, params))


def step_monitor(mon: MonitorState, signals: TriggerSignals, params: TriggerParams,
                 consts: DerivedConstants, dt: float) -> MonitorState:
    """Explicit Euler step of the monitor ODE; continuity across events is
    the caller's responsibility (m never jumps)."""
    if mon.m <= 0.0:
        raise SimulationError(f"monitor entered step non-positive: m = {mon.m:.6g}")
    mon.m = mon.m + dt * monitor_rhs(mon.m, signals, params, consts)
    if mon.m <= 0.0:
        raise SimulationError(
            "monitor variable m became non-positive after an Euler step "
            f"(m = {mon.m:.6g}); dt is too large or the parameter set breaches "
            "the trigger assumptions")
    return mon


def gamma_r(d2: float, m: float, theta: float) -> float:
    """Regular triggering function d^2 - theta*m."""
    return d2 - theta * m


def gamma_p(d2: float, m: float, W: float, params: TriggerParams,
            consts: DerivedConstants) -> float:
    """Performance-barrier triggering function; equals gamma_r when c = 0."""
    c_eff = effective_c(params)
    return d2 - params.theta * m - (c_eff / consts.theta_m) * _residual_term(W, params)


def petc_gamma(kind: str, d2: float, m: float, W: float, params: TriggerParams,
               consts: DerivedConstants) -> float:
    """Periodic triggering function, evaluated at sample instants t = n h."""
    a, th, th_m = consts.a, params.theta, consts.theta_m
    c_eff = params.c if kind_barrier(kind) == "p" else 0.0
    val = ((a + th * th_m) * math.exp(a * params.h) * d2
           - th * th_m * d2 - th * a * m)
    if c_eff != 0.0:
        val -= (a * c_eff / th_m) * math.exp(-c_eff * params.h) * _residual_term(W, params)
    return val


def stc_next_dwell(kind: str, H: float, m: float, W: float, params: TriggerParams,
                   consts: DerivedConstants) -> float:
    """Waiting time until the next event, computed at an event time.

    Always >= tau_d; capped at max_dwell (the log diverges as the state,
    and with it H, approaches zero).
    """
    if H <= 0.0:
        return params.max_dwell
    c_eff = params.c if kind_barrier(kind) == "p" else 0.0
    th = params.theta
    hold = th * consts.theta_m * H / (consts.rho_star + params.eta)
    num = th * m + hold + (c_eff / consts.theta_m) * _residual_term(W, params)
    den = H + hold
    if num <= 0.0:
        return consts.tau_d
    tau_check = math.log(num / den) / (consts.rho_star + params.eta + c_eff)
    return min(params.max_dwell, max(consts.tau_d, tau_check))


def compute_H(alpha: np.ndarray, beta: np.ndarray, coeffs: LinearCoeffs,
              consts: DerivedConstants) -> float:
    """Self-trigger state functional: 3*varrho times the weighted norm."""
    x = coeffs.x
    dx = x[1] - x[0]
    wa = np.exp(-consts.mu * x / coeffs.lambda1) / coeffs.lambda1
    wb = coeffs.r0 ** 2 / coeffs.lambda2 * np.exp(consts.mu * x / coeffs.lambda2)
    integrand = wa * alpha ** 2 + wb * beta ** 2
    val = dx * (np.sum(integrand) - 0.5 * (integrand[0] + integrand[-1]))
    return 3.0 * consts.rho_c * float(val)


def should_update(kind: str, now: float, mon: MonitorState, signals: TriggerSignals,
                  params: TriggerParams, consts: DerivedConstants,
                  on_h_grid: bool = True) -> bool:
    """Event decision at the current step."""
    fam = kind_family(kind)
    if fam == "cetc":
        return gamma_p(signals.d2, mon.m, signals.W, params, consts) > 0.0
    if fam == "petc":
        return on_h_grid and petc_gamma(kind, signals.d2, mon.m, signals.W,
                                        params, consts) > 0.0
    if fam == "stc":
        return now >= mon.next_due - 1e-15
    raise ConfigurationError(f"unknown trigger family {fam!r}")
