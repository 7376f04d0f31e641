"""ARZ physical parameters, steady state, linearization, and Riemann maps.

The congested-regime linearization turns density/velocity deviations
(rho_dev, v_dev) into a pair of exponentially weighted characteristic
states (wbar, vbar) that transport in opposite directions: wbar rides
downstream at the steady speed v_star, vbar rides upstream at
lambda2 = gamma*p_star - v_star.  All quantities are kept in km and
hours; only the metrics module converts to SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ArzParams",
    "SteadyState",
    "LinearCoeffs",
    "ZeroCouplingCoeffs",
    "equilibrium_velocity",
    "steady_from_density",
    "linearize",
    "to_riemann",
    "from_riemann",
]


@dataclass(frozen=True)
class ArzParams:
    """Physical constants of the ARZ model.

    vf     free-flow speed [km/h]
    rho_m  maximum density [veh/km]
    tau    relaxation time [h]
    gamma  pressure exponent [-]
    c0     pressure coefficient [km^gamma*(km/h)/veh^gamma]
    ell    road length [km]
    """

    vf: float
    rho_m: float
    tau: float
    gamma: float
    c0: float
    ell: float

    def __post_init__(self):
        for name in ("vf", "rho_m", "tau", "gamma", "c0", "ell"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"ArzParams.{name} must be strictly positive")
        if self.gamma < 1.0:
            raise ConfigurationError("pressure exponent gamma < 1 is not supported")

    def pressure(self, rho):
        return self.c0 * rho ** self.gamma


@dataclass(frozen=True)
class SteadyState:
    """Constant-flux equilibrium (rho_star, v_star) with derived quantities."""

    rho_star: float
    v_star: float
    q_star: float
    p_star: float


@dataclass(frozen=True)
class LinearCoeffs:
    """Constants of the linearized Riemann-state system plus grid tables.

    cbar1/cbar2 are the x-dependent coupling coefficients tabulated on
    the supplied grid (pure functions of x, precomputed once).
    """

    c1: float
    c2: float
    r0: float
    r1: float
    lambda1: float
    lambda2: float
    x: np.ndarray
    cbar1: np.ndarray
    cbar2: np.ndarray

    @property
    def gamma_p_star(self) -> float:
        return self.lambda1 + self.lambda2

    def cbar1_at(self, x):
        rate = self.c1 / self.lambda1 - self.c2 / self.lambda2
        return self.c2 * np.exp(rate * np.asarray(x, dtype=float))

    def cbar2_at(self, x):
        rate = self.c2 / self.lambda2 - self.c1 / self.lambda1
        return -self.c1 * np.exp(rate * np.asarray(x, dtype=float))


class ZeroCouplingCoeffs(LinearCoeffs):
    """Coupling-free view of a coefficient set (degeneracy checks)."""

    @classmethod
    def like(cls, coeffs: LinearCoeffs) -> "ZeroCouplingCoeffs":
        z = np.zeros_like(coeffs.x)
        return cls(c1=coeffs.c1, c2=coeffs.c2, r0=coeffs.r0, r1=coeffs.r1,
                   lambda1=coeffs.lambda1, lambda2=coeffs.lambda2,
                   x=coeffs.x, cbar1=z, cbar2=z.copy())

    def cbar1_at(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def cbar2_at(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


def equilibrium_velocity(rho, params: ArzParams):
    """Greenshields equilibrium speed V(rho) = vf*(1 - (rho/rho_m)^gamma)."""
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 0.0) or np.any(rho_arr > params.rho_m):
        raise ConfigurationError("density outside [0, rho_m]")
    out = params.vf * (1.0 - (rho_arr / params.rho_m) ** params.gamma)
    return float(out) if np.isscalar(rho) else out


def steady_from_density(rho_star: float, params: ArzParams) -> SteadyState:
    """Build the steady state consistent with Greenshields at rho_star."""
    v_star = equilibrium_velocity(rho_star, params)
    p_star = params.c0 * rho_star ** params.gamma
    return SteadyState(rho_star=rho_star, v_star=v_star,
                       q_star=rho_star * v_star, p_star=p_star)


def linearize(params: ArzParams, steady: SteadyState, x: np.ndarray) -> LinearCoeffs:
    """Constants of the linearized system and coupling tables on ``x``.

    Rejects parameter sets outside the congested regime, where the
    instability condition c1 > 1/tau > 0, c2 > 0, r0 > 0 fails.
    """
    gp = params.gamma * steady.p_star
    v_s = steady.v_star
    if gp <= v_s:
        raise ConfigurationError(
            f"not in the congested regime: gamma*p_star = {gp:.6g} <= v_star = {v_s:.6g}")
    lambda2 = gp - v_s
    c1 = (1.0 / params.tau) * (params.vf / params.rho_m) * (steady.rho_star / gp)
    c2 = c1 - 1.0 / params.tau
    if c2 <= 0.0:
        raise ConfigurationError(
            f"instability condition violated: c2 = c1 - 1/tau = {c2:.6g} <= 0")
    r0 = lambda2 / v_s
    r1 = math.exp(c2 * params.ell / lambda2)
    x = np.asarray(x, dtype=float)
    rate = c1 / v_s - c2 / lambda2
    cbar1 = c2 * np.exp(rate * x)
    cbar2 = -c1 * np.exp(-rate * x)
    return LinearCoeffs(c1=c1, c2=c2, r0=r0, r1=r1, lambda1=v_s, lambda2=lambda2,
                        x=x, cbar1=cbar1, cbar2=cbar2)


def _check_same_grid(a: np.ndarray, b: np.ndarray, coeffs: LinearCoeffs):
    if a.shape != b.shape or a.shape != coeffs.x.shape:
        raise ValueError(
            f"profile grids do not match: {a.shape}, {b.shape}, coeffs {coeffs.x.shape}")


def to_riemann(rho_dev: np.ndarray, v_dev: np.ndarray, coeffs: LinearCoeffs,
               steady: SteadyState):
    """Map physical deviations to the Riemann states (wbar, vbar), pointwise."""
    rho_dev = np.asarray(rho_dev, dtype=float)
    v_dev = np.asarray(v_dev, dtype=float)
    _check_same_grid(rho_dev, v_dev, coeffs)
    gp = coeffs.gamma_p_star
    ew = np.exp(coeffs.c1 * coeffs.x / coeffs.lambda1)
    ev = np.exp(coeffs.c2 * coeffs.x / coeffs.lambda2)
    wbar = ew * ((gp / steady.rho_star) * rho_dev + v_dev)
    vbar = ev * v_dev
    return wbar, vbar


def from_riemann(wbar: np.ndarray, vbar: np.ndarray, coeffs: LinearCoeffs,
                 steady: SteadyState):
    """Exact algebraic inverse of :func:`to_riemann`."""
    wbar = np.asarray(wbar, dtype=float)
    vbar = np.asarray(vbar, dtype=float)
    _check_same_grid(wbar, vbar, coeffs)
    gp = coeffs.gamma_p_star
    v_dev = np.exp(-coeffs.c2 * coeffs.x / coeffs.lambda2) * vbar
    rho_dev = (steady.rho_star / gp) * (
        np.exp(-coeffs.c1 * coeffs.x / coeffs.lambda1) * wbar - v_dev)
    return rho_dev, v_dev
