"""Explicit time-steppers for the traffic PDE under a held boundary input.

Default mode advances the linearized Riemann pair (wbar, vbar) with
first-order upwinding per transport family and explicit source coupling.
The nonlinear mode advances the exact characteristic variables of the
ARZ system, z = v + p(rho) carried at speed v and v carried at
v - gamma*p(rho), with the relaxation source treated explicitly, so both
modes share one scheme shape.  The time step is fixed; a CFL violation
is a configuration error, never silently clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SimulationError
from .model import ArzParams, LinearCoeffs, SteadyState, to_riemann

__all__ = ["Grid1D", "PlantState", "initial_profile", "LinearStepper",
           "NonlinearStepper", "step_linear", "step_nonlinear"]


@dataclass(frozen=True)
class Grid1D:
    """Uniform spatial grid; m_cells counts nodes, x_0 = 0, x_{m-1} = ell."""

    m_cells: int
    dx: float

    def __post_init__(self):
        if self.m_cells < 3 or self.dx <= 0.0:
            raise ConfigurationError("Grid1D needs m_cells >= 3 and dx > 0")

    @property
    def ell(self) -> float:
        return self.dx * (self.m_cells - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.ell, self.m_cells)

    @classmethod
    def from_spacing(cls, ell: float, dx: float) -> "Grid1D":
        m = round(ell / dx) + 1
        if abs(dx * (m - 1) - ell) > 1e-12:
            raise ConfigurationError(f"dx = {dx} does not divide ell = {ell}")
        return cls(m_cells=m, dx=dx)


@dataclass
class PlantState:
    """Profiles plus the simulation clock; mutated in place by the steppers."""

    mode: str                       # "linearized" | "nonlinear"
    t: float = 0.0
    wbar: np.ndarray | None = None
    vbar: np.ndarray | None = None
    rho: np.ndarray | None = None
    v: np.ndarray | None = None

    def copy(self) -> "PlantState":
        return PlantState(
            mode=self.mode, t=self.t,
            wbar=None if self.wbar is None else self.wbar.copy(),
            vbar=None if self.vbar is None else self.vbar.copy(),
            rho=None if self.rho is None else self.rho.copy(),
            v=None if self.v is None else self.v.copy())


def initial_profile(grid: Grid1D, coeffs: LinearCoeffs, steady: SteadyState,
                    mode: str = "linearized", amplitude: float = 0.1) -> PlantState:
    """Sinusoidal perturbation of the steady state.

    rho(x,0) = rho* (1 + A sin(3 pi x / ell)),  v(x,0) = v* (1 - A sin(3 pi x / ell));
    in linearized mode the deviations are converted to (wbar, vbar).
    """
    x = grid.x
    s = np.sin(3.0 * np.pi * x / grid.ell)
    rho_dev = amplitude * s * steady.rho_star
    v_dev = -amplitude * s * steady.v_star
    if mode == "linearized":
        wbar, vbar = to_riemann(rho_dev, v_dev, coeffs, steady)
        return PlantState(mode=mode, t=0.0, wbar=wbar, vbar=vbar)
    if mode == "nonlinear":
        return PlantState(mode=mode, t=0.0,
                          rho=steady.rho_star + rho_dev, v=steady.v_star + v_dev)
    raise ConfigurationError(f"unknown plant mode {mode!r}")


class LinearStepper:
    """One-step upwind integrator for the linearized Riemann system.

    wbar transports rightward at v*, vbar leftward at lambda2; the
    couplings cbar1*vbar / cbar2*wbar are explicit.  Boundary conditions:
    wbar(0) = -r0*vbar(0) at the inlet, vbar(ell) = r1*U_held at the VSL.
    """

    def __init__(self, grid: Grid1D, coeffs: LinearCoeffs, dt: float):
        nu_w = coeffs.lambda1 * dt / grid.dx
        nu_v = coeffs.lambda2 * dt / grid.dx
        if max(nu_w, nu_v) > 1.0 + 1e-12:
            raise ConfigurationError(
                f"CFL violated: max(v*, lambda2)*dt/dx = {max(nu_w, nu_v):.4g} > 1")
        self.grid = grid
        self.coeffs = coeffs
        self.dt = dt
        self.nu_w = nu_w
        self.nu_v = nu_v
        self.src_w = dt * coeffs.cbar1
        self.src_v = dt * coeffs.cbar2

    def step(self, state: PlantState, u_held: float) -> PlantState:
        w, v = state.wbar, state.vbar
        wn = np.empty_like(w)
        vn = np.empty_like(v)
        wn[1:] = w[1:] - self.nu_w * (w[1:] - w[:-1]) + self.src_w[1:] * v[1:]
        vn[:-1] = v[:-1] + self.nu_v * (v[1:] - v[:-1]) + self.src_v[:-1] * w[:-1]
        vn[-1] = self.coeffs.r1 * u_held
        wn[0] = -self.coeffs.r0 * vn[0]
        state.wbar, state.vbar = wn, vn
        state.t += self.dt
        return state


class NonlinearStepper:
    """One-step upwind integrator for the nonlinear ARZ characteristics."""

    def __init__(self, grid: Grid1D, params: ArzParams, steady: SteadyState, dt: float):
        self.grid = grid
        self.params = params
        self.steady = steady
        self.dt = dt
        self.lam = dt / grid.dx

    def step(self, state: PlantState, u_held: float) -> PlantState:
        p = self.params
        rho, v = state.rho, state.v
        if np.any(rho <= 0.0) or np.any(rho >= p.rho_m) or np.any(v <= 0.0):
            i = int(np.argmax((rho <= 0) | (rho >= p.rho_m) | (v <= 0)))
            raise SimulationError(
                f"state out of physical bounds at x = {i * self.grid.dx:.4g} km, "
                f"t = {state.t:.6g} h (rho = {rho[i]:.4g}, v = {v[i]:.4g})")
        pr = p.pressure(rho)
        z = v + pr
        s_z = v                              # z rides the v-characteristic
        s_v = v - p.gamma * pr               # v rides the slow characteristic
        cfl = self.lam * max(float(np.max(np.abs(s_z))), float(np.max(np.abs(s_v))))
        if cfl > 1.0 + 1e-12:
            raise SimulationError(
                f"nonlinear CFL violated at t = {state.t:.6g} h: {cfl:.4g} > 1")
        src = self.dt * (p.vf * (1.0 - (rho / p.rho_m) ** p.gamma) - v) / p.tau

        zn = z + src - self.lam * _upwind(z, s_z, self.dt, self.grid.dx)
        vn = v + src - self.lam * _upwind(v, s_v, self.dt, self.grid.dx)
        # outlet VSL is a Dirichlet condition for the leftward family
        vn[-1] = u_held + self.steady.v_star
        # inlet flux rho(0)*v(0) = q*; z(0) follows from the inflow density
        rho0 = self.steady.q_star / vn[0]
        zn[0] = vn[0] + p.pressure(rho0)

        rho_n = ((zn - vn) / p.c0) ** (1.0 / p.gamma)
        if np.any(zn <= vn):
            i = int(np.argmax(zn <= vn))
            raise SimulationError(
                f"pressure collapsed (rho <= 0) at x = {i * self.grid.dx:.4g} km, "
                f"t = {state.t + self.dt:.6g} h")
        state.rho, state.v = rho_n, vn
        state.t += self.dt
        return state


def _upwind(f: np.ndarray, speed: np.ndarray, dt: float, dx: float) -> np.ndarray:
    """speed * one-sided difference, donor side chosen per node; boundary
    nodes copy their single interior neighbour (overwritten by BCs)."""
    df_left = np.empty_like(f)
    df_right = np.empty_like(f)
    df_left[1:] = f[1:] - f[:-1]
    df_left[0] = 0.0
    df_right[:-1] = f[1:] - f[:-1]
    df_right[-1] = 0.0
    return np.where(speed >= 0.0, speed * df_left, speed * df_right)


def step_linear(state: PlantState, u_held: float, dt: float, grid: Grid1D,
                coeffs: LinearCoeffs) -> PlantState:
    """Single linear step without a persistent stepper (tests, small scripts)."""
    return LinearStepper(grid, coeffs, dt).step(state, u_held)


def step_nonlinear(state: PlantState, u_held: float, dt: float, grid: Grid1D,
                   params: ArzParams, steady: SteadyState) -> PlantState:
    return NonlinearStepper(grid, params, steady, dt).step(state, u_held)
