"""Lyapunov functionals, event statistics, and traffic performance metrics.

The PDE and triggers run in km/h units; the three traffic metrics are the
only place the package converts to SI (m, s, veh/m), which is the
convention that reproduces the reported open-loop magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LinearCoeffs
from .triggers import DerivedConstants

__all__ = [
    "LyapunovWeights",
    "lyapunov_V1",
    "EventStats",
    "event_stats",
    "Metrics",
    "traffic_metrics",
    "percent_delta",
    "trapezoid_weights",
    "write_trace_csv",
    "write_events_csv",
]

# fuel-rate coefficients (SI): idle, linear, cubic drag, acceleration work
FUEL_B0 = 25e-3     # [1/s]
FUEL_B1 = 24.5e-6   # [1/m]
FUEL_B3 = 32.5e-9   # [s^3/m^2]
FUEL_B4 = 125e-6    # [s^2/m^2]


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


class LyapunovWeights:
    """Precomputed quadrature weights of the Lyapunov candidate V1."""

    def __init__(self, coeffs: LinearCoeffs, mu: float, C: float):
        x = coeffs.x
        tw = trapezoid_weights(x.size, float(x[1] - x[0]))
        self.w_alpha = tw * (C / coeffs.lambda1) * np.exp(-mu * x / coeffs.lambda1)
        self.w_beta = tw * (C * coeffs.r0 ** 2 / coeffs.lambda2) * np.exp(
            mu * x / coeffs.lambda2)

    def V1(self, alpha: np.ndarray, beta: np.ndarray) -> float:
        return float(self.w_alpha @ (alpha * alpha) + self.w_beta @ (beta * beta))


def lyapunov_V1(alpha: np.ndarray, beta: np.ndarray, coeffs: LinearCoeffs,
                consts: DerivedConstants) -> float:
    """Exponentially weighted quadratic form of the target state."""
    return LyapunovWeights(coeffs, consts.mu, consts.C).V1(alpha, beta)


@dataclass(frozen=True)
class EventStats:
    """Dwell-time statistics of one event log.

    n_t counts every control update including the initial one at t = 0,
    so n_t events give n_t - 1 dwell intervals.
    """

    n_t: int
    dwell_times: np.ndarray   # [min]
    mean_dwell: float         # [min], the safety index

    @property
    def min_dwell(self) -> float:
        return float(np.min(self.dwell_times)) if self.dwell_times.size else 0.0


def event_stats(event_times) -> EventStats:
    t = np.asarray(event_times, dtype=float)
    if t.size == 0:
        return EventStats(n_t=0, dwell_times=np.empty(0), mean_dwell=0.0)
    if np.any(np.diff(t) <= 0.0):
        raise ValueError("event log must be strictly increasing")
    dwells = np.diff(t) * 60.0
    mean = float(np.mean(dwells)) if dwells.size else 0.0
    return EventStats(n_t=int(t.size), dwell_times=dwells, mean_dwell=mean)


@dataclass(frozen=True)
class Metrics:
    """Total travel time, fuel consumption, and discomfort functionals."""

    j_ttt: float
    j_fuel: float
    j_d: float


def percent_delta(run: Metrics, baseline: Metrics) -> dict:
    return {
        "j_ttt": 100.0 * (run.j_ttt / baseline.j_ttt - 1.0),
        "j_fuel": 100.0 * (run.j_fuel / baseline.j_fuel - 1.0),
        "j_d": 100.0 * (run.j_d / baseline.j_d - 1.0),
    }


def traffic_metrics(rho_hist: np.ndarray, v_hist: np.ndarray, dt_out: float,
                    dx: float) -> Metrics:
    """Space-time integrals of the stored (rho, v) history.

    rho_hist/v_hist are (samples, nodes) in veh/km and km/h at uniform
    output sampling dt_out [h] on a grid with spacing dx [km].  Local
    acceleration uses forward-time / centered-space differences; its time
    derivative is a forward difference of the acceleration levels, so the
    last one or two sample intervals fall out of the fuel/discomfort
    integrals (negligible against the horizon).
    """
    rho_hist = np.asarray(rho_hist, dtype=float)
    v_hist = np.asarray(v_hist, dtype=float)
    if rho_hist.ndim != 2 or rho_hist.shape != v_hist.shape:
        raise ValueError("rho and v histories must be equal (samples, nodes) arrays")
    n_t, n_x = rho_hist.shape
    if n_t < 3:
        raise ValueError(f"need at least 3 stored time samples, got {n_t}")

    rho = rho_hist / 1000.0          # veh/m
    v = v_hist / 3.6                 # m/s
    dt_s = dt_out * 3600.0
    dx_m = dx * 1000.0
    wx = trapezoid_weights(n_x, dx_m)

    def time_trapz(levels: np.ndarray) -> float:
        return float(dt_s * (np.sum(levels) - 0.5 * (levels[0] + levels[-1])))

    j_ttt = time_trapz(rho @ wx)

    v_x = np.gradient(v, dx_m, axis=1)
    v_t = (v[1:] - v[:-1]) / dt_s
    acc = v_t + v[:-1] * v_x[:-1]              # (n_t-1, n_x)
    acc_t = (acc[1:] - acc[:-1]) / dt_s        # (n_t-2, n_x)

    fuel = np.maximum(
        0.0,
        FUEL_B0 + FUEL_B1 * v[:-1] + FUEL_B3 * v[:-1] ** 3 + FUEL_B4 * v[:-1] * acc,
    ) * rho[:-1]
    j_fuel = time_trapz(fuel @ wx)

    discomfort = (acc[:-1] ** 2 + acc_t ** 2) * rho[:n_t - 2]
    j_d = time_trapz(discomfort @ wx)
    return Metrics(j_ttt=j_ttt, j_fuel=j_fuel, j_d=j_d)


def write_trace_csv(path, trace: dict, stride: int = 1):
    """Columns: t, V1, V, barrier, m, d, U_k, Gamma."""
    cols = ("t", "V1", "V", "barrier", "m", "d", "U_k", "Gamma")
    arrs = [np.asarray(trace[c]) for c in cols]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(0, arrs[0].size, stride):
            fh.write(",".join(repr(float(a[i])) for a in arrs) + "\n")


def write_events_csv(path, event_times, event_values):
    with open(path, "w") as fh:
        fh.write("k,t_k,U_k\n")
        for k, (t, u) in enumerate(zip(event_times, event_values)):
            fh.write(f"{k},{t!r},{u!r}\n")
