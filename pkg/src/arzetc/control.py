"""Backstepping target states, the boundary control value, and input holding.

The transform and both control-law quadratures are precomputed as dense
operators once per kernel set, so the per-step cost in the closed loop is
a single matrix-vector product plus dot products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSet, transform_matrices
from .model import LinearCoeffs

__all__ = ["HeldInput", "TargetState", "BacksteppingTransform", "deviation_d"]


@dataclass
class HeldInput:
    """Zero-order-hold control input: U_k applied on [t_k, t_{k+1})."""

    U_k: float
    t_k: float
    k: int


@dataclass
class TargetState:
    alpha: np.ndarray
    beta: np.ndarray


class BacksteppingTransform:
    """Discrete direct/inverse Volterra transforms and control quadratures."""

    def __init__(self, kernels: KernelSet, coeffs: LinearCoeffs):
        self.grid = kernels.grid
        self.coeffs = coeffs
        n = kernels.grid.n_nodes
        self.n = n
        self.t_dir, self.t_inv = transform_matrices(kernels)
        tw = np.full(n, kernels.grid.delta)
        tw[0] *= 0.5
        tw[-1] *= 0.5
        # U(t) from the plant state (direct kernels at x = ell) ...
        self.u_w = tw * kernels.K21[n - 1, :] / coeffs.r1
        self.u_v = tw * kernels.K22[n - 1, :] / coeffs.r1
        # ... and equivalently from the target state (inverse kernels)
        self.u_alpha = tw * kernels.L21[n - 1, :] / coeffs.r1
        self.u_beta = tw * kernels.L22[n - 1, :] / coeffs.r1

    def to_target(self, wbar: np.ndarray, vbar: np.ndarray) -> TargetState:
        if wbar.shape != (self.n,) or vbar.shape != (self.n,):
            raise ValueError(
                f"profile shape {wbar.shape}/{vbar.shape} does not match the "
                f"kernel grid ({self.n} nodes)")
        ab = self.t_dir @ np.concatenate([wbar, vbar])
        return TargetState(alpha=ab[:self.n], beta=ab[self.n:])

    def from_target(self, alpha: np.ndarray, beta: np.ndarray):
        wv = self.t_inv @ np.concatenate([alpha, beta])
        return wv[:self.n], wv[self.n:]

    def continuous_U(self, wbar: np.ndarray, vbar: np.ndarray) -> float:
        """Ideal continuous-time VSL deviation from the current state."""
        return float(self.u_w @ wbar + self.u_v @ vbar)

    def U_from_target(self, alpha: np.ndarray, beta: np.ndarray) -> float:
        """Same control value written against the target state."""
        return float(self.u_alpha @ alpha + self.u_beta @ beta)


def deviation_d(held: HeldInput, u_now: float) -> float:
    """Input holding error d(t) = U_k - U(t); zero right after an update."""
    return held.U_k - u_now
