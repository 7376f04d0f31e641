"""Backstepping kernel solver on the triangular domain.

The direct kernels K^{ij} and inverse kernels L^{ij} live on
T = {0 <= xi <= x <= ell}.  Substituting the Volterra transform into the
coupled transport system and matching the decoupled target system yields
two Goursat-type systems (one per kernel family):

direct kernels
    v* (K11_x + K11_xi)      = -cbar2(xi) K12     K11(x,0) = -(lam2/(v* r0)) K12(x,0)
    v* K12_x - lam2 K12_xi   = -cbar1(xi) K11     K12(x,x) =  cbar1(x)/(v*+lam2)
    lam2 K21_x - v* K21_xi   =  cbar2(xi) K22     K21(x,x) = -cbar2(x)/(v*+lam2)
    lam2 (K22_x + K22_xi)    =  cbar1(xi) K21     K22(x,0) = -(v* r0/lam2) K21(x,0)

inverse kernels (couplings evaluated at x, not xi)
    v* (L11_x + L11_xi)      =  cbar1(x) L21      L11(x,0) = -(lam2/(v* r0)) L12(x,0)
    v* L12_x - lam2 L12_xi   =  cbar1(x) L22      L12(x,x) =  cbar1(x)/(v*+lam2)
    lam2 L21_x - v* L21_xi   = -cbar2(x) L11      L21(x,x) = -cbar2(x)/(v*+lam2)
    lam2 (L22_x + L22_xi)    = -cbar2(x) L12      L22(x,0) = -(v* r0/lam2) L21(x,0)

Each kernel is integrated along its characteristic back to the edge that
carries its boundary data, giving a system of Volterra-type integral
equations solved by successive approximation.  Characteristics with slope
(1,1) pass exactly through grid nodes; the mixed-speed characteristics end
on the diagonal and are integrated with trapezoid quadrature against a
piecewise-linear interpolant of the partner table.  Correctness is
certified numerically (composition identity, target-system residual)
rather than by trusting the derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SolverError
from .model import LinearCoeffs

__all__ = [
    "TriangularGrid",
    "KernelSet",
    "GainSlice",
    "KernelConstants",
    "solve_direct_kernels",
    "solve_inverse_kernels",
    "solve_kernels",
    "gain_slices",
    "kernel_constants",
    "transform_matrices",
    "apply_direct",
    "apply_inverse",
    "composition_residual",
    "fourier_test_profiles",
    "verify_target_residual",
    "save_kernels_csv",
    "load_kernels_csv",
]


@dataclass(frozen=True)
class TriangularGrid:
    """Uniform grid on the triangle, n_nodes per edge."""

    n_nodes: int
    ell: float

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ConfigurationError("TriangularGrid needs n_nodes >= 3")
        if self.ell <= 0.0:
            raise ConfigurationError("TriangularGrid needs ell > 0")

    @property
    def delta(self) -> float:
        return self.ell / (self.n_nodes - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.ell, self.n_nodes)


@dataclass
class KernelSet:
    """Tabulated direct and inverse kernels (zero above the diagonal)."""

    grid: TriangularGrid
    K11: np.ndarray
    K12: np.ndarray
    K21: np.ndarray
    K22: np.ndarray
    L11: np.ndarray
    L12: np.ndarray
    L21: np.ndarray
    L22: np.ndarray

    def tables(self):
        return {"K11": self.K11, "K12": self.K12, "K21": self.K21, "K22": self.K22,
                "L11": self.L11, "L12": self.L12, "L21": self.L21, "L22": self.L22}


@dataclass(frozen=True)
class GainSlice:
    """Kernel values along x = ell used by the control law and triggers."""

    xi: np.ndarray
    K21_l: np.ndarray
    K22_l: np.ndarray
    L21_l: np.ndarray
    L22_l: np.ndarray
    dxi_L21_l: np.ndarray
    dxi_L22_l: np.ndarray
    L21_ll: float
    L22_ll: float


@dataclass(frozen=True)
class KernelConstants:
    """Quadratures of the gain slices feeding the trigger constants."""

    eps0: float
    eps1: float
    eps2: float
    eps3: float
    Ltilde21: float
    Ltilde22: float


# ---------------------------------------------------------------------------
# characteristic quadrature machinery

def _tri_interp_weights(xq, xiq, delta, n):
    """Piecewise-linear interpolation on the triangulated grid.

    Each grid cell is split along its (1,1) diagonal; query points are
    interpolated from the three vertices of the containing sub-triangle,
    all of which lie on or below the domain diagonal.  Returns flat
    indices into an (n, n) row-major table and the three weights.
    """
    xiq = np.minimum(xiq, xq)  # guard FP drift above the domain diagonal
    gx = xq / delta
    gy = xiq / delta
    i0 = np.clip(np.floor(gx).astype(np.int64), 0, n - 2)
    j0 = np.clip(np.floor(gy).astype(np.int64), 0, n - 2)
    j0 = np.minimum(j0, i0)
    u = gx - i0
    w = gy - j0
    lower = w <= u
    base = i0 * n + j0
    # lower: vertices (i0,j0), (i0+1,j0), (i0+1,j0+1) with weights (1-u, u-w, w)
    # upper: vertices (i0,j0), (i0,j0+1), (i0+1,j0+1) with weights (1-w, w-u, u)
    idx_a = base
    idx_b = np.where(lower, base + n, base + 1)
    idx_c = base + n + 1
    w_a = np.where(lower, 1.0 - u, 1.0 - w)
    w_b = np.where(lower, u - w, w - u)
    w_c = np.where(lower, w, u)
    return idx_a, idx_b, idx_c, w_a, w_b, w_c


class _CharQuad:
    """Precomputed quadrature of one mixed-speed kernel along characteristics.

    The kernel at node (x_i, xi_j) equals its diagonal-foot value plus the
    integral of coupling * partner along the backward characteristic
    (x_i - sx*s, xi_j + sxi*s), s in [0, (x_i - xi_j)/(sx + sxi)].  The
    coupling, trapezoid weight, and interpolation weights of the partner
    table are folded into three flat weight arrays so a sweep is three
    gathers and a segment sum.
    """

    def __init__(self, grid: TriangularGrid, sx: float, sxi: float,
                 coupling, quad_refine: int):
        n = grid.n_nodes
        delta = grid.delta
        ssum = sx + sxi
        smax = max(sx, sxi)
        tgt, starts = [], []
        idx3, w3 = [[], [], []], [[], [], []]
        count = 0
        for d in range(1, n):
            j = np.arange(0, n - d)
            i = j + d
            s0 = d * delta / ssum
            n_q = max(1, math.ceil(quad_refine * d * smax / ssum))
            s = np.linspace(0.0, s0, n_q + 1)
            wq = np.full(n_q + 1, s0 / n_q)
            wq[0] *= 0.5
            wq[-1] *= 0.5
            # (n-d, n_q+1) query points; offsets shared along the diagonal
            xq = (i[:, None] * delta) - sx * s[None, :]
            xiq = (j[:, None] * delta) + sxi * s[None, :]
            ia, ib, ic, wa, wb, wc = _tri_interp_weights(
                xq.ravel(), xiq.ravel(), delta, n)
            mult = (coupling(xq, xiq) * wq[None, :]).ravel()
            idx3[0].append(ia.astype(np.int64))
            idx3[1].append(ib.astype(np.int64))
            idx3[2].append(ic.astype(np.int64))
            w3[0].append(wa * mult)
            w3[1].append(wb * mult)
            w3[2].append(wc * mult)
            tgt.append(i * n + j)
            starts.append(count + np.arange(n - d) * (n_q + 1))
            count += (n - d) * (n_q + 1)
        self.n = n
        self.tgt = np.concatenate(tgt)
        self.starts = np.concatenate(starts)
        self.idx = [np.concatenate(c) for c in idx3]
        self.w = [np.concatenate(c) for c in w3]

    def apply(self, partner: np.ndarray) -> np.ndarray:
        """Integral term on the whole triangle (zero on the diagonal)."""
        flat = partner.ravel()
        vals = (self.w[0] * flat[self.idx[0]]
                + self.w[1] * flat[self.idx[1]]
                + self.w[2] * flat[self.idx[2]])
        out = np.zeros((self.n, self.n))
        out.ravel()[self.tgt] = np.add.reduceat(vals, self.starts)
        return out


def _sweep_equal_speed(F: np.ndarray, bc: np.ndarray, delta: float) -> np.ndarray:
    """Integrate F along the (1,1) characteristics from the xi = 0 edge.

    out(i, j) = bc(i - j) + cumulative trapezoid of F over the on-grid
    path (i-j, 0) -> (i, j).
    """
    n = F.shape[0]
    out = np.zeros_like(F)
    for d in range(n):
        diag = np.diagonal(F, offset=-d)
        m = diag.shape[0]
        ct = np.empty(m)
        ct[0] = 0.0
        if m > 1:
            np.cumsum(0.5 * delta * (diag[:-1] + diag[1:]), out=ct[1:])
        out[np.arange(d, n), np.arange(0, n - d)] = bc[d] + ct
    return out


def _tri_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def _foot_table(grid: TriangularGrid, sx: float, sxi: float, diag_value):
    """Diagonal-foot value for every node: the characteristic through
    (x, xi) with backward speeds (sx, sxi) meets the diagonal at
    x0 = (sxi*x + sx*xi)/(sx + sxi)."""
    x = grid.x
    x0 = (sxi * x[:, None] + sx * x[None, :]) / (sx + sxi)
    return np.where(_tri_mask(grid.n_nodes), diag_value(x0), 0.0)


def _picard(updates, tables, tol, max_iter, label):
    history = []
    for _ in range(max_iter):
        new = updates(tables)
        change = max(float(np.max(np.abs(a - b))) for a, b in zip(new, tables))
        history.append(change)
        tables = new
        if change < tol:
            return tables, history
    raise SolverError(
        f"{label} kernel iteration did not reach {tol:g} within {max_iter} sweeps; "
        f"last changes {['%.3e' % h for h in history[-5:]]}")


def solve_direct_kernels(coeffs: LinearCoeffs, grid: TriangularGrid,
                         tol: float = 1e-10, max_iter: int = 200,
                         quad_refine: int = 2):
    """Solve the direct-kernel Goursat system; returns (K11, K12, K21, K22)."""
    v_s, lam2, r0 = coeffs.lambda1, coeffs.lambda2, coeffs.r0
    ssum = v_s + lam2
    n = grid.n_nodes
    xi = grid.x
    mask = _tri_mask(n)

    q12 = _CharQuad(grid, v_s, lam2, lambda xq, xiq: -coeffs.cbar1_at(xiq), quad_refine)
    q21 = _CharQuad(grid, lam2, v_s, lambda xq, xiq: coeffs.cbar2_at(xiq), quad_refine)
    foot12 = _foot_table(grid, v_s, lam2, lambda x0: coeffs.cbar1_at(x0) / ssum)
    foot21 = _foot_table(grid, lam2, v_s, lambda x0: -coeffs.cbar2_at(x0) / ssum)
    f11 = (-coeffs.cbar2_at(xi) / v_s)[None, :]   # coupling in xi, column-varying
    f22 = (coeffs.cbar1_at(xi) / lam2)[None, :]

    def sweeps(tables):
        K11, K12, K21, K22 = tables
        K12n = foot12 + q12.apply(K11)
        K21n = foot21 + q21.apply(K22)
        K11n = _sweep_equal_speed(f11 * K12, -(lam2 / (v_s * r0)) * K12[:, 0], grid.delta)
        K22n = _sweep_equal_speed(f22 * K21, -(v_s * r0 / lam2) * K21[:, 0], grid.delta)
        return [t * mask for t in (K11n, K12n, K21n, K22n)]

    zeros = [np.zeros((n, n)) for _ in range(4)]
    tables, _ = _picard(sweeps, zeros, tol, max_iter, "direct")
    return tuple(tables)


def solve_inverse_kernels(coeffs: LinearCoeffs, grid: TriangularGrid,
                          k_tables=None, tol: float = 1e-10, max_iter: int = 200,
                          quad_refine: int = 2, composition_tol: float | None = None):
    """Solve the inverse-kernel system; returns (L11, L12, L21, L22).

    When ``k_tables`` and ``composition_tol`` are both given, the K->L
    round trip on random smooth profiles is certified against the
    tolerance and a SolverError is raised on failure.
    """
    v_s, lam2, r0 = coeffs.lambda1, coeffs.lambda2, coeffs.r0
    ssum = v_s + lam2
    n = grid.n_nodes
    mask = _tri_mask(n)

    q12 = _CharQuad(grid, v_s, lam2, lambda xq, xiq: coeffs.cbar1_at(xq), quad_refine)
    q21 = _CharQuad(grid, lam2, v_s, lambda xq, xiq: -coeffs.cbar2_at(xq), quad_refine)
    foot12 = _foot_table(grid, v_s, lam2, lambda x0: coeffs.cbar1_at(x0) / ssum)
    foot21 = _foot_table(grid, lam2, v_s, lambda x0: -coeffs.cbar2_at(x0) / ssum)
    g11 = (coeffs.cbar1_at(grid.x) / v_s)[:, None]   # coupling in x, row-varying
    g22 = (-coeffs.cbar2_at(grid.x) / lam2)[:, None]

    def sweeps(tables):
        L11, L12, L21, L22 = tables
        L12n = foot12 + q12.apply(L22)
        L21n = foot21 + q21.apply(L11)
        L11n = _sweep_equal_speed(g11 * L21, -(lam2 / (v_s * r0)) * L12[:, 0], grid.delta)
        L22n = _sweep_equal_speed(g22 * L12, -(v_s * r0 / lam2) * L21[:, 0], grid.delta)
        return [t * mask for t in (L11n, L12n, L21n, L22n)]

    zeros = [np.zeros((n, n)) for _ in range(4)]
    tables, _ = _picard(sweeps, zeros, tol, max_iter, "inverse")
    l_tables = tuple(tables)

    if k_tables is not None and composition_tol is not None:
        ks = KernelSet(grid, *k_tables, *l_tables)
        resid = composition_residual(ks)
        if resid > composition_tol:
            raise SolverError(
                f"composition identity residual {resid:.3e} exceeds {composition_tol:g}")
    return l_tables


def solve_kernels(coeffs: LinearCoeffs, grid: TriangularGrid, tol: float = 1e-10,
                  max_iter: int = 200, quad_refine: int = 2) -> KernelSet:
    """Solve both kernel families on the grid."""
    k = solve_direct_kernels(coeffs, grid, tol, max_iter, quad_refine)
    l = solve_inverse_kernels(coeffs, grid, k, tol, max_iter, quad_refine)
    return KernelSet(grid, *k, *l)


# ---------------------------------------------------------------------------
# discrete Volterra operators and certification checks

def _quad_weight_matrix(n: int, delta: float) -> np.ndarray:
    """Trapezoid weights of int_0^{x_i} f(xi) dxi over the first i+1 nodes."""
    w = np.tril(np.full((n, n), delta))
    w[:, 0] *= 0.5
    idx = np.arange(n)
    w[idx, idx] *= 0.5
    w[0, 0] = 0.0
    return w


def transform_matrices(kernels: KernelSet):
    """Dense matrices of the discretized direct and inverse transforms.

    Acting on the stacked profile vector [wbar; vbar], the direct matrix
    returns [alpha; beta]; the inverse matrix acts on [alpha; beta].
    """
    n = kernels.grid.n_nodes
    w = _quad_weight_matrix(n, kernels.grid.delta)
    eye = np.eye(2 * n)
    kq = np.block([[w * kernels.K11, w * kernels.K12],
                   [w * kernels.K21, w * kernels.K22]])
    lq = np.block([[w * kernels.L11, w * kernels.L12],
                   [w * kernels.L21, w * kernels.L22]])
    return eye - kq, eye + lq


def apply_direct(kernels: KernelSet, wbar, vbar):
    t_dir, _ = transform_matrices(kernels)
    ab = t_dir @ np.concatenate([wbar, vbar])
    n = kernels.grid.n_nodes
    return ab[:n], ab[n:]


def apply_inverse(kernels: KernelSet, alpha, beta):
    _, t_inv = transform_matrices(kernels)
    wv = t_inv @ np.concatenate([alpha, beta])
    n = kernels.grid.n_nodes
    return wv[:n], wv[n:]


def fourier_test_profiles(grid: TriangularGrid, coeffs: LinearCoeffs,
                          seed: int = 0, n_profiles: int = 3, modes: int = 4):
    """Random smooth profile pairs with exact x-derivatives.

    Profiles are normalized to unit sup and patched with a constant shift
    so they satisfy the inflow coupling wbar(0) = -r0*vbar(0) the kernel
    boundary conditions were derived under.
    """
    rng = np.random.default_rng(seed)
    x = grid.x
    out = []
    for _ in range(n_profiles):
        prof = []
        for _f in range(2):
            a = rng.standard_normal(modes)
            b = rng.standard_normal(modes)
            k = np.arange(1, modes + 1) * np.pi / grid.ell
            f = (a[:, None] * np.sin(k[:, None] * x[None, :])
                 + b[:, None] * np.cos(k[:, None] * x[None, :])).sum(axis=0)
            fx = (a[:, None] * k[:, None] * np.cos(k[:, None] * x[None, :])
                  - b[:, None] * k[:, None] * np.sin(k[:, None] * x[None, :])).sum(axis=0)
            scale = np.max(np.abs(f))
            prof.append((f / scale, fx / scale))
        (w, wx), (v, vx) = prof
        w = w - w[0] - coeffs.r0 * v[0]
        out.append((w, v, wx, vx))
    return out


def composition_residual(kernels: KernelSet, seed: int = 0, n_profiles: int = 3) -> float:
    """Sup-norm error of inverse∘direct and direct∘inverse round trips."""
    t_dir, t_inv = transform_matrices(kernels)
    rng = np.random.default_rng(seed)
    n = kernels.grid.n_nodes
    x = kernels.grid.x
    worst = 0.0
    for _ in range(n_profiles):
        a = rng.standard_normal(4)
        b = rng.standard_normal(4)
        k = np.arange(1, 5) * np.pi / kernels.grid.ell
        f = (a[:, None] * np.sin(k[:, None] * x) + b[:, None] * np.cos(k[:, None] * x)).sum(0)
        g = (b[:, None] * np.sin(k[:, None] * x) - a[:, None] * np.cos(k[:, None] * x)).sum(0)
        s = np.concatenate([f / np.max(np.abs(f)), g / np.max(np.abs(g))])
        worst = max(worst, float(np.max(np.abs(t_inv @ (t_dir @ s) - s))),
                    float(np.max(np.abs(t_dir @ (t_inv @ s) - s))))
    return worst


def verify_target_residual(kernels: KernelSet, coeffs: LinearCoeffs,
                           test_profiles) -> dict:
    """Residuals of the decoupled target equations on analytic snapshots.

    Each profile supplies (wbar, vbar, dwbar_dx, dvbar_dx); the time
    derivatives follow from the plant equations, the transform is applied
    to both the state and its time derivative (linearity), and the target
    transport residuals are evaluated with centered differences.  Both
    residuals tend to zero with grid refinement.
    """
    t_dir, _ = transform_matrices(kernels)
    n = kernels.grid.n_nodes
    delta = kernels.grid.delta
    v_s, lam2 = coeffs.lambda1, coeffs.lambda2
    res_a = res_b = 0.0
    for wbar, vbar, wx, vx in test_profiles:
        wt = -v_s * wx + coeffs.cbar1 * vbar
        vt = lam2 * vx + coeffs.cbar2 * wbar
        ab = t_dir @ np.concatenate([wbar, vbar])
        ab_t = t_dir @ np.concatenate([wt, vt])
        alpha, beta = ab[:n], ab[n:]
        alpha_t, beta_t = ab_t[:n], ab_t[n:]
        alpha_x = np.gradient(alpha, delta, edge_order=2)
        beta_x = np.gradient(beta, delta, edge_order=2)
        ra = alpha_t + v_s * alpha_x
        rb = beta_t - lam2 * beta_x
        scale_a = max(np.max(np.abs(alpha_t)), np.max(np.abs(v_s * alpha_x)), 1e-30)
        scale_b = max(np.max(np.abs(beta_t)), np.max(np.abs(lam2 * beta_x)), 1e-30)
        res_a = max(res_a, float(np.max(np.abs(ra)) / scale_a))
        res_b = max(res_b, float(np.max(np.abs(rb)) / scale_b))
    return {"alpha": res_a, "beta": res_b}


# ---------------------------------------------------------------------------
# gain slices and derived constants

def gain_slices(kernels: KernelSet) -> GainSlice:
    n = kernels.grid.n_nodes
    delta = kernels.grid.delta
    xi = kernels.grid.x
    k21 = kernels.K21[n - 1, :].copy()
    k22 = kernels.K22[n - 1, :].copy()
    l21 = kernels.L21[n - 1, :].copy()
    l22 = kernels.L22[n - 1, :].copy()
    return GainSlice(
        xi=xi, K21_l=k21, K22_l=k22, L21_l=l21, L22_l=l22,
        dxi_L21_l=np.gradient(l21, delta, edge_order=2),
        dxi_L22_l=np.gradient(l22, delta, edge_order=2),
        L21_ll=float(l21[-1]), L22_ll=float(l22[-1]))


def _trapz(y: np.ndarray, delta: float) -> float:
    return float(delta * (np.sum(y) - 0.5 * (y[0] + y[-1])))


def kernel_constants(gains: GainSlice, coeffs: LinearCoeffs) -> KernelConstants:
    """Quadrature constants eps0..eps3 and the squared-slice integrals."""
    delta = float(gains.xi[1] - gains.xi[0])
    v_s, lam2, r1 = coeffs.lambda1, coeffs.lambda2, coeffs.r1
    eps0 = 4.0 * lam2 ** 2 * gains.L22_ll ** 2
    eps1 = 4.0 * (v_s / r1) ** 2 * _trapz(gains.dxi_L21_l ** 2, delta)
    eps2 = 4.0 * (lam2 / r1) ** 2 * _trapz(gains.dxi_L22_l ** 2, delta)
    eps3 = 4.0 * (v_s / r1) ** 2 * gains.L21_ll ** 2
    return KernelConstants(
        eps0=eps0, eps1=eps1, eps2=eps2, eps3=eps3,
        Ltilde21=_trapz(gains.L21_l ** 2, delta),
        Ltilde22=_trapz(gains.L22_l ** 2, delta))


# ---------------------------------------------------------------------------
# table cache

_CSV_COLUMNS = ("K11", "K12", "K21", "K22", "L11", "L12", "L21", "L22")


def save_kernels_csv(kernels: KernelSet, path):
    n = kernels.grid.n_nodes
    tabs = kernels.tables()
    with open(path, "w") as fh:
        fh.write(f"# n_nodes={n} ell={kernels.grid.ell!r}\n")
        fh.write("x,xi," + ",".join(_CSV_COLUMNS) + "\n")
        x = kernels.grid.x
        for i in range(n):
            for j in range(i + 1):
                vals = ",".join(repr(float(tabs[c][i, j])) for c in _CSV_COLUMNS)
                fh.write(f"{x[i]!r},{x[j]!r},{vals}\n")


def load_kernels_csv(path, grid: TriangularGrid) -> KernelSet:
    with open(path) as fh:
        header = fh.readline().strip()
        fields = dict(tok.split("=") for tok in header.lstrip("# ").split())
        if int(fields["n_nodes"]) != grid.n_nodes or \
                abs(float(fields["ell"]) - grid.ell) > 1e-12:
            raise ConfigurationError(
                f"kernel cache {path} was built for n_nodes={fields['n_nodes']}, "
                f"ell={fields['ell']}; requested grid has n_nodes={grid.n_nodes}, "
                f"ell={grid.ell}")
        fh.readline()  # column header
        data = np.loadtxt(fh, delimiter=",")
    n = grid.n_nodes
    tabs = {c: np.zeros((n, n)) for c in _CSV_COLUMNS}
    i = np.rint(data[:, 0] / grid.delta).astype(int)
    j = np.rint(data[:, 1] / grid.delta).astype(int)
    for col, name in enumerate(_CSV_COLUMNS):
        tabs[name][i, j] = data[:, col + 2]
    return KernelSet(grid, *(tabs[c] for c in _CSV_COLUMNS))
