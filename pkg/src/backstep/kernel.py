"""Goursat kernel problems solved by successive approximation.

The forward kernel k and the inverse kernel l both live on the triangle
D = {0 <= y <= x <= 1} and satisfy a hyperbolic problem with data on the
diagonal and the bottom edge.  In the characteristic variables
``xi = x + y, eta = x - y`` the problem becomes an integral equation

    G = G0 + Phi(G),

where ``G0`` collects the boundary data and the source double integrals and
``Phi`` applies the reaction-weighted double integrals plus (for nonzero
source f) two triple integrals.  Picard iteration of this map converges
factorially; each increment obeys the certified bound :func:`tail_bound`.

Discretisation: one uniform lattice with the same spacing ``delta`` in xi
and eta.  On that lattice every integration limit that appears in the
equation (xi, eta, z + eta - s, 2 z - s, the diagonal) is itself a lattice
node, so the sweeps reduce to cumulative quadrature without interpolation.
The lattice carries a few padding columns past xi = 2; the iterate extends
smoothly there (coefficients are polynomials), which lets all derivative
stencils on the closed region stay centered.  Values on the region are
unaffected by the padding: their integral recursions never read outside
the region.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from ._quad import composite_weights, cumquad, fixed_quad, volterra_matrix
from .coefficients import ProblemSpec, eval_mu, eval_phi

MIN_N_XI = 33
_PAD = 8
_POINT_QUAD_NODES = 129


class ConvergenceError(RuntimeError):
    """Picard iteration hit max_iter with the increment above tolerance."""

    def __init__(self, message: str, last_increment: float):
        super().__init__(message)
        self.last_increment = last_increment


# --------------------------------------------------------------------------
# problem description and lattice
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GoursatProblem:
    """Direct or inverse kernel problem for a given plant.

    ``orientation`` selects both the reaction weight (mu for direct, phi
    for inverse) and the sign of the source convolution term (+ direct,
    - inverse).
    """

    orientation: str
    spec: ProblemSpec

    def __post_init__(self):
        if self.orientation not in ("direct", "inverse"):
            raise ValueError("orientation must be 'direct' or 'inverse'")

    @classmethod
    def direct(cls, spec: ProblemSpec) -> "GoursatProblem":
        return cls("direct", spec)

    @classmethod
    def inverse(cls, spec: ProblemSpec) -> "GoursatProblem":
        return cls("inverse", spec)

    @property
    def lambda0(self) -> float:
        return self.spec.lambda0

    @property
    def conv_sign(self) -> float:
        return 1.0 if self.orientation == "direct" else -1.0

    @property
    def reaction(self):
        """Triangle-coordinate reaction weight (mu or phi)."""
        if self.orientation == "direct":
            return lambda x, y: eval_mu(self.spec, x, y)
        return lambda x, y: eval_phi(self.spec, x, y)

    def reaction_chart(self, xi, eta):
        """Reaction weight in characteristic coordinates (any real args)."""
        fam = self.spec.family
        sign = self.conv_sign
        return sign * self.lambda0 - fam.c1((xi + eta) / 2.0) + fam.c1((xi - eta) / 2.0)


@dataclass(frozen=True)
class ChartLattice:
    """Aligned uniform lattice on the (xi, eta) chart with padding in xi."""

    n_xi: int
    pad: int = _PAD

    def __post_init__(self):
        if self.n_xi < MIN_N_XI or self.n_xi % 2 == 0:
            raise ValueError(f"n_xi must be odd and >= {MIN_N_XI}")

    @property
    def delta(self) -> float:
        return 2.0 / (self.n_xi - 1)

    @property
    def n_eta(self) -> int:
        return (self.n_xi + 1) // 2

    @property
    def npts(self) -> int:
        return self.n_xi + self.pad

    @property
    def xi(self) -> np.ndarray:
        return np.arange(self.npts) * self.delta

    @property
    def eta(self) -> np.ndarray:
        return np.arange(self.n_eta) * self.delta

    def mesh(self):
        return np.meshgrid(self.xi, self.eta)

    def region_mask(self) -> np.ndarray:
        """True on lattice nodes with eta <= xi <= 2 - eta."""
        i = np.arange(self.npts)[None, :]
        j = np.arange(self.n_eta)[:, None]
        return (i >= j) & (i <= self.n_xi - 1 - j)


# --------------------------------------------------------------------------
# quadrature building blocks of the integral equation
# --------------------------------------------------------------------------


def _double_parts(g: np.ndarray, lat: ChartLattice, order: int):
    """P[j,i] = int_{xi_j}^{xi_i} int_0^{eta_j} g  and  Q[j] = int_0^{eta_j} int_0^tau g."""
    d = lat.delta
    V = cumquad(g, d, axis=0, order=order)  # int_0^{eta_j} g(xi_i, s) ds
    W = cumquad(V, d, axis=1, order=order)
    rows = np.arange(lat.n_eta)
    P = W - W[rows, rows][:, None]
    Q = cumquad(V[rows, rows], d, order=order)
    return P, Q


def _psi_tables(f_poly: np.ndarray, lat: ChartLattice) -> list[np.ndarray]:
    """Expand f((tau-s)/2, z-(tau+s)/2) = sum_r z^r * psi_r(tau, s) on the lattice."""
    F = np.atleast_2d(np.asarray(f_poly, dtype=float))
    XI, ETA = lat.mesh()
    a = (XI - ETA) / 2.0
    bneg = -(XI + ETA) / 2.0  # the z-free part of the second argument
    n_q = F.shape[1]
    a_polys = [npoly.polyval(a, F[:, q]) for q in range(n_q)]
    tables = []
    for r in range(n_q):
        acc = np.zeros_like(a)
        for q in range(r, n_q):
            acc += math.comb(q, r) * bneg ** (q - r) * a_polys[q]
        tables.append(acc)
    return tables


def _triple_parts(G: np.ndarray, psi: list[np.ndarray], lat: ChartLattice, order: int):
    """Both source-convolution triple integrals of the sweep operator.

    Returns (P3, Q3) with
      P3[j,i] = int_{xi_j}^{xi_i} dz int_0^{eta_j} ds int_z^{z+eta_j-s} H(tau,s,z) dtau
      Q3[j]   = int_0^{eta_j} dz int_0^z ds int_z^{2z-s} H(tau,s,z) dtau
    where H(tau,s,z) = f((tau-s)/2, z-(tau+s)/2) G(tau,s).  All inner limits
    are lattice-aligned, so the tau-integrals are differences of one
    cumulative table per z-power of the expanded f.
    """
    n_eta, npts = G.shape
    d = lat.delta
    P3 = np.zeros_like(G)
    Q3 = np.zeros(n_eta)
    WB = volterra_matrix(n_eta, d, order)
    cols = np.arange(npts)
    am = np.arange(n_eta)
    for r, ps in enumerate(psi):
        Cr = cumquad(ps * G, d, axis=1, order=order)
        zpow_xi = lat.xi ** r
        zpow_eta = lat.eta ** r
        for j in range(1, n_eta):
            js = np.arange(j + 1)
            idx = cols[None, :] + (j - js)[:, None]
            np.clip(idx, 0, npts - 1, out=idx)
            gathered = Cr[js[:, None], idx]
            B = WB[j, : j + 1] @ (gathered - Cr[: j + 1])
            C1d = cumquad(zpow_xi * B, d, order=order)
            P3[j] += C1d - C1d[j]
        idx2 = 2 * am[:, None] - am[None, :]
        np.clip(idx2, 0, npts - 1, out=idx2)
        M = Cr[am[None, :], idx2] - Cr[am[None, :], am[:, None]]
        D = (WB[:, :n_eta] * M).sum(axis=1)
        Q3 += cumquad(zpow_eta * D, d, order=order)
    return P3, Q3


def _g0_lattice(problem: GoursatProblem, lat: ChartLattice, order: int) -> np.ndarray:
    fam = problem.spec.family
    XI, ETA = lat.mesh()
    G0 = 0.25 * problem.lambda0 * (XI + ETA)
    if not fam.f_is_zero:
        ftil = fam.f((XI + ETA) / 2.0, (XI - ETA) / 2.0)
        Pf, Qf = _double_parts(ftil, lat, order)
        G0 = G0 + 0.25 * Pf + 0.5 * Qf[:, None]
    return G0


def g_initial(problem: GoursatProblem, xi: float, eta: float, order: int = 4) -> float:
    """Inhomogeneous part G0 of the integral equation at one chart point."""
    if not (0.0 <= eta <= 1.0 and eta - 1e-12 <= xi <= 2.0 - eta + 1e-12):
        raise ValueError("(xi, eta) must satisfy 0 <= eta <= 1, eta <= xi <= 2 - eta")
    fam = problem.spec.family
    out = 0.25 * problem.lambda0 * (xi + eta)
    if fam.f_is_zero:
        return float(out)
    nq = _POINT_QUAD_NODES

    def ftil(tau, s):
        return fam.f((tau + s) / 2.0, (tau - s) / 2.0)

    # int_eta^xi int_0^eta
    tau = np.linspace(eta, xi, nq)
    s = np.linspace(0.0, eta, nq)
    vals = ftil(tau[:, None], s[None, :])
    inner = fixed_quad(vals, s[1] - s[0] if eta else 0.0, order=order, axis=1)
    out += 0.25 * fixed_quad(inner, tau[1] - tau[0] if xi != eta else 0.0, order=order)
    # int_0^eta int_0^tau, inner integral rescaled to the unit interval
    tau2 = np.linspace(0.0, eta, nq)
    u = np.linspace(0.0, 1.0, nq)
    vals2 = ftil(tau2[:, None], tau2[:, None] * u[None, :])
    inner2 = tau2 * fixed_quad(vals2, u[1] - u[0], order=order, axis=1)
    out += 0.5 * fixed_quad(inner2, tau2[1] - tau2[0] if eta else 0.0, order=order)
    return float(out)


def phi_operator(
    problem: GoursatProblem,
    values: np.ndarray,
    n_xi: int | None = None,
    order: int = 4,
) -> np.ndarray:
    """One application of the sweep operator Phi to lattice values.

    ``values`` must have the lattice shape (n_eta, n_xi + pad); the result
    has the same shape.  Linear in ``values``.
    """
    values = np.asarray(values, dtype=float)
    if n_xi is None:
        n_xi = 2 * values.shape[0] - 1
    lat = ChartLattice(n_xi)
    if values.shape != (lat.n_eta, lat.npts):
        raise ValueError(f"expected lattice shape {(lat.n_eta, lat.npts)}, got {values.shape}")
    XI, ETA = lat.mesh()
    react = problem.reaction_chart(XI, ETA)
    out = _apply_phi(react, None if problem.spec.family.f_is_zero else
                     _psi_tables(problem.spec.family.f_poly, lat),
                     problem.conv_sign, values, lat, order)
    return out


def _apply_phi(react, psi, conv_sign, G, lat, order):
    P, Q = _double_parts(react * G, lat, order)
    out = 0.25 * P + 0.5 * Q[:, None]
    if psi is not None:
        P3, Q3 = _triple_parts(G, psi, lat, order)
        out += conv_sign * (0.25 * P3 + 0.5 * Q3[:, None])
    return out


# --------------------------------------------------------------------------
# certified bounds
# --------------------------------------------------------------------------


def tail_bound(n: int, M: float, xi: float, eta: float) -> float:
    """Certified bound M^(n+2) (xi+eta)^(n+1) / (n+1)! on the n-th increment."""
    if n < 0 or M < 0:
        raise ValueError("need n >= 0 and M >= 0")
    if M == 0.0:
        return 0.0
    s = xi + eta
    if s <= 0.0:
        return 0.0
    logb = (n + 2) * math.log(M) + (n + 1) * math.log(s) - math.lgamma(n + 2)
    return math.exp(logb)


def bound_constant_M(spec: ProblemSpec) -> float:
    """Growth constant (lambda1 + fbar) / 2 of the increment bound."""
    lo, hi = spec.family.c1_range()
    spread = hi - lo
    lam1 = max(abs(spec.lambda0), abs(spec.lambda0) + spread)
    if spec.family.f_is_zero:
        fbar = 0.0
    else:
        g = np.linspace(0.0, 1.0, 801)
        fbar = float(np.max(np.abs(spec.family.f(g[:, None], g[None, :]))))
    return 0.5 * (lam1 + fbar)


# --------------------------------------------------------------------------
# closed-form series for f = 0, c1(x) = r x^2
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesCoefficients:
    """Ragged table A[n][i] of the closed-form series coefficients."""

    r: float
    n_max: int
    A: tuple
    lambda0: float | None = None


def _c_factor(m: int) -> float:
    return 1.0 / (m * (m + 1))


def series_coefficients(n_max: int, r: float) -> SeriesCoefficients:
    """Coefficient table via the three-branch recursion.

    One rule covers all branches: with phantom parents A[n-1][-1] =
    A[n-1][n] = 0,

        A[n][i] = (A[n-1][i-1] - r A[n-1][i]) C_{2n-i},

    so A[n][0] picks up a factor -r C_{2n} per level and A[n][n] a factor
    C_n.  (Collecting terms in the level-n sum forces the -r weight on
    the second parent; it is required for consistency with the i = 0
    closed form and with the integral equation itself.)
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if r < 0:
        raise ValueError("r must be nonnegative")
    rows = [(1.0,)]
    for n in range(1, n_max + 1):
        prev = rows[n - 1]
        row = [0.0] * (n + 1)
        row[0] = -r * _c_factor(2 * n) * prev[0]
        for i in range(1, n):
            row[i] = (prev[i - 1] - r * prev[i]) * _c_factor(2 * n - i)
        row[n] = prev[n - 1] * _c_factor(n)
        rows.append(tuple(row))
    return SeriesCoefficients(r=r, n_max=n_max, A=tuple(rows))


def series_oracle(lambda0: float, r: float, xi, eta, n_trunc: int):
    """Partial sum of the closed-form kernel series (f = 0, c1 = r x^2).

    The caller is responsible for matching the plant; wrong coefficients
    give a well-defined but meaningless number.
    """
    if n_trunc < 1:
        raise ValueError("n_trunc must be >= 1")
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    table = series_coefficients(n_trunc, r).A
    total = 0.25 * lambda0 * (xi + eta)
    for n in range(1, n_trunc + 1):
        quarter = 0.25 ** n
        inner = np.zeros_like(total)
        for i in range(0, n + 1):
            t_term = (
                xi ** (2 * n + 1 - i) * eta ** (2 * n - i)
                + xi ** (2 * n - i) * eta ** (2 * n + 1 - i)
            )
            inner = inner + (lambda0 ** i) * table[n][i] * t_term
        total = total + 0.25 * lambda0 * quarter * inner
    return total if total.ndim else float(total)


def series_tail_bound(lambda0: float, r: float, xi, eta, n_trunc: int) -> float:
    """Upper bound on the truncation remainder of :func:`series_oracle`."""
    m1 = r + abs(lambda0)
    xi = float(np.max(np.asarray(xi)))
    eta = float(np.max(np.asarray(eta)))
    total = 0.0
    for n in range(n_trunc + 1, n_trunc + 400):
        logt = (n + 1) * math.log(max(m1, 1e-300)) - math.lgamma(n + 2)
        term = math.exp(logt) * (xi ** (n + 1) * eta ** n + xi ** n * eta ** (n + 1))
        total += term
        if term < 1e-300 or term < 1e-18 * max(total, 1.0):
            break
    return total


# --------------------------------------------------------------------------
# the solved kernel
# --------------------------------------------------------------------------


class KernelConstants(NamedTuple):
    alpha1: float
    alpha2: float
    alpha3: float
    beta1: float
    beta2: float
    beta3: float


@dataclass(frozen=True)
class KernelGrid:
    """A converged kernel on the chart lattice and its triangle image.

    ``values_xieta`` holds G on the padded lattice; ``values_xy`` the
    kernel on the uniform triangle grid x_m = m delta (zero above the
    diagonal); ``trace_diag`` is k(x, x) and ``trace_kx1`` is k_x(1, y).
    """

    orientation: str
    n_xi: int
    pad: int
    delta: float
    lambda0: float
    bound_M: float
    order: int
    values_xieta: np.ndarray
    values_xy: np.ndarray
    trace_diag: np.ndarray
    trace_kx1: np.ndarray
    iterations_used: int
    final_increment: float
    increments: tuple
    n_certified: int

    @property
    def n_eta(self) -> int:
        return (self.n_xi + 1) // 2

    @property
    def x_nodes(self) -> np.ndarray:
        """Triangle grid nodes shared by values_xy, trace_diag, trace_kx1."""
        return np.arange(self.n_eta) * self.delta

    @property
    def lattice(self) -> ChartLattice:
        return ChartLattice(self.n_xi, self.pad)

    def tri_mask(self) -> np.ndarray:
        return np.tril(np.ones((self.n_eta, self.n_eta), dtype=bool))

    def kx_xy(self) -> np.ndarray:
        """k_x on the values_xy grid via chain-rule lattice differences."""
        kx_chart = self._kx_chart()
        m = np.arange(self.n_eta)
        return np.where(self.tri_mask(), kx_chart[m[:, None] - m[None, :],
                                                  m[:, None] + m[None, :]], 0.0)

    def _kx_chart(self) -> np.ndarray:
        G = self.values_xieta
        gxi = np.gradient(G, self.delta, axis=1, edge_order=2)
        geta = np.gradient(G, self.delta, axis=0, edge_order=2)
        return gxi + geta

    def values_at(self, x, y, order: int | None = None) -> np.ndarray:
        """Kernel values at arbitrary triangle points.

        Exact lattice reads when the points sit on the chart lattice;
        otherwise separable Lagrange interpolation (cubic for order 4,
        linear for order 2).
        """
        order = self.order if order is None else order
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = (x + y) / self.delta
        v = (x - y) / self.delta
        G = self.values_xieta
        iu = np.rint(u).astype(int)
        iv = np.rint(v).astype(int)
        on_lattice = (np.abs(u - iu) < 1e-9) & (np.abs(v - iv) < 1e-9)
        if np.all(on_lattice):
            return G[iv, iu]
        if order >= 4:
            return _lagrange4_2d(G, u, v)
        return _bilinear_2d(G, u, v)


def _lagrange_w(s: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights for offsets 0..3 at fractional position s."""
    w = np.empty(s.shape + (4,))
    w[..., 0] = -(s - 1) * (s - 2) * (s - 3) / 6.0
    w[..., 1] = s * (s - 2) * (s - 3) / 2.0
    w[..., 2] = -s * (s - 1) * (s - 3) / 2.0
    w[..., 3] = s * (s - 1) * (s - 2) / 6.0
    return w


def _lagrange4_2d(G, u, v):
    nj, ni = G.shape
    bu = np.clip(np.floor(u).astype(int) - 1, 0, ni - 4)
    bv = np.clip(np.floor(v).astype(int) - 1, 0, nj - 4)
    wu = _lagrange_w(u - bu)
    wv = _lagrange_w(v - bv)
    out = np.zeros(np.broadcast(u, v).shape)
    for a in range(4):
        for b in range(4):
            out += wv[..., a] * wu[..., b] * G[bv + a, bu + b]
    return out


def _bilinear_2d(G, u, v):
    nj, ni = G.shape
    bu = np.clip(np.floor(u).astype(int), 0, ni - 2)
    bv = np.clip(np.floor(v).astype(int), 0, nj - 2)
    su = u - bu
    sv = v - bv
    return ((1 - sv) * (1 - su) * G[bv, bu] + (1 - sv) * su * G[bv, bu + 1]
            + sv * (1 - su) * G[bv + 1, bu] + sv * su * G[bv + 1, bu + 1])


def _build_grid(problem, lat, G, iterations, increments, n_cert, order) -> KernelGrid:
    n_eta = lat.n_eta
    m = np.arange(n_eta)
    tri = np.tril(np.ones((n_eta, n_eta), dtype=bool))
    values_xy = np.where(tri, G[m[:, None] - m[None, :], m[:, None] + m[None, :]], 0.0)
    trace_diag = G[0, 2 * m]
    grid = KernelGrid(
        orientation=problem.orientation,
        n_xi=lat.n_xi,
        pad=lat.pad,
        delta=lat.delta,
        lambda0=problem.lambda0,
        bound_M=bound_constant_M(problem.spec),
        order=order,
        values_xieta=G,
        values_xy=values_xy,
        trace_diag=trace_diag,
        trace_kx1=np.zeros(n_eta),
        iterations_used=iterations,
        final_increment=increments[-1] if increments else 0.0,
        increments=tuple(increments),
        n_certified=n_cert,
    )
    object.__setattr__(grid, "trace_kx1", kernel_derivative_x(grid))
    return grid


def picard_solve(
    problem: GoursatProblem,
    n_xi: int = 201,
    tol: float = 1e-10,
    max_iter: int = 80,
    order: int = 4,
    initial_values: np.ndarray | None = None,
) -> KernelGrid:
    """Solve the kernel integral equation by successive approximation.

    Iterates ``G <- G0 + Phi(G)`` until the sup of the increment over the
    region drops below ``tol``, or until the certified bound says every
    remaining increment is already below ``tol`` (whichever happens
    first).  ``initial_values`` replaces the standard starting iterate
    G0; the fixed point does not depend on it (contraction), which is the
    uniqueness diagnostic.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    lat = ChartLattice(n_xi)
    XI, ETA = lat.mesh()
    react = problem.reaction_chart(XI, ETA)
    fam = problem.spec.family
    psi = None if fam.f_is_zero else _psi_tables(fam.f_poly, lat)
    G0 = _g0_lattice(problem, lat, order)
    M = bound_constant_M(problem.spec)
    n_cert = 0
    while tail_bound(n_cert, M, 2.0, 0.0) >= tol:
        n_cert += 1
        if n_cert > 1000:
            break
    region = lat.region_mask()
    if initial_values is not None and np.shape(initial_values) != G0.shape:
        raise ValueError(f"initial_values must have lattice shape {G0.shape}")
    G = G0.copy() if initial_values is None else np.asarray(initial_values, dtype=float).copy()
    increments: list[float] = []
    converged = False
    n = 0
    while n < max_iter:
        if n >= n_cert and initial_values is None:
            converged = True
            break
        G_next = G0 + _apply_phi(react, psi, problem.conv_sign, G, lat, order)
        inc = float(np.max(np.abs((G_next - G)[region])))
        increments.append(inc)
        G = G_next
        n += 1
        if inc < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"no convergence after {max_iter} sweeps "
            f"(last increment {increments[-1]:.3e} >= tol {tol:.3e}); "
            "the grid is too coarse for this tolerance",
            last_increment=increments[-1],
        )
    return _build_grid(problem, lat, G, n, increments, n_cert, order)


def solve_inverse_kernel(
    spec: ProblemSpec, n_xi: int = 201, tol: float = 1e-10, max_iter: int = 80, order: int = 4
) -> KernelGrid:
    """Inverse-kernel counterpart of :func:`picard_solve`."""
    return picard_solve(GoursatProblem.inverse(spec), n_xi, tol, max_iter, order)


def solve_direct_kernel(
    spec: ProblemSpec, n_xi: int = 201, tol: float = 1e-10, max_iter: int = 80, order: int = 4
) -> KernelGrid:
    return picard_solve(GoursatProblem.direct(spec), n_xi, tol, max_iter, order)


# --------------------------------------------------------------------------
# derived traces, constants, residuals
# --------------------------------------------------------------------------


def kernel_derivative_x(grid: KernelGrid) -> np.ndarray:
    """Trace k_x(1, y) on the y-grid, by chain rule on the chart lattice.

    k_x = G_xi + G_eta with second-order differences; the padded lattice
    keeps the xi-stencil centered on the whole edge x = 1.
    """
    if grid.n_xi < MIN_N_XI:
        raise ValueError(f"grid too coarse: n_xi >= {MIN_N_XI} required")
    kx_chart = grid._kx_chart()
    n = grid.n_eta
    idx = np.arange(n)
    return kx_chart[n - 1 - idx, n - 1 + idx]


def kernel_constants(k: KernelGrid, l: KernelGrid) -> KernelConstants:
    """Grid maxima of |k|, |k(x,x)|, |k_x| and the l-kernel analogues."""

    def three(g: KernelGrid):
        tri = g.tri_mask()
        return (
            float(np.max(np.abs(g.values_xy[tri]))),
            float(np.max(np.abs(g.trace_diag))),
            float(np.max(np.abs(g.kx_xy()[tri]))),
        )

    a1, a2, a3 = three(k)
    b1, b2, b3 = three(l)
    return KernelConstants(a1, a2, a3, b1, b2, b3)


@dataclass(frozen=True)
class KernelResidual:
    """Residual report of the kernel problem on a converged grid.

    ``interior_sup`` measures the hyperbolic identity with centered
    stencils of spacing ``h``.  The three boundary entries report the
    diagonal slope, the bottom-edge derivative condition and the corner
    value.  The bottom-edge condition is enforced algebraically by the
    integral representation (the two chart derivatives share every
    term), so its residual only certifies that the discrete
    representation inherits the identity.
    """

    interior_sup: float
    bc_diagonal: float
    bc_edge: float
    bc_corner: float
    h: float
    n_points: int

    def __float__(self):
        return self.interior_sup


def residual(grid: KernelGrid, problem: GoursatProblem, h: float | None = None) -> KernelResidual:
    """Sup-norm residual of the kernel PDE at verification spacing ``h``.

    ``h`` must be a lattice multiple; the stencil strides the lattice so
    kernel values enter exactly.
    """
    lat = grid.lattice
    d = lat.delta
    if h is None:
        h = d
    st = int(round(h / d))
    if st < 1 or abs(st * d - h) > 1e-9 * max(h, d):
        raise ValueError("h must be a positive multiple of the lattice spacing")
    if 2 * st > grid.pad:
        raise ValueError("verification spacing too large for the lattice padding")
    G = grid.values_xieta
    fam = problem.spec.family
    XI, ETA = lat.mesh()
    react = problem.reaction_chart(XI, ETA)
    order = grid.order
    worst = 0.0
    count = 0
    for j in range(st, lat.n_eta - st, st):
        i = np.arange(j, lat.n_xi - j)
        gxe = (G[j + st, i + st] - G[j + st, i - st]
               - G[j - st, i + st] + G[j - st, i - st]) / (4.0 * (st * d) ** 2)
        res = 4.0 * gxe - react[j, i] * G[j, i]
        if not fam.f_is_zero:
            y = (lat.xi[i] - lat.eta[j]) / 2.0
            res -= fam.f((lat.xi[i] + lat.eta[j]) / 2.0, y)
            ks = np.arange(j // st + 1)
            zk = y[None, :] + (ks * st * d)[:, None]
            fk = fam.f(zk, y[None, :])
            gk = G[j - ks[:, None] * st, i[None, :] + ks[:, None] * st]
            w = composite_weights(j // st + 1, order) * (st * d)
            res -= problem.conv_sign * (w[:, None] * fk * gk).sum(axis=0)
        worst = max(worst, float(np.max(np.abs(res))))
        count += len(i)
    slope = np.gradient(grid.trace_diag, d, edge_order=2)
    bc_diag = float(np.max(np.abs(2.0 * slope - problem.lambda0)))
    bc_edge = _edge_identity_residual(grid, problem)
    bc_corner = float(abs(G[0, 0]))
    return KernelResidual(worst, bc_diag, bc_edge, bc_corner, st * d, count)


def _edge_identity_residual(grid: KernelGrid, problem: GoursatProblem) -> float:
    """Residual of k_y(x, 0) = 0 through the chart-derivative identity.

    On the edge xi = eta the two chart derivatives reduce to the same
    combination of edge integrals; assembling them separately measures
    how far the discrete representation drifts from the built-in
    condition (zero up to rounding).
    """
    lat = grid.lattice
    d = lat.delta
    order = grid.order
    G = grid.values_xieta
    fam = problem.spec.family
    n = lat.n_eta
    rows = np.arange(n)
    # integrand over s (axis 0) at fixed edge node xi = eta_m (axis 1)
    react = problem.reaction_chart(lat.xi[None, :n], lat.eta[:, None])
    common = cumquad(react * G[:, :n], d, axis=0, order=order)[rows, rows]
    if not fam.f_is_zero:
        ftil = fam.f((lat.xi[None, :n] + lat.eta[:, None]) / 2.0,
                     (lat.xi[None, :n] - lat.eta[:, None]) / 2.0)
        common = common + cumquad(ftil, d, axis=0, order=order)[rows, rows]
        common = common + problem.conv_sign * _edge_triple(grid, problem, lat, order)
    g_xi_edge = 0.25 * problem.lambda0 + 0.25 * common
    g_eta_edge = 0.25 * problem.lambda0 + (0.5 - 0.25) * common
    return float(np.max(np.abs(g_xi_edge - g_eta_edge)))


def _edge_triple(grid, problem, lat, order):
    """int_0^eta int_eta^{2 eta - s} H(tau, s, eta) dtau ds at each edge node."""
    d = lat.delta
    n = lat.n_eta
    G = grid.values_xieta
    psi = _psi_tables(problem.spec.family.f_poly, lat)
    WB = volterra_matrix(n, d, order)
    out = np.zeros(n)
    am = np.arange(n)
    for r, ps in enumerate(psi):
        Cr = cumquad(ps * G, d, axis=1, order=order)
        idx2 = np.clip(2 * am[:, None] - am[None, :], 0, lat.npts - 1)
        M = Cr[am[None, :], idx2] - Cr[am[None, :], am[:, None]]
        out += (lat.eta ** r) * (WB[:, :n] * M).sum(axis=1)
    return out


def dump_kernel_csv(path, k: KernelGrid, l: KernelGrid) -> None:
    """Write (x, y, k, l) rows on the triangle grid, row-major in x then y."""
    if k.values_xy.shape != l.values_xy.shape:
        raise ValueError("kernel grids must share a lattice")
    xs = k.x_nodes
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "k", "l"])
        for m in range(len(xs)):
            for ll in range(m + 1):
                writer.writerow([f"{xs[m]:.12g}", f"{xs[ll]:.12g}",
                                 f"{k.values_xy[m, ll]:.15g}", f"{l.values_xy[m, ll]:.15g}"])
