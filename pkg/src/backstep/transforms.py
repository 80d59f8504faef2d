"""Volterra integral transforms and the boundary feedback law.

The forward map adds a lower-triangular integral of the kernel k, the
inverse map subtracts the analogous l-integral; composing the two is the
identity in the continuum.  Profiles live on uniform grids of [0, 1].
When the profile spacing is an integer multiple of the kernel-lattice
spacing, kernel values are read off the lattice exactly; otherwise they
are interpolated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._quad import volterra_matrix
from .kernel import KernelGrid


@dataclass(frozen=True)
class Profile:
    """A spatial field sampled on a uniform grid over [0, 1]."""

    grid_m: int
    values: np.ndarray

    def __post_init__(self):
        if self.grid_m < 3:
            raise ValueError("grid_m must be at least 3")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid_m,):
            raise ValueError(f"values must have shape ({self.grid_m},)")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values) -> "Profile":
        values = np.asarray(values, dtype=float)
        return cls(len(values), values)

    @classmethod
    def from_function(cls, fn, grid_m: int) -> "Profile":
        return cls(grid_m, np.asarray(fn(np.linspace(0.0, 1.0, grid_m)), dtype=float))

    @property
    def h(self) -> float:
        return 1.0 / (self.grid_m - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_m)


def kernel_matrix(k: KernelGrid, grid_m: int, order: int | None = None) -> np.ndarray:
    """Kernel values k(x_i, y_j) on a profile grid, zero above the diagonal."""
    x = np.linspace(0.0, 1.0, grid_m)
    ii, jj = np.meshgrid(x, x, indexing="ij")
    vals = np.where(jj <= ii, k.values_at(ii, np.minimum(jj, ii), order=order), 0.0)
    return vals


def forward_transform(w: Profile, k: KernelGrid, order: int = 4) -> Profile:
    """u(x) = w(x) + int_0^x k(x, y) w(y) dy per grid node."""
    K = kernel_matrix(k, w.grid_m, order=order)
    W = volterra_matrix(w.grid_m, w.h, order)
    return Profile(w.grid_m, w.values + (W * K) @ w.values)


def inverse_transform(u: Profile, l: KernelGrid, order: int = 4) -> Profile:
    """w(x) = u(x) - int_0^x l(x, y) u(y) dy per grid node."""
    L = kernel_matrix(l, u.grid_m, order=order)
    W = volterra_matrix(u.grid_m, u.h, order)
    return Profile(u.grid_m, u.values - (W * L) @ u.values)


def initial_target_data(w0: Profile, k: KernelGrid, order: int = 4) -> Profile:
    """Target-system initial datum: the forward transform of w0."""
    return forward_transform(w0, k, order)


def kx1_on_grid(k: KernelGrid, grid_m: int) -> np.ndarray:
    """Trace k_x(1, y) resampled onto a profile grid."""
    if np.size(k.trace_kx1) == 0 or not np.all(np.isfinite(k.trace_kx1)):
        raise RuntimeError("kernel grid has no derivative trace")
    ratio = (k.n_eta - 1) / (grid_m - 1)
    step = int(round(ratio))
    if step >= 1 and abs(ratio - step) < 1e-9:
        return k.trace_kx1[::step].copy()
    from scipy.interpolate import CubicSpline

    return CubicSpline(k.x_nodes, k.trace_kx1)(np.linspace(0.0, 1.0, grid_m))


def control_input(w: Profile, k: KernelGrid, order: int = 4) -> float:
    """Boundary feedback U = -k(1,1) w(1) - int_0^1 k_x(1, y) w(y) dy."""
    kx1 = kx1_on_grid(k, w.grid_m)
    wts = np.asarray(volterra_matrix(w.grid_m, w.h, order)[-1])
    k11 = float(k.trace_diag[-1])
    return float(-k11 * w.values[-1] - wts @ (kx1 * w.values))


def make_compatible(w0: Profile, k: KernelGrid, order: int = 4) -> tuple[Profile, float]:
    """Shift w0 by a multiple of x^2/2 so the flux condition holds at x = 1.

    Solves the one-parameter equation matching the one-sided boundary
    derivative of the adjusted datum to its own feedback value; returns
    the adjusted profile and the shift amplitude.  Leaves the derivative
    at x = 0 untouched (the shift function is flat there).
    """
    s = Profile(w0.grid_m, 0.5 * w0.x ** 2)

    def flux_residual(p: Profile) -> float:
        dp = _edge_derivative(p)
        return dp - control_input(p, k, order)

    r0 = flux_residual(w0)
    rs = flux_residual(s)
    if abs(rs) < 1e-14:
        raise RuntimeError("compatibility shift is degenerate for this kernel")
    gamma = -r0 / rs
    adjusted = Profile(w0.grid_m, w0.values + gamma * s.values)
    return adjusted, gamma


def _edge_derivative(p: Profile) -> float:
    """Second-order one-sided derivative at x = 1."""
    v, h = p.values, p.h
    return float((3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h))
