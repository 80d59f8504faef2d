"""Crank-Nicolson time integration of the plant and the target system.

Both systems share the spatial discretisation: second-order centered
Laplacian on a uniform grid with Neumann conditions through second-order
ghost nodes.  The reaction term is folded into the implicit operator and
evaluated at the midpoint time; the plant's nonlocal source and feedback
flux are explicit with one corrector sweep, which keeps the overall
scheme second order in dt.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from ._quad import volterra_matrix
from .coefficients import ProblemSpec
from .kernel import KernelGrid
from .transforms import Profile, control_input, kx1_on_grid

BLOWUP_FACTOR = 1e6


class DivergenceError(RuntimeError):
    """The closed-loop field exceeded the blow-up threshold."""


@dataclass(frozen=True)
class SimConfig:
    grid_m: int = 201
    dt: float = 2.5e-5
    t_end: float = 2.0
    record_stride: int = 100
    scheme: str = "crank_nicolson"

    def __post_init__(self):
        if self.grid_m < 3 or self.dt <= 0 or self.t_end <= 0 or self.record_stride < 1:
            raise ValueError("invalid simulation configuration")
        if self.scheme != "crank_nicolson":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        h = 1.0 / (self.grid_m - 1)
        if self.dt > 0.5 * h:
            warnings.warn(
                f"dt = {self.dt:g} exceeds the accuracy guideline 0.5 h = {0.5 * h:g}",
                stacklevel=2,
            )

    @property
    def h(self) -> float:
        return 1.0 / (self.grid_m - 1)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class Trajectory:
    """Recorded time slices of a simulation."""

    times: np.ndarray
    fields: np.ndarray  # (n_records, grid_m)
    controls: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def grid_m(self) -> int:
        return self.fields.shape[1]

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_m)

    def profile(self, idx: int) -> Profile:
        return Profile(self.grid_m, self.fields[idx])

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class CompatibilityReport:
    ok: bool
    residual_left: float
    residual_right: float


def check_compatibility(w0: Profile, k: KernelGrid, tol: float = 1e-3) -> CompatibilityReport:
    """Boundary residuals of the initial datum against the feedback flux.

    Advisory only: the simulation runs either way, an incompatible datum
    just pollutes a short transient.
    """
    v, h = w0.values, w0.h
    left = abs((-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h))
    right = abs((3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h) - control_input(w0, k))
    return CompatibilityReport(left < tol and right < tol, float(left), float(right))


def _laplacian_bands(m: int, h: float) -> np.ndarray:
    """Banded (3, m) form of the Neumann ghost-node Laplacian."""
    inv = 1.0 / (h * h)
    bands = np.zeros((3, m))
    bands[0, 1:] = inv      # superdiagonal
    bands[1, :] = -2.0 * inv
    bands[2, :-1] = inv     # subdiagonal
    bands[0, 1] = 2.0 * inv
    bands[2, -2] = 2.0 * inv
    return bands


def _apply_tridiag(bands: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = bands[1] * v
    out[:-1] += bands[0, 1:] * v[1:]
    out[1:] += bands[2, :-1] * v[:-1]
    return out


def _cn_matrices(lap: np.ndarray, reaction: np.ndarray, dt: float):
    """(LHS, RHS) bands of the Crank-Nicolson step for u_t = u_xx + reaction u."""
    lhs = -0.5 * dt * lap
    lhs[1] += 1.0 - 0.5 * dt * reaction
    rhs = 0.5 * dt * lap
    rhs[1] += 1.0 + 0.5 * dt * reaction
    return lhs, rhs


def _recorded(step: int, n_steps: int, stride: int) -> bool:
    return step % stride == 0 or step == n_steps


def simulate_target(spec: ProblemSpec, u0: Profile, cfg: SimConfig) -> Trajectory:
    """Integrate u_t = u_xx - lambda(x, t) u with homogeneous Neumann ends."""
    m, h, dt = cfg.grid_m, cfg.h, cfg.dt
    if u0.grid_m != m:
        raise ValueError("initial datum must live on the configured grid")
    lap = _laplacian_bands(m, h)
    x = np.linspace(0.0, 1.0, m)
    c1x = spec.family.c1(x)
    u = u0.values.copy()
    times, fields = [0.0], [u.copy()]
    n_steps = cfg.n_steps
    for step in range(1, n_steps + 1):
        t_mid = (step - 0.5) * dt
        reaction = -(spec.lambda0 - c1x - spec.family.c2(t_mid))
        lhs, rhs = _cn_matrices(lap, reaction, dt)
        u = solve_banded((1, 1), lhs, _apply_tridiag(rhs, u))
        if _recorded(step, n_steps, cfg.record_stride):
            times.append(step * dt)
            fields.append(u.copy())
    return Trajectory(np.asarray(times), np.asarray(fields))


def volterra_source(w: Profile, f_poly) -> Profile:
    """Nonlocal source int_0^x w(y) f(x, y) dy by cumulative trapezoid."""
    F = _source_matrix(f_poly, w.grid_m)
    if F is None:
        return Profile(w.grid_m, np.zeros(w.grid_m))
    W = volterra_matrix(w.grid_m, w.h, order=2)
    return Profile(w.grid_m, (W * F) @ w.values)


def _source_matrix(f_poly, m: int):
    F = np.atleast_2d(np.asarray(f_poly, dtype=float))
    if not np.any(F):
        return None
    from numpy.polynomial import polynomial as npoly

    x = np.linspace(0.0, 1.0, m)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    return np.where(yy <= xx, npoly.polyval2d(xx, np.minimum(yy, xx), F), 0.0)


def simulate_closed_loop(
    spec: ProblemSpec,
    k: KernelGrid,
    w0: Profile,
    cfg: SimConfig,
    open_loop: bool = False,
) -> Trajectory:
    """Integrate the plant under the backstepping feedback flux.

    Diffusion and the local reaction c(x, t) are implicit; the nonlocal
    source and the boundary flux are advanced by one predictor-corrector
    sweep.  ``open_loop=True`` forces U = 0 (for instability contrast
    runs).  Raises DivergenceError if the field grows by ``BLOWUP_FACTOR``
    over the initial sup-norm.
    """
    m, h, dt = cfg.grid_m, cfg.h, cfg.dt
    if w0.grid_m != m:
        raise ValueError("initial datum must live on the configured grid")
    lap = _laplacian_bands(m, h)
    x = np.linspace(0.0, 1.0, m)
    c1x = spec.family.c1(x)
    F = _source_matrix(spec.family.f_poly, m)
    Wq = volterra_matrix(m, h, order=2) if F is not None else None
    if open_loop:
        k11, kx1, uw = 0.0, None, None
    else:
        k11 = float(k.trace_diag[-1])
        kx1 = kx1_on_grid(k, m)
        uw = np.asarray(volterra_matrix(m, h, 4)[-1]) * kx1

    def control(v: np.ndarray) -> float:
        if open_loop:
            return 0.0
        return float(-k11 * v[-1] - uw @ v)

    def source(v: np.ndarray) -> np.ndarray:
        if F is None:
            return 0.0
        return (Wq * F) @ v

    w = w0.values.copy()
    floor = max(float(np.max(np.abs(w))), 1e-12)
    u_ctrl = control(w)
    times, fields, controls = [0.0], [w.copy()], [u_ctrl]
    flux = np.zeros(m)
    n_steps = cfg.n_steps
    for step in range(1, n_steps + 1):
        t_mid = (step - 0.5) * dt
        reaction = c1x + spec.family.c2(t_mid)
        lhs, rhs = _cn_matrices(lap, reaction, dt)
        s_old = source(w)
        u_old = control(w)
        base = _apply_tridiag(rhs, w)
        # predictor: freeze source and flux at the old level
        flux[-1] = (2.0 / h) * u_old
        pred = solve_banded((1, 1), lhs, base + dt * s_old + dt * flux)
        # corrector: midpoint source and flux
        s_mid = 0.5 * (s_old + source(pred))
        u_new = control(pred)
        flux[-1] = (1.0 / h) * (u_old + u_new)
        w = solve_banded((1, 1), lhs, base + dt * s_mid + dt * flux)
        if _recorded(step, n_steps, cfg.record_stride):
            sup = float(np.max(np.abs(w)))
            if not np.isfinite(sup) or sup > BLOWUP_FACTOR * floor:
                raise DivergenceError(
                    f"field reached {sup:.3e} at t = {step * dt:g} "
                    f"(blow-up threshold {BLOWUP_FACTOR:g} x initial sup)"
                )
            times.append(step * dt)
            fields.append(w.copy())
            controls.append(control(w))
    return Trajectory(np.asarray(times), np.asarray(fields), np.asarray(controls))
