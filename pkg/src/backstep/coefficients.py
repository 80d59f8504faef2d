"""Plant coefficients, the spectral-shift condition and the decay floor.

The reaction coefficient is separated as ``c(x, t) = c1(x) + c2(t)`` with a
polynomial ``c1`` and a time family ``c2`` whose supremum over t > 0 is known
in closed form.  That makes the admissibility check ``lambda0 > sup c`` and
the decay floor ``lambda_lower = lambda0 - sup c`` exact up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

C2_KINDS = ("constant", "exp_decay", "damped_osc")

#: grid used to cross-check the closed-form suprema (per axis; the sum
#: c1(x) + c2(t) is separable so sampling each axis is equivalent to the
#: full 2001 x 2001 product grid).
_CONFIRM_NODES = 2001


class ValidationError(ValueError):
    """A problem specification violates an admissibility condition."""


@dataclass(frozen=True)
class CoefficientFamily:
    """Coefficient triple (c1, c2, f) of the plant.

    ``c1_poly`` holds ascending polynomial coefficients on [0, 1];
    ``f_poly`` a 2-D coefficient table ``f(x, y) = sum F[i][j] x^i y^j``.
    ``c2_kind`` selects the time family:

    * ``constant``:    c2(t) = a
    * ``exp_decay``:   c2(t) = a * exp(-b t), b > 0
    * ``damped_osc``:  c2(t) = a * sin(b t) * exp(-t)

    Every family is bounded and C^1 on t >= 0 by construction.
    """

    c1_poly: tuple = (0.0,)
    c2_kind: str = "constant"
    c2_a: float = 0.0
    c2_b: float = 0.0
    f_poly: tuple = ((0.0,),)

    def __post_init__(self):
        if self.c2_kind not in C2_KINDS:
            raise ValidationError(f"unknown c2 family {self.c2_kind!r}")
        if self.c2_kind == "exp_decay" and self.c2_b <= 0:
            raise ValidationError("exp_decay requires b > 0")
        c1 = tuple(float(c) for c in np.atleast_1d(self.c1_poly))
        if len(c1) == 0:
            raise ValidationError("c1_poly must be non-empty")
        fp = np.atleast_2d(np.asarray(self.f_poly, dtype=float))
        object.__setattr__(self, "c1_poly", c1)
        object.__setattr__(self, "f_poly", tuple(tuple(row) for row in fp))

    # -- pointwise evaluation -------------------------------------------------

    def c1(self, x):
        return npoly.polyval(x, self.c1_poly)

    def c2(self, t):
        t = np.asarray(t, dtype=float)
        if self.c2_kind == "constant":
            out = np.full_like(t, self.c2_a, dtype=float)
        elif self.c2_kind == "exp_decay":
            out = self.c2_a * np.exp(-self.c2_b * t)
        else:
            out = self.c2_a * np.sin(self.c2_b * t) * np.exp(-t)
        return out if out.ndim else float(out)

    def f(self, x, y):
        xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = npoly.polyval2d(xb, yb, np.asarray(self.f_poly))
        return out if np.ndim(out) else float(out)

    @property
    def f_is_zero(self) -> bool:
        return not np.any(np.asarray(self.f_poly))

    # -- closed-form extrema --------------------------------------------------

    def c1_range(self) -> tuple[float, float]:
        """(min, max) of c1 on [0, 1], via the derivative's real roots."""
        coeffs = np.asarray(self.c1_poly)
        candidates = [0.0, 1.0]
        if len(coeffs) > 1:
            roots = npoly.polyroots(npoly.polyder(coeffs))
            for r in roots:
                if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1 + 1e-12:
                    candidates.append(min(max(r.real, 0.0), 1.0))
        vals = self.c1(np.asarray(candidates))
        return float(np.min(vals)), float(np.max(vals))

    def c2_sup(self) -> float:
        """Supremum of c2 over t > 0 (closed form per family)."""
        a, b = self.c2_a, self.c2_b
        if self.c2_kind == "constant":
            return a
        if self.c2_kind == "exp_decay":
            # a > 0 decays from a (limit t -> 0+); a < 0 rises to 0.
            return max(a, 0.0)
        if a == 0.0 or b == 0.0:
            return 0.0
        if b < 0:
            a, b = -a, -b
        s = b / math.sqrt(1.0 + b * b)  # sin at the first critical point
        if a > 0:
            # first local max of sin(bt)e^{-t}; later maxima shrink by e^{-2pi/b}
            return a * s * math.exp(-math.atan(b) / b)
        return -a * s * math.exp(-(math.atan(b) + math.pi) / b)


@dataclass(frozen=True)
class ProblemSpec:
    """A full plant description plus the spectral shift ``lambda0``."""

    family: CoefficientFamily = field(default_factory=CoefficientFamily)
    lambda0: float = 1.0
    horizon: float = 2.0
    sup_tolerance: float = 1e-9

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if self.sup_tolerance <= 0:
            raise ValidationError("sup_tolerance must be positive")


def _check_domain(x, lo, hi, name):
    x = np.asarray(x)
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError(f"{name} must lie in [{lo}, {hi}]")


def eval_c(spec: ProblemSpec, x, t):
    """Reaction coefficient c(x, t) = c1(x) + c2(t)."""
    _check_domain(x, 0.0, 1.0, "x")
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    return spec.family.c1(x) + spec.family.c2(t)


def _check_triangle(x, y):
    x, y = np.asarray(x), np.asarray(y)
    if np.any(y < -1e-12) or np.any(x > 1 + 1e-12) or np.any(y > x + 1e-12):
        raise ValueError("(x, y) must satisfy 0 <= y <= x <= 1")


def eval_mu(spec: ProblemSpec, x, y):
    """Direct-kernel reaction weight lambda0 - c1(x) + c1(y) on the triangle."""
    _check_triangle(x, y)
    return spec.lambda0 - spec.family.c1(x) + spec.family.c1(y)


def eval_phi(spec: ProblemSpec, x, y):
    """Inverse-kernel reaction weight -lambda0 - c1(x) + c1(y) on the triangle."""
    _check_triangle(x, y)
    return -spec.lambda0 - spec.family.c1(x) + spec.family.c1(y)


def eval_lambda(spec: ProblemSpec, x, t):
    """Target-system reaction lambda(x, t) = lambda0 - c(x, t)."""
    return spec.lambda0 - eval_c(spec, x, t)


def sup_c(spec: ProblemSpec) -> float:
    """Supremum of c over (0,1) x (0, inf).

    Closed form per family (the sum is separable), confirmed against dense
    1-D sampling of each factor on [0,1] and [0, horizon].
    """
    fam = spec.family
    analytic = fam.c1_range()[1] + fam.c2_sup()
    xs = np.linspace(0.0, 1.0, _CONFIRM_NODES)
    ts = np.linspace(0.0, spec.horizon, _CONFIRM_NODES)
    sampled = float(np.max(fam.c1(xs)) + np.max(fam.c2(ts)))
    if sampled > analytic + spec.sup_tolerance:
        raise ValidationError(
            f"sampled sup of c ({sampled:.12g}) exceeds the closed form "
            f"({analytic:.12g}); coefficient family is inconsistent"
        )
    return analytic


def lambda_lower(spec: ProblemSpec) -> float:
    """Decay floor: inf over (0,1) x (0, inf) of lambda0 - c(x, t)."""
    lam = spec.lambda0 - sup_c(spec)
    if lam <= 0:
        raise ValidationError(
            f"lambda0 must exceed the supremum of c(x, t): "
            f"lambda0 = {spec.lambda0:.12g}, sup c = {sup_c(spec):.12g}"
        )
    return lam


def validate(spec: ProblemSpec) -> None:
    """Raise ValidationError unless the spectral-shift condition holds."""
    lambda_lower(spec)
