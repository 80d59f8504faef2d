"""Stability constants, decay-rate fits and the scenario pipeline.

Turns a scenario config into: solved kernels, closed-loop and target
trajectories, norm traces, explicit stability constants, fitted decay
rates and pass/fail envelope checks, with all artifacts written as CSV
plus a JSON report and a MANIFEST.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .coefficients import CoefficientFamily, ProblemSpec, lambda_lower, validate
from .kernel import (
    GoursatProblem,
    KernelConstants,
    dump_kernel_csv,
    kernel_constants,
    picard_solve,
    residual,
    series_oracle,
    solve_inverse_kernel,
)
from .norms import NormTrace, alf, gronwall_bound, lp_norm, norm_trace, rho, w1p_norm
from .simulator import (
    CompatibilityReport,
    SimConfig,
    Trajectory,
    check_compatibility,
    simulate_closed_loop,
    simulate_target,
)
from .transforms import Profile, initial_target_data, make_compatible


class ConfigError(ValueError):
    """Scenario configuration failed to parse or validate."""


class FitError(RuntimeError):
    """Log-linear fit hit nonpositive values inside the window."""


# --------------------------------------------------------------------------
# explicit stability constants
# --------------------------------------------------------------------------


def stability_constant_C1(p: float, alpha1: float, beta1: float) -> float:
    """L^p-envelope constant (4^(p-1) (1 + alpha1^p)(1 + beta1^p))^(1/p)."""
    if not (p >= 1.0) or np.isinf(p):
        raise ValueError("C1 is defined for finite p >= 1")
    if alpha1 < 0 or beta1 < 0:
        raise ValueError("kernel maxima must be nonnegative")
    return float((4.0 ** (p - 1) * (1 + alpha1 ** p) * (1 + beta1 ** p)) ** (1.0 / p))


def stability_constant_C2(p: float, alphas, betas, C1: float):
    """W^{1,p}-envelope constant; returns (C2, gamma1, gamma2)."""
    if not (p >= 1.0) or np.isinf(p):
        raise ValueError("C2 is defined for finite p >= 1")
    a1, a2, a3 = alphas
    b2, b3 = betas
    gamma1 = max(1.0, b2 ** p + b3 ** p)
    gamma2 = C1 ** p + 9.0 ** (p - 1) * gamma1 * (1 + a1 ** p + a2 ** p + a3 ** p)
    C2 = max(9.0 ** ((p - 1) / p) * gamma1 ** (1.0 / p), gamma2 ** (1.0 / p))
    return float(C2), float(gamma1), float(gamma2)


def stability_constants_inf(alphas, betas):
    """Max-norm constants (C3, C4).

    gamma3 follows the four-branch table in alpha1, beta1 (the <= 1
    branches cover the zero-kernel edge); the L^inf constant feeding C4
    is C3 itself, the p -> inf limit of the C1 formula.
    """
    a1, a2, a3 = alphas
    b1, b2, b3 = betas
    gamma3 = max(1.0, a1) * max(1.0, b1)
    C3 = 4.0 * gamma3
    gamma4 = max(1.0, b2 + b3)
    C4 = max(9.0 * gamma4, C3 + 9.0 * gamma4 * (1 + a1 + a2 + a3))
    return float(C3), float(C4)


def constants_for_p(p: float, con: KernelConstants) -> dict:
    """Envelope constants for one p (C1/C2 finite p, C3/C4 for p = inf)."""
    a = (con.alpha1, con.alpha2, con.alpha3)
    b = (con.beta1, con.beta2, con.beta3)
    if np.isinf(p):
        C3, C4 = stability_constants_inf(a, b)
        gamma3 = max(1.0, con.alpha1) * max(1.0, con.beta1)
        gamma4 = max(1.0, con.beta2 + con.beta3)
        return {"lp": C3, "w1p": C4, "gamma3": gamma3, "gamma4": gamma4}
    C1 = stability_constant_C1(p, con.alpha1, con.beta1)
    C2, g1, g2 = stability_constant_C2(p, a, (con.beta2, con.beta3), C1)
    return {"lp": C1, "w1p": C2, "gamma1": g1, "gamma2": g2}


# --------------------------------------------------------------------------
# fits and envelope checks
# --------------------------------------------------------------------------


def fit_decay_rate(trace: NormTrace, skip_fraction: float = 0.1):
    """Least-squares exponential fit on the trailing window.

    Returns (C, sigma, rms_residual) from log(values) ~ log C - sigma t
    over t >= skip_fraction * T.
    """
    if not (0.0 <= skip_fraction < 1.0):
        raise ValueError("skip_fraction must lie in [0, 1)")
    t = np.asarray(trace.times, dtype=float)
    v = np.asarray(trace.values, dtype=float)
    mask = t >= skip_fraction * t[-1]
    if np.any(v[mask] <= 0.0):
        raise FitError(
            "nonpositive values inside the fit window "
            "(decay reached the floating-point floor; shrink the window)"
        )
    logs = np.log(v[mask])
    slope, intercept = np.polyfit(t[mask], logs, 1)
    fitted = intercept + slope * t[mask]
    rms = float(np.sqrt(np.mean((logs - fitted) ** 2)))
    return float(np.exp(intercept)), float(-slope), rms


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    worst_t: float
    margin: float  # min over t of log(envelope/value), slack excluded
    slack: float


def verify_theorem_bound(
    trace: NormTrace,
    C_bound: float,
    lam: float,
    initial_norm: float,
    slack: float = 1.05,
) -> BoundCheck:
    """Check values(t) <= slack * C_bound * exp(-lam t) * initial_norm."""
    if slack < 1.0:
        raise ValueError("slack must be >= 1")
    t = np.asarray(trace.times, dtype=float)
    v = np.asarray(trace.values, dtype=float)
    envelope = C_bound * initial_norm * np.exp(-lam * t)
    # a few ulps of headroom so exact-equality envelopes are not rejected
    # by rounding in the envelope evaluation itself
    ok = v <= slack * envelope * (1.0 + 8.0 * np.finfo(float).eps) + 1e-300
    worst = int(np.argmax(v - slack * envelope))
    tiny = max(np.max(v), 1.0) * 1e-250
    margin = float(np.min(np.log((envelope + tiny) / np.maximum(v, tiny))))
    return BoundCheck(bool(np.all(ok)), float(t[worst]), margin, slack)


# --------------------------------------------------------------------------
# scenario configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSettings:
    n_xi: int = 401
    tol: float = 1e-10
    max_iter: int = 80


@dataclass(frozen=True)
class InitialData:
    """Named initial-datum family for the closed-loop run."""

    family: str = "bump"
    params: dict = field(default_factory=dict)
    adjust_compatibility: bool = True

    def build(self, grid_m: int) -> Profile:
        p = self.params
        x = np.linspace(0.0, 1.0, grid_m)
        if self.family == "constant":
            vals = np.full(grid_m, float(p.get("a", 1.0)))
        elif self.family == "cosine":
            vals = float(p.get("a", 1.0)) * np.cos(int(p.get("modes", 1)) * np.pi * x)
        elif self.family == "polynomial":
            from numpy.polynomial import polynomial as npoly

            vals = npoly.polyval(x, np.asarray(p.get("coeffs", [1.0]), dtype=float))
        elif self.family == "bump":
            c = float(p.get("center", 0.5))
            wd = float(p.get("width", 0.3))
            hgt = float(p.get("height", 1.0))
            r = np.abs(x - c) / wd
            vals = np.zeros(grid_m)
            inside = r < 1.0
            vals[inside] = hgt * np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        else:
            raise ConfigError(f"unknown initial-data family {self.family!r}")
        return Profile(grid_m, vals)


@dataclass(frozen=True)
class ScenarioConfig:
    spec: ProblemSpec
    kernel: KernelSettings = field(default_factory=KernelSettings)
    sim: SimConfig = field(default_factory=SimConfig)
    initial_data: InitialData = field(default_factory=InitialData)
    p_list: tuple = (1.0, 2.0, math.inf)
    tau_list: tuple = (1e-1, 1e-2, 1e-3)
    skip_fraction: float = 0.1
    slack: float = 1.05
    outputs: str = "out"

    def __post_init__(self):
        if len(self.p_list) == 0 or any(not (p >= 1.0) for p in self.p_list):
            raise ConfigError("p_list must be non-empty with every p >= 1")


def _floats(text: str) -> tuple:
    return tuple(float("inf") if tok in ("inf", "Inf") else float(tok) for tok in text.split())


def _matrix(text: str) -> tuple:
    return tuple(tuple(float(tok) for tok in row.split()) for row in text.split(";"))


def load_scenario(path) -> ScenarioConfig:
    """Parse the flat key = value scenario file (one section per stage)."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read(path)
        prob = cp["problem"]
        family = CoefficientFamily(
            c1_poly=_floats(prob.get("c1_poly", "0")),
            c2_kind=prob.get("c2_kind", "constant"),
            c2_a=prob.getfloat("c2_a", 0.0),
            c2_b=prob.getfloat("c2_b", 0.0),
            f_poly=_matrix(prob.get("f_poly", "0")),
        )
        spec = ProblemSpec(
            family=family,
            lambda0=prob.getfloat("lambda0", 1.0),
            horizon=prob.getfloat("horizon", 2.0),
            sup_tolerance=prob.getfloat("sup_tolerance", 1e-9),
        )
        ker = cp["kernel"] if cp.has_section("kernel") else {}
        kernel = KernelSettings(
            n_xi=int(ker.get("n_xi", 401)),
            tol=float(ker.get("tol", 1e-10)),
            max_iter=int(ker.get("max_iter", 80)),
        )
        simsec = cp["sim"] if cp.has_section("sim") else {}
        sim = SimConfig(
            grid_m=int(simsec.get("grid_m", 201)),
            dt=float(simsec.get("dt", 2.5e-5)),
            t_end=float(simsec.get("t_end", 2.0)),
            record_stride=int(simsec.get("record_stride", 100)),
            scheme=simsec.get("scheme", "crank_nicolson"),
        )
        init = dict(cp["initial_data"]) if cp.has_section("initial_data") else {}
        fam_name = init.pop("family", "bump")
        adjust = init.pop("adjust_compatibility", "true").lower() in ("1", "true", "yes")
        params = {}
        for key, val in init.items():
            params[key] = _floats(val) if key == "coeffs" else float(val)
        ver = cp["verify"] if cp.has_section("verify") else {}
        out = cp["outputs"]["directory"] if cp.has_section("outputs") else "out"
        return ScenarioConfig(
            spec=spec,
            kernel=kernel,
            sim=sim,
            initial_data=InitialData(fam_name, params, adjust),
            p_list=_floats(ver.get("p_list", "1 2 inf")),
            tau_list=_floats(ver.get("tau_list", "1e-1 1e-2 1e-3")),
            skip_fraction=float(ver.get("skip_fraction", 0.1)),
            slack=float(ver.get("slack", 1.05)),
            outputs=out,
        )
    except (KeyError, ValueError, configparser.Error) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad scenario file {path}: {exc}") from exc


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class DecayReport:
    """Outcome of one scenario: constants, fits and envelope checks."""

    lambda_lower: float
    fitted_C: float | None
    fitted_sigma: float | None
    fit_residual: float | None
    bound_margin: float
    constants: dict
    pass_flags: dict
    compatibility: CompatibilityReport | None = None
    fits: dict = field(default_factory=dict)
    notes: tuple = ()

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def to_json(self) -> str:
        payload = asdict(self)
        if self.compatibility is not None:
            payload["compatibility"] = asdict(self.compatibility)
        payload["passed"] = self.passed

        def default(o):
            if isinstance(o, (np.floating, np.integer)):
                return float(o)
            if isinstance(o, np.bool_):
                return bool(o)
            raise TypeError(type(o).__name__)

        return json.dumps(payload, indent=2, default=default)


@dataclass(frozen=True)
class DependenceResult:
    p: float
    observed: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class ContinuousDependenceReport:
    lp: tuple
    w1p: tuple
    linearity_gap: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.lp + self.w1p)


# --------------------------------------------------------------------------
# experiments and the pipeline
# --------------------------------------------------------------------------


def continuous_dependence_experiment(
    config: ScenarioConfig, w01: Profile, w02: Profile
) -> ContinuousDependenceReport:
    """Closed-loop sensitivity to initial data in every configured norm.

    Simulates both data and their difference; the difference run doubles
    as a linearity cross-check (the plant and the feedback are linear, so
    it must reproduce w1 - w2 to rounding).
    """
    if w01.grid_m != w02.grid_m:
        raise ValueError("both initial data must share a grid")
    spec = config.spec
    validate(spec)
    lam = lambda_lower(spec)
    k = picard_solve(GoursatProblem.direct(spec), config.kernel.n_xi,
                     config.kernel.tol, config.kernel.max_iter)
    l = solve_inverse_kernel(spec, config.kernel.n_xi, config.kernel.tol,
                             config.kernel.max_iter)
    con = kernel_constants(k, l)
    t1 = simulate_closed_loop(spec, k, w01, config.sim)
    t2 = simulate_closed_loop(spec, k, w02, config.sim)
    tdiff = simulate_closed_loop(
        spec, k, Profile(w01.grid_m, w01.values - w02.values), config.sim
    )
    diff_fields = t1.fields - t2.fields
    linearity_gap = float(np.max(np.abs(diff_fields - tdiff.fields)))
    m = w01.grid_m
    lp_rows, w1p_rows = [], []
    for p in config.p_list:
        cmap = constants_for_p(p, con)
        sup_lp = max(lp_norm(Profile(m, row), p) for row in diff_fields)
        sup_w1p = max(w1p_norm(Profile(m, row), p) for row in diff_fields)
        init_lp = lp_norm(Profile(m, w01.values - w02.values), p)
        init_w1p = w1p_norm(Profile(m, w01.values - w02.values), p)
        blp = config.slack * cmap["lp"] * init_lp
        bw = config.slack * cmap["w1p"] * init_w1p
        lp_rows.append(DependenceResult(p, sup_lp, blp, sup_lp <= blp))
        w1p_rows.append(DependenceResult(p, sup_w1p, bw, sup_w1p <= bw))
    return ContinuousDependenceReport(tuple(lp_rows), tuple(w1p_rows), linearity_gap)


def _alf_envelope_check(spec, lam, traj: Trajectory, p: float, tau: float, slack: float):
    """Gronwall envelope domination of the smoothed functional trace."""
    m = traj.grid_m
    x = traj.x
    z = np.array([alf(Profile(m, row), p, tau) for row in traj.fields])
    lam_xt = np.array([
        spec.lambda0 - spec.family.c1(x) - spec.family.c2(t) for t in traj.times
    ])
    psi1 = 0.375 * p * np.trapezoid(
        lam_xt * rho(traj.fields, tau) ** (p - 1), dx=1.0 / (m - 1), axis=1
    )
    env = gronwall_bound(z[0], np.full_like(z, -lam * p), tau * psi1, traj.times)
    ok = bool(np.all(z <= slack * env + 1e-250))
    return ok, z, env


def run_scenario(config: ScenarioConfig, write: bool = True) -> DecayReport:
    """Full pipeline: validate, solve kernels, simulate, fit, check, write.

    Deterministic for a given config.  On a stage failure the MANIFEST
    notes the incomplete stage before the exception propagates.
    """
    outdir = config.outputs
    artifacts: list[str] = []
    stage = "validate"
    try:
        if write:
            os.makedirs(outdir, exist_ok=True)
        spec = config.spec
        validate(spec)
        lam = lambda_lower(spec)

        stage = "kernel"
        k = picard_solve(GoursatProblem.direct(spec), config.kernel.n_xi,
                         config.kernel.tol, config.kernel.max_iter)
        l = solve_inverse_kernel(spec, config.kernel.n_xi, config.kernel.tol,
                                 config.kernel.max_iter)
        if write:
            path = os.path.join(outdir, "kernels.csv")
            dump_kernel_csv(path, k, l)
            artifacts.append(path)

        stage = "constants"
        con = kernel_constants(k, l)
        constants = {
            "alpha": (con.alpha1, con.alpha2, con.alpha3),
            "beta": (con.beta1, con.beta2, con.beta3),
            "per_p": {("inf" if np.isinf(p) else f"{p:g}"): constants_for_p(p, con)
                      for p in config.p_list},
        }

        stage = "compatibility"
        w0 = config.initial_data.build(config.sim.grid_m)
        if config.initial_data.adjust_compatibility:
            w0, _ = make_compatible(w0, k)
        compat = check_compatibility(w0, k)

        stage = "simulate"
        traj_w = simulate_closed_loop(spec, k, w0, config.sim)
        u0 = initial_target_data(w0, k)
        traj_u = simulate_target(spec, u0, config.sim)

        stage = "norms"
        traces: dict[str, NormTrace] = {}
        for p in config.p_list:
            for kind in ("lp", "w1p"):
                traces[f"w_{kind}_{_ptag(p)}"] = norm_trace(traj_w, p, kind)
                traces[f"u_{kind}_{_ptag(p)}"] = norm_trace(traj_u, p, kind)

        stage = "verify"
        pass_flags: dict[str, bool] = {}
        fits: dict[str, tuple] = {}
        margins = []
        for p in config.p_list:
            cm = constants_for_p(p, con)
            for kind in ("lp", "w1p"):
                wtr = traces[f"w_{kind}_{_ptag(p)}"]
                init = wtr.values[0]
                chk = verify_theorem_bound(wtr, cm[kind], lam, init, config.slack)
                pass_flags[f"envelope_w_{kind}_{_ptag(p)}"] = chk.passed
                margins.append(chk.margin)
                utr = traces[f"u_{kind}_{_ptag(p)}"]
                chk_u = verify_theorem_bound(utr, 1.0, lam, utr.values[0], config.slack)
                pass_flags[f"floor_u_{kind}_{_ptag(p)}"] = chk_u.passed
                for name, tr in ((f"w_{kind}_{_ptag(p)}", wtr), (f"u_{kind}_{_ptag(p)}", utr)):
                    try:
                        fits[name] = fit_decay_rate(tr, config.skip_fraction)
                    except FitError:
                        fits[name] = None
        for p in config.p_list:
            if np.isinf(p):
                continue
            for tau in config.tau_list:
                ok, z, env = _alf_envelope_check(spec, lam, traj_u, p, tau, config.slack)
                pass_flags[f"alf_envelope_{_ptag(p)}_tau{tau:g}"] = ok
                traces[f"u_alf_{_ptag(p)}_tau{tau:g}"] = NormTrace(
                    traj_u.times, z, p, "alf", tau
                )

        headline = fits.get(f"w_lp_{_ptag(config.p_list[0])}")
        report = DecayReport(
            lambda_lower=lam,
            fitted_C=None if headline is None else headline[0],
            fitted_sigma=None if headline is None else headline[1],
            fit_residual=None if headline is None else headline[2],
            bound_margin=float(min(margins)) if margins else 0.0,
            constants=constants,
            pass_flags=pass_flags,
            compatibility=compat,
            fits=fits,
            notes=(
                "envelope checks sample the recorded times only",
                f"record stride {config.sim.record_stride} steps of dt {config.sim.dt:g}",
            ),
        )

        stage = "artifacts"
        if write:
            artifacts += _write_traces(outdir, traces)
            artifacts.append(_write_trajectory(outdir, "closed_loop.csv", traj_w))
            artifacts.append(_write_controls(outdir, traj_w))
            artifacts.append(_write_trajectory(outdir, "target.csv", traj_u))
            rpath = os.path.join(outdir, "report.json")
            with open(rpath, "w") as fh:
                fh.write(report.to_json())
            artifacts.append(rpath)
            _write_manifest(outdir, artifacts, complete=True)
        return report
    except Exception as exc:
        if write:
            try:
                os.makedirs(outdir, exist_ok=True)
                _write_manifest(outdir, artifacts, complete=False,
                                error=f"stage {stage}: {exc}")
            except OSError:
                pass
        raise


def _ptag(p: float) -> str:
    return "pinf" if np.isinf(p) else f"p{p:g}"


def _write_traces(outdir, traces: dict) -> list[str]:
    written = []
    for name, tr in traces.items():
        path = os.path.join(outdir, f"trace_{name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "value"])
            for t, v in zip(tr.times, tr.values):
                writer.writerow([f"{t:.12g}", f"{v:.15g}"])
        written.append(path)
    return written


def _write_trajectory(outdir, name, traj: Trajectory) -> str:
    path = os.path.join(outdir, name)
    xs = traj.x
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "value"])
        for t, row in zip(traj.times, traj.fields):
            for x, v in zip(xs, row):
                writer.writerow([f"{t:.12g}", f"{x:.12g}", f"{v:.15g}"])
    return path


def _write_controls(outdir, traj: Trajectory) -> str:
    path = os.path.join(outdir, "controls.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "U"])
        for t, u in zip(traj.times, traj.controls):
            writer.writerow([f"{t:.12g}", f"{u:.15g}"])
    return path


def _write_manifest(outdir, artifacts, complete: bool, error: str | None = None):
    path = os.path.join(outdir, "MANIFEST.txt")
    with open(path, "w") as fh:
        fh.write("complete\n" if complete else "INCOMPLETE\n")
        if error:
            fh.write(f"error: {error}\n")
        for a in artifacts:
            fh.write(os.path.basename(a) + "\n")


def oracle_comparison(spec: ProblemSpec, n_xi: int, tol: float, max_iter: int,
                      n_trunc: int = 25):
    """Series-vs-Picard table for the closed-form family f = 0, c1 = r x^2.

    Returns (rows, sup_error); each row is (xi, eta, picard, series, abs_err).
    """
    c1 = np.asarray(spec.family.c1_poly)
    ok_family = spec.family.f_is_zero and len(c1) <= 3 and not np.any(c1[:2])
    if not ok_family:
        raise ConfigError("oracle comparison needs f = 0 and c1(x) = r x^2")
    r = float(c1[2]) if len(c1) == 3 else 0.0
    if r < 0:
        raise ConfigError("oracle comparison needs r >= 0")
    grid = picard_solve(GoursatProblem.direct(spec), n_xi, tol, max_iter)
    lat = grid.lattice
    XI, ETA = lat.mesh()
    mask = lat.region_mask()
    series = series_oracle(spec.lambda0, r, XI[mask], ETA[mask], n_trunc)
    picard = grid.values_xieta[mask]
    err = np.abs(picard - series)
    sup = float(np.max(err))
    step = max(1, len(picard) // 200)
    rows = [
        (XI[mask][i], ETA[mask][i], picard[i], series[i], err[i])
        for i in range(0, len(picard), step)
    ]
    return rows, sup
