import math
import os

import numpy as np
import pytest

from backstep.cli import main as cli_main
from backstep.coefficients import CoefficientFamily, ProblemSpec, ValidationError
from backstep.norms import NormTrace
from backstep.simulator import SimConfig
from backstep.transforms import Profile
from backstep.verify import (
    ConfigError,
    FitError,
    InitialData,
    KernelSettings,
    ScenarioConfig,
    continuous_dependence_experiment,
    fit_decay_rate,
    load_scenario,
    oracle_comparison,
    run_scenario,
    stability_constant_C1,
    stability_constant_C2,
    stability_constants_inf,
    verify_theorem_bound,
)


class TestC1:
    def test_examples(self):
        assert stability_constant_C1(1.0, 0.0, 0.0) == pytest.approx(1.0)
        assert stability_constant_C1(2.0, 0.0, 0.0) == pytest.approx(2.0)
        assert stability_constant_C1(2.0, 1.0, 0.0) == pytest.approx(math.sqrt(8.0))

    def test_at_least_one(self, rng):
        for _ in range(20):
            p = rng.uniform(1, 6)
            a, b = rng.uniform(0, 4, size=2)
            assert stability_constant_C1(p, a, b) >= 1.0

    def test_rejects_inf(self):
        with pytest.raises(ValueError):
            stability_constant_C1(np.inf, 1.0, 1.0)


class TestC2:
    def test_examples(self):
        C2, g1, g2 = stability_constant_C2(1.0, (0, 0, 0), (0, 0), 1.0)
        assert (C2, g1, g2) == (pytest.approx(2.0), pytest.approx(1.0), pytest.approx(2.0))
        C2, g1, g2 = stability_constant_C2(2.0, (0, 0, 0), (0, 0), 2.0)
        assert g2 == pytest.approx(13.0)
        assert C2 == pytest.approx(math.sqrt(13.0))

    def test_monotone_in_kernel_maxima(self, rng):
        p = 2.0
        base = stability_constant_C2(p, (1, 1, 1), (1, 1),
                                     stability_constant_C1(p, 1, 1))[0]
        for idx in range(3):
            a = [1.0, 1.0, 1.0]
            a[idx] += 0.5
            up = stability_constant_C2(p, tuple(a), (1, 1),
                                       stability_constant_C1(p, a[0], 1))[0]
            assert up >= base - 1e-12

    def test_at_least_one(self):
        assert stability_constant_C2(3.0, (0, 0, 0), (0, 0),
                                     stability_constant_C1(3.0, 0, 0))[0] >= 1.0


class TestCInf:
    def test_branch_table(self):
        assert stability_constants_inf((0.5, 0, 0), (0.5, 0, 0))[0] == pytest.approx(4.0)
        assert stability_constants_inf((2.0, 0, 0), (0.5, 0, 0))[0] == pytest.approx(8.0)
        assert stability_constants_inf((2.0, 0, 0), (3.0, 0, 0))[0] == pytest.approx(24.0)

    def test_zero_kernel_edge(self):
        C3, C4 = stability_constants_inf((0, 0, 0), (0, 0, 0))
        assert C3 == pytest.approx(4.0)
        assert C4 == pytest.approx(max(9.0, 4.0 + 9.0))

    def test_c4_floor(self):
        C3, C4 = stability_constants_inf((1, 1, 1), (1, 2, 3))
        assert C4 >= 9.0


class TestFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 4, 200)
        tr = NormTrace(t, 2.0 * np.exp(-1.5 * t), 2.0, "lp")
        C, sigma, res = fit_decay_rate(tr, 0.0)
        assert C == pytest.approx(2.0, rel=1e-12)
        assert sigma == pytest.approx(1.5, rel=1e-12)
        assert res < 1e-12

    def test_constant_trace(self):
        t = np.linspace(0, 4, 50)
        _, sigma, _ = fit_decay_rate(NormTrace(t, np.ones_like(t), 1.0, "lp"), 0.1)
        assert sigma == pytest.approx(0.0, abs=1e-12)

    def test_window_and_error(self):
        t = np.linspace(0, 1, 20)
        v = np.ones_like(t)
        v[-1] = 0.0
        with pytest.raises(FitError):
            fit_decay_rate(NormTrace(t, v, 1.0, "lp"), 0.5)
        with pytest.raises(ValueError):
            fit_decay_rate(NormTrace(t, np.ones_like(t), 1.0, "lp"), 1.0)


class TestBound:
    def test_zero_trace_passes(self):
        t = np.linspace(0, 1, 11)
        chk = verify_theorem_bound(NormTrace(t, np.zeros_like(t), 2.0, "lp"),
                                   1.0, 1.0, 0.0)
        assert chk.passed

    def test_exact_envelope_equality(self):
        t = np.linspace(0, 1, 11)
        vals = 3.0 * np.exp(-2.0 * t) * 0.7
        chk = verify_theorem_bound(NormTrace(t, vals, 2.0, "lp"), 3.0, 2.0, 0.7, slack=1.0)
        assert chk.passed

    def test_violation_reports_worst_time(self):
        t = np.linspace(0, 1, 11)
        vals = np.exp(-1.0 * t)
        vals[5] = 2.0
        chk = verify_theorem_bound(NormTrace(t, vals, 2.0, "lp"), 1.0, 1.0, 1.0)
        assert not chk.passed
        assert chk.worst_t == pytest.approx(t[5])
        assert chk.margin < 0


def scenario(tmpdir, **overrides) -> ScenarioConfig:
    spec = overrides.pop("spec", ProblemSpec(
        CoefficientFamily(c1_poly=(0, 0, 1.0), c2_kind="exp_decay", c2_a=1.0, c2_b=1.0),
        lambda0=3.0,
    ))
    defaults = dict(
        spec=spec,
        kernel=KernelSettings(n_xi=101, tol=1e-9, max_iter=60),
        sim=SimConfig(grid_m=101, dt=2e-4, t_end=0.5, record_stride=50),
        initial_data=InitialData("bump", {"center": 0.5, "width": 0.3, "height": 1.0}, True),
        p_list=(1.0, 2.0, math.inf),
        tau_list=(1e-1, 1e-2),
        outputs=str(tmpdir),
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


class TestScenario:
    def test_default_runs_and_passes(self, tmp_path):
        report = run_scenario(scenario(tmp_path / "out"))
        assert report.passed
        assert report.lambda_lower == pytest.approx(1.0)
        assert report.fitted_sigma is not None and report.fitted_sigma > 0.5
        assert report.bound_margin > 0
        out = tmp_path / "out"
        assert (out / "MANIFEST.txt").read_text().startswith("complete")
        assert (out / "report.json").exists()
        assert (out / "kernels.csv").exists()
        assert (out / "controls.csv").exists()
        assert (out / "trace_w_lp_p2.csv").exists()
        assert (out / "trace_u_alf_p2_tau0.01.csv").exists()

    def test_null_scenario_all_zero(self, tmp_path):
        cfg = scenario(
            tmp_path / "null",
            spec=ProblemSpec(CoefficientFamily(), lambda0=1.0),
            initial_data=InitialData("constant", {"a": 0.0}, False),
            tau_list=(1e-2,),
        )
        report = run_scenario(cfg, write=False)
        assert report.passed
        assert report.fitted_sigma is None  # zero trace has no fit

    def test_scaling_equivariance(self, tmp_path):
        base = scenario(tmp_path / "a", initial_data=InitialData("bump", {"height": 1.0}, True))
        double = scenario(tmp_path / "b", initial_data=InitialData("bump", {"height": 2.0}, True))
        r1 = run_scenario(base, write=False)
        r2 = run_scenario(double, write=False)
        # the envelope coefficient C / ||w0|| and the rate are scale free
        assert r2.fitted_sigma == pytest.approx(r1.fitted_sigma, rel=1e-6)
        assert r2.fitted_C == pytest.approx(2.0 * r1.fitted_C, rel=1e-6)

    def test_target_rate_at_least_floor(self, tmp_path):
        report = run_scenario(scenario(tmp_path / "rate"), write=False)
        for name, fit in report.fits.items():
            if name.startswith("u_lp") and fit is not None:
                assert fit[1] >= report.lambda_lower - 0.05

    def test_invalid_lambda0(self, tmp_path):
        cfg = scenario(tmp_path / "bad", spec=ProblemSpec(
            CoefficientFamily(c1_poly=(0, 0, 1.0), c2_kind="exp_decay", c2_a=1.0, c2_b=1.0),
            lambda0=2.0,
        ))
        with pytest.raises(ValidationError, match="lambda0"):
            run_scenario(cfg)
        manifest = (tmp_path / "bad" / "MANIFEST.txt").read_text()
        assert manifest.startswith("INCOMPLETE")
        assert "validate" in manifest

    def test_p_list_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            scenario(tmp_path, p_list=())
        with pytest.raises(ConfigError):
            scenario(tmp_path, p_list=(0.5,))


class TestContinuousDependence:
    def test_cosine_pair(self, tmp_path):
        cfg = scenario(tmp_path / "dep", p_list=(1.0, 2.0), tau_list=(1e-2,))
        m = cfg.sim.grid_m
        x = np.linspace(0, 1, m)
        w01 = Profile(m, np.cos(np.pi * x))
        w02 = Profile(m, 0.9 * np.cos(np.pi * x))
        rep = continuous_dependence_experiment(cfg, w01, w02)
        assert rep.passed
        assert rep.linearity_gap < 1e-10
        for row in rep.lp:
            assert row.observed <= row.bound

    def test_identical_data(self, tmp_path):
        cfg = scenario(tmp_path / "dep0", p_list=(2.0,), tau_list=(1e-2,))
        m = cfg.sim.grid_m
        w0 = Profile(m, np.cos(np.pi * np.linspace(0, 1, m)))
        rep = continuous_dependence_experiment(cfg, w0, w0)
        assert rep.lp[0].observed == 0.0


CONFIG_TEXT = """
[problem]
c1_poly = 0 0 1
c2_kind = exp_decay
c2_a = 1.0
c2_b = 1.0
f_poly = 0
lambda0 = 3.0
horizon = 2.0

[kernel]
n_xi = 101
tol = 1e-9
max_iter = 60

[sim]
grid_m = 101
dt = 2e-4
t_end = 0.5
record_stride = 50

[initial_data]
family = cosine
a = 1.0
modes = 1
adjust_compatibility = false

[verify]
p_list = 1 2 inf
tau_list = 1e-1 1e-2
skip_fraction = 0.1
slack = 1.05

[outputs]
directory = {out}
"""


class TestConfigFile:
    def test_parse_fields(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "run"))
        cfg = load_scenario(path)
        assert cfg.spec.lambda0 == 3.0
        assert cfg.spec.family.c1_poly == (0.0, 0.0, 1.0)
        assert cfg.kernel.n_xi == 101
        assert cfg.sim.grid_m == 101
        assert cfg.initial_data.family == "cosine"
        assert not cfg.initial_data.adjust_compatibility
        assert cfg.p_list == (1.0, 2.0, math.inf)

    def test_f_poly_matrix(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path).replace(
            "f_poly = 0", "f_poly = 1 0; 0 1"))
        cfg = load_scenario(path)
        assert cfg.spec.family.f(0.5, 0.5) == pytest.approx(1.25)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_scenario("/nonexistive/nope.ini")

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[problem]\nc1_poly = zebra\n")
        with pytest.raises(ConfigError):
            load_scenario(path)


class TestInitialData:
    def test_families(self):
        m = 101
        x = np.linspace(0, 1, m)
        assert np.all(InitialData("constant", {"a": 2.0}).build(m).values == 2.0)
        cos = InitialData("cosine", {"a": 0.5, "modes": 2}).build(m)
        assert np.allclose(cos.values, 0.5 * np.cos(2 * np.pi * x))
        poly = InitialData("polynomial", {"coeffs": (1.0, -1.0)}).build(m)
        assert np.allclose(poly.values, 1.0 - x)
        bump = InitialData("bump", {"center": 0.5, "width": 0.2, "height": 1.0}).build(m)
        assert bump.values[0] == 0.0 and np.max(bump.values) == pytest.approx(1.0)
        with pytest.raises(ConfigError):
            InitialData("sawtooth", {}).build(m)


class TestOracleComparison:
    def test_wrong_family_rejected(self):
        spec = ProblemSpec(CoefficientFamily(c1_poly=(0, 1.0)), lambda0=3.0)
        with pytest.raises(ConfigError):
            oracle_comparison(spec, 65, 1e-9, 40)

    def test_matches(self):
        spec = ProblemSpec(CoefficientFamily(c1_poly=(0, 0, 1.0)), lambda0=4.0)
        rows, sup = oracle_comparison(spec, 65, 1e-10, 60)
        assert sup < 1e-5
        assert len(rows) > 10


class TestCli:
    def test_verify_roundtrip(self, tmp_path, capsys):
        path = tmp_path / "s.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "run"))
        code = cli_main(["verify", "--config", str(path)])
        out = capsys.readouterr().out
        assert code == 0
        assert "[PASS]" in out and "[FAIL]" not in out

    def test_config_error_exit(self, tmp_path, capsys):
        code = cli_main(["verify", "--config", str(tmp_path / "missing.ini")])
        assert code == 2

    def test_invalid_lambda_exit(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "run").replace(
            "lambda0 = 3.0", "lambda0 = 1.0"))
        assert cli_main(["verify", "--config", str(path)]) == 2

    def test_simulate_and_kernel_commands(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "run"))
        assert cli_main(["simulate", "--config", str(path), "--target"]) == 0
        assert cli_main(["simulate", "--config", str(path)]) == 0
        assert cli_main(["kernel", "--config", str(path)]) == 0
        assert (tmp_path / "run" / "target.csv").exists()
        assert (tmp_path / "run" / "closed_loop.csv").exists()
        assert (tmp_path / "run" / "kernel_report.txt").exists()

    def test_oracle_command(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text(CONFIG_TEXT.format(out=tmp_path / "run"))
        assert cli_main(["oracle", "--config", str(path),
                         "--out", str(tmp_path / "run")]) == 0
        assert (tmp_path / "run" / "oracle.csv").exists()
