#!/usr/bin/env python3
"""Run the default stabilization scenario and print the verdict.

Equivalent to `backstep verify --config scripts/configs/default.ini`,
kept as a script for interactive tweaking.
"""
import pathlib
import sys

from backstep.verify import load_scenario, run_scenario

HERE = pathlib.Path(__file__).resolve().parent


def main():
    config_path = sys.argv[1] if len(sys.argv) > 1 else HERE / "configs" / "default.ini"
    config = load_scenario(config_path)
    report = run_scenario(config)
    print(f"decay floor lambda_lower = {report.lambda_lower:.6g}")
    print(f"fitted closed-loop envelope: C = {report.fitted_C:.4g}, "
          f"sigma = {report.fitted_sigma:.4g} (fit rms {report.fit_residual:.2e})")
    print(f"worst envelope margin (log scale): {report.bound_margin:+.3f}")
    print(f"kernel maxima: alpha = {report.constants['alpha']}, "
          f"beta = {report.constants['beta']}")
    for name, ok in sorted(report.pass_flags.items()):
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}")
    print(f"artifacts in {config.outputs}/")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
